import numpy as np
import pytest

from conftest import Box
from megabike.agents import (
    Agent,
    AgentParams,
    MovementDirective,
    decide_action,
    propose_slack,
    vote,
)
from megabike.errors import EmptyCandidates
from megabike.rules import radius_rule


def test_compliant_agent_pays_for_full_pedal():
    a = Agent(0, energy=100.0)
    act = decide_action(a, MovementDirective(1.0, 0.3))
    assert act.pedal == 1.0 and act.steer == 0.3
    assert a.energy == 99.5
    assert a.contribution == 1.0


def test_dead_agent_emits_nothing():
    assert decide_action(Agent(0, alive=False), MovementDirective()) is None


def test_full_defector_keeps_energy():
    a = Agent(0, energy=100.0)
    act = decide_action(a, MovementDirective(1.0), AgentParams(p_defect=1.0))
    assert act.pedal == 0.0
    assert a.energy == 100.0


def test_agent_dies_when_drained():
    a = Agent(0, energy=0.25)
    decide_action(a, MovementDirective(1.0))
    assert a.energy == 0.0 and not a.alive


def test_energy_ledger_over_many_rounds():
    a = Agent(0, energy=100.0)
    for _ in range(150):
        decide_action(a, MovementDirective(1.0))
    assert a.energy == pytest.approx(100 - 150 * 0.5)


def test_rest_cost_charged_without_pedalling():
    a = Agent(0, energy=10.0)
    decide_action(a, MovementDirective(0.0), AgentParams(rest_cost=2.0))
    assert a.energy == 8.0


def test_partial_defection_is_seeded():
    params = AgentParams(p_defect=0.5)

    def pedals(seed):
        rng = np.random.default_rng(seed)
        return [decide_action(Agent(0), MovementDirective(1.0), params, rng).pedal
                for _ in range(50)]

    assert pedals(1) == pedals(1)
    assert 0 < sum(pedals(1)) < 50


@pytest.mark.parametrize("energy, fraction", [(40.0, 0.05), (50.0, -0.05), (49.999, 0.05)])
def test_slack_direction_follows_hunger(energy, fraction):
    rule = radius_rule(1000)
    prop = propose_slack(Agent(3, energy=energy), rule)
    assert prop.fraction == fraction
    assert (prop.proposer, prop.rule_id, prop.row) == (3, rule.rule_id, 0)


def test_no_slack_proposal_on_immutable_rule():
    assert propose_slack(Agent(0, energy=1.0), radius_rule(1000, mutable=False)) is None


def test_vote_prefers_payoff_per_distance():
    a, b = Box(50, 80), Box(10, 60)
    assert vote(Agent(0), [a, b]).choice is b


def test_vote_single_candidate():
    assert vote(Agent(0), ["only"]).choice == "only"


def test_vote_empty_raises():
    with pytest.raises(EmptyCandidates):
        vote(Agent(0), [])


def test_vote_on_ids_is_seeded():
    picks = [vote(Agent(0), [1, 2, 3], np.random.default_rng(s)).choice for s in range(5)]
    again = [vote(Agent(0), [1, 2, 3], np.random.default_rng(s)).choice for s in range(5)]
    assert picks == again
