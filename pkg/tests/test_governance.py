import numpy as np
import pytest

from megabike.agents import Agent, Ballot, MutationProposal
from megabike.errors import AlreadyConsumed, NoOccupants
from megabike.governance import (
    Megabike,
    allocate_loot,
    elect_leader,
    exclusion_and_admission,
    form_bikes,
    plurality,
    resolve_mutations,
    select_target,
)
from megabike.rules import RuleCache, bound_of, build_rule, radius_rule
from megabike.world import GridPosition, Lootbox


def _agents(n, **kw):
    return {i: Agent(i, **kw) for i in range(n)}


def _bike(n=8, rules=(), **kw):
    return Megabike(id=0, seats=8, occupants=list(range(n)), ruleset=RuleCache(rules), **kw)


def test_form_bikes_ceil_partition():
    agents = list(_agents(100).values())
    bikes = form_bikes(agents, 8, np.random.default_rng(0))
    assert len(bikes) == 13
    assert [len(b.occupants) for b in bikes] == [8] * 12 + [4]
    assert sorted(i for b in bikes for i in b.occupants) == list(range(100))
    assert all(agents[i].bike_id == b.id for b in bikes for i in b.occupants)


def test_form_bikes_single_bike():
    assert len(form_bikes(list(_agents(8).values()), 8, np.random.default_rng(0))) == 1


def test_form_bikes_deterministic():
    def part(seed):
        bikes = form_bikes(list(_agents(30).values()), 8, np.random.default_rng(seed))
        return [b.occupants for b in bikes]

    assert part(5) == part(5)
    assert part(5) != part(6)


def test_each_bike_gets_its_own_ruleset_copy():
    base = RuleCache([radius_rule(1000)])
    bikes = form_bikes(list(_agents(16).values()), 8, np.random.default_rng(0), base)
    rid = base.all_rules()[0].rule_id
    resolve_mutations(bikes[0], [MutationProposal(i, rid, 0, 0.05) for i in bikes[0].occupants])
    assert bound_of(bikes[0].ruleset.get(rid)) == 1050
    assert bound_of(bikes[1].ruleset.get(rid)) == 1000
    assert bound_of(base.get(rid)) == 1000


def test_plurality_and_tie_break():
    assert plurality([Ballot(1, 2), Ballot(2, 2), Ballot(3, 1)]) == 2
    assert plurality([Ballot(1, 3), Ballot(2, 1), Ballot(3, 2)]) == 1
    assert plurality([]) is None


def test_elect_leader():
    bike = Megabike(id=0, seats=8, occupants=[1, 2, 3])
    assert elect_leader(bike, [Ballot(1, 2), Ballot(2, 2), Ballot(3, 1)]) == 2
    assert bike.leader == 2


def test_elect_leader_all_way_tie_lowest_id():
    bike = Megabike(id=0, seats=8, occupants=[4, 7, 9])
    assert elect_leader(bike, [Ballot(4, 9), Ballot(7, 4), Ballot(9, 7)]) == 4


def test_elect_leader_empty_bike():
    with pytest.raises(NoOccupants):
        elect_leader(Megabike(id=0, seats=8), [])


def _boxes(*specs):
    return [Lootbox(i, GridPosition(x, 0.0), p) for i, (x, p) in enumerate(specs)]


def test_single_survivor_needs_no_ballots():
    bike = _bike(rules=[radius_rule(100)])
    boxes = _boxes((50, 20), (500, 50))
    assert select_target(bike, boxes, _agents(8)) is boxes[0]
    assert bike.ballots_cast == 0


def test_no_survivor_no_target():
    bike = _bike(rules=[radius_rule(10)])
    assert select_target(bike, _boxes((50, 20)), _agents(8)) is None


def test_plurality_over_pruned_set():
    # every agent scores payoff/(d+1): B at d=10,p=60 beats A at d=50,p=80
    bike = _bike(n=3, rules=[radius_rule(1000)])
    boxes = _boxes((50, 80), (10, 60), (5000, 50))
    assert select_target(bike, boxes, _agents(3)) is boxes[1]
    assert bike.ballots_cast == 3


def test_equal_split():
    bike = _bike()
    shares = allocate_loot(bike, Lootbox(0, GridPosition(), 40.0), list(_agents(8).values()))
    assert shares == {i: 5.0 for i in range(8)}


def test_uneven_split_sums_exactly():
    shares = allocate_loot(_bike(3), Lootbox(0, GridPosition(), 10.0),
                           list(_agents(3).values()))
    assert sum(shares.values()) == 10.0
    assert max(shares.values()) - min(shares.values()) < 1e-5
    assert all(abs(s - 10 / 3) < 1e-5 for s in shares.values())


def test_proportional_split():
    agents = [Agent(i, contribution=c) for i, c in enumerate((10.0, 20.0, 30.0))]
    shares = allocate_loot(_bike(3), Lootbox(0, GridPosition(), 30.0), agents, "contribution")
    assert shares == {0: 5.0, 1: 10.0, 2: 15.0}


def test_lootbox_consumed_once():
    box = Lootbox(0, GridPosition(), 30.0)
    allocate_loot(_bike(), box, list(_agents(2).values()))
    assert box.consumed
    with pytest.raises(AlreadyConsumed):
        allocate_loot(_bike(), box, list(_agents(2).values()))


def test_majority_loosens_radius():
    rule = radius_rule(1000)
    bike = _bike(rules=[rule])
    props = [MutationProposal(i, rule.rule_id, 0, 0.05) for i in range(5)]
    props += [MutationProposal(i, rule.rule_id, 0, -0.05) for i in range(5, 8)]
    resolve_mutations(bike, props)
    assert bound_of(bike.ruleset.get(rule.rule_id)) == 1050


def test_even_split_deadlocks():
    rule = radius_rule(1000)
    bike = _bike(rules=[rule])
    props = [MutationProposal(i, rule.rule_id, 0, 0.05 if i < 4 else -0.05) for i in range(8)]
    resolve_mutations(bike, props)
    assert bike.ruleset.get(rule.rule_id) == rule


def test_immutable_proposals_dropped():
    rule = radius_rule(1000, mutable=False)
    bike = _bike(rules=[rule])
    resolve_mutations(bike, [MutationProposal(i, rule.rule_id, 0, 0.05) for i in range(8)])
    assert bike.ruleset.get(rule.rule_id) == rule


def test_outsider_and_duplicate_proposals_ignored():
    rule = radius_rule(1000)
    bike = _bike(n=4, rules=[rule])
    props = [MutationProposal(0, rule.rule_id, 0, 0.05)] * 3
    props += [MutationProposal(i, rule.rule_id, 0, 0.05) for i in (10, 11, 12)]
    resolve_mutations(bike, props)
    assert bound_of(bike.ruleset.get(rule.rule_id)) == 1000


def test_majority_exclusion():
    agents = _agents(8)
    bike = _bike()
    votes = [Ballot(i, 4) for i in (0, 1, 2, 3, 5)]
    unseated = []
    exclusion_and_admission(bike, votes, agents, unseated)
    assert 4 not in bike.occupants and len(bike.occupants) == 7
    assert unseated == [4] and agents[4].bike_id is None


def test_dead_removed_without_vote():
    agents = _agents(8)
    agents[2].energy, agents[2].alive = 0.0, False
    bike = _bike()
    exclusion_and_admission(bike, [], agents)
    assert bike.occupants == [0, 1, 3, 4, 5, 6, 7]


def test_no_votes_no_change():
    agents = _agents(8)
    bike = _bike()
    exclusion_and_admission(bike, [], agents)
    assert bike.occupants == list(range(8))


def test_admission_filtered_by_kickoff_rules():
    strong = build_rule("fit", "kickoff", True, ["energy", "one"], [[-1, 50]], ["<="])
    agents = _agents(10)
    agents[8].energy = 10.0
    bike = _bike(n=6, rules=[strong])
    unseated = [8, 9]
    exclusion_and_admission(bike, [], agents, unseated)
    assert bike.occupants == [0, 1, 2, 3, 4, 5, 9]
    assert unseated == [8]


def test_excluded_agent_not_readmitted():
    agents = _agents(8)
    bike = _bike()
    unseated = []
    exclusion_and_admission(bike, [Ballot(i, 7) for i in range(5)], agents, unseated)
    exclusion_and_admission(bike, [], agents, unseated)
    assert 7 not in bike.occupants
