import dataclasses
import json

import pytest

from megabike.agents import AgentParams
from megabike.errors import ConfigInvalid, RulesetParseError
from megabike.game import SimConfig, count_deliberation_avoided, load_config, run_game
from megabike.rules import radius_rule
from megabike.ruleset_io import save_rules
from megabike.world import WorldParams


def small(**kw):
    base = dict(max_iterations=2, max_rounds=15, agent_count=20, lootbox_ratio=1.0,
                rules=[radius_rule(1000)], seed=3)
    base.update(kw)
    return SimConfig(**base)


def test_single_round_single_agent():
    m = run_game(SimConfig(max_iterations=1, max_rounds=1, agent_count=1, lootbox_ratio=0))
    assert m.rounds_per_iteration == [1]
    assert m.survival == {(0, 0): 1}


def test_same_seed_same_metrics():
    a, b = run_game(small()), run_game(small())
    strip = lambda recs: [dataclasses.replace(r, wall_clock_nanos=0) for r in recs]
    assert strip(a.records) == strip(b.records)
    assert a.survival == b.survival and a.decisions == b.decisions
    assert a.total_loot == b.total_loot and a.final_radius_bounds == b.final_radius_bounds


def test_different_seed_differs():
    assert run_game(small(seed=1)).decisions != run_game(small(seed=2)).decisions


@pytest.mark.parametrize(
    "kw",
    [dict(agent_count=0), dict(max_rounds=0), dict(max_iterations=0), dict(seats=0),
     dict(lootbox_ratio=-1), dict(allocation_policy="lottery")],
)
def test_invalid_config(kw):
    with pytest.raises(ConfigInvalid):
        run_game(small(**kw))


def test_phase_order_per_iteration():
    m = run_game(small())
    for i in range(m.iterations):
        names = [name for it, _, name in m.phases if it == i]
        assert names[:3] == ["membership", "arrangements", "roles"]
        assert set(names[3:]) == {"operation"}
        assert len(names) - 3 == m.rounds_per_iteration[i]


def test_round_budget():
    m = run_game(small(max_rounds=7, max_iterations=3))
    assert m.iterations <= 3
    assert all(r <= 7 for r in m.rounds_per_iteration)
    assert all(1 <= rec.round <= 7 for rec in m.records)


def test_ratio_zero_bikes_caught_on_round_twenty():
    m = run_game(small(lootbox_ratio=0, max_iterations=1, max_rounds=100,
                       world=WorldParams(threats="per_bike")))
    assert set(m.survival.values()) == {20}


def test_deadlock_stops_further_iterations():
    m = run_game(small(lootbox_ratio=0, max_iterations=5, max_rounds=30, deadlock_rounds=10))
    assert m.deadlocked
    assert m.iterations == 1


def test_immutable_arm_never_changes_radius():
    m = run_game(small(mutable=False, agent=AgentParams(e_max=200.0)))
    assert set(m.final_radius_bounds) == {1000.0}


def test_hungry_mutable_arm_loosens():
    m = run_game(small(mutable=True, agent=AgentParams(e_max=200.0, rest_cost=1.0),
                       max_iterations=1))
    assert all(b > 1000 for b in m.final_radius_bounds)


def test_energy_never_exceeds_cap():
    m = run_game(small(lootbox_ratio=2.5))
    assert all(r.energy_total <= 8 * 100 + 1e-9 for r in m.records)


@pytest.mark.parametrize("i, j, k, expected", [(100, 100, 5, 49900), (1, 1, 1, 0), (2, 3, 5, 28)])
def test_deliberation_accounting(i, j, k, expected):
    assert count_deliberation_avoided(iterations=i, rounds=j, kinds=k) == expected


def test_deliberation_from_metrics():
    m = run_game(small(max_iterations=2, max_rounds=3))
    assert count_deliberation_avoided(m) == 2 * 3 * 5 - 2


def test_load_config_yaml(tmp_path):
    save_rules([radius_rule(500)], tmp_path / "rules.yaml")
    (tmp_path / "cfg.yaml").write_text(
        "max_iterations: 1\nmax_rounds: 5\nagent_count: 8\nruleset_path: rules.yaml\n"
        "world: {side: 500, payoff_range: [1, 2]}\nagent: {pedal_cost: 0.25}\n")
    cfg = load_config(tmp_path / "cfg.yaml")
    assert cfg.world.side == 500 and cfg.world.payoff_range == (1, 2)
    assert cfg.agent.pedal_cost == 0.25
    assert cfg.base_rules()[0].matrix.tolist() == [[1.0, -500.0]]
    assert run_game(cfg).rounds_per_iteration == [5]


def test_load_config_json(tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps({"agent_count": 3, "max_rounds": 2}))
    assert load_config(tmp_path / "cfg.json").agent_count == 3


def test_unknown_config_key(tmp_path):
    (tmp_path / "cfg.yaml").write_text("agentz: 3\n")
    with pytest.raises(ConfigInvalid):
        load_config(tmp_path / "cfg.yaml")


def test_bad_ruleset_surfaces(tmp_path):
    (tmp_path / "bad.yaml").write_text("name: x\n")
    with pytest.raises(RulesetParseError):
        run_game(small(rules=None, ruleset_path=str(tmp_path / "bad.yaml")))
