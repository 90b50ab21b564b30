"""The iterated game loop and its configuration."""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from megabike.agents import (
    Agent,
    AgentParams,
    Ballot,
    MovementDirective,
    decide_action,
    propose_slack,
    vote,
)
from megabike.errors import ConfigInvalid
from megabike.governance import (
    Megabike,
    allocate_loot,
    elect_leader,
    exclusion_and_admission,
    form_bikes,
    resolve_mutations,
    select_target,
)
from megabike.ruleset_io import load_rules
from megabike.rules import (
    ACTIONS,
    Action,
    EvalStats,
    Rule,
    RuleCache,
    bound_of,
    prune,
)
from megabike.world import (
    WorldParams,
    acquisitions,
    advance_threat,
    place_bikes,
    spawn_lootboxes,
    spawn_threat,
    step_kinematics,
)

RNG_STREAMS = ("world", "membership", "agents", "votes")
DECISION_KINDS = len(ACTIONS)


@dataclass
class SimConfig:
    max_iterations: int = 100
    max_rounds: int = 100
    agent_count: int = 100
    seats: int = 8
    lootbox_ratio: float = 1.0
    ruleset_path: str | None = None
    mutable: bool = True
    stratified: bool = True
    seed: int = 0
    allocation_policy: str = "equal"
    deadlock_rounds: int = 10
    world: WorldParams = field(default_factory=WorldParams)
    agent: AgentParams = field(default_factory=AgentParams)
    # Takes precedence over ruleset_path when given.
    rules: list[Rule] | None = field(default=None, repr=False)

    def validate(self) -> None:
        problems = []
        if self.max_iterations < 1:
            problems.append("max_iterations must be >= 1")
        if self.max_rounds < 1:
            problems.append("max_rounds must be >= 1")
        if self.agent_count < 1:
            problems.append("agent_count must be >= 1")
        if self.seats < 1:
            problems.append("seats must be >= 1")
        if self.lootbox_ratio < 0:
            problems.append("lootbox_ratio must be >= 0")
        if self.allocation_policy not in ("equal", "contribution"):
            problems.append(f"unknown allocation_policy {self.allocation_policy!r}")
        if self.world.threats not in ("single", "per_bike"):
            problems.append(f"unknown threats mode {self.world.threats!r}")
        if self.world.bike_start not in ("origin", "scattered"):
            problems.append(f"unknown bike_start {self.world.bike_start!r}")
        if problems:
            raise ConfigInvalid("; ".join(problems))

    def base_rules(self) -> list[Rule]:
        if self.rules is not None:
            return list(self.rules)
        if self.ruleset_path:
            return load_rules(self.ruleset_path)
        return []

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SimConfig":
        data = dict(data)
        world = WorldParams(**_known(WorldParams, data.pop("world", {}) or {}))
        if isinstance(world.payoff_range, list):
            world.payoff_range = tuple(world.payoff_range)
        agent = AgentParams(**_known(AgentParams, data.pop("agent", {}) or {}))
        return cls(world=world, agent=agent, **_known(cls, data))


def _known(kind, data: dict) -> dict:
    names = {f.name for f in dataclasses.fields(kind)}
    unknown = set(data) - names
    if unknown:
        raise ConfigInvalid(f"unknown {kind.__name__} keys: {sorted(unknown)}")
    return dict(data)


def load_config(path: str | Path) -> SimConfig:
    text = Path(path).read_text(encoding="utf-8")
    data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    cfg = SimConfig.from_dict(data or {})
    if cfg.ruleset_path and not Path(cfg.ruleset_path).is_absolute():
        cfg.ruleset_path = str(Path(path).parent / cfg.ruleset_path)
    return cfg


@dataclass(frozen=True)
class RoundRecord:
    iteration: int
    round: int
    bike_id: int
    alive_agents: int
    energy_total: float
    loot_acquired: float
    radius_bound: float
    rules_evaluated: int
    wall_clock_nanos: int


@dataclass
class RunMetrics:
    records: list[RoundRecord] = field(default_factory=list)
    # (iteration, agent id) -> rounds survived in that iteration
    survival: dict[tuple[int, int], int] = field(default_factory=dict)
    # (iteration, round, bike id, lootbox id or -1)
    decisions: list[tuple[int, int, int, int]] = field(default_factory=list)
    phases: list[tuple[int, int, str]] = field(default_factory=list)
    iteration_nanos: list[int] = field(default_factory=list)
    rounds_per_iteration: list[int] = field(default_factory=list)
    final_radius_bounds: list[float] = field(default_factory=list)
    total_loot: float = 0.0
    rules_evaluated: int = 0
    ballots_cast: int = 0
    deadlocked: bool = False

    @property
    def iterations(self) -> int:
        return len(self.rounds_per_iteration)

    @property
    def avg_survival_rounds(self) -> float:
        if not self.survival:
            return 0.0
        return float(np.mean(list(self.survival.values())))

    @property
    def runtime_per_iteration(self) -> float:
        return float(np.mean(self.iteration_nanos)) if self.iteration_nanos else 0.0

    @property
    def final_radius_bound(self) -> float:
        vals = [v for v in self.final_radius_bounds if not math.isnan(v)]
        return float(np.mean(vals)) if vals else math.nan

    def summary(self) -> dict[str, Any]:
        return {
            "iterations": self.iterations,
            "rounds": sum(self.rounds_per_iteration),
            "avgSurvivalRounds": self.avg_survival_rounds,
            "totalLoot": self.total_loot,
            "runtimePerIteration": self.runtime_per_iteration,
            "rulesEvaluated": self.rules_evaluated,
            "ballotsCast": self.ballots_cast,
            "finalRadiusBound": self.final_radius_bound,
            "deliberationAvoided": count_deliberation_avoided(self),
            "deadlocked": self.deadlocked,
        }


def count_deliberation_avoided(
    metrics: RunMetrics | None = None,
    iterations: int | None = None,
    rounds: int | None = None,
    kinds: int = DECISION_KINDS,
) -> int:
    """Per-decision deliberations replaced by one contract negotiation per iteration.

    ``i*j*k - i``; ``rounds`` defaults to the longest iteration in ``metrics``.
    """
    if metrics is not None:
        iterations = metrics.iterations if iterations is None else iterations
        if rounds is None:
            rounds = max(metrics.rounds_per_iteration, default=0)
    if iterations is None or rounds is None:
        raise ValueError("need metrics or explicit iterations and rounds")
    return iterations * rounds * kinds - iterations


def make_streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(RNG_STREAMS))
    return {name: np.random.default_rng(s) for name, s in zip(RNG_STREAMS, children)}


def _adopt_rules(rules: Sequence[Rule], mutable: bool) -> RuleCache:
    if not mutable:
        rules = [dataclasses.replace(r, is_mutable=False) for r in rules]
    return RuleCache(rules)


def _radius_rule_id(cache: RuleCache) -> str | None:
    for r in cache.rules_for_action(Action.TARGET_SELECTION):
        if r.input_names[0] == "distance":
            return r.rule_id
    return None


class _Game:
    """Mutable state of one run; ``run_game`` is the public entry point."""

    def __init__(self, config: SimConfig) -> None:
        config.validate()
        self.cfg = config
        self.streams = make_streams(config.seed)
        self.base = _adopt_rules(config.base_rules(), config.mutable)
        self.radius_id = _radius_rule_id(self.base)
        self.agents = {i: Agent(i) for i in range(config.agent_count)}
        self.metrics = RunMetrics()
        self._parked: dict[int, Any] = {}

    # -- helpers -----------------------------------------------------------
    def phase(self, i: int, j: int, name: str) -> None:
        self.metrics.phases.append((i, j, name))

    def living(self, bike: Megabike) -> list[Agent]:
        return [self.agents[i] for i in bike.occupants if self.agents[i].alive]

    def radius_bound(self, bike: Megabike) -> float:
        if self.radius_id is None or self.radius_id not in bike.ruleset:
            return math.nan
        return bound_of(bike.ruleset.get(self.radius_id))

    def elect(self, bike: Megabike, stats: EvalStats) -> None:
        voters = self.living(bike)
        if not voters:
            bike.leader = None
            return
        eligible = prune(voters, bike.ruleset, Action.ELECTION, self.cfg.stratified, stats)
        if not eligible:
            bike.leader = None
            return
        ids = [a.id for a in eligible]
        ballots = [vote(a, ids, self.streams["votes"]) for a in voters]
        elect_leader(bike, ballots)

    def kill(self, agent: Agent, i: int, j: int) -> None:
        if agent.alive:
            agent.alive = False
        self.metrics.survival.setdefault((i, agent.id), j)

    # -- main loop ---------------------------------------------------------
    def run(self) -> RunMetrics:
        cfg = self.cfg
        for i in range(cfg.max_iterations):
            t0 = time.perf_counter_ns()
            rounds = self.iteration(i)
            self.metrics.iteration_nanos.append(time.perf_counter_ns() - t0)
            self.metrics.rounds_per_iteration.append(rounds)
            if self.metrics.deadlocked:
                break
        return self.metrics

    def iteration(self, i: int) -> int:
        cfg, m = self.cfg, self.metrics
        p = cfg.agent
        for a in self.agents.values():
            a.energy = p.initial_energy
            a.alive = True
            a.bike_id = None
            a.contribution = 0.0
        lootboxes = spawn_lootboxes(
            cfg.lootbox_ratio, cfg.agent_count, self.streams["world"],
            cfg.world.side, cfg.world.payoff_range,
        )

        # self-selection
        bikes = form_bikes(list(self.agents.values()), cfg.seats,
                           self.streams["membership"], RuleCache(), cfg.allocation_policy)
        self.phase(i, -1, "membership")
        # action phase: one contract negotiation per bike per iteration
        for bike in bikes:
            bike.ruleset = self.base.copy()
        self.phase(i, -1, "arrangements")
        setup_stats = EvalStats()
        for bike in bikes:
            self.elect(bike, setup_stats)
        m.rules_evaluated += setup_stats.rules_evaluated
        self.phase(i, -1, "roles")

        place_bikes(bikes, cfg.world, self.streams["world"])
        if cfg.world.threats == "per_bike":
            threats = [spawn_threat(b, cfg.world) for b in bikes]
        else:
            threats = [spawn_threat(bikes[0], cfg.world)] if bikes else []

        unseated: list[int] = []
        stall = 0
        played = 0
        for j in range(1, cfg.max_rounds + 1):
            live = [b for b in bikes if not b.terminated]
            if not live:
                break
            played = j
            moving = self.round(i, j, live, bikes, lootboxes, threats, unseated)
            stall = 0 if moving else stall + 1
            if stall >= cfg.deadlock_rounds:
                m.deadlocked = True

        for a in self.agents.values():
            m.survival.setdefault((i, a.id), played)
        m.final_radius_bounds.extend(self.radius_bound(b) for b in bikes)
        m.ballots_cast += sum(b.ballots_cast for b in bikes)
        return played

    def round(self, i, j, live, bikes, lootboxes, threats, unseated) -> bool:
        cfg, m = self.cfg, self.metrics
        p = cfg.agent
        self.phase(i, j, "operation")
        stats = {b.id: EvalStats() for b in live}
        nanos = {b.id: 0 for b in live}
        directives: dict[int, MovementDirective] = {}
        moving = False

        # decide target lootbox
        for bike in live:
            t0 = time.perf_counter_ns()
            st = stats[bike.id]
            crew = self.living(bike)
            if cfg.mutable and self.radius_id is not None:
                rule = bike.ruleset.get(self.radius_id)
                if rule.is_mutable:
                    props = [propose_slack(a, rule, p) for a in crew]
                    resolve_mutations(bike, [x for x in props if x is not None], len(crew))
            target = select_target(bike, lootboxes, self.agents, self.streams["votes"],
                                   cfg.stratified, st)
            m.decisions.append((i, j, bike.id, -1 if target is None else target.id))
            directive = MovementDirective(0.0, bike.heading)
            if target is not None:
                moving = True
                allowed = prune([bike], bike.ruleset, Action.MOVEMENT_DIRECTIVE,
                                cfg.stratified, st)
                if allowed and bike.leader is not None and crew:
                    dx = target.position.x - bike.position.x
                    dy = target.position.y - bike.position.y
                    full = len(crew) * cfg.world.k
                    directive = MovementDirective(
                        min(1.0, math.hypot(dx, dy) / full), math.atan2(dy, dx)
                    )
            directives[bike.id] = directive
            nanos[bike.id] += time.perf_counter_ns() - t0

        # agents act
        forces = {}
        shirkers: dict[int, set[int]] = {}
        for bike in live:
            acts = []
            d = directives[bike.id]
            for a in self.living(bike):
                act = decide_action(a, d, p, self.streams["agents"])
                if act is None:
                    continue
                acts.append(act)
                if not a.alive:
                    self.kill(a, i, j)
                if d.intensity > 0 and act.pedal == 0:
                    shirkers.setdefault(bike.id, set()).add(a.id)
            forces[bike.id] = acts

        # environment applies effects
        for bike in live:
            step_kinematics(bike, forces[bike.id], cfg.world.k)
        won = acquisitions(live, lootboxes, cfg.world.acquisition_radius)
        captured: set[int] = set()
        for t, threat in enumerate(threats):
            threats[t], caught = advance_threat(threat, bikes, cfg.world.capture_radius)
            captured.update(caught)
        for bike in live:
            if bike.id in captured:
                bike.terminated = True
                for a in self.living(bike):
                    self.kill(a, i, j)
        for aid in list(unseated):
            a = self.agents[aid]
            if a.alive and any(
                _near(t.position, self._parked.get(aid), cfg.world.capture_radius)
                for t in threats
            ):
                self.kill(a, i, j)

        # resource allocation
        loot = {b.id: 0.0 for b in live}
        for bike in live:
            if bike.terminated or bike.id not in won:
                continue
            t0 = time.perf_counter_ns()
            for box in won[bike.id]:
                recipients = prune(self.living(bike), bike.ruleset, Action.ALLOCATION,
                                   cfg.stratified, stats[bike.id])
                shares = allocate_loot(bike, box, recipients)
                for aid, share in shares.items():
                    a = self.agents[aid]
                    a.energy = min(a.energy + share, p.e_max)
                loot[bike.id] += sum(shares.values())
            m.total_loot += loot[bike.id]
            nanos[bike.id] += time.perf_counter_ns() - t0

        # admission / exclusion
        for bike in sorted(live, key=lambda b: b.id):
            if bike.terminated:
                continue
            t0 = time.perf_counter_ns()
            st = stats[bike.id]
            crew = self.living(bike)
            members = prune(crew, bike.ruleset, Action.KICKOFF, cfg.stratified, st)
            flagged = sorted(({a.id for a in crew} - {a.id for a in members})
                             | shirkers.get(bike.id, set()))
            votes = []
            for a in crew:
                others = [f for f in flagged if f != a.id]
                if others and a.id not in flagged:
                    votes.append(Ballot(a.id, others[0]))
            before = set(bike.occupants)
            exclusion_and_admission(bike, votes, self.agents, unseated, cfg.stratified, st)
            for aid in before - set(bike.occupants):
                self._parked[aid] = bike.position
            if not bike.occupants:
                bike.terminated = True
            elif bike.leader is None:
                self.elect(bike, st)
            nanos[bike.id] += time.perf_counter_ns() - t0

        for bike in live:
            crew = self.living(bike)
            m.records.append(RoundRecord(
                iteration=i,
                round=j,
                bike_id=bike.id,
                alive_agents=len(crew),
                energy_total=float(sum(a.energy for a in crew)),
                loot_acquired=loot[bike.id],
                radius_bound=self.radius_bound(bike),
                rules_evaluated=stats[bike.id].rules_evaluated,
                wall_clock_nanos=nanos[bike.id],
            ))
            m.rules_evaluated += stats[bike.id].rules_evaluated
        return moving


def _near(a, b, radius: float) -> bool:
    return b is not None and a.distance_to(b) <= radius


def run_game(config: SimConfig) -> RunMetrics:
    """Run the full iterated game described by ``config``."""
    return _Game(config).run()
