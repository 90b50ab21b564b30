"""Experiment harness: the stratification benchmark and the scarcity grid."""

from __future__ import annotations

import csv
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from megabike import _kernels
from megabike.agents import AgentParams
from megabike.game import RoundRecord, RunMetrics, SimConfig, run_game
from megabike.rules import ACTIONS, Action, Rule, null_rule, radius_rule
from megabike.world import WorldParams

BENCH_COLUMNS = (
    "experiment", "rulesetSize", "agents", "arm", "rep", "iterRuntimeNanos", "rulesEvaluated",
)
SCARCITY_COLUMNS = (
    "ratio", "arm", "rep", "meanSurvivalRounds", "totalLoot", "finalRadiusBound",
)
RECORD_COLUMNS = (
    "iteration", "round", "bikeId", "aliveAgents", "energyTotal", "lootAcquired",
    "radiusBound", "rulesEvaluated", "wallClockNanos",
)
TIMING_COLUMNS = frozenset({"iterRuntimeNanos", "wallClockNanos"})

# Inputs each null rule reads; chosen so the getters exist for the entity the
# action is evaluated over (lootbox views, agents, or the bike itself).
NULL_INPUTS = {
    Action.TARGET_SELECTION: ("distance", "payoff", "one"),
    Action.ALLOCATION: ("energy", "contribution", "one"),
    Action.ELECTION: ("energy", "contribution", "one"),
    Action.KICKOFF: ("energy", "contribution", "one"),
    Action.MOVEMENT_DIRECTIVE: ("occupants", "free_seats", "one"),
}


@dataclass
class BenchGrid:
    ruleset_sizes: tuple[int, ...] = (1, 10, 100, 1000)
    agent_counts: tuple[int, ...] = (1, 8, 16, 32)
    repetitions: int = 30
    arms: tuple[bool, ...] = (True, False)
    iterations: int = 10
    rounds: int = 10
    lootbox_ratio: float = 1.0

    def validate(self) -> None:
        if any(s < 1 for s in self.ruleset_sizes):
            raise ValueError("ruleset sizes must be >= 1")
        if any(a < 1 for a in self.agent_counts):
            raise ValueError("agent counts must be >= 1")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.arms:
            raise ValueError("need at least one arm")


def scarcity_world() -> WorldParams:
    """World used by the scarcity grid.

    A wide map and one threat per bike make the initial 1000-unit radius
    genuinely limiting, so whether it can be loosened matters.
    """
    return WorldParams(side=20000.0, k=40.0, threats="per_bike", bike_start="scattered")


def scarcity_agents() -> AgentParams:
    # Agents start at half capacity and pay a flat upkeep, so they are hungry
    # from the first round and survival is bounded by how much loot they find.
    return AgentParams(e_max=200.0, initial_energy=100.0, pedal_cost=0.0, rest_cost=2.0)


@dataclass
class ScarcityGrid:
    ratios: tuple[float, ...] = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5)
    arms: tuple[bool, ...] = (True, False)
    agent_count: int = 100
    repetitions: int = 30
    rounds: int = 100
    iterations: int = 1
    radius: float = 1000.0
    world: WorldParams = field(default_factory=scarcity_world)
    agent: AgentParams = field(default_factory=scarcity_agents)

    def validate(self) -> None:
        if any(r < 0 for r in self.ratios):
            raise ValueError("ratios must be non-negative")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.arms:
            raise ValueError("need at least one arm")


def null_ruleset(size: int) -> list[Rule]:
    """``size`` null rules dealt round-robin over the action kinds."""
    out = []
    for k in range(size):
        action = ACTIONS[k % len(ACTIONS)]
        out.append(null_rule(action, NULL_INPUTS[action]))
    return out


def bench_arm(stratified: bool) -> str:
    return "stratified" if stratified else "flat"


def mutability_arm(mutable: bool) -> str:
    return "mutable" if mutable else "immutable"


# ---------------------------------------------------------------------------
# cells (module level so a process pool can pickle them)


def _bench_cell(args: tuple) -> tuple[list[dict], dict]:
    grid, size, agents, seed = args
    _kernels.warmup()
    rules = null_ruleset(size)
    rows, traces = [], {}
    for stratified in grid.arms:
        arm = bench_arm(stratified)
        for rep in range(grid.repetitions):
            cfg = SimConfig(
                max_iterations=grid.iterations, max_rounds=grid.rounds,
                agent_count=agents, lootbox_ratio=grid.lootbox_ratio,
                rules=rules, stratified=stratified, mutable=False, seed=seed + rep,
            )
            m = run_game(cfg)
            rows.append({
                "experiment": "stratification",
                "rulesetSize": size,
                "agents": agents,
                "arm": arm,
                "rep": rep,
                "iterRuntimeNanos": m.runtime_per_iteration,
                "rulesEvaluated": m.rules_evaluated,
            })
            traces[(arm, rep)] = m.decisions
    return rows, traces


def _scarcity_cell(args: tuple) -> list[dict]:
    grid, ratio, mutable, seed = args
    rows = []
    for rep in range(grid.repetitions):
        cfg = SimConfig(
            max_iterations=grid.iterations, max_rounds=grid.rounds,
            agent_count=grid.agent_count, lootbox_ratio=ratio,
            rules=[radius_rule(grid.radius)], mutable=mutable, seed=seed + rep,
            world=grid.world, agent=grid.agent,
        )
        m = run_game(cfg)
        rows.append({
            "ratio": ratio,
            "arm": mutability_arm(mutable),
            "rep": rep,
            "meanSurvivalRounds": m.avg_survival_rounds,
            "totalLoot": m.total_loot,
            "finalRadiusBound": m.final_radius_bound,
        })
    return rows


def _map(fn: Callable, jobs: Sequence, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


class TraceMismatch(AssertionError):
    pass


def bench_stratification(
    grid: BenchGrid | None = None, seed: int = 0, workers: int = 1
) -> list[dict]:
    """Run every (size, agents) cell under both arms; rows follow BENCH_COLUMNS.

    Raises TraceMismatch if the arms ever pick different targets.
    """
    grid = grid or BenchGrid()
    grid.validate()
    jobs = [(grid, s, a, seed) for s, a in itertools.product(grid.ruleset_sizes,
                                                            grid.agent_counts)]
    rows = []
    for (g, size, agents, _), (cell_rows, traces) in zip(jobs, _map(_bench_cell, jobs, workers)):
        if len(grid.arms) == 2:
            for rep in range(grid.repetitions):
                if traces[("stratified", rep)] != traces[("flat", rep)]:
                    raise TraceMismatch(
                        f"decision traces differ at size={size} agents={agents} rep={rep}")
        rows.extend(cell_rows)
    return rows


def run_scarcity(
    grid: ScarcityGrid | None = None, seed: int = 0, workers: int = 1
) -> list[dict]:
    """Survival per (ratio, arm, rep); both arms share seeds rep by rep."""
    grid = grid or ScarcityGrid()
    grid.validate()
    jobs = [(grid, r, mut, seed) for r in grid.ratios for mut in grid.arms]
    return [row for rows in _map(_scarcity_cell, jobs, workers) for row in rows]


# ---------------------------------------------------------------------------
# statistics and output


def summarize(rows: Iterable[dict], keys: Sequence[str], values: Sequence[str]
              ) -> list[dict]:
    """Group ``rows`` by ``keys``; report n, mean and sample stddev of ``values``."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault(tuple(row[k] for k in keys), []).append(row)
    out = []
    for key, members in groups.items():
        entry: dict[str, Any] = dict(zip(keys, key))
        entry["n"] = len(members)
        for v in values:
            xs = np.array([r[v] for r in members], dtype=np.float64)
            entry[f"{v}Mean"] = float(xs.mean())
            entry[f"{v}Std"] = float(xs.std(ddof=1)) if len(xs) > 1 else 0.0
        out.append(entry)
    return out


def speedups(rows: Iterable[dict]) -> list[dict]:
    """Flat/stratified ratios of mean runtime and rules evaluated per cell."""
    summ = summarize(rows, ("rulesetSize", "agents", "arm"),
                     ("iterRuntimeNanos", "rulesEvaluated"))
    by = {(s["rulesetSize"], s["agents"], s["arm"]): s for s in summ}
    out = []
    for (size, agents, arm), s in by.items():
        flat = by.get((size, agents, "flat"))
        if arm != "stratified" or flat is None:
            continue
        out.append({
            "rulesetSize": size,
            "agents": agents,
            "runtimeSpeedup": flat["iterRuntimeNanosMean"] / s["iterRuntimeNanosMean"],
            "workRatio": flat["rulesEvaluatedMean"] / s["rulesEvaluatedMean"]
            if s["rulesEvaluatedMean"] else math.nan,
        })
    return out


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".6g")
    return str(v)


def emit_csv(records: Iterable[dict], path: str | Path, columns: Sequence[str],
             timing: bool = True) -> Path:
    """Write ``records`` as CSV; ``timing=False`` drops the wall-clock columns."""
    cols = [c for c in columns if timing or c not in TIMING_COLUMNS]
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for rec in records:
            w.writerow([_fmt(rec[c]) for c in cols])
    return path


def record_rows(records: Iterable[RoundRecord]) -> list[dict]:
    return [
        {
            "iteration": r.iteration,
            "round": r.round,
            "bikeId": r.bike_id,
            "aliveAgents": r.alive_agents,
            "energyTotal": r.energy_total,
            "lootAcquired": r.loot_acquired,
            "radiusBound": r.radius_bound,
            "rulesEvaluated": r.rules_evaluated,
            "wallClockNanos": r.wall_clock_nanos,
        }
        for r in records
    ]


def emit_metrics(metrics: RunMetrics, path: str | Path, timing: bool = True) -> Path:
    return emit_csv(record_rows(metrics.records), path, RECORD_COLUMNS, timing)


def write_metadata(path: str | Path, **extra: Any) -> Path:
    """Sidecar JSON noting the timer used for the wall-clock columns."""
    info = time.get_clock_info("perf_counter")
    meta = {
        "timer": "perf_counter_ns",
        "timerResolutionSeconds": info.resolution,
        "monotonic": info.monotonic,
        **extra,
    }
    path = Path(path)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def gnuplot_script(kind: str, csv_path: str | Path) -> str:
    """A gnuplot script plotting a bench or scarcity CSV.

    Bench: mean iteration runtime against ruleset size, one line per arm and
    agent count. Scarcity: mean survival against lootbox ratio per arm.
    Means are computed by gnuplot's ``smooth unique``.
    """
    src = str(csv_path)
    head = ["set datafile separator ','", "set key left top", "set grid"]
    if kind == "bench":
        return "\n".join(head + [
            "set logscale xy",
            "set xlabel 'ruleset size'",
            "set ylabel 'runtime per iteration (ns)'",
            "agents = '1 8 16 32'",
            "plot for [arm in 'stratified flat'] for [a in agents] \\",
            f"  '{src}' using (strcol(4) eq arm && $3 == a+0 ? $2 : 1/0):6 \\",
            "  smooth unique with linespoints title arm.' '.a.' agents'",
            "",
        ])
    if kind == "scarcity":
        return "\n".join(head + [
            "set xlabel 'lootbox : agent ratio'",
            "set ylabel 'mean survival (rounds)'",
            "plot for [arm in 'mutable immutable'] \\",
            f"  '{src}' using (strcol(2) eq arm ? $1 : 1/0):4 \\",
            "  smooth unique with linespoints title arm",
            "",
        ])
    raise ValueError(f"unknown plot kind {kind!r}")

