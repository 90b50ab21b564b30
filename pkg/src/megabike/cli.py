"""Command line entry point: ``megabike run|bench|scarcity|validate-ruleset``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from megabike import experiments as ex
from megabike import ruleset_io
from megabike.errors import ConfigInvalid
from megabike.game import SimConfig, count_deliberation_avoided, load_config, run_game

log = logging.getLogger("megabike")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(",") if t.strip())


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _arms(choice: str) -> tuple[bool, ...]:
    return {"on": (True,), "off": (False,), "both": (True, False)}[choice]


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config) if args.config else SimConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    try:
        metrics = run_game(cfg)
    except ConfigInvalid as exc:
        log.error("invalid config: %s", exc)
        return 2
    if args.out:
        ex.emit_metrics(metrics, args.out, timing=not args.no_timing)
        log.info("wrote %d records to %s", len(metrics.records), args.out)
    print(json.dumps(metrics.summary(), indent=2, sort_keys=True))
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    grid = ex.BenchGrid(
        ruleset_sizes=_ints(args.sizes),
        agent_counts=_ints(args.agents),
        repetitions=args.reps,
        arms=_arms(args.strata),
        iterations=args.iterations,
        rounds=args.rounds,
    )
    rows = ex.bench_stratification(grid, seed=args.seed, workers=args.workers)
    ex.emit_csv(rows, args.out, ex.BENCH_COLUMNS, timing=not args.no_timing)
    ex.write_metadata(Path(args.out).with_suffix(".meta.json"), experiment="stratification",
                      repetitions=grid.repetitions, iterations=grid.iterations,
                      rounds=grid.rounds)
    for s in ex.summarize(rows, ("rulesetSize", "agents", "arm"),
                          ("iterRuntimeNanos", "rulesEvaluated")):
        print(f"size={s['rulesetSize']:<5} agents={s['agents']:<3} {s['arm']:<10} "
              f"n={s['n']} runtime={s['iterRuntimeNanosMean'] / 1e6:.3f}"
              f"±{s['iterRuntimeNanosStd'] / 1e6:.3f} ms "
              f"rulesEvaluated={s['rulesEvaluatedMean']:.0f}")
    for s in ex.speedups(rows):
        print(f"size={s['rulesetSize']:<5} agents={s['agents']:<3} "
              f"speedup={s['runtimeSpeedup']:.2f}x work={s['workRatio']:.2f}x")
    if args.plot:
        Path(args.plot).write_text(ex.gnuplot_script("bench", args.out), encoding="utf-8")
    return 0


def cmd_scarcity(args: argparse.Namespace) -> int:
    grid = ex.ScarcityGrid(ratios=_floats(args.ratios), arms=_arms(args.mutable),
                           repetitions=args.reps, rounds=args.rounds)
    rows = ex.run_scarcity(grid, seed=args.seed, workers=args.workers)
    ex.emit_csv(rows, args.out, ex.SCARCITY_COLUMNS)
    for s in ex.summarize(rows, ("ratio", "arm"),
                          ("meanSurvivalRounds", "finalRadiusBound")):
        print(f"ratio={s['ratio']:<4} {s['arm']:<10} n={s['n']} "
              f"survival={s['meanSurvivalRoundsMean']:.2f}±{s['meanSurvivalRoundsStd']:.2f} "
              f"radius={s['finalRadiusBoundMean']:.1f}")
    if args.plot:
        Path(args.plot).write_text(ex.gnuplot_script("scarcity", args.out), encoding="utf-8")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    problems = ruleset_io.validate(args.path)
    if problems:
        for p in problems:
            print(f"{args.path}: {p}")
        return 1
    rules = ruleset_io.load_rules(args.path)
    print(f"{args.path}: {len(rules)} rule(s) ok")
    return 0


def cmd_deliberation(args: argparse.Namespace) -> int:
    print(count_deliberation_avoided(iterations=args.iterations, rounds=args.rounds,
                                     kinds=args.kinds))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="megabike", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one simulation")
    p.add_argument("--config", help="YAML or JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="per-round metrics CSV")
    p.add_argument("--no-timing", action="store_true", help="omit wall-clock columns")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="stratified vs flat rule lookup")
    p.add_argument("--sizes", default="1,10,100,1000")
    p.add_argument("--agents", default="1,8,16,32")
    p.add_argument("--reps", type=int, default=30)
    p.add_argument("--strata", choices=("on", "off", "both"), default="both")
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--rounds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="bench.csv")
    p.add_argument("--no-timing", action="store_true")
    p.add_argument("--plot", help="also write a gnuplot script here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("scarcity", help="survival against lootbox scarcity")
    p.add_argument("--ratios", default="0,0.5,1.0,1.5,2.0,2.5")
    p.add_argument("--mutable", choices=("on", "off", "both"), default="both")
    p.add_argument("--reps", type=int, default=30)
    p.add_argument("--rounds", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="scarcity.csv")
    p.add_argument("--plot", help="also write a gnuplot script here")
    p.set_defaults(func=cmd_scarcity)

    p = sub.add_parser("validate-ruleset", help="parse a ruleset and check invariants")
    p.add_argument("path")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("deliberation", help="decisions settled by contract instead of vote")
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--rounds", type=int, default=100)
    p.add_argument("--kinds", type=int, default=5)
    p.set_defaults(func=cmd_deliberation)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
