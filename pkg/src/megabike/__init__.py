"""Megabike: a matrix rule engine for self-governing agent groups, plus the
simulator and experiment harness built on it."""

from megabike._kernels import BACKEND
from megabike.rules import (
    Action,
    Comparator,
    EvalResult,
    EvalStats,
    InputBinding,
    Rule,
    RuleCache,
    StackedRuleSystem,
    apply_slack,
    build_rule,
    evaluate,
    evaluate_stacked,
    mutate_entry,
    null_rule,
    prune,
    radius_rule,
    rules_for_action,
    stack,
)
from megabike.game import RunMetrics, SimConfig, count_deliberation_avoided, run_game

__version__ = "0.1.0"
