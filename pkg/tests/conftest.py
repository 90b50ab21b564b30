from dataclasses import dataclass

import pytest

from megabike.rules import build_rule


@dataclass
class Box:
    """Minimal lootbox-like entity for rule tests."""

    distance: float
    payoff: float


@dataclass
class Pos:
    x: float
    y: float


def scalar_oracle(matrix, comparators, x):
    """Plain-Python re-statement of every clause; no numpy, no kernels."""
    ops = {
        "<": lambda v: v < 0,
        ">": lambda v: v > 0,
        "<=": lambda v: v <= 0,
        ">=": lambda v: v >= 0,
        "=": lambda v: abs(v) <= 1e-9,
    }
    results = []
    for row, comp in zip(matrix, comparators):
        if any(xi != xi for xi in x):
            ok = True
        else:
            total = 0.0
            for a, xi in zip(row, x):
                total += a * xi
            ok = ops[comp](total)
        results.append(ok)
        if not ok:
            break
    return all(results), results


@pytest.fixture
def lootbox_rule():
    return build_rule(
        "lootbox-100",
        "target_selection",
        True,
        ["distance", "payoff", "one"],
        [[1, 0, -100], [1.5, -1, 0]],
        ["<=", "<="],
    )


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.report_lines():
        terminalreporter.write_line(line)
