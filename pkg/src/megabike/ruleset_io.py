"""YAML ruleset files: one document per rule.

Example document::

    id: 0b6f...            # optional; generated when absent
    name: radius-1000
    action: target_selection
    mutable: true
    inputs: [distance, one]
    matrix: [[1.0, -1000.0]]
    comparators: ["<="]
"""

from __future__ import annotations

import io
from pathlib import Path
from typing import Iterable

import yaml

from megabike.errors import RuleError, RulesetParseError
from megabike.rules import Rule, RuleCache, build_rule

_REQUIRED = ("name", "action", "mutable", "inputs", "matrix", "comparators")


def rule_to_dict(rule: Rule) -> dict:
    return {
        "id": rule.rule_id,
        "name": rule.name,
        "action": rule.action.value,
        "mutable": rule.is_mutable,
        "inputs": list(rule.input_names),
        "matrix": [[float(v) for v in row] for row in rule.matrix],
        "comparators": [c.value for c in rule.comparators],
    }


def rule_from_dict(doc: dict) -> Rule:
    if not isinstance(doc, dict):
        raise RulesetParseError(f"rule document must be a mapping, got {type(doc).__name__}")
    missing = [k for k in _REQUIRED if k not in doc]
    if missing:
        raise RulesetParseError(f"rule document missing fields: {', '.join(missing)}")
    try:
        return build_rule(
            name=str(doc["name"]),
            action=doc["action"],
            mutable=bool(doc["mutable"]),
            inputs=doc["inputs"],
            matrix=doc["matrix"],
            comparators=doc["comparators"],
            rule_id=str(doc["id"]) if doc.get("id") is not None else None,
        )
    except (RuleError, KeyError, TypeError, ValueError) as exc:
        raise RulesetParseError(f"rule {doc.get('name')!r}: {exc}") from exc


def dumps(rules: Iterable[Rule]) -> str:
    return yaml.safe_dump_all(
        [rule_to_dict(r) for r in rules], sort_keys=False, default_flow_style=None
    )


def loads(text: str) -> list[Rule]:
    try:
        docs = [d for d in yaml.safe_load_all(io.StringIO(text)) if d is not None]
    except yaml.YAMLError as exc:
        raise RulesetParseError(str(exc)) from exc
    return [rule_from_dict(d) for d in docs]


def save_rules(rules: Iterable[Rule], path: str | Path) -> None:
    Path(path).write_text(dumps(rules), encoding="utf-8")


def load_rules(path: str | Path) -> list[Rule]:
    return loads(Path(path).read_text(encoding="utf-8"))


def load_cache(path: str | Path) -> RuleCache:
    try:
        return RuleCache(load_rules(path))
    except KeyError as exc:
        raise RulesetParseError(f"duplicate rule id {exc}") from exc


def validate(path: str | Path) -> list[str]:
    """Problems found in a ruleset file; empty when it is well formed."""
    try:
        rules = load_rules(path)
    except (OSError, RulesetParseError) as exc:
        return [str(exc)]
    problems = []
    ids = [r.rule_id for r in rules]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    problems += [f"duplicate rule id {i}" for i in dupes]
    return problems
