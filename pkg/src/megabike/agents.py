"""Agent state and the default per-round policies."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from megabike.errors import EmptyCandidates
from megabike.rules import Rule


@dataclass
class AgentParams:
    e_max: float = 100.0
    initial_energy: float = 100.0
    pedal_cost: float = 0.5
    # Per-round upkeep paid while seated, pedalling or not.
    rest_cost: float = 0.0
    p_defect: float = 0.0
    slack_fraction: float = 0.05
    hunger_threshold: float = 0.5


@dataclass
class Agent:
    id: int
    energy: float = 100.0
    bike_id: int | None = None
    contribution: float = 0.0
    alive: bool = True


@dataclass(frozen=True)
class MovementDirective:
    intensity: float = 1.0
    heading: float = 0.0


@dataclass(frozen=True)
class PedalAction:
    agent_id: int
    pedal: float = 0.0
    brake: float = 0.0
    steer: float | None = None


@dataclass(frozen=True)
class Ballot:
    agent_id: int
    choice: Any


@dataclass(frozen=True)
class MutationProposal:
    proposer: int
    rule_id: str
    row: int
    fraction: float


def decide_action(
    agent: Agent,
    directive: MovementDirective,
    params: AgentParams | None = None,
    rng: np.random.Generator | None = None,
) -> PedalAction | None:
    """Follow the directive, or free-ride with probability ``p_defect``.

    Pedalling is paid for immediately; an agent drained to zero is eliminated.
    """
    params = params or AgentParams()
    if not agent.alive:
        return None
    defect = params.p_defect > 0 and (
        params.p_defect >= 1.0 or (rng is not None and rng.random() < params.p_defect)
    )
    pedal = 0.0 if defect else min(max(directive.intensity, 0.0), 1.0)
    cost = params.pedal_cost * pedal + params.rest_cost
    if cost > 0.0:
        agent.energy = max(agent.energy - cost, 0.0)
        agent.contribution += pedal
        if agent.energy <= 0.0:
            agent.alive = False
    return PedalAction(agent.id, pedal=pedal, brake=0.0, steer=directive.heading)


def propose_slack(
    agent: Agent, rule: Rule, params: AgentParams | None = None, row: int = 0
) -> MutationProposal | None:
    """Hungry agents ask to loosen the rule, the rest to tighten it."""
    params = params or AgentParams()
    if not rule.is_mutable or not agent.alive:
        return None
    hungry = agent.energy < params.hunger_threshold * params.e_max
    frac = params.slack_fraction if hungry else -params.slack_fraction
    return MutationProposal(agent.id, rule.rule_id, row, frac)


def vote(
    agent: Agent,
    candidates: Sequence[Any],
    rng: np.random.Generator | None = None,
    scores: Sequence[float] | None = None,
) -> Ballot:
    """Lootboxes are ranked by payoff/(distance+1); anything else is a seeded draw.

    ``scores`` lets a caller share one scoring pass across many voters.
    """
    if not candidates:
        raise EmptyCandidates("nothing to vote on")
    if len(candidates) == 1:
        return Ballot(agent.id, candidates[0])
    if scores is None:
        scores = lootbox_scores(candidates)
    if scores is not None:
        return Ballot(agent.id, candidates[int(np.argmax(scores))])
    rng = rng if rng is not None else np.random.default_rng()
    return Ballot(agent.id, candidates[int(rng.integers(len(candidates)))])


def lootbox_scores(candidates: Sequence[Any]) -> np.ndarray | None:
    """payoff/(distance+1) per candidate, or None if they are not lootboxes."""
    try:
        pay = np.array([c.payoff for c in candidates], dtype=np.float64)
        dist = np.array([c.distance for c in candidates], dtype=np.float64)
    except AttributeError:
        return None
    return pay / (dist + 1.0)
