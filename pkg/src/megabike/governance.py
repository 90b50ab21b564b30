"""Per-bike institutions: membership, leadership, targeting, loot, amendments."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from megabike.agents import Agent, Ballot, MutationProposal, lootbox_scores, vote
from megabike.errors import AlreadyConsumed, ImmutableRule, NoOccupants
from megabike.rules import Action, EvalStats, RuleCache, apply_slack, prune
from megabike.world import GridPosition, Lootbox, LootboxView

__all__ = [
    "Megabike",
    "MutationProposal",
    "allocate_loot",
    "elect_leader",
    "exclusion_and_admission",
    "form_bikes",
    "lootbox_views",
    "plurality",
    "resolve_mutations",
    "select_target",
]

# Allocation shares are floored to this grid so every partial sum is exact.
_SHARE_QUANTUM = 2.0**-20


@dataclass
class Megabike:
    id: int
    seats: int
    occupants: list[int] = field(default_factory=list)
    leader: int | None = None
    position: GridPosition = field(default_factory=GridPosition)
    heading: float = 0.0
    ruleset: RuleCache = field(default_factory=RuleCache)
    terminated: bool = False
    allocation_policy: str = "equal"
    ballots_cast: int = 0
    banned: set[int] = field(default_factory=set)

    @property
    def occupant_count(self) -> int:
        return len(self.occupants)

    @property
    def free_seats(self) -> int:
        return self.seats - len(self.occupants)


def form_bikes(
    agents: Sequence[Agent],
    seats: int,
    rng: np.random.Generator,
    base_ruleset: RuleCache | None = None,
    allocation_policy: str = "equal",
) -> list[Megabike]:
    """Shuffle living agents into ceil(n/seats) bikes, filled in order."""
    if seats < 1:
        raise ValueError("seats must be >= 1")
    living = [a for a in agents if a.alive]
    order = rng.permutation(len(living))
    base = base_ruleset or RuleCache()
    bikes = []
    for b in range(math.ceil(len(living) / seats)):
        members = [living[i] for i in order[b * seats:(b + 1) * seats]]
        bike = Megabike(
            id=b,
            seats=seats,
            occupants=[a.id for a in members],
            ruleset=base.copy(),
            allocation_policy=allocation_policy,
        )
        for a in members:
            a.bike_id = bike.id
        bikes.append(bike)
    return bikes


def plurality(ballots: Iterable[Ballot], key=None):
    """Most-voted choice; ties go to the smallest ``key(choice)``."""
    tally = Counter(b.choice if key is None else key(b.choice) for b in ballots)
    if not tally:
        return None
    top = max(tally.values())
    return min(c for c, n in tally.items() if n == top)


def elect_leader(bike: Megabike, ballots: Sequence[Ballot]) -> int:
    if not bike.occupants:
        raise NoOccupants(f"bike {bike.id} has no occupants")
    seated = set(bike.occupants)
    valid = [b for b in ballots if b.agent_id in seated and b.choice in seated]
    winner = plurality(valid)
    if winner is None:
        winner = min(bike.occupants)
    bike.leader = winner
    bike.ballots_cast += len(valid)
    return winner


def lootbox_views(bike: Megabike, lootboxes: Sequence[Lootbox]) -> list[LootboxView]:
    open_boxes = [lb for lb in lootboxes if not lb.consumed]
    if not open_boxes:
        return []
    xy = np.array([(lb.position.x, lb.position.y) for lb in open_boxes])
    d = np.hypot(xy[:, 0] - bike.position.x, xy[:, 1] - bike.position.y)
    return [LootboxView(lb, float(di)) for lb, di in zip(open_boxes, d)]


def select_target(
    bike: Megabike,
    lootboxes: Sequence[Lootbox],
    agents: Mapping[int, Agent],
    rng: np.random.Generator | None = None,
    stratified: bool = True,
    stats: EvalStats | None = None,
) -> Lootbox | None:
    """Prune open lootboxes by the bike's target rules, voting only on a tie."""
    views = lootbox_views(bike, lootboxes)
    survivors = prune(views, bike.ruleset, Action.TARGET_SELECTION, stratified, stats)
    if not survivors:
        return None
    if len(survivors) == 1:
        return survivors[0].lootbox
    voters = [agents[i] for i in bike.occupants if agents[i].alive]
    scores = lootbox_scores(survivors)
    ballots = [vote(a, survivors, rng, scores) for a in voters]
    bike.ballots_cast += len(ballots)
    if not ballots:
        return None
    tally = Counter(b.choice.id for b in ballots)
    top = max(tally.values())
    tied = [v for v in survivors if tally.get(v.id) == top]
    return min(tied, key=lambda v: (v.distance, v.id)).lootbox


def _quantize(x: float) -> float:
    return math.floor(x / _SHARE_QUANTUM) * _SHARE_QUANTUM


def allocate_loot(
    bike: Megabike, lootbox: Lootbox, recipients: Sequence[Agent], policy: str | None = None
) -> dict[int, float]:
    """Split a lootbox's payoff; the last recipient absorbs the rounding remainder.

    Marks the lootbox consumed. Shares are not credited here.
    """
    if lootbox.consumed:
        raise AlreadyConsumed(f"lootbox {lootbox.id} already consumed")
    lootbox.consumed = True
    living = [a for a in recipients if a.alive]
    if not living:
        return {}
    policy = policy or bike.allocation_policy
    if policy == "contribution" and sum(a.contribution for a in living) > 0:
        weights = [a.contribution for a in living]
    elif policy in ("equal", "contribution"):
        weights = [1.0] * len(living)
    else:
        raise ValueError(f"unknown allocation policy {policy!r}")
    total = sum(weights)
    shares = {}
    given = 0.0
    for a, w in zip(living[:-1], weights[:-1]):
        s = _quantize(lootbox.payoff * w / total)
        shares[a.id] = s
        given += s
    shares[living[-1].id] = lootbox.payoff - given
    return shares


def resolve_mutations(
    bike: Megabike, proposals: Sequence[MutationProposal], electorate: int | None = None
) -> RuleCache:
    """Enact each amendment backed by a strict majority, once per rule."""
    seated = set(bike.occupants)
    voters = electorate if electorate is not None else len(seated)
    groups: dict[tuple[str, int, bool], list[MutationProposal]] = {}
    seen: set[int] = set()
    for p in proposals:
        if p.proposer not in seated or p.proposer in seen or p.rule_id not in bike.ruleset:
            continue
        seen.add(p.proposer)
        groups.setdefault((p.rule_id, p.row, p.fraction > 0), []).append(p)
    enacted: set[str] = set()
    for (rule_id, row, _), group in groups.items():
        if rule_id in enacted or 2 * len(group) <= voters:
            continue
        try:
            new = apply_slack(bike.ruleset.get(rule_id), row, group[0].fraction)
        except (ImmutableRule, IndexError):
            continue
        bike.ruleset.replace(new)
        enacted.add(rule_id)
    return bike.ruleset


def exclusion_and_admission(
    bike: Megabike,
    votes: Sequence[Ballot],
    agents: Mapping[int, Agent],
    unseated: list[int] | None = None,
    stratified: bool = True,
    stats: EvalStats | None = None,
) -> Megabike:
    """Drop the dead and majority-excluded, then fill free seats from ``unseated``.

    Admitted ids are removed from ``unseated``; excluded ids are appended.
    """
    seated = set(bike.occupants)
    electorate = sum(1 for i in bike.occupants if agents[i].alive)
    tally = Counter(
        b.choice for b in votes if b.agent_id in seated and b.choice in seated
    )
    excluded = {c for c, n in tally.items() if 2 * n > electorate}
    keep = []
    for i in bike.occupants:
        a = agents[i]
        if not a.alive:
            a.bike_id = None
        elif i in excluded:
            a.bike_id = None
            bike.banned.add(i)
            if unseated is not None:
                unseated.append(i)
        else:
            keep.append(i)
    bike.occupants = keep
    if bike.leader is not None and bike.leader not in keep:
        bike.leader = None
    if unseated and bike.free_seats > 0 and not bike.terminated:
        pool = [agents[i] for i in unseated if i not in bike.banned and agents[i].alive]
        eligible = prune(pool, bike.ruleset, Action.KICKOFF, stratified, stats)
        for a in eligible[: bike.free_seats]:
            bike.occupants.append(a.id)
            a.bike_id = bike.id
            unseated.remove(a.id)
    return bike
