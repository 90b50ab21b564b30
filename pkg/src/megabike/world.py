"""Gridworld: lootboxes, bike kinematics and the existential threat."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


@dataclass
class WorldParams:
    side: float = 2000.0
    threat_speed: float = 2.0
    capture_radius: float = 10.0
    threat_spawn_gap: float = 50.0
    acquisition_radius: float = 5.0
    payoff_range: tuple[float, float] = (10.0, 50.0)
    k: float = 1.0
    # "single": one threat behind the first bike; "per_bike": one behind each.
    threats: str = "single"
    # "origin": every bike starts at (0, 0); "scattered": uniform in the square.
    bike_start: str = "origin"


@dataclass(frozen=True)
class GridPosition:
    x: float = 0.0
    y: float = 0.0

    def distance_to(self, other: "GridPosition") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def moved(self, heading: float, dist: float) -> "GridPosition":
        return GridPosition(
            self.x + dist * math.cos(heading), self.y + dist * math.sin(heading)
        )


@dataclass
class Lootbox:
    id: int
    position: GridPosition
    payoff: float
    consumed: bool = False


@dataclass(slots=True)
class LootboxView:
    """A lootbox as seen from one bike; this is what target rules read."""

    lootbox: Lootbox
    distance: float

    @property
    def payoff(self) -> float:
        return self.lootbox.payoff

    @property
    def id(self) -> int:
        return self.lootbox.id


@dataclass
class ThreatState:
    position: GridPosition
    speed: float = 2.0


def spawn_lootboxes(
    ratio: float,
    agent_count: int,
    rng: np.random.Generator,
    side: float = 2000.0,
    payoff_range: tuple[float, float] = (10.0, 50.0),
) -> list[Lootbox]:
    if ratio < 0:
        raise ValueError("lootbox ratio must be non-negative")
    count = math.floor(ratio * agent_count + 1e-9)
    if count == 0:
        return []
    half = side / 2.0
    xy = rng.uniform(-half, half, size=(count, 2))
    pay = rng.uniform(payoff_range[0], payoff_range[1], size=count)
    return [
        Lootbox(i, GridPosition(float(x), float(y)), float(p))
        for i, ((x, y), p) in enumerate(zip(xy, pay))
    ]


def steer_heading(votes: Sequence[float], current: float) -> float:
    """Circular mean of the steering votes; keeps ``current`` when there are none."""
    if not votes:
        return current
    s = sum(math.sin(v) for v in votes)
    c = sum(math.cos(v) for v in votes)
    if abs(s) < 1e-12 and abs(c) < 1e-12:
        return current
    return math.atan2(s, c)


def step_kinematics(bike, forces: Iterable, k: float = 1.0) -> GridPosition:
    """Apply one round of pedal/brake/steer inputs to ``bike`` in place."""
    forces = list(forces)
    pedal = sum(min(max(f.pedal, 0.0), 1.0) for f in forces)
    brake = sum(min(max(f.brake, 0.0), 1.0) for f in forces)
    bike.heading = steer_heading([f.steer for f in forces if f.steer is not None],
                                 bike.heading)
    net = max(pedal - brake, 0.0)
    if net > 0.0:
        bike.position = bike.position.moved(bike.heading, net * k)
    return bike.position


def advance_threat(
    threat: ThreatState, bikes: Sequence, capture_radius: float = 10.0
) -> tuple[ThreatState, list[int]]:
    """Move the threat toward the nearest live bike and report captures."""
    live = [b for b in bikes if not b.terminated]
    if not live:
        return threat, []
    pos = threat.position
    target = min(live, key=lambda b: (pos.distance_to(b.position), b.id))
    gap = pos.distance_to(target.position)
    if gap > 0.0:
        step = min(threat.speed, gap)
        heading = math.atan2(target.position.y - pos.y, target.position.x - pos.x)
        pos = pos.moved(heading, step)
    moved = ThreatState(pos, threat.speed)
    caught = [b.id for b in live if pos.distance_to(b.position) <= capture_radius + 1e-9]
    return moved, caught


def place_bikes(bikes: Sequence, params: WorldParams, rng: np.random.Generator) -> None:
    if params.bike_start == "scattered":
        half = params.side / 2.0
        xy = rng.uniform(-half, half, size=(len(bikes), 2))
        for bike, (x, y) in zip(bikes, xy):
            bike.position = GridPosition(float(x), float(y))
    elif params.bike_start != "origin":
        raise ValueError(f"unknown bike_start {params.bike_start!r}")


def spawn_threat(bike, params: WorldParams) -> ThreatState:
    """Place a threat ``threat_spawn_gap`` units behind ``bike``."""
    return ThreatState(
        bike.position.moved(bike.heading + math.pi, params.threat_spawn_gap),
        params.threat_speed,
    )


def acquisitions(bikes: Sequence, lootboxes: Sequence[Lootbox], radius: float
                 ) -> dict[int, list[Lootbox]]:
    """Lootboxes within ``radius`` of a live bike; lower bike id wins ties."""
    won: dict[int, list[Lootbox]] = {}
    open_boxes = [lb for lb in lootboxes if not lb.consumed]
    if not open_boxes:
        return won
    taken: set[int] = set()
    for bike in sorted(bikes, key=lambda b: b.id):
        if bike.terminated:
            continue
        for lb in open_boxes:
            if lb.id not in taken and bike.position.distance_to(lb.position) <= radius:
                won.setdefault(bike.id, []).append(lb)
                taken.add(lb.id)
    return won
