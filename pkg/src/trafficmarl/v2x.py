"""Circular-coverage V2X sensing around an intersection.

An agent only sees vehicles whose point position lies within
``radius_m`` of its intersection centre, and only on its four approach
lanes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple

from .sim import WAIT_SPEED_THRESHOLD, World

DEFAULT_COVERAGE_AREA_M2 = 45_216.0


@dataclass(frozen=True)
class CoverageRegion:
    center: tuple[float, float]
    radius_m: float

    def __post_init__(self):
        if not self.radius_m > 0:
            raise ValueError(f"coverage radius must be positive, got {self.radius_m}")

    @classmethod
    def from_area(cls, center: tuple[float, float], area_m2: float = DEFAULT_COVERAGE_AREA_M2):
        return cls(center, radius_from_area(area_m2))

    @property
    def area_m2(self) -> float:
        return math.pi * self.radius_m ** 2

    def contains(self, xy: tuple[float, float]) -> bool:
        return math.hypot(xy[0] - self.center[0], xy[1] - self.center[1]) <= self.radius_m


def radius_from_area(area_m2: float) -> float:
    if not area_m2 > 0:
        raise ValueError(f"coverage area must be positive, got {area_m2}")
    return math.sqrt(area_m2 / math.pi)


def region_for(world: World, intersection: int, area_m2: float = DEFAULT_COVERAGE_AREA_M2) -> CoverageRegion:
    return CoverageRegion.from_area(world.network.coords(intersection), area_m2)


class StateVector(NamedTuple):
    """Vehicle counts on the north, east, south and west approaches."""
    l0: int
    l1: int
    l2: int
    l3: int


class LaneWaitStats(NamedTuple):
    lane: int
    waiting_count: int
    waiting_time_s: float


def _sensed(world: World, lane_id: int, region: CoverageRegion):
    lane = world.network.lanes[lane_id]
    for v in world.queues[lane_id]:
        if region.contains(lane.point_at(v.lane_pos_m)):
            yield v


def sense_state(agent_intersection: int, region: CoverageRegion, world: World) -> StateVector:
    lanes = world.network.approaches[agent_intersection]
    return StateVector(*(sum(1 for _ in _sensed(world, lane, region)) for lane in lanes))


def lane_wait_stats(lane: int, region: CoverageRegion, world: World,
                    since: Mapping[int, float] | None = None) -> LaneWaitStats:
    """Waiting vehicles on ``lane`` inside ``region``.

    ``since`` maps vehicle id to its cumulative wait at the agent's last
    decision point; vehicles absent from it are counted from zero.
    """
    since = since or {}
    count, total = 0, 0.0
    for v in _sensed(world, lane, region):
        if v.speed_mps < WAIT_SPEED_THRESHOLD:
            count += 1
            total += v.cumulative_wait_s - since.get(v.id, 0.0)
    return LaneWaitStats(lane, count, total)


def agent_wait_stats(agent_intersection: int, region: CoverageRegion, world: World,
                     since: Mapping[int, float] | None = None) -> list[LaneWaitStats]:
    return [lane_wait_stats(lane, region, world, since)
            for lane in world.network.approaches[agent_intersection]]


def wait_snapshot(world: World) -> dict[int, float]:
    """Cumulative wait of every active vehicle, keyed by id."""
    return {v.id: v.cumulative_wait_s for q in world.queues.values() for v in q}
