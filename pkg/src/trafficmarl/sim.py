"""Discrete-time grid road network microsimulation.

Vehicles are points moving along single-lane directed links between
signalised intersections. One simulation step is one second. Movement
is a point-queue model: a vehicle advances by at most ``cruise_speed``
metres, never closer than ``min_gap`` to its leader, and never past a
red stop line.

Intersection ``k`` sits at grid cell ``(k // cols, k % cols)``; row 0 is
the northern edge. Every intersection has four approach lanes indexed
0..3 for vehicles arriving from the north, east, south and west.
Boundary nodes are labelled by side and index, e.g. ``"N2"`` is the
point north of column 2 and ``"E0"`` is east of row 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence, Union

CRUISE_SPEED = 13.9
MIN_GAP = 7.0
WAIT_SPEED_THRESHOLD = 0.1
# vehicles held by a red light stop this far before the stop line
STOP_SETBACK = 1.0
DEFAULT_ROAD_LENGTH = 150.0

NORTH, EAST, SOUTH, WEST = 0, 1, 2, 3
SIDES = "NESW"

Node = Union[int, str]


class ConfigurationError(ValueError):
    """Invalid network, schedule or experiment configuration."""


class SimulationError(RuntimeError):
    """Internal invariant broken during stepping; the episode must abort."""


@dataclass(frozen=True)
class Lane:
    id: int
    start: Node
    end: Node
    length: float
    start_xy: tuple[float, float]
    end_xy: tuple[float, float]
    # approach index at ``end`` when it is an intersection, else None
    approach: int | None

    @property
    def is_exit(self) -> bool:
        return isinstance(self.end, str)

    def point_at(self, pos: float) -> tuple[float, float]:
        f = pos / self.length
        (x0, y0), (x1, y1) = self.start_xy, self.end_xy
        return x0 + f * (x1 - x0), y0 + f * (y1 - y0)


@dataclass
class RoadNetwork:
    rows: int
    cols: int
    road_length_m: float
    lanes: list[Lane]
    lanes_per_approach: int = 1
    lane_between: dict[tuple[Node, Node], int] = field(default_factory=dict)
    # approaches[k] = lane ids arriving at k from N, E, S, W
    approaches: dict[int, tuple[int, int, int, int]] = field(default_factory=dict)

    @property
    def intersections(self) -> list[int]:
        return list(range(self.rows * self.cols))

    def coords(self, node: Node) -> tuple[float, float]:
        L = self.road_length_m
        if isinstance(node, int):
            r, c = divmod(node, self.cols)
            return c * L, r * L
        side, idx = node[0], int(node[1:])
        if side == "N":
            return idx * L, -L
        if side == "S":
            return idx * L, self.rows * L
        if side == "E":
            return self.cols * L, idx * L
        if side == "W":
            return -L, idx * L
        raise ConfigurationError(f"unknown boundary node {node!r}")

    def boundary_nodes(self) -> list[str]:
        return ([f"N{c}" for c in range(self.cols)] + [f"E{r}" for r in range(self.rows)]
                + [f"S{c}" for c in range(self.cols)] + [f"W{r}" for r in range(self.rows)])

    def attached_intersection(self, boundary: str) -> int:
        """Intersection adjacent to a boundary node."""
        if not isinstance(boundary, str) or len(boundary) < 2 or boundary[0] not in SIDES:
            raise ConfigurationError(f"unknown boundary node {boundary!r}")
        try:
            idx = int(boundary[1:])
        except ValueError:
            raise ConfigurationError(f"unknown boundary node {boundary!r}") from None
        side = boundary[0]
        limit = self.cols if side in "NS" else self.rows
        if not 0 <= idx < limit:
            raise ConfigurationError(f"boundary node {boundary!r} is off the grid")
        if side == "N":
            return idx
        if side == "S":
            return (self.rows - 1) * self.cols + idx
        if side == "E":
            return idx * self.cols + self.cols - 1
        return idx * self.cols

    def neighbor(self, k: int, side: int) -> Node:
        """Node adjacent to intersection ``k`` on ``side`` (intersection or boundary)."""
        r, c = divmod(k, self.cols)
        dr, dc = ((-1, 0), (0, 1), (1, 0), (0, -1))[side]
        rr, cc = r + dr, c + dc
        if 0 <= rr < self.rows and 0 <= cc < self.cols:
            return rr * self.cols + cc
        return f"{SIDES[side]}{c if side in (NORTH, SOUTH) else r}"

    def lane(self, start: Node, end: Node) -> Lane:
        try:
            return self.lanes[self.lane_between[(start, end)]]
        except KeyError:
            raise ConfigurationError(f"no lane from {start!r} to {end!r}") from None


def build_grid(rows: int, cols: int, road_length_m: float = DEFAULT_ROAD_LENGTH) -> RoadNetwork:
    """Build a ``rows`` x ``cols`` grid with boundary entry and exit lanes."""
    if rows < 1 or cols < 1:
        raise ConfigurationError(f"grid dimensions must be positive, got {rows}x{cols}")
    if not road_length_m > 0:
        raise ConfigurationError(f"road length must be positive, got {road_length_m}")
    net = RoadNetwork(rows=rows, cols=cols, road_length_m=float(road_length_m), lanes=[])

    def add(start: Node, end: Node, approach: int | None) -> int:
        lane = Lane(id=len(net.lanes), start=start, end=end, length=net.road_length_m,
                    start_xy=net.coords(start), end_xy=net.coords(end), approach=approach)
        net.lanes.append(lane)
        net.lane_between[(start, end)] = lane.id
        return lane.id

    for k in range(rows * cols):
        incoming = []
        for side in range(4):
            incoming.append(add(net.neighbor(k, side), k, side))
        net.approaches[k] = tuple(incoming)
    for k in range(rows * cols):
        for side in range(4):
            other = net.neighbor(k, side)
            if isinstance(other, str):
                add(k, other, None)
    return net


class VehicleState(Enum):
    PENDING = "pending"
    ACTIVE = "active"
    EXITED = "exited"


@dataclass(eq=False)
class Vehicle:
    id: int
    route: tuple[int, ...]
    depart_step: int
    lane_index: int = 0
    lane_pos_m: float = 0.0
    speed_mps: float = 0.0
    cumulative_wait_s: float = 0.0
    state: VehicleState = VehicleState.PENDING

    @property
    def lane_id(self) -> int:
        return self.route[self.lane_index]

    @property
    def is_waiting(self) -> bool:
        return self.state is VehicleState.ACTIVE and self.speed_mps < WAIT_SPEED_THRESHOLD


@dataclass
class TrafficLight:
    intersection: int
    phase_durations_s: list[int] = field(default_factory=lambda: [30, 30, 30, 30])
    current_phase: int = 0
    phase_elapsed_s: int = 0
    cycle_index: int = 0

    @property
    def at_cycle_boundary(self) -> bool:
        return self.current_phase == 0 and self.phase_elapsed_s == 0

    @property
    def cycle_length_s(self) -> int:
        return sum(self.phase_durations_s)

    def is_green(self, approach: int) -> bool:
        return approach == self.current_phase

    def tick(self) -> None:
        self.phase_elapsed_s += 1
        if self.phase_elapsed_s >= self.phase_durations_s[self.current_phase]:
            self.phase_elapsed_s = 0
            self.current_phase = (self.current_phase + 1) % 4
            if self.current_phase == 0:
                self.cycle_index += 1


@dataclass
class SimClock:
    step: int = 0
    episode: int = 0


@dataclass(frozen=True)
class LaneEvent:
    step: int
    vehicle_id: int
    lane_id: int
    kind: str  # "enter" | "transfer" | "exit"


class World:
    """Mutable simulation state: network, vehicles, lights and clock."""

    def __init__(self, network: RoadNetwork, vehicles: Iterable[Vehicle],
                 lights: dict[int, TrafficLight] | None = None,
                 clock: SimClock | None = None,
                 cruise_speed: float = CRUISE_SPEED, min_gap: float = MIN_GAP):
        self.network = network
        self.vehicles = list(vehicles)
        self.lights = lights if lights is not None else {
            k: TrafficLight(k) for k in network.intersections}
        self.clock = clock or SimClock()
        self.cruise_speed = cruise_speed
        self.min_gap = min_gap
        # leader first, i.e. descending position
        self.queues: dict[int, list[Vehicle]] = {lane.id: [] for lane in network.lanes}
        self._pending = sorted((v for v in self.vehicles if v.state is VehicleState.PENDING),
                               key=lambda v: (v.depart_step, v.id))
        for v in self.vehicles:
            if v.state is VehicleState.ACTIVE:
                self._queue_of(v).append(v)
        for q in self.queues.values():
            q.sort(key=lambda v: -v.lane_pos_m)
        self.exited_count = sum(v.state is VehicleState.EXITED for v in self.vehicles)

    def _queue_of(self, v: Vehicle) -> list[Vehicle]:
        try:
            return self.queues[v.lane_id]
        except (KeyError, IndexError):
            raise SimulationError(f"vehicle {v.id} is on unknown lane") from None

    def counts(self) -> tuple[int, int, int]:
        """(pending, active, exited) vehicle counts."""
        active = sum(len(q) for q in self.queues.values())
        return len(self._pending), active, self.exited_count

    def active_vehicles(self) -> list[Vehicle]:
        return [v for lane in self.network.lanes for v in self.queues[lane.id]]

    def spawn_pending(self) -> list[Vehicle]:
        """Activate pending vehicles due by now; blocked entries retry next step."""
        step = self.clock.step
        activated, still = [], []
        for v in self._pending:
            if v.depart_step > step:
                still.append(v)
                continue
            q = self._queue_of(v)
            if q and q[-1].lane_pos_m < self.min_gap:
                still.append(v)
                continue
            v.state = VehicleState.ACTIVE
            v.lane_pos_m = 0.0
            v.speed_mps = 0.0
            q.append(v)
            activated.append(v)
        self._pending = still
        return activated

    def move(self) -> list[LaneEvent]:
        """Advance every active vehicle by one second and then every light."""
        lanes = self.network.lanes
        cruise, gap = self.cruise_speed, self.min_gap
        step = self.clock.step
        crossing: list[Vehicle] = []

        for lane in lanes:
            q = self.queues[lane.id]
            if not q:
                continue
            L = lane.length
            can_cross = lane.is_exit or self.lights[lane.end].is_green(lane.approach)
            limit = L if can_cross else L - STOP_SETBACK
            leader_pos = math.inf
            for idx, v in enumerate(q):
                old = v.lane_pos_m
                target = min(old + cruise, leader_pos - gap, limit)
                new = max(old, target)
                if idx == 0 and can_cross and old + cruise >= L:
                    crossing.append(v)
                    new = L
                v.lane_pos_m = new
                v.speed_mps = new - old
                leader_pos = new

        events = []
        for v in crossing:
            q = self._queue_of(v)
            if v.lane_index == len(v.route) - 1:
                q.pop(0)
                v.state = VehicleState.EXITED
                v.speed_mps = cruise
                self.exited_count += 1
                events.append(LaneEvent(step, v.id, v.lane_id, "exit"))
                continue
            nq = self.queues.get(v.route[v.lane_index + 1])
            if nq is None:
                raise SimulationError(f"vehicle {v.id} routed onto unknown lane")
            if nq and nq[-1].lane_pos_m < gap:
                continue  # blocked downstream; held at the stop line
            q.pop(0)
            v.lane_index += 1
            v.lane_pos_m = 0.0
            v.speed_mps = cruise
            nq.append(v)
            events.append(LaneEvent(step, v.id, v.lane_id, "transfer"))

        for q in self.queues.values():
            for v in q:
                if v.speed_mps < WAIT_SPEED_THRESHOLD:
                    v.cumulative_wait_s += 1.0
        for k in sorted(self.lights):
            self.lights[k].tick()
        self.clock.step += 1
        return events

    def step(self) -> list[LaneEvent]:
        """One full second: spawn due vehicles, then move."""
        events = [LaneEvent(self.clock.step, v.id, v.lane_id, "enter")
                  for v in self.spawn_pending()]
        return events + self.move()


def make_vehicles(schedule: Sequence[tuple[int, Sequence[int], int]]) -> list[Vehicle]:
    """Vehicles from ``(vehicle_id, route_lane_ids, depart_step)`` triples."""
    return [Vehicle(id=vid, route=tuple(route), depart_step=int(dep)) for vid, route, dep in schedule]
