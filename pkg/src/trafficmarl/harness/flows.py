"""Vehicle flow schedules: CSV ingestion, routing and the bundled scenario.

Schedule CSV columns, in order::

    vehicle_id,origin,destination,depart_step

``origin`` and ``destination`` are boundary node labels (``N0``..``N{cols-1}``,
``E0``..``E{rows-1}``, ``S*``, ``W*``); ``depart_step`` is the second of the
episode at which the vehicle tries to enter.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ..sim import ConfigurationError, RoadNetwork

HEADER = ["vehicle_id", "origin", "destination", "depart_step"]
REFERENCE_SCENARIO = "reference_128.csv"


@dataclass(frozen=True)
class FlowEntry:
    vehicle_id: int
    origin: str
    destination: str
    depart_step: int


@dataclass
class FlowSchedule:
    entries: list[FlowEntry]
    routes: list[tuple[int, ...]]

    def __len__(self) -> int:
        return len(self.entries)

    def vehicle_specs(self) -> list[tuple[int, tuple[int, ...], int]]:
        return [(e.vehicle_id, r, e.depart_step) for e, r in zip(self.entries, self.routes)]

    def check_horizon(self, episode_length_s: int) -> None:
        late = [e.vehicle_id for e in self.entries if not 0 <= e.depart_step < episode_length_s]
        if late:
            raise ConfigurationError(f"vehicles {late[:5]} depart outside [0, {episode_length_s})")


def grid_path(network: RoadNetwork, start: int, end: int) -> list[int]:
    """Intersections from ``start`` to ``end`` along a shortest grid path.

    Each hop moves along the axis with more remaining distance; on a tie
    an eastward move wins, then a southward one, then the horizontal axis.
    """
    cols = network.cols
    r, c = divmod(start, cols)
    r_end, c_end = divmod(end, cols)
    path = [start]
    while (r, c) != (r_end, c_end):
        dr, dc = r_end - r, c_end - c
        if abs(dc) > abs(dr):
            horizontal = True
        elif abs(dr) > abs(dc):
            horizontal = False
        else:
            horizontal = dc > 0 or not dr > 0
        if horizontal:
            c += 1 if dc > 0 else -1
        else:
            r += 1 if dr > 0 else -1
        path.append(r * cols + c)
    return path


def route_lanes(network: RoadNetwork, origin: str, destination: str) -> tuple[int, ...]:
    if origin == destination:
        raise ConfigurationError(f"origin and destination are both {origin!r}")
    start = network.attached_intersection(origin)
    end = network.attached_intersection(destination)
    nodes = [origin, *grid_path(network, start, end), destination]
    return tuple(network.lane(u, v).id for u, v in zip(nodes[:-1], nodes[1:]))


def parse_flow_rows(rows, network: RoadNetwork, source: str = "<schedule>") -> FlowSchedule:
    entries, seen = [], set()
    for lineno, row in enumerate(rows, start=2):
        try:
            entry = FlowEntry(int(row["vehicle_id"]), row["origin"].strip(),
                              row["destination"].strip(), int(row["depart_step"]))
        except (KeyError, ValueError, AttributeError, TypeError) as exc:
            raise ConfigurationError(f"{source}:{lineno}: malformed row {row!r}") from exc
        if entry.vehicle_id in seen:
            raise ConfigurationError(f"{source}:{lineno}: duplicate vehicle id {entry.vehicle_id}")
        if entry.depart_step < 0:
            raise ConfigurationError(f"{source}:{lineno}: negative depart_step")
        seen.add(entry.vehicle_id)
        entries.append(entry)
    entries.sort(key=lambda e: (e.depart_step, e.vehicle_id))
    routes = []
    for e in entries:
        try:
            routes.append(route_lanes(network, e.origin, e.destination))
        except ConfigurationError as exc:
            raise ConfigurationError(f"{source}: vehicle {e.vehicle_id}: {exc}") from None
    return FlowSchedule(entries, routes)


def load_flow_schedule(path, network: RoadNetwork) -> FlowSchedule:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != HEADER:
            raise ConfigurationError(f"{path}: expected header {','.join(HEADER)}, got {reader.fieldnames}")
        return parse_flow_rows(reader, network, str(path))


def reference_schedule(network: RoadNetwork) -> FlowSchedule:
    """The bundled 128-vehicle scenario (6x6 grid)."""
    text = resources.files("trafficmarl.data").joinpath(REFERENCE_SCENARIO).read_text()
    reader = csv.DictReader(text.splitlines())
    return parse_flow_rows(reader, network, REFERENCE_SCENARIO)


def generate_schedule(network: RoadNetwork, n_vehicles: int = 128, seed: int = 7,
                      depart_window: int = 200) -> list[FlowEntry]:
    """Random boundary-to-boundary trips with uniform departure times.

    Origin and destination are drawn from different sides of the grid.
    This is how the bundled reference scenario was produced.
    """
    rng = np.random.default_rng(seed)
    nodes = network.boundary_nodes()
    out = []
    for vid in range(n_vehicles):
        origin = nodes[rng.integers(len(nodes))]
        dest = origin
        while dest[0] == origin[0]:
            dest = nodes[rng.integers(len(nodes))]
        out.append(FlowEntry(vid, origin, dest, int(rng.integers(depart_window))))
    return out


def write_schedule(entries, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for e in entries:
            w.writerow([e.vehicle_id, e.origin, e.destination, e.depart_step])
