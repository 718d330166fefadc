"""Directed multigraph construction and arc cost model.

Three arc families are generated from an instance:

* shuttle arcs (always open): origin -> hub and hub -> destination for every
  trip and hub, plus the direct origin -> destination connection, all
  deduplicated across trips;
* bus arcs (the design decisions): both directions between every ordered hub
  pair and between each hub and its three nearest rail stations, one copy per
  offered frequency;
* rail arcs (always open): between every ordered pair of distinct stations
  sharing a line, at the fixed rail frequency, so an uninterrupted rail ride
  consumes a single leg of the route budget.

Arc ids are dense 0..len(arcs)-1 and stable across identical builds.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .instance import CostParams, Instance, Trip, great_circle_distance, travel_time


class Mode(enum.Enum):
    SHUTTLE = "shuttle"
    BUS = "bus"
    RAIL = "rail"


# Build order for stable arc ids.
_MODE_ORDER = {Mode.SHUTTLE: 0, Mode.BUS: 1, Mode.RAIL: 2}


@dataclass(frozen=True)
class Arc:
    """One edge of the directed multigraph, identified by (i, j, mode, frequency)."""
    id: int
    i: str
    j: str
    mode: Mode
    frequency: int          # departures per horizon; 0 for on-demand shuttles
    distance: float         # miles
    time: float             # minutes
    fixed_cost: float       # currency to open the arc; 0 for fixed-open arcs
    fixed_open: bool        # shuttles and rail are always available

    @property
    def key(self) -> tuple[str, str, str, int]:
        return (self.i, self.j, self.mode.value, self.frequency)


def arc_fixed_cost(alpha: float, bus_cost_per_mile: float, frequency: int,
                   distance: float) -> float:
    """Opening cost of a bus arc: (1-alpha) * cost/mile * frequency * distance."""
    return (1.0 - alpha) * bus_cost_per_mile * frequency * distance


def trip_arc_cost(arc: Arc, trip: Trip, params: CostParams) -> float:
    """Per-trip traversal cost of an arc.

    Shuttle legs bill the on-demand vehicle per passenger-mile plus the ride
    time, weighted by alpha. Bus and rail legs cost the rider only time: the
    in-vehicle time, the fixed transfer time, and the expected wait of half a
    headway. The result is strictly positive for any usable arc.
    """
    if arc.mode is Mode.SHUTTLE:
        cost = trip.passengers * (
            (1.0 - params.alpha) * params.shuttle_cost_per_mile * arc.distance
            + params.alpha * arc.time)
    else:
        cost = params.alpha * (
            arc.time + params.transfer_time
            + params.horizon / (2.0 * arc.frequency))
        if params.scale_transit_cost_by_passengers:
            cost *= trip.passengers
    if not cost > 0.0:
        raise ValueError(
            f"nonpositive traversal cost {cost} on arc {arc.key} for trip {trip.id}")
    return cost


def build_arcs(inst: Instance) -> list[Arc]:
    """Construct the full arc set of an instance. Deterministic."""
    params = inst.params
    coords = {s.id: (s.lat, s.lon) for s in inst.stops}
    hubs = [s.id for s in inst.stops if s.is_hub]

    def dist(i: str, j: str) -> float:
        return great_circle_distance(coords[i], coords[j])

    shuttle_pairs: set[tuple[str, str]] = set()
    for t in inst.trips:
        o, d = t.origin_stop, t.destination_stop
        shuttle_pairs.add((o, d))
        for h in hubs:
            if h != o:
                shuttle_pairs.add((o, h))
            if h != d:
                shuttle_pairs.add((h, d))

    bus_keys: set[tuple[str, str, int]] = set()
    for h1 in hubs:
        for h2 in hubs:
            if h1 == h2:
                continue
            for f in params.bus_frequencies:
                bus_keys.add((h1, h2, f))

    stations = sorted({sid for line in inst.rail_lines for sid in line.station_ids})
    for h in hubs:
        ranked = sorted((s for s in stations if s != h),
                        key=lambda s: (dist(h, s), s))
        for s in ranked[:3]:
            for f in params.bus_frequencies:
                bus_keys.add((h, s, f))
                bus_keys.add((s, h, f))

    rail_keys: set[tuple[str, str]] = set()
    for line in inst.rail_lines:
        for a in line.station_ids:
            for b in line.station_ids:
                if a != b:
                    rail_keys.add((a, b))

    arcs: list[Arc] = []

    def add(i: str, j: str, mode: Mode, f: int, fixed: bool) -> None:
        d = dist(i, j)
        t = travel_time(d, params)
        beta = 0.0 if fixed else arc_fixed_cost(params.alpha,
                                                params.bus_cost_per_mile, f, d)
        arcs.append(Arc(id=len(arcs), i=i, j=j, mode=mode, frequency=f,
                        distance=d, time=t, fixed_cost=beta, fixed_open=fixed))

    for i, j in sorted(shuttle_pairs):
        add(i, j, Mode.SHUTTLE, 0, fixed=True)
    for i, j, f in sorted(bus_keys):
        add(i, j, Mode.BUS, f, fixed=False)
    for i, j in sorted(rail_keys):
        add(i, j, Mode.RAIL, params.rail_frequency, fixed=True)

    return arcs


def delta_sets(arcs: Sequence[Arc]) -> tuple[dict, dict, dict, dict]:
    """Index incident arcs: (out[i], in[i], out[(i, mode)], in[(i, mode)]).

    Each arc id appears in exactly one out-set and one in-set at each
    granularity; values are lists of arc ids.
    """
    out_v: dict[str, list[int]] = {}
    in_v: dict[str, list[int]] = {}
    out_vm: dict[tuple[str, Mode], list[int]] = {}
    in_vm: dict[tuple[str, Mode], list[int]] = {}
    for a in arcs:
        out_v.setdefault(a.i, []).append(a.id)
        in_v.setdefault(a.j, []).append(a.id)
        out_vm.setdefault((a.i, a.mode), []).append(a.id)
        in_vm.setdefault((a.j, a.mode), []).append(a.id)
    return out_v, in_v, out_vm, in_vm


@dataclass(frozen=True)
class ArcIndex:
    """Numpy views of an arc list for vectorized routing.

    Vertex indices follow instance stop order. The design-vector convention
    throughout the package: z is a float array indexed by arc id, fixed-open
    arcs at exactly 1.0, bus arcs in [0, 1].
    """
    arcs: tuple[Arc, ...]
    tail: np.ndarray            # vertex index of i(a)
    head: np.ndarray            # vertex index of j(a)
    is_shuttle: np.ndarray      # bool per arc
    fixed_open: np.ndarray      # bool per arc
    bus_arc_ids: np.ndarray     # sorted ids of the decision arcs
    n_vertices: int

    @classmethod
    def build(cls, inst: Instance, arcs: Sequence[Arc]) -> "ArcIndex":
        tail = np.array([inst.stop_position(a.i) for a in arcs], dtype=np.int32)
        head = np.array([inst.stop_position(a.j) for a in arcs], dtype=np.int32)
        is_shuttle = np.array([a.mode is Mode.SHUTTLE for a in arcs], dtype=bool)
        fixed = np.array([a.fixed_open for a in arcs], dtype=bool)
        bus_ids = np.array([a.id for a in arcs if not a.fixed_open], dtype=np.int64)
        return cls(arcs=tuple(arcs), tail=tail, head=head, is_shuttle=is_shuttle,
                   fixed_open=fixed, bus_arc_ids=bus_ids,
                   n_vertices=len(inst.stops))


def make_design(arcs: Sequence[Arc],
                open_bus_ids: Iterable[int] = ()) -> np.ndarray:
    """Design vector with the given bus arcs open and all fixed arcs at 1."""
    z = np.zeros(len(arcs))
    for a in arcs:
        if a.fixed_open:
            z[a.id] = 1.0
    for aid in open_bus_ids:
        if arcs[aid].fixed_open:
            raise ValueError(f"arc {aid} is fixed open, not a design decision")
        z[aid] = 1.0
    return z


def trip_costs(arcs: Sequence[Arc], trip: Trip, params: CostParams) -> np.ndarray:
    """Traversal cost vector for one trip, indexed by arc id."""
    return np.array([trip_arc_cost(a, trip, params) for a in arcs])


def arcs_to_csv(arcs: Sequence[Arc]) -> str:
    """Debug table: id, i, j, mode, f, d, t, beta."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "i", "j", "mode", "f", "d", "t", "beta"])
    for a in arcs:
        writer.writerow([a.id, a.i, a.j, a.mode.value, a.frequency,
                         f"{a.distance:.6f}", f"{a.time:.6f}", f"{a.fixed_cost:.6f}"])
    return buf.getvalue()
