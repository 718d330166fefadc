"""Passenger routing given a design, dual extraction, and cut assembly.

For a fixed design z the routing cost decomposes per trip into a shortest
path on that trip's layered graph. Two solvers are provided:

* `solve_trip_integer` (binary z): a vectorized forward sweep gives the
  route value, and a dual solution is built combinatorially from the
  forward distances capped at the route value. Open arcs get a zero
  multiplier; a closed arc's multiplier is the (negative) amount by which
  opening it could shorten the route, min(0, cost + f(tail) - f(head)).
  Capping keeps unreachable vertices finite and preserves dual feasibility,
  and the dual objective equals the route value exactly.

* `solve_trip_lp` (any z in [0,1]): the per-trip flow LP, with the design
  entering as variable upper bounds; the bound multipliers reported by the
  LP solver are exactly the duals of the availability constraints. At
  binary z both solvers agree.

The multipliers aggregate into cuts  theta >= constant + sum coeff_a z_a
that lower-bound the total routing cost as a function of the design; every
cut is tight at the design it was generated from.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from . import simplex
from .instance import Instance, Trip
from .network import Arc, ArcIndex, Mode, build_arcs
from .transfer_graph import (
    ExpandedGraph,
    InfeasibleRouteError,
    apply_shuttle_dominance,
    build_expanded_indexed,
    forward_distances,
    shortest_path,
)


class RoutingError(RuntimeError):
    """A per-trip solve failed; the message names the trip."""


def snapshot_token(z: np.ndarray) -> int:
    """Cheap deterministic fingerprint of a design vector."""
    return zlib.adler32(np.ascontiguousarray(z).tobytes())


@dataclass
class TripSolve:
    """Outcome of one per-trip solve at a design snapshot."""
    trip_id: str
    value: float
    lam_expanded: np.ndarray        # multiplier per expanded arc, <= 0
    lam_arc_ids: np.ndarray         # original arc ids with nonzero aggregate
    lam_arc_vals: np.ndarray
    token: int
    path: list[int] | None = None   # original arc ids, when requested
    flows: np.ndarray | None = None  # expanded-arc flows, LP solves only


@dataclass
class RoutingResult:
    values: np.ndarray              # per trip, in trip order
    total: float
    paths: list[list[int]] | None = None


@dataclass(frozen=True)
class BendersCut:
    """theta >= constant + sum(coeffs * z[arc_ids]); tight at its generator.

    theta_index selects which epigraph variable the cut bounds: 0 for the
    aggregate routing cost (the default single-theta master), or the trip
    position when the master is built with one theta per trip.
    """
    constant: float
    arc_ids: np.ndarray             # decision (bus) arcs only
    coeffs: np.ndarray              # all <= 0
    phi_at_generation: float
    z_at_generation: np.ndarray     # z values of arc_ids at generation
    token: int
    theta_index: int = 0

    def rhs(self, z: np.ndarray) -> float:
        if len(self.arc_ids) == 0:
            return self.constant
        return float(self.constant + self.coeffs @ z[self.arc_ids])

    def dedup_key(self) -> tuple:
        return (self.theta_index, round(self.constant, 9),
                tuple(int(a) for a in self.arc_ids),
                tuple(round(float(c), 9) for c in self.coeffs))


class _TripContext:
    """Per-trip cached state: costs, layered graph, LP structure, warm basis."""

    __slots__ = ("trip", "gamma", "graph", "direct_arc_id", "bus_ids",
                 "lp_matrix", "lp_rhs", "lp_senses", "lp_crash", "warm",
                 "direct_expanded_idx")

    def __init__(self, trip: Trip, gamma: np.ndarray, graph: ExpandedGraph,
                 direct_arc_id: int):
        self.trip = trip
        self.gamma = gamma
        self.graph = graph
        self.direct_arc_id = direct_arc_id
        self.bus_ids: np.ndarray | None = None
        self.lp_matrix = None
        self.lp_rhs = None
        self.lp_senses = None
        self.lp_crash = None
        self.warm: simplex.WarmBasis | None = None
        self.direct_expanded_idx: int | None = None


class Router:
    """Routes all trips of an instance and assembles optimality cuts."""

    def __init__(self, inst: Instance, arcs: Sequence[Arc] | None = None,
                 prune: bool = True):
        self.instance = inst
        self.arcs = list(arcs) if arcs is not None else build_arcs(inst)
        self.index = ArcIndex.build(inst, self.arcs)
        self.n_arcs = len(self.arcs)
        self.k_max = inst.params.max_arcs
        self._prune = prune
        self._stop_ids = [s.id for s in inst.stops]

        p = inst.params
        dist = np.array([a.distance for a in self.arcs])
        time = np.array([a.time for a in self.arcs])
        freq = np.array([max(a.frequency, 1) for a in self.arcs], dtype=float)
        shuttle = self.index.is_shuttle
        self._shuttle_unit = (1.0 - p.alpha) * p.shuttle_cost_per_mile * dist \
            + p.alpha * time
        self._transit_cost = p.alpha * (
            time + p.transfer_time + p.horizon / (2.0 * freq))
        bad = np.flatnonzero(np.where(shuttle, self._shuttle_unit,
                                      self._transit_cost) <= 0.0)
        if bad.size:
            a = self.arcs[int(bad[0])]
            raise RoutingError(
                f"arc {a.key} has nonpositive traversal cost; "
                "check alpha and stop coordinates")

        # Shuttle lookup and pruning preconditions, shared across trips.
        self._shuttle_by_pair: dict[tuple[int, int], int] = {}
        touched_by_transit = np.zeros(self.index.n_vertices, dtype=bool)
        for a in self.arcs:
            ti = inst.stop_position(a.i)
            hj = inst.stop_position(a.j)
            if a.mode is Mode.SHUTTLE:
                self._shuttle_by_pair[(ti, hj)] = a.id
            else:
                touched_by_transit[ti] = True
                touched_by_transit[hj] = True
        self._touched_by_transit = touched_by_transit

        self._contexts: list[_TripContext | None] = [None] * len(inst.trips)

    # -- costs ---------------------------------------------------------------

    def trip_gamma(self, trip: Trip) -> np.ndarray:
        """Traversal cost vector of a trip, indexed by arc id."""
        p = trip.passengers
        if self.instance.params.scale_transit_cost_by_passengers:
            transit = p * self._transit_cost
        else:
            transit = self._transit_cost
        return np.where(self.index.is_shuttle, p * self._shuttle_unit, transit)

    # -- per-trip context ----------------------------------------------------

    def context(self, t: int) -> _TripContext:
        ctx = self._contexts[t]
        if ctx is not None:
            return ctx
        trip = self.instance.trips[t]
        o_pos = self.instance.stop_position(trip.origin_stop)
        d_pos = self.instance.stop_position(trip.destination_stop)
        gamma = self.trip_gamma(trip)
        graph = build_expanded_indexed(
            trip.id, self._stop_ids, o_pos, d_pos, self.index.tail,
            self.index.head, np.arange(self.n_arcs), self.k_max)
        direct = self._shuttle_by_pair.get((o_pos, d_pos))
        if direct is None:
            raise RoutingError(
                f"trip {trip.id}: arc set lacks the direct shuttle that "
                "guarantees feasibility; build arcs with build_arcs")
        if self._prune and not self._touched_by_transit[o_pos] \
                and not self._touched_by_transit[d_pos]:
            shuttle_from_o = {
                self._stop_ids[hj]: aid
                for (ti, hj), aid in self._shuttle_by_pair.items() if ti == o_pos}
            graph = apply_shuttle_dominance(
                graph, self.index.is_shuttle,
                lambda aid: self.arcs[aid].i, shuttle_from_o, direct, gamma)
        ctx = _TripContext(trip, gamma, graph, direct)
        ctx.bus_ids = np.unique(
            graph.arc_orig[~self.index.fixed_open[graph.arc_orig]])
        self._contexts[t] = ctx
        return ctx

    # -- integer-design solve ------------------------------------------------

    def solve_trip_integer(self, t: int, z: np.ndarray,
                           want_path: bool = False,
                           token: int | None = None) -> TripSolve:
        """Route one trip at a binary design; duals built combinatorially."""
        ctx = self.context(t)
        graph, gamma = ctx.graph, ctx.gamma
        open_mask = z > 0.5
        gamma_eff = np.where(open_mask, gamma, np.inf)
        f = forward_distances(graph, gamma_eff)
        value = float(f[graph.sink])
        if not np.isfinite(value):
            raise InfeasibleRouteError(
                f"trip {ctx.trip.id}: sink unreachable (direct shuttle closed?)")
        capped = np.minimum(f, value)
        og = graph.arc_orig
        closed = ~open_mask[og]
        lam = np.zeros(graph.n_arcs)
        if np.any(closed):
            slack = gamma[og[closed]] + capped[graph.arc_tail[closed]] \
                - capped[graph.arc_head[closed]]
            lam[closed] = np.minimum(0.0, slack)
        ids, vals = _aggregate(og, lam, self.n_arcs)
        path = None
        if want_path:
            _, path = shortest_path(graph, z, gamma)
        return TripSolve(trip_id=ctx.trip.id, value=value, lam_expanded=lam,
                         lam_arc_ids=ids, lam_arc_vals=vals,
                         token=snapshot_token(z) if token is None else token,
                         path=path)

    # -- fractional-design solve ----------------------------------------------

    def _lp_structure(self, ctx: _TripContext):
        if ctx.lp_matrix is None:
            graph = ctx.graph
            m = graph.n_vertices - 1          # conservation rows, sink dropped
            n = graph.n_arcs
            rows = [graph.arc_tail]
            cols = [np.arange(n)]
            data = [np.ones(n)]
            not_sink = graph.arc_head != graph.sink
            rows.append(graph.arc_head[not_sink])
            cols.append(np.flatnonzero(not_sink))
            data.append(-np.ones(int(not_sink.sum())))
            ctx.lp_matrix = sp.csc_matrix(
                (np.concatenate(data),
                 (np.concatenate(rows), np.concatenate(cols))), shape=(m, n))
            rhs = np.zeros(m)
            rhs[0] = 1.0
            ctx.lp_rhs = rhs
            ctx.lp_senses = ("=",) * m
            direct_idx = np.flatnonzero(
                (graph.arc_orig == ctx.direct_arc_id)
                & (graph.arc_from_layer == 1))
            ctx.direct_expanded_idx = int(direct_idx[0]) if direct_idx.size else None

            if ctx.direct_expanded_idx is not None:
                # Crash basis: the direct shuttle carries the whole unit,
                # artificials pad the remaining rows at zero.
                basis = np.arange(n, n + m, dtype=np.int64)
                basis[0] = ctx.direct_expanded_idx
                status = np.full(n + m, simplex.AT_LOWER, dtype=np.int8)
                status[basis] = simplex.BASIC
                ctx.lp_crash = simplex.WarmBasis(basis=basis, status=status)
        return ctx.lp_matrix, ctx.lp_rhs, ctx.lp_senses

    def solve_trip_lp(self, t: int, z: np.ndarray, token: int | None = None,
                      use_warm: bool = True) -> TripSolve:
        """Route one trip at a fractional design via the bundled LP solver."""
        ctx = self.context(t)
        graph, gamma = ctx.graph, ctx.gamma
        matrix, rhs, senses = self._lp_structure(ctx)
        og = graph.arc_orig
        lp = simplex.LinearProgram(
            c=gamma[og], a_matrix=matrix, senses=senses, rhs=rhs,
            lower=np.zeros(graph.n_arcs), upper=z[og].astype(float))
        warm = ctx.warm if (use_warm and ctx.warm is not None) else ctx.lp_crash
        try:
            sol = simplex.solve(lp, warm_basis=warm)
        except simplex.SimplexError as exc:
            raise RoutingError(f"trip {ctx.trip.id}: LP solve failed: {exc}") from exc
        if sol.status != simplex.OPTIMAL:
            raise RoutingError(
                f"trip {ctx.trip.id}: routing LP is {sol.status}")
        ctx.warm = sol.warm
        lam = np.minimum(0.0, sol.reduced_costs)
        ids, vals = _aggregate(og, lam, self.n_arcs)
        return TripSolve(trip_id=ctx.trip.id, value=float(sol.objective),
                         lam_expanded=lam, lam_arc_ids=ids, lam_arc_vals=vals,
                         token=snapshot_token(z) if token is None else token,
                         flows=sol.x)

    # -- aggregates ------------------------------------------------------------

    def phi(self, z: np.ndarray, want_paths: bool = False,
            threads: int = 1) -> RoutingResult:
        """Total routing cost at a binary design, decomposed per trip."""
        token = snapshot_token(z)
        n = len(self.instance.trips)

        def one(t: int) -> TripSolve:
            return self.solve_trip_integer(t, z, want_path=want_paths,
                                           token=token)

        solves = map_ordered(one, range(n), threads)
        values = np.array([s.value for s in solves])
        paths = [s.path for s in solves] if want_paths else None
        return RoutingResult(values=values, total=float(values.sum()),
                             paths=paths)

    def make_cut(self, trip_solves: Sequence[TripSolve],
                 z: np.ndarray) -> BendersCut:
        """Aggregate per-trip multipliers into one cut, tight at z."""
        token = snapshot_token(z)
        for s in trip_solves:
            if s.token != token:
                raise ValueError(
                    f"trip {s.trip_id} was solved at a different design snapshot")
        coeff = np.zeros(self.n_arcs)
        total = 0.0
        for s in trip_solves:
            total += s.value
            if len(s.lam_arc_ids):
                coeff[s.lam_arc_ids] += s.lam_arc_vals
        # Fixed-open arcs carry z = 1 in every design: their terms cancel.
        coeff[self.index.fixed_open] = 0.0
        ids = np.flatnonzero(coeff != 0.0)
        coeffs = coeff[ids]
        constant = total - float(coeffs @ z[ids])
        return BendersCut(constant=constant, arc_ids=ids, coeffs=coeffs,
                          phi_at_generation=total,
                          z_at_generation=z[ids].copy(), token=token)

    def check_cut_valid(self, cut: BendersCut, z: np.ndarray,
                        tol: float = 1e-6) -> bool:
        """True iff the exact routing cost at binary z respects the cut."""
        if np.any(cut.coeffs > tol):
            return False
        actual = self.phi(z).total
        return actual >= cut.rhs(z) - tol


def _aggregate(orig: np.ndarray, lam: np.ndarray,
               n_arcs: int) -> tuple[np.ndarray, np.ndarray]:
    nz = np.flatnonzero(lam)
    if nz.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    sums = np.bincount(orig[nz], weights=lam[nz], minlength=n_arcs)
    ids = np.flatnonzero(sums)
    return ids, sums[ids]


def map_ordered(fn: Callable, items: Iterable, threads: int) -> list:
    """Apply fn preserving order; results are identical for any thread count."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
