"""End-to-end decomposition driver, relaxed baseline, and design evaluation.

The exact algorithm runs in two phases. The root phase alternates between the
master relaxation and the per-trip routing LPs: each round separates one cut
at a stabilized point (a convex combination pulling the relaxation optimum
slightly toward an interior core point, which damps the tailing-off of the
bound) until no cut is violated or the round cap is hit. The integer phase
hands the cut-augmented master to branch-and-bound; every integer candidate
is re-routed exactly (combinatorial duals, no LP in the loop) and either
accepted or rejected with a fresh cut.

The relaxed baseline replaces every per-trip solve with an LP on the
original (unlayered) graph whose leg budget is a single side constraint that
fractional flows can evade. Its designs are scored afterwards by exact
routing, so relaxed_optimum <= exact_optimum <= evaluate(relaxed design)
holds by construction.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import simplex
from .instance import Instance, instance_digest
from .master import MasterModel, design_satisfies_constraints
from .routing import (
    BendersCut,
    Router,
    RoutingError,
    TripSolve,
    map_ordered,
    snapshot_token,
)

log = logging.getLogger("odmts.benders")
log.addHandler(logging.NullHandler())

EXACT = "exact"
RELAXED = "relaxed"


@dataclass
class BendersConfig:
    epsilon: float = 1e-5               # stabilization weight toward the core
    core_value: float = 0.25            # core point value on bus arcs
    gap: float = 1e-6                   # relative optimality gap
    root_iteration_cap: int = 400
    mode: str = EXACT
    threads: int = 1
    node_limit: int | None = None
    disaggregate_cuts: bool = False     # one cut per trip per round

    def validate(self) -> None:
        if not (0.0 < self.epsilon < 0.5):
            raise ValueError("epsilon must lie in (0, 0.5)")
        if not (0.0 < self.core_value < 1.0):
            raise ValueError("core_value must lie in (0, 1)")
        if self.mode not in (EXACT, RELAXED):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.gap <= 0:
            raise ValueError("gap must be positive")


@dataclass
class CutRecord:
    cut: BendersCut
    phase: str                          # "root" or "incumbent"
    iteration: int


@dataclass
class EvalResult:
    objective: float
    design_cost: float
    routing_cost: float
    trip_costs: np.ndarray
    routes: list[list[int]]


@dataclass
class SolveReport:
    status: str                         # "optimal" or "node_limit"
    mode: str
    instance_sha256: str
    design: np.ndarray                  # full design vector
    objective: float                    # design_cost + exact routing cost
    design_cost: float
    routing_cost: float
    master_objective: float             # proven optimum of the cut model
    best_bound: float
    gap: float
    root_iterations: int
    cut_count: int
    node_count: int
    routes: list[list[int]]             # original arc ids per trip
    trip_costs: list[float]
    lower_bounds: list[tuple[str, float]]
    upper_bounds: list[tuple[str, float]]
    config: BendersConfig
    open_arcs: list[dict]
    wall_time: float = 0.0              # seconds; never serialized
    cuts: list[CutRecord] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "mode": self.mode,
            "instance_sha256": self.instance_sha256,
            "objective": self.objective,
            "design_cost": self.design_cost,
            "routing_cost": self.routing_cost,
            "master_objective": self.master_objective,
            "best_bound": self.best_bound,
            "gap": self.gap,
            "root_iterations": self.root_iterations,
            "cut_count": self.cut_count,
            "node_count": self.node_count,
            "open_arcs": self.open_arcs,
            "routes": self.routes,
            "trip_costs": self.trip_costs,
            "lower_bounds": [[label, v] for label, v in self.lower_bounds],
            "upper_bounds": [[label, v] for label, v in self.upper_bounds],
            "config": {
                "epsilon": self.config.epsilon,
                "core_value": self.config.core_value,
                "gap": self.config.gap,
                "root_iteration_cap": self.config.root_iteration_cap,
                "mode": self.config.mode,
                "threads": self.config.threads,
                "node_limit": self.config.node_limit,
                "disaggregate_cuts": self.config.disaggregate_cuts,
            },
        }

    def to_json(self) -> str:
        """Canonical JSON; deterministic for fixed inputs (timings excluded)."""
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def stabilized_point(z_bar: np.ndarray, core: np.ndarray,
                     epsilon: float) -> np.ndarray:
    """Pull the separation point toward the core: (1-eps)*z + eps*core."""
    return (1.0 - epsilon) * z_bar + epsilon * core


def core_point(router: Router, core_value: float) -> np.ndarray:
    """Interior point of the design box: bus arcs at core_value, fixed at 1."""
    core = np.full(router.n_arcs, 1.0)
    core[router.index.bus_arc_ids] = core_value
    return core


class RelaxedRouter:
    """Per-trip LP on the original graph with the leg budget as a row.

    min gamma'y  s.t. flow conservation, y <= z (duals harvested from the
    variable bounds), sum(y) <= leg budget, y >= 0. Fractional optima may
    thread long paths that the budget row only limits in aggregate.
    """

    def __init__(self, router: Router):
        self.router = router
        inst = router.instance
        index = router.index
        n_arcs = router.n_arcs

        incident = np.zeros(index.n_vertices, dtype=bool)
        incident[index.tail] = True
        incident[index.head] = True
        self._active = np.flatnonzero(incident)
        self._row_of = np.full(index.n_vertices, -1, dtype=np.int64)
        self._row_of[self._active] = np.arange(len(self._active))
        m = len(self._active) + 1           # + leg budget row
        rows = np.concatenate([self._row_of[index.tail],
                               self._row_of[index.head],
                               np.full(n_arcs, m - 1)])
        cols = np.concatenate([np.arange(n_arcs)] * 3)
        data = np.concatenate([np.ones(n_arcs), -np.ones(n_arcs),
                               np.ones(n_arcs)])
        self._matrix = sp.csc_matrix((data, (rows, cols)), shape=(m, n_arcs))
        self._senses = ("=",) * (m - 1) + ("<=",)
        self._m = m
        self._warm: list[simplex.WarmBasis | None] = [None] * len(inst.trips)

    def _rhs(self, t: int) -> np.ndarray:
        inst = self.router.instance
        trip = inst.trips[t]
        b = np.zeros(self._m)
        b[self._row_of[inst.stop_position(trip.origin_stop)]] = 1.0
        b[self._row_of[inst.stop_position(trip.destination_stop)]] = -1.0
        b[self._m - 1] = float(inst.params.max_arcs)
        return b

    def _crash(self, t: int) -> simplex.WarmBasis:
        inst = self.router.instance
        trip = inst.trips[t]
        n_arcs = self.router.n_arcs
        o_pos = inst.stop_position(trip.origin_stop)
        direct = self.router._shuttle_by_pair[
            (o_pos, inst.stop_position(trip.destination_stop))]
        # internal numbering: arcs, one slack (budget row), artificials per row
        basis = np.arange(n_arcs + 1, n_arcs + 1 + self._m, dtype=np.int64)
        basis[self._row_of[o_pos]] = direct
        basis[self._m - 1] = n_arcs          # budget slack
        status = np.full(n_arcs + 1 + self._m, simplex.AT_LOWER, dtype=np.int8)
        status[basis] = simplex.BASIC
        return simplex.WarmBasis(basis=basis, status=status)

    def solve_trip_lp(self, t: int, z: np.ndarray,
                      token: int | None = None) -> TripSolve:
        router = self.router
        ctx_trip = router.instance.trips[t]
        gamma = router.trip_gamma(ctx_trip)
        lp = simplex.LinearProgram(
            c=gamma, a_matrix=self._matrix, senses=self._senses,
            rhs=self._rhs(t), lower=np.zeros(router.n_arcs),
            upper=z.astype(float))
        warm = self._warm[t] if self._warm[t] is not None else self._crash(t)
        try:
            sol = simplex.solve(lp, warm_basis=warm)
        except simplex.SimplexError as exc:
            raise RoutingError(
                f"trip {ctx_trip.id}: relaxed LP failed: {exc}") from exc
        if sol.status != simplex.OPTIMAL:
            raise RoutingError(f"trip {ctx_trip.id}: relaxed LP is {sol.status}")
        self._warm[t] = sol.warm
        lam = np.minimum(0.0, sol.reduced_costs)
        ids = np.flatnonzero(lam)
        return TripSolve(trip_id=ctx_trip.id, value=float(sol.objective),
                         lam_expanded=lam, lam_arc_ids=ids,
                         lam_arc_vals=lam[ids],
                         token=snapshot_token(z) if token is None else token,
                         flows=sol.x)


def relaxed_trip_lp(router: Router, t: int, z: np.ndarray,
                    relaxed: RelaxedRouter | None = None) -> TripSolve:
    """One-shot form of RelaxedRouter.solve_trip_lp for tests and scripts."""
    return (relaxed or RelaxedRouter(router)).solve_trip_lp(t, z)


def evaluate_design(inst: Instance, z: np.ndarray,
                    router: Router | None = None,
                    threads: int = 1) -> EvalResult:
    """Score a binary design by exact routing; rejects infeasible designs."""
    router = router or Router(inst)
    z = np.asarray(z, dtype=float)
    if len(z) != router.n_arcs:
        raise ValueError("design length does not match the arc set")
    if np.any(np.abs(z - np.round(z)) > 1e-9):
        raise ValueError("design vector is not binary")
    ok, msg = design_satisfies_constraints(router.arcs, z)
    if not ok:
        raise ValueError(f"infeasible design: {msg}")
    result = router.phi(z, want_paths=True, threads=threads)
    beta = np.array([a.fixed_cost for a in router.arcs])
    design_cost = float(beta @ z)
    return EvalResult(objective=design_cost + result.total,
                      design_cost=design_cost, routing_cost=result.total,
                      trip_costs=result.values, routes=result.paths)


def run_root_phase(model: MasterModel, router: Router, config: BendersConfig,
                   trip_solver: Callable[[int, np.ndarray, int], TripSolve],
                   records: list[CutRecord],
                   lower_bounds: list[tuple[str, float]]):
    """Separate stabilized cuts at the relaxation optimum until saturation.

    Returns (iterations, bound, converged).
    """
    n_trips = len(router.instance.trips)
    core = core_point(router, config.core_value)
    bound = -np.inf
    iterations = 0
    converged = False
    while iterations < config.root_iteration_cap:
        iterations += 1
        z_bar, theta_bar, obj, sol = model.solve_relaxation()
        bound = max(bound, obj)
        lower_bounds.append((f"root-{iterations}", bound))
        z_sep = stabilized_point(z_bar, core, config.epsilon)
        token = snapshot_token(z_sep)
        solves = map_ordered(lambda t: trip_solver(t, z_sep, token),
                             range(n_trips), config.threads)
        tol = config.gap * max(1.0, abs(obj))
        if config.disaggregate_cuts:
            theta_vec = sol.x[model.n_dec:]
            added_any = False
            per_trip_tol = tol / max(1, n_trips)
            for t, s in enumerate(solves):
                cut = make_trip_cut(router, s, t, z_sep)
                if cut.rhs(z_bar) <= float(theta_vec[t]) + per_trip_tol:
                    continue
                if model.add_cut(cut):
                    records.append(CutRecord(cut, "root", iterations))
                    added_any = True
            if not added_any:
                converged = True
                break
        else:
            cut = router.make_cut(solves, z_sep)
            if cut.rhs(z_bar) <= theta_bar + tol:
                converged = True
                break
            if not model.add_cut(cut):
                converged = True
                break
            records.append(CutRecord(cut, "root", iterations))
        log.info("root %d: bound %.6f cuts %d", iterations, obj,
                 len(model.cuts))
    return iterations, bound, converged


def make_trip_cut(router: Router, solve_result: TripSolve, t: int,
                  z: np.ndarray) -> BendersCut:
    """Single-trip cut bounding that trip's own epigraph variable."""
    cut = router.make_cut([solve_result], z)
    return BendersCut(constant=cut.constant, arc_ids=cut.arc_ids,
                      coeffs=cut.coeffs,
                      phi_at_generation=cut.phi_at_generation,
                      z_at_generation=cut.z_at_generation, token=cut.token,
                      theta_index=t)


def _run(inst: Instance, config: BendersConfig) -> SolveReport:
    config.validate()
    start = time.perf_counter()
    router = Router(inst)
    n_trips = len(inst.trips)
    n_theta = n_trips if (config.disaggregate_cuts and n_trips) else 1
    model = MasterModel(router.arcs, n_theta=n_theta)
    relaxed = RelaxedRouter(router) if config.mode == RELAXED else None

    if config.mode == RELAXED:
        def lp_solver(t, z, token):
            return relaxed.solve_trip_lp(t, z, token=token)
        def incumbent_solver(t, z, token):
            return relaxed.solve_trip_lp(t, z, token=token)
    else:
        def lp_solver(t, z, token):
            return router.solve_trip_lp(t, z, token=token)
        def incumbent_solver(t, z, token):
            return router.solve_trip_integer(t, z, token=token)

    records: list[CutRecord] = []
    lower_bounds: list[tuple[str, float]] = []
    upper_bounds: list[tuple[str, float]] = []

    root_iters, root_bound, root_converged = run_root_phase(
        model, router, config, lp_solver, records, lower_bounds)
    if not root_converged:
        log.warning("root phase hit the %d-iteration cap",
                    config.root_iteration_cap)

    # Integer phase with lazy cuts at incumbents.
    best_eval = {"obj": np.inf, "design": None}
    incumbent_round = [0]

    def callback(z_full: np.ndarray, theta: float, obj: float):
        incumbent_round[0] += 1
        token = snapshot_token(z_full)
        solves = map_ordered(lambda t: incumbent_solver(t, z_full, token),
                             range(n_trips), config.threads)
        phi = float(sum(s.value for s in solves))
        design_cost = obj - theta
        if config.mode == EXACT:
            true_obj = design_cost + phi
            if true_obj < best_eval["obj"]:
                best_eval["obj"] = true_obj
                best_eval["design"] = z_full.copy()
                upper_bounds.append(
                    (f"incumbent-{incumbent_round[0]}", true_obj))
        tol = config.gap * max(1.0, abs(design_cost + phi))
        if theta >= phi - tol:
            return None
        if config.disaggregate_cuts:
            # Hold back one new cut for solve_mip to install (its add_cut is
            # the rejection signal); install the rest directly.
            primary = None
            for t, s in enumerate(solves):
                c = make_trip_cut(router, s, t, z_full)
                if c.dedup_key() in model._cut_keys:
                    continue
                if primary is None:
                    primary = c
                elif model.add_cut(c):
                    records.append(CutRecord(c, "incumbent",
                                             incumbent_round[0]))
            if primary is not None:
                records.append(CutRecord(primary, "incumbent",
                                         incumbent_round[0]))
            return primary
        cut = router.make_cut(solves, z_full)
        records.append(CutRecord(cut, "incumbent", incumbent_round[0]))
        return cut

    mip = model.solve_mip(callback, node_limit=config.node_limit,
                          gap_rel=config.gap)
    lower_bounds.append(("mip", max(root_bound, mip.best_bound)))

    # The reported design is the best candidate actually evaluated (exact
    # mode); in relaxed mode the relaxed-optimal incumbent is scored exactly.
    # With a node limit too tight to produce any incumbent, fall back to the
    # always-feasible all-closed design.
    if config.mode == EXACT and best_eval["design"] is not None:
        design = best_eval["design"]
    elif mip.z is not None:
        design = mip.z
    else:
        design = model.full_design(np.zeros(model.n_dec))
    evaluation = evaluate_design(inst, design, router=router,
                                 threads=config.threads)
    upper_bounds.append(("final", evaluation.objective))

    # Keep trajectories monotone.
    mono_lower: list[tuple[str, float]] = []
    best = -np.inf
    for label, v in lower_bounds:
        best = max(best, v)
        mono_lower.append((label, best))
    mono_upper: list[tuple[str, float]] = []
    best = np.inf
    for label, v in upper_bounds:
        best = min(best, v)
        mono_upper.append((label, best))

    best_bound = mono_lower[-1][1] if mono_lower else -np.inf
    gap = (evaluation.objective - best_bound) / max(1.0, abs(evaluation.objective))
    open_arcs = [
        {"i": a.i, "j": a.j, "mode": a.mode.value, "frequency": a.frequency}
        for a in router.arcs
        if not a.fixed_open and design[a.id] > 0.5
    ]
    report = SolveReport(
        status=mip.status, mode=config.mode,
        instance_sha256=instance_digest(inst),
        design=design, objective=evaluation.objective,
        design_cost=evaluation.design_cost,
        routing_cost=evaluation.routing_cost,
        master_objective=mip.objective, best_bound=best_bound,
        gap=float(gap), root_iterations=root_iters,
        cut_count=len(model.cuts), node_count=mip.nodes,
        routes=[[int(a) for a in route] for route in evaluation.routes],
        trip_costs=[float(v) for v in evaluation.trip_costs],
        lower_bounds=mono_lower, upper_bounds=mono_upper, config=config,
        open_arcs=open_arcs, cuts=records)
    report.wall_time = time.perf_counter() - start
    log.info("%s solve: objective %.6f bound %.6f gap %.2e cuts %d nodes %d "
             "wall %.2fs", config.mode, report.objective, report.best_bound,
             report.gap, report.cut_count, report.node_count, report.wall_time)
    return report


def run_exact(inst: Instance, config: BendersConfig | None = None) -> SolveReport:
    """Solve the design problem to proven optimality of the exact model."""
    config = config or BendersConfig()
    if config.mode != EXACT:
        config = dataclasses.replace(config, mode=EXACT)
    return _run(inst, config)


def run_relaxed(inst: Instance, config: BendersConfig | None = None) -> SolveReport:
    """Solve the leg-budget-relaxed baseline, then score its design exactly."""
    config = config or BendersConfig(mode=RELAXED)
    if config.mode != RELAXED:
        config = dataclasses.replace(config, mode=RELAXED)
    return _run(inst, config)


def write_cut_log(report: SolveReport, path) -> None:
    """CSV diagnostic: iteration, phase, constant, nnz, tightness residual."""
    lines = ["iteration,phase,constant,nnz,tightness_residual"]
    for rec in report.cuts:
        cut = rec.cut
        resid = cut.phi_at_generation - (
            cut.constant + float(cut.coeffs @ cut.z_at_generation))
        lines.append(f"{rec.iteration},{rec.phase},{cut.constant:.9g},"
                     f"{len(cut.arc_ids)},{resid:.3g}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_bound_trajectory(report: SolveReport, path) -> None:
    """CSV of the monotone lower/upper bound trajectories."""
    lines = ["kind,label,value"]
    for label, v in report.lower_bounds:
        lines.append(f"lower,{label},{v:.9g}")
    for label, v in report.upper_bounds:
        lines.append(f"upper,{label},{v:.9g}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
