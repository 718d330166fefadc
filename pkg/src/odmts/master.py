"""Design-side master problem and its bundled branch-and-bound solver.

The model holds one binary variable per candidate bus arc plus the epigraph
variable theta that lower-bounds the routing cost through accumulated cuts:

    min  sum beta_a z_a + theta
    s.t. per (vertex, mode): departing frequency equals arriving frequency,
         per (i, j, mode):   at most one frequency open,
         every cut:          theta >= constant + sum coeff_a z_a,
         z binary, theta >= 0.

Always-open arcs are folded into the balance rows as constants (their rows
must balance identically, which the symmetric construction guarantees).

The branch-and-bound uses best-bound node order and most-fractional
branching with ties to the lowest arc id. Integer candidates are submitted
to a callback that either accepts them or returns a violated cut; rejected
candidates install their cut globally and the search continues, so the tree
is explored once. No primal heuristics: incumbents arise only from node
relaxations.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from . import simplex
from .network import Arc, Mode
from .routing import BendersCut

INT_TOL = 1e-6
PRUNE_TOL = 1e-9


class MasterError(ValueError):
    """The model is structurally unusable (unbalanced fixed arcs, bad cut)."""


@dataclass
class MipResult:
    status: str                 # "optimal" or "node_limit"
    z: np.ndarray | None        # full design vector (fixed arcs at 1)
    theta: float
    objective: float            # beta'z + theta of the incumbent
    best_bound: float
    nodes: int


@dataclass
class _Row:
    cols: np.ndarray            # variable positions (decision arcs)
    coefs: np.ndarray
    sense: str
    rhs: float


class MasterModel:
    """Master model with `n_theta` epigraph variables (1 = aggregated cuts)."""

    def __init__(self, arcs: Sequence[Arc], n_theta: int = 1):
        self.arcs = list(arcs)
        self.decision_ids = np.array(
            [a.id for a in self.arcs if not a.fixed_open], dtype=np.int64)
        self._pos = {int(a): p for p, a in enumerate(self.decision_ids)}
        self.n_dec = len(self.decision_ids)
        self.n_theta = n_theta
        self.beta = np.array(
            [self.arcs[int(a)].fixed_cost for a in self.decision_ids])
        self.rows: list[_Row] = []
        self.cuts: list[BendersCut] = []
        self._cut_keys: set = set()
        self._matrix_cache: tuple[int, object] | None = None
        self._build_rows()

    # -- model construction ----------------------------------------------------

    def _build_rows(self) -> None:
        balance: dict[tuple[str, Mode], tuple[dict[int, float], float]] = {}
        for a in self.arcs:
            for vertex, sign in ((a.i, +1.0), (a.j, -1.0)):
                coefs, const = balance.setdefault((vertex, a.mode), ({}, 0.0))
                if a.fixed_open:
                    const += sign * a.frequency
                    balance[(vertex, a.mode)] = (coefs, const)
                else:
                    p = self._pos[a.id]
                    coefs[p] = coefs.get(p, 0.0) + sign * a.frequency
        for (vertex, mode), (coefs, const) in sorted(
                balance.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
            if not coefs:
                if abs(const) > 1e-9:
                    raise MasterError(
                        f"fixed {mode.value} arcs unbalanced at stop {vertex!r}")
                continue
            cols = np.array(sorted(coefs), dtype=np.int64)
            self.rows.append(_Row(
                cols=cols, coefs=np.array([coefs[int(c)] for c in cols]),
                sense="=", rhs=-const))

        groups: dict[tuple[str, str, Mode], list[int]] = {}
        fixed_counts: dict[tuple[str, str, Mode], int] = {}
        for a in self.arcs:
            key = (a.i, a.j, a.mode)
            if a.fixed_open:
                fixed_counts[key] = fixed_counts.get(key, 0) + 1
            else:
                groups.setdefault(key, []).append(a.id)
        for key, count in fixed_counts.items():
            if count > 1 or (count == 1 and key in groups):
                raise MasterError(
                    f"multiple frequencies fixed open on {key[0]}->{key[1]}")
        for key in sorted(groups, key=lambda k: (k[0], k[1], k[2].value)):
            ids = groups[key]
            if len(ids) < 2:
                continue
            cols = np.array(sorted(self._pos[i] for i in ids), dtype=np.int64)
            self.rows.append(_Row(cols=cols, coefs=np.ones(len(cols)),
                                  sense="<=", rhs=1.0))

    def add_cut(self, cut: BendersCut) -> bool:
        """Install a cut; returns False when an identical cut is present."""
        if np.any(cut.coeffs > 1e-9):
            raise MasterError("cut has a positive arc coefficient")
        if not (0 <= cut.theta_index < self.n_theta):
            raise MasterError(f"cut bounds unknown theta {cut.theta_index}")
        for a in cut.arc_ids:
            if int(a) not in self._pos:
                raise MasterError(f"cut references non-decision arc {int(a)}")
        key = cut.dedup_key()
        if key in self._cut_keys:
            return False
        self._cut_keys.add(key)
        self.cuts.append(cut)
        self._matrix_cache = None
        return True

    # -- LP assembly -------------------------------------------------------------

    def _lp(self, lb: np.ndarray, ub: np.ndarray) -> simplex.LinearProgram:
        n = self.n_dec + self.n_theta
        version = len(self.cuts)
        if self._matrix_cache is None or self._matrix_cache[0] != version:
            rows_i, cols_i, data = [], [], []
            senses, rhs = [], []
            for r, row in enumerate(self.rows):
                rows_i.extend([r] * len(row.cols))
                cols_i.extend(int(c) for c in row.cols)
                data.extend(float(v) for v in row.coefs)
                senses.append(row.sense)
                rhs.append(row.rhs)
            base = len(self.rows)
            for k, cut in enumerate(self.cuts):
                r = base + k
                rows_i.append(r)
                cols_i.append(self.n_dec + cut.theta_index)
                data.append(1.0)
                for a, c in zip(cut.arc_ids, cut.coeffs):
                    rows_i.append(r)
                    cols_i.append(self._pos[int(a)])
                    data.append(-float(c))
                senses.append(">=")
                rhs.append(cut.constant)
            matrix = sp.csc_matrix(
                (np.array(data), (np.array(rows_i), np.array(cols_i))),
                shape=(base + len(self.cuts), n))
            self._matrix_cache = (version, (matrix, tuple(senses), np.array(rhs)))
        matrix, senses, rhs = self._matrix_cache[1]
        c = np.concatenate([self.beta, np.ones(self.n_theta)])
        lower = np.concatenate([lb, np.zeros(self.n_theta)])
        upper = np.concatenate([ub, np.full(self.n_theta, np.inf)])
        return simplex.LinearProgram(c=c, a_matrix=matrix, senses=senses,
                                     rhs=rhs, lower=lower, upper=upper)

    def full_design(self, z_dec: np.ndarray) -> np.ndarray:
        z = np.zeros(len(self.arcs))
        for a in self.arcs:
            if a.fixed_open:
                z[a.id] = 1.0
        z[self.decision_ids] = z_dec
        return z

    def solve_relaxation(self, lb: np.ndarray | None = None,
                         ub: np.ndarray | None = None,
                         warm: simplex.WarmBasis | None = None):
        """LP relaxation over [lb, ub] with all cuts.

        Returns (full design vector, theta, objective, LpSolution).
        """
        lb = np.zeros(self.n_dec) if lb is None else lb
        ub = np.ones(self.n_dec) if ub is None else ub
        sol = simplex.solve(self._lp(lb, ub), warm_basis=warm)
        if sol.status != simplex.OPTIMAL:
            raise MasterError(f"master relaxation is {sol.status}")
        z_dec = np.clip(sol.x[:self.n_dec], 0.0, 1.0)
        theta = float(sol.x[self.n_dec:].sum())
        return self.full_design(z_dec), theta, float(sol.objective), sol

    # -- branch and bound -----------------------------------------------------------

    def solve_mip(self, incumbent_callback: Callable[[np.ndarray, float, float],
                                                     BendersCut | None],
                  node_limit: int | None = None, gap_rel: float = 1e-6,
                  node_log=None) -> MipResult:
        """Branch-and-bound with lazy cuts separated at integer candidates.

        The callback receives (full design, theta, objective) and returns
        None to accept or a violated BendersCut to reject; on rejection the
        cut is added globally, the node is re-solved, and the search goes on
        to proven optimality of the cut-augmented model.
        """
        counter = itertools.count()
        incumbent_obj = np.inf
        incumbent: tuple[np.ndarray, float] | None = None
        best_bound_seen = -np.inf
        heap: list = []
        heapq.heappush(heap, (-np.inf, next(counter), np.zeros(self.n_dec),
                              np.ones(self.n_dec), 0))
        nodes = 0
        status = "optimal"

        def prune_limit() -> float:
            return incumbent_obj - max(PRUNE_TOL,
                                       gap_rel * 1e-3 * max(1.0, abs(incumbent_obj)))

        while heap:
            bound0, _, lb, ub, depth = heapq.heappop(heap)
            open_bounds = [bound0] + [entry[0] for entry in heap]
            global_bound = min(min(open_bounds), incumbent_obj)
            best_bound_seen = max(best_bound_seen, global_bound)
            if incumbent is not None and \
                    incumbent_obj - best_bound_seen <= gap_rel * max(1.0, abs(incumbent_obj)):
                status = "optimal"
                break
            if bound0 >= prune_limit():
                continue
            if node_limit is not None and nodes >= node_limit:
                status = "node_limit"
                break
            nodes += 1

            try:
                sol = simplex.solve(self._lp(lb, ub))
            except simplex.SimplexError as exc:
                raise MasterError(f"node relaxation failed: {exc}") from exc
            if sol.status == simplex.INFEASIBLE:
                continue
            if sol.status != simplex.OPTIMAL:
                raise MasterError(f"node relaxation is {sol.status}")

            pruned = False
            while True:
                z_dec = np.clip(sol.x[:self.n_dec], lb, ub)
                theta = float(sol.x[self.n_dec:].sum())
                obj = float(sol.objective)
                if node_log is not None:
                    node_log.write(f"{nodes},{depth},{obj:.9g},"
                                   f"{incumbent_obj:.9g}\n")
                if obj >= prune_limit():
                    pruned = True
                    break
                frac = np.abs(z_dec - np.round(z_dec))
                if float(frac.max(initial=0.0)) <= INT_TOL:
                    candidate = np.round(z_dec)
                    z_full = self.full_design(candidate)
                    cand_obj = float(self.beta @ candidate + theta)
                    cut = incumbent_callback(z_full, theta, cand_obj)
                    if cut is None:
                        if cand_obj < incumbent_obj:
                            incumbent_obj = cand_obj
                            incumbent = (candidate, theta)
                        pruned = True
                        break
                    if not self.add_cut(cut):
                        # The cut is already present, so theta already obeys
                        # it; treat the candidate as accepted.
                        if cand_obj < incumbent_obj:
                            incumbent_obj = cand_obj
                            incumbent = (candidate, theta)
                        pruned = True
                        break
                    sol = simplex.solve(self._lp(lb, ub))
                    if sol.status == simplex.INFEASIBLE:
                        pruned = True
                        break
                    if sol.status != simplex.OPTIMAL:
                        raise MasterError(f"node relaxation is {sol.status}")
                    continue
                break

            if pruned:
                continue

            z_dec = np.clip(sol.x[:self.n_dec], lb, ub)
            bound = float(sol.objective)
            branch = int(np.argmin(np.abs(z_dec - 0.5)))
            lb0, ub0 = lb.copy(), ub.copy()
            ub0[branch] = 0.0
            lb1, ub1 = lb.copy(), ub.copy()
            lb1[branch] = 1.0
            heapq.heappush(heap, (bound, next(counter), lb0, ub0, depth + 1))
            heapq.heappush(heap, (bound, next(counter), lb1, ub1, depth + 1))

        if not heap and status == "optimal":
            best_bound_seen = max(best_bound_seen,
                                  incumbent_obj if incumbent is not None else -np.inf)
        if incumbent is None:
            return MipResult(status=status, z=None, theta=np.nan,
                             objective=np.inf, best_bound=best_bound_seen,
                             nodes=nodes)
        z_full = self.full_design(incumbent[0])
        return MipResult(status=status, z=z_full, theta=incumbent[1],
                         objective=incumbent_obj, best_bound=best_bound_seen,
                         nodes=nodes)


def design_satisfies_constraints(arcs: Sequence[Arc], z: np.ndarray,
                                 tol: float = 1e-9) -> tuple[bool, str]:
    """Check frequency balance and one-frequency-per-connection for a design."""
    balance: dict[tuple[str, Mode], float] = {}
    for a in arcs:
        val = z[a.id]
        if a.fixed_open and abs(val - 1.0) > tol:
            return False, f"fixed arc {a.key} not open"
        balance[(a.i, a.mode)] = balance.get((a.i, a.mode), 0.0) \
            + a.frequency * val
        balance[(a.j, a.mode)] = balance.get((a.j, a.mode), 0.0) \
            - a.frequency * val
    for (vertex, mode), residual in balance.items():
        if abs(residual) > 1e-6:
            return False, f"frequency imbalance at {vertex!r} ({mode.value})"
    groups: dict[tuple[str, str, Mode], float] = {}
    for a in arcs:
        key = (a.i, a.j, a.mode)
        groups[key] = groups.get(key, 0.0) + z[a.id]
    for key, total in groups.items():
        if total > 1.0 + 1e-6:
            return False, f"multiple frequencies open on {key[0]}->{key[1]}"
    return True, ""


def enumerate_feasible_designs(arcs: Sequence[Arc],
                               max_decision_arcs: int = 22) -> np.ndarray:
    """All binary designs satisfying the master constraints, for small models.

    Returns an array of shape (n_feasible, n_decision) over the decision
    arcs in id order. Intended as a test oracle.
    """
    model = MasterModel(arcs)
    n = model.n_dec
    if n > max_decision_arcs:
        raise ValueError(f"{n} decision arcs is too many to enumerate")
    if n == 0:
        return np.zeros((1, 0))
    bits = ((np.arange(2 ** n)[:, None] >> np.arange(n)[None, :]) & 1).astype(float)
    ok = np.ones(len(bits), dtype=bool)
    for row in model.rows:
        lhs = bits[:, row.cols] @ row.coefs
        if row.sense == "=":
            ok &= np.abs(lhs - row.rhs) <= 1e-9
        else:
            ok &= lhs <= row.rhs + 1e-9
    return bits[ok]
