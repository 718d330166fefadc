"""Bundled bounded-variable linear programming solver.

Revised primal simplex over the computational form

    min c'x   s.t.  A x {<=,=,>=} b,   l <= x <= u,

with inequality rows converted to equalities by slack columns and a two-phase
start (artificial columns priced to drive their magnitude to zero). Dantzig
pricing is used until a degeneracy counter trips, after which Bland's rule
takes over until progress resumes. The dense basis inverse is maintained by
product-form updates and refactorized periodically.

Every Optimal result is self-checked: the dual objective is recomputed from
sign-clamped multipliers and must match the primal objective to 1e-7
relative, otherwise the solver raises instead of returning silently wrong
duals.

Presolve is limited to dropping all-zero rows; dual indexing of the original
rows is preserved (dropped rows report a zero dual).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

FEAS_TOL = 1e-8             # primal feasibility, scaled by |b|
OPT_TOL = 1e-7              # duality-gap acceptance, relative
ENTER_TOL = 1e-9            # reduced-cost threshold for entering, scaled by |c|
PIVOT_TOL = 1e-10
BOUND_INF = 1e29            # bound magnitudes beyond this count as infinite
DEGENERATE_LIMIT = 40       # consecutive zero-step pivots before Bland's rule
REFACTOR_EVERY = 64
MAX_ITERATIONS = 200_000

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

AT_LOWER, AT_UPPER, BASIC, FREE_ZERO = 0, 1, 2, 3


class SimplexError(RuntimeError):
    """Numerical failure that survived the anti-cycling fallback."""


@dataclass
class LinearProgram:
    """min c'x subject to row constraints and variable bounds."""
    c: np.ndarray
    a_matrix: object            # (m, n) ndarray or scipy.sparse matrix
    senses: tuple[str, ...]     # per row: "<=", "=", ">="
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.rhs = np.asarray(self.rhs, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        self.lower = np.where(self.lower <= -BOUND_INF, -np.inf, self.lower)
        self.upper = np.where(self.upper >= BOUND_INF, np.inf, self.upper)
        m = len(self.rhs)
        n = len(self.c)
        shape = self.a_matrix.shape if self.a_matrix is not None else (m, n)
        if shape != (m, n) and not (m == 0 and shape[1] == n):
            raise ValueError(f"matrix shape {shape} does not match c/rhs sizes")
        if len(self.lower) != n or len(self.upper) != n:
            raise ValueError("bound dimension mismatch")
        for s in self.senses:
            if s not in ("<=", "=", ">="):
                raise ValueError(f"unknown row sense {s!r}")
        if len(self.senses) != m:
            raise ValueError("sense dimension mismatch")
        if np.any(self.lower > self.upper + FEAS_TOL):
            raise ValueError("lower bound exceeds upper bound")


@dataclass
class WarmBasis:
    basis: np.ndarray           # internal column index per row
    status: np.ndarray          # per internal column


@dataclass
class LpSolution:
    status: str
    objective: float
    x: np.ndarray               # primal values of the original variables
    duals: np.ndarray           # one per original row
    reduced_costs: np.ndarray   # per original variable (bound multipliers)
    warm: WarmBasis | None
    iterations: int


class _Columns:
    """Uniform dense/sparse column access to the internal matrix."""

    def __init__(self, matrix: sp.csc_matrix):
        self.csc = matrix.tocsc()
        self.m, self.n = self.csc.shape

    def col(self, j: int) -> np.ndarray:
        out = np.zeros(self.m)
        start, end = self.csc.indptr[j], self.csc.indptr[j + 1]
        out[self.csc.indices[start:end]] = self.csc.data[start:end]
        return out

    def t_dot(self, y: np.ndarray) -> np.ndarray:
        return self.csc.T @ y


class _Tableau:
    def __init__(self, cols: _Columns, lower: np.ndarray, upper: np.ndarray,
                 b: np.ndarray):
        self.cols = cols
        self.lower = lower
        self.upper = upper
        self.b = b
        self.m = cols.m
        self.n = cols.n
        self.status = np.full(self.n, AT_LOWER, dtype=np.int8)
        self.basis = np.zeros(self.m, dtype=np.int64)
        self.x = np.zeros(self.n)
        self.binv = np.eye(self.m)
        self.iterations = 0
        self._pivots_since_refactor = 0

    def refactor(self) -> None:
        bmat = np.zeros((self.m, self.m))
        for r, j in enumerate(self.basis):
            bmat[:, r] = self.cols.col(int(j))
        try:
            self.binv = np.linalg.inv(bmat)
        except np.linalg.LinAlgError as exc:
            raise SimplexError("singular basis during refactorization") from exc
        self._pivots_since_refactor = 0

    def recompute_basics(self) -> None:
        x_nonbasic = np.where(self.status == BASIC, 0.0, self.x)
        xb = self.binv @ (self.b - self.cols.csc @ x_nonbasic)
        self.x[self.basis] = xb

    def primal_violation(self) -> float:
        xb = self.x[self.basis]
        lo = self.lower[self.basis]
        hi = self.upper[self.basis]
        below = np.max(np.where(np.isfinite(lo), lo - xb, 0.0), initial=0.0)
        above = np.max(np.where(np.isfinite(hi), xb - hi, 0.0), initial=0.0)
        return float(max(below, above))

    def run(self, c: np.ndarray) -> str:
        """Optimize c'x from the current basic feasible point."""
        enter_tol = ENTER_TOL * (1.0 + float(np.max(np.abs(c), initial=0.0)))
        fixed = self.upper - self.lower <= 0.0
        degenerate_run = 0
        use_bland = False
        while True:
            if self.iterations >= MAX_ITERATIONS:
                raise SimplexError("iteration limit exceeded")
            y = self.binv.T @ c[self.basis]
            d = c - self.cols.t_dot(y)

            enter_dir = np.zeros(self.n, dtype=np.int8)
            can = ~fixed & (self.status != BASIC)
            enter_dir[can & (self.status == AT_LOWER) & (d < -enter_tol)] = 1
            enter_dir[can & (self.status == AT_UPPER) & (d > enter_tol)] = -1
            free = can & (self.status == FREE_ZERO)
            enter_dir[free & (d < -enter_tol)] = 1
            enter_dir[free & (d > enter_tol)] = -1

            candidates = np.flatnonzero(enter_dir)
            if candidates.size == 0:
                return OPTIMAL
            if use_bland:
                q = int(candidates[0])
            else:
                q = int(candidates[np.argmax(np.abs(d[candidates]))])
            t = float(enter_dir[q])

            w = self.binv @ self.cols.col(q)
            shifted = t * w          # basics move by -theta*shifted
            xb = self.x[self.basis]
            lo = self.lower[self.basis]
            hi = self.upper[self.basis]
            ratios = np.full(self.m, np.inf)
            pos = (shifted > PIVOT_TOL) & np.isfinite(lo)
            if np.any(pos):
                ratios[pos] = np.maximum(xb[pos] - lo[pos], 0.0) / shifted[pos]
            neg = (shifted < -PIVOT_TOL) & np.isfinite(hi)
            if np.any(neg):
                ratios[neg] = np.maximum(hi[neg] - xb[neg], 0.0) / (-shifted[neg])

            theta_rows = float(np.min(ratios, initial=np.inf))
            span = self.upper[q] - self.lower[q]
            step_bound = float(span) if np.isfinite(span) else np.inf

            if min(theta_rows, step_bound) == np.inf:
                return UNBOUNDED

            self.iterations += 1
            theta = min(theta_rows, step_bound)
            if theta <= PIVOT_TOL:
                degenerate_run += 1
                if degenerate_run >= DEGENERATE_LIMIT:
                    use_bland = True
            else:
                degenerate_run = 0
                use_bland = False

            if step_bound <= theta_rows:
                # Bound flip: q jumps to its opposite bound, basis unchanged.
                self.x[self.basis] = xb - step_bound * shifted
                self.x[q] = self.upper[q] if t > 0 else self.lower[q]
                self.status[q] = AT_UPPER if t > 0 else AT_LOWER
                continue

            # Ties: prefer the largest pivot magnitude, then the lowest row.
            tied = np.flatnonzero(ratios <= theta + PIVOT_TOL)
            leave_row = int(tied[np.argmax(np.abs(shifted[tied]))])
            pivot = w[leave_row]
            if abs(pivot) < PIVOT_TOL:
                raise SimplexError("pivot element too small")

            leaving = int(self.basis[leave_row])
            self.x[self.basis] = xb - theta * shifted
            self.x[q] = self.x[q] + theta * t
            hit_lower = shifted[leave_row] > 0
            self.x[leaving] = self.lower[leaving] if hit_lower else self.upper[leaving]
            self.status[leaving] = AT_LOWER if hit_lower else AT_UPPER
            self.status[q] = BASIC
            self.basis[leave_row] = q

            self._pivots_since_refactor += 1
            if self._pivots_since_refactor >= REFACTOR_EVERY:
                self.refactor()
                self.recompute_basics()
            else:
                row = self.binv[leave_row] / pivot
                self.binv = self.binv - np.outer(w, row)
                self.binv[leave_row] = row


@dataclass
class _Internal:
    cols: _Columns              # structural + slack + artificial columns
    lower: np.ndarray
    upper: np.ndarray
    c: np.ndarray               # phase-2 costs (zero on artificials)
    b: np.ndarray
    keep_rows: np.ndarray       # original row index per internal row
    n_real: int                 # structural + slack count
    n_struct: int


def _build_internal(lp: LinearProgram) -> _Internal | None:
    """Equality form with slacks and identity artificials; drop empty rows.

    Returns None when an empty row is inconsistent (trivial infeasibility).
    """
    m, n = len(lp.rhs), len(lp.c)
    base = lp.a_matrix if lp.a_matrix is not None else sp.csc_matrix((m, n))
    base = base.tocsc() if sp.issparse(base) else sp.csc_matrix(np.asarray(base, dtype=float))

    row_has_entry = np.zeros(m, dtype=bool)
    coo = base.tocoo()
    row_has_entry[coo.row[coo.data != 0.0]] = True
    keep_rows = np.flatnonzero(row_has_entry)
    for i in np.flatnonzero(~row_has_entry):
        r, s = lp.rhs[i], lp.senses[i]
        ok = (abs(r) <= FEAS_TOL if s == "=" else
              (r >= -FEAS_TOL if s == "<=" else r <= FEAS_TOL))
        if not ok:
            return None

    a = base[keep_rows, :].tocsc() if len(keep_rows) < m else base
    senses = [lp.senses[int(i)] for i in keep_rows]
    b = lp.rhs[keep_rows].astype(float)
    mm = len(keep_rows)

    slack_rows = [r for r, s in enumerate(senses) if s != "="]
    slack_signs = [1.0 if senses[r] == "<=" else -1.0 for r in slack_rows]
    n_slack = len(slack_rows)
    slack = sp.csc_matrix(
        (np.array(slack_signs), (np.array(slack_rows, dtype=int),
                                 np.arange(n_slack))),
        shape=(mm, n_slack)) if n_slack else sp.csc_matrix((mm, 0))
    art = sp.identity(mm, format="csc")
    full = sp.hstack([a, slack, art], format="csc")

    lower = np.concatenate([lp.lower, np.zeros(n_slack), np.zeros(mm)])
    upper = np.concatenate([lp.upper, np.full(n_slack, np.inf), np.zeros(mm)])
    c = np.concatenate([lp.c, np.zeros(n_slack + mm)])
    return _Internal(cols=_Columns(full), lower=lower, upper=upper, c=c, b=b,
                     keep_rows=keep_rows, n_real=n + n_slack, n_struct=n)


def _cold_start(tab: _Tableau, prob: _Internal) -> str | None:
    """Phase 1 from scratch. Returns INFEASIBLE or None on success."""
    n_real, n_total, mm = prob.n_real, tab.n, tab.m
    tab.status[:] = AT_LOWER
    tab.x[:] = 0.0
    for j in range(n_real):
        if np.isfinite(tab.lower[j]):
            tab.status[j] = AT_LOWER
            tab.x[j] = tab.lower[j]
        elif np.isfinite(tab.upper[j]):
            tab.status[j] = AT_UPPER
            tab.x[j] = tab.upper[j]
        else:
            tab.status[j] = FREE_ZERO
            tab.x[j] = 0.0

    residual = prob.b - prob.cols.csc[:, :n_real] @ tab.x[:n_real]
    # Artificials start basic at the residual; orient bounds and phase-1
    # costs so that |artificial| is minimized and bounded below.
    tab.basis = np.arange(n_real, n_total, dtype=np.int64)
    tab.status[n_real:] = BASIC
    tab.x[n_real:] = residual
    nonneg = residual >= 0
    tab.lower[n_real:] = np.where(nonneg, 0.0, -np.inf)
    tab.upper[n_real:] = np.where(nonneg, np.inf, 0.0)
    tab.binv = np.eye(mm)

    phase1_c = np.zeros(n_total)
    phase1_c[n_real:] = np.where(nonneg, 1.0, -1.0)
    status = tab.run(phase1_c)
    if status != OPTIMAL:
        raise SimplexError("phase 1 reported unbounded")
    infeasibility = float(phase1_c @ tab.x)
    feas_limit = FEAS_TOL * (1.0 + float(np.max(np.abs(prob.b), initial=0.0)))
    if infeasibility > 10 * feas_limit:
        return INFEASIBLE

    # Freeze artificials at zero for phase 2 (basic ones may stay, pinned).
    tab.lower[n_real:] = 0.0
    tab.upper[n_real:] = 0.0
    nonbasic_art = (tab.status[n_real:] != BASIC)
    tab.status[n_real:][nonbasic_art] = AT_LOWER
    tab.x[n_real:] = np.where(tab.status[n_real:] == BASIC, tab.x[n_real:], 0.0)
    tab.recompute_basics()
    return None


def solve(lp: LinearProgram, warm_basis: WarmBasis | None = None) -> LpSolution:
    """Solve an LP; returns status, primal/dual values, and a warm basis.

    A warm basis from a previous solve of the same shape (the bounds and
    right-hand side may differ) is reused as a phase-2 start when it is
    still primal feasible; otherwise the solver silently falls back to a
    cold two-phase start.
    """
    n_orig, m_orig = len(lp.c), len(lp.rhs)
    prob = _build_internal(lp)
    if prob is None:
        return LpSolution(INFEASIBLE, np.inf, np.zeros(n_orig),
                          np.zeros(m_orig), np.zeros(n_orig), None, 0)

    mm = len(prob.b)
    if mm == 0:
        # Pure box problem: every variable sits at its cheapest bound.
        x = np.where(lp.c > 0, lp.lower,
                     np.where(lp.c < 0, lp.upper,
                              np.where(np.isfinite(lp.lower), lp.lower, 0.0)))
        if np.any(~np.isfinite(x) & (lp.c != 0.0)):
            return LpSolution(UNBOUNDED, -np.inf, np.zeros(n_orig),
                              np.zeros(m_orig), np.zeros(n_orig), None, 0)
        x = np.where(np.isfinite(x), x, 0.0)
        reduced = lp.c.copy()
        return LpSolution(OPTIMAL, float(lp.c @ x), x, np.zeros(m_orig),
                          reduced, None, 0)

    tab = _Tableau(prob.cols, prob.lower.copy(), prob.upper.copy(), prob.b)
    n_total = tab.n

    warmed = False
    if (warm_basis is not None and len(warm_basis.status) == n_total
            and len(warm_basis.basis) == mm):
        st = warm_basis.status
        lo, hi = tab.lower, tab.upper
        valid = np.all(
            ((st != AT_LOWER) | np.isfinite(lo))
            & ((st != AT_UPPER) | np.isfinite(hi)))
        if valid and len(np.unique(warm_basis.basis)) == mm:
            tab.status = st.copy()
            tab.basis = warm_basis.basis.copy()
            tab.x = np.where(st == AT_LOWER, lo,
                             np.where(st == AT_UPPER, hi, 0.0))
            try:
                tab.refactor()
                tab.recompute_basics()
                feas_limit = FEAS_TOL * (1.0 + float(np.max(np.abs(prob.b),
                                                            initial=0.0)))
                warmed = tab.primal_violation() <= 10 * feas_limit
            except SimplexError:
                warmed = False

    if not warmed:
        outcome = _cold_start(tab, prob)
        if outcome == INFEASIBLE:
            return LpSolution(INFEASIBLE, np.inf, np.zeros(n_orig),
                              np.zeros(m_orig), np.zeros(n_orig), None,
                              tab.iterations)

    status = tab.run(prob.c)
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, -np.inf, np.zeros(n_orig),
                          np.zeros(m_orig), np.zeros(n_orig), None,
                          tab.iterations)

    tab.refactor()
    tab.recompute_basics()
    y = tab.binv.T @ prob.c[tab.basis]
    d_all = np.asarray(prob.c - prob.cols.t_dot(y), dtype=float)

    x_out = tab.x[:n_orig].copy()
    objective = float(lp.c @ x_out)
    duals = np.zeros(m_orig)
    duals[prob.keep_rows] = y
    reduced = d_all[:n_orig].copy()

    # Self-check: rebuild the dual objective from sign-clamped bound
    # multipliers; a gap beyond tolerance means the duals are unusable.
    mu_lo = np.maximum(d_all, 0.0)
    mu_hi = np.minimum(d_all, 0.0)
    lo_bad = (mu_lo > OPT_TOL) & ~np.isfinite(tab.lower)
    hi_bad = (mu_hi < -OPT_TOL) & ~np.isfinite(tab.upper)
    if np.any(lo_bad) or np.any(hi_bad):
        raise SimplexError("dual infeasibility at a reportedly optimal basis")
    lo_terms = np.where(np.isfinite(tab.lower), mu_lo * np.where(
        np.isfinite(tab.lower), tab.lower, 0.0), 0.0)
    hi_terms = np.where(np.isfinite(tab.upper), mu_hi * np.where(
        np.isfinite(tab.upper), tab.upper, 0.0), 0.0)
    dual_obj = float(y @ prob.b + lo_terms.sum() + hi_terms.sum())
    if abs(objective - dual_obj) > OPT_TOL * (1.0 + abs(objective)):
        raise SimplexError(
            f"strong duality violated: primal {objective!r} vs dual {dual_obj!r}")

    warm = WarmBasis(basis=tab.basis.copy(), status=tab.status.copy())
    return LpSolution(OPTIMAL, objective, x_out, duals, reduced, warm,
                      tab.iterations)


def write_lp_text(lp: LinearProgram, name: str = "problem") -> str:
    """Render an LP in a readable LP-file-style format for cross-checking."""
    def expr(coeffs: Sequence[float], idxs: Sequence[int]) -> str:
        parts = []
        for coef, j in zip(coeffs, idxs):
            if coef == 0:
                continue
            sign = "-" if coef < 0 else ("+" if parts else "")
            parts.append(f"{sign} {abs(coef):g} x{j}".strip())
        return " ".join(parts) if parts else "0"

    lines = [f"\\ {name}", "Minimize",
             " obj: " + expr(lp.c, range(len(lp.c))), "Subject To"]
    dense = (lp.a_matrix.toarray() if sp.issparse(lp.a_matrix)
             else np.asarray(lp.a_matrix, dtype=float))
    for r in range(len(lp.rhs)):
        row = dense[r]
        nz = np.flatnonzero(row)
        lines.append(f" c{r}: {expr(row[nz], nz)} {lp.senses[r]} {lp.rhs[r]:g}")
    lines.append("Bounds")
    for j in range(len(lp.c)):
        lo = "-inf" if not np.isfinite(lp.lower[j]) else f"{lp.lower[j]:g}"
        hi = "+inf" if not np.isfinite(lp.upper[j]) else f"{lp.upper[j]:g}"
        lines.append(f" {lo} <= x{j} <= {hi}")
    lines.append("End")
    return "\n".join(lines) + "\n"
