"""Linear-program container and solvers.

Two backends sit behind :func:`solve_lp`:

* ``"simplex"``: a dense two-phase tableau simplex written here. Entering
  variables follow Dantzig's rule; after a run of degenerate pivots the solver
  switches to Bland's rule until the objective strictly improves again, which
  keeps it finite on the highly degenerate transportation LPs this package
  produces.
* ``"highs"``: scipy's HiGHS dual simplex on a sparse matrix, used for the
  large expanded two-stage LPs where a dense tableau does not fit.

``"auto"`` picks the dense simplex when the tableau is small.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import SolverError, ValidationError

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
INT_TOL = 1e-7
PIVOT_TOL = 1e-9

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_SENSES = {"<=": "<=", "≤": "<=", ">=": ">=", "≥": ">=", "=": "=", "==": "="}

# tableau entries (rows * columns) above which "auto" hands the LP to HiGHS
AUTO_DENSE_LIMIT = 250_000


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """maximize ``objective @ x`` s.t. ``matrix @ x (sense) rhs`` and ``lower <= x <= upper``.

    ``matrix`` may be a dense array or any scipy sparse matrix. ``upper`` entries
    may be ``inf``; lower bounds must be finite.
    """

    objective: np.ndarray
    matrix: np.ndarray | sp.spmatrix
    senses: tuple[str, ...]
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).ravel()
        n = c.size
        A = self.matrix
        if sp.issparse(A):
            A = sp.csr_matrix(A, dtype=float)
        else:
            A = np.asarray(A, dtype=float)
            if A.size == 0:
                A = A.reshape(0, n)
        if A.ndim != 2 or A.shape[1] != n:
            raise ValidationError(f"constraint matrix shape {A.shape} does not match {n} variables", "matrix")
        rhs = np.asarray(self.rhs, dtype=float).ravel()
        senses = tuple(_SENSES.get(s, s) for s in self.senses)
        if rhs.size != A.shape[0] or len(senses) != A.shape[0]:
            raise ValidationError("row count mismatch between matrix, senses and rhs", "constraints")
        if any(s not in ("<=", ">=", "=") for s in senses):
            raise ValidationError(f"unknown relation in {senses}", "senses")
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        if not np.all(np.isfinite(lo)):
            raise ValidationError("lower bounds must be finite", "lower")
        if np.any(lo > hi):
            raise ValidationError("lower bound exceeds upper bound", "upper")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "matrix", A)
        object.__setattr__(self, "senses", senses)
        object.__setattr__(self, "rhs", rhs)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_rows(
        cls,
        objective: Sequence[float],
        constraints: Sequence[tuple[Sequence[float], str, float]] = (),
        bounds: Sequence[tuple[float, float | None]] | None = None,
    ) -> "LinearProgram":
        """Build from ``(row, relation, rhs)`` triples; ``bounds`` defaults to ``[0, inf)``."""
        n = len(objective)
        if bounds is None:
            bounds = [(0.0, None)] * n
        if len(bounds) != n:
            raise ValidationError("one bound pair per variable required", "bounds")
        for idx, (row, _, _) in enumerate(constraints):
            if len(row) != n:
                raise ValidationError(f"row has {len(row)} entries, expected {n}", f"constraints[{idx}]")
        matrix = np.array([row for row, _, _ in constraints], dtype=float).reshape(len(constraints), n)
        return cls(
            objective=np.asarray(objective, dtype=float),
            matrix=matrix,
            senses=tuple(s for _, s, _ in constraints),
            rhs=np.array([b for _, _, b in constraints], dtype=float),
            lower=np.array([lo for lo, _ in bounds], dtype=float),
            upper=np.array([np.inf if hi is None else hi for _, hi in bounds], dtype=float),
        )

    @property
    def num_vars(self) -> int:
        return self.objective.size

    @property
    def num_rows(self) -> int:
        return self.matrix.shape[0]

    def dense_matrix(self) -> np.ndarray:
        return self.matrix.toarray() if sp.issparse(self.matrix) else self.matrix

    def max_violation(self, x: np.ndarray) -> float:
        """Largest constraint or bound violation of ``x`` (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        worst = max(0.0, float(np.max(self.lower - x, initial=0.0)), float(np.max(x - self.upper, initial=0.0)))
        if self.num_rows:
            ax = self.matrix @ x
            for sense in ("<=", ">=", "="):
                sel = np.array([s == sense for s in self.senses])
                if not sel.any():
                    continue
                diff = ax[sel] - self.rhs[sel]
                if sense == "<=":
                    worst = max(worst, float(diff.max(initial=0.0)))
                elif sense == ">=":
                    worst = max(worst, float((-diff).max(initial=0.0)))
                else:
                    worst = max(worst, float(np.abs(diff).max(initial=0.0)))
        return worst


@dataclass(frozen=True)
class LpSolution:
    status: str
    objective_value: float | None = None
    values: np.ndarray | None = None
    iterations: int = 0
    backend: str = ""
    wall_time: float = 0.0
    stats: dict = field(default_factory=dict)

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL

    def is_integral(self, tol: float = INT_TOL) -> bool:
        return self.values is not None and bool(np.all(np.abs(self.values - np.round(self.values)) <= tol))


def solve_lp(lp: LinearProgram, method: str = "auto") -> LpSolution:
    """Solve ``lp``; infeasible and unbounded LPs are reported via ``status``, never raised."""
    if method == "auto":
        size = (lp.num_rows + int(np.isfinite(lp.upper - lp.lower).sum())) * (2 * lp.num_vars + lp.num_rows)
        method = "simplex" if size <= AUTO_DENSE_LIMIT else "highs"
    start = time.perf_counter()
    if method == "simplex":
        sol = _DenseSimplex(lp).solve()
    elif method == "highs":
        sol = _solve_highs(lp)
    else:
        raise ValueError(f"unknown LP method {method!r}")
    return LpSolution(
        sol.status, sol.objective_value, sol.values, sol.iterations, method,
        time.perf_counter() - start, sol.stats,
    )


def solve_or_raise(lp: LinearProgram, method: str = "auto", what: str = "LP") -> LpSolution:
    """Solve an LP that is feasible and bounded by construction; anything else is an internal error."""
    sol = solve_lp(lp, method)
    if not sol.is_optimal:
        raise SolverError(f"{what} returned status {sol.status!r}; it is feasible and bounded by construction")
    return sol


# --------------------------------------------------------------------------
# dense two-phase simplex
# --------------------------------------------------------------------------


class _DenseSimplex:
    """Tableau simplex on ``max c y`` s.t. ``[A | slack | surplus | artificial] z = b``, ``z >= 0``.

    Variables are shifted to ``y = x - lower``; finite upper bounds become rows.
    """

    # consecutive degenerate pivots tolerated before falling back to Bland's rule
    STALL_LIMIT = 30

    def __init__(self, lp: LinearProgram):
        self.lp = lp
        n = lp.num_vars
        A = lp.dense_matrix()
        rhs = lp.rhs - A @ lp.lower
        senses = list(lp.senses)
        width = lp.upper - lp.lower
        bounded = np.flatnonzero(np.isfinite(width))
        if bounded.size:
            extra = np.zeros((bounded.size, n))
            extra[np.arange(bounded.size), bounded] = 1.0
            A = np.vstack([A, extra])
            rhs = np.concatenate([rhs, width[bounded]])
            senses += ["<="] * bounded.size
        rows = A.shape[0]
        flip = rhs < 0
        A = np.where(flip[:, None], -A, A)
        rhs = np.where(flip, -rhs, rhs)
        senses = [{"<=": ">=", ">=": "<="}.get(s, s) if f else s for s, f in zip(senses, flip)]

        n_slack = sum(s in ("<=", ">=") for s in senses)
        n_art = sum(s in (">=", "=") for s in senses)
        self.n = n
        self.n_struct = n + n_slack  # columns that survive phase 1
        total = n + n_slack + n_art
        T = np.zeros((rows, total))
        T[:, :n] = A
        basis = np.empty(rows, dtype=int)
        col_s, col_a = n, n + n_slack
        for r, s in enumerate(senses):
            if s == "<=":
                T[r, col_s] = 1.0
                basis[r] = col_s
                col_s += 1
            elif s == ">=":
                T[r, col_s] = -1.0
                col_s += 1
                T[r, col_a] = 1.0
                basis[r] = col_a
                col_a += 1
            else:
                T[r, col_a] = 1.0
                basis[r] = col_a
                col_a += 1
        self.T = T
        self.b = rhs.astype(float)
        self.basis = basis
        self.original = T.copy()
        self.original_b = self.b.copy()
        self.active_rows = np.arange(rows)
        self.iterations = 0
        self.bland_pivots = 0

    # reduced costs d_j = c_j - c_B B^-1 a_j for the current tableau
    def _reduced(self, cost: np.ndarray) -> np.ndarray:
        return cost - cost[self.basis] @ self.T

    def _pivot(self, r: int, j: int) -> None:
        T, b = self.T, self.b
        piv = T[r, j]
        T[r] /= piv
        b[r] /= piv
        col = T[:, j].copy()
        col[r] = 0.0
        nz = np.flatnonzero(np.abs(col) > 0.0)
        if nz.size:
            T[nz] -= np.outer(col[nz], T[r])
            b[nz] -= col[nz] * b[r]
        T[r, j] = 1.0
        b[(b < 0.0) & (b > -FEAS_TOL)] = 0.0
        self.basis[r] = j
        self.iterations += 1

    def _run(self, cost: np.ndarray, allowed: int) -> str:
        """Maximize ``cost`` over the current tableau using columns ``< allowed``."""
        stall = 0
        limit = 50 * (self.T.shape[0] + self.T.shape[1]) + 1000
        for _ in range(limit):
            d = self._reduced(cost)[:allowed]
            d[self.basis[self.basis < allowed]] = 0.0
            candidates = np.flatnonzero(d > OPT_TOL)
            if candidates.size == 0:
                return OPTIMAL
            bland = stall >= self.STALL_LIMIT
            if bland:
                j = int(candidates[0])
                self.bland_pivots += 1
            else:
                j = int(candidates[np.argmax(d[candidates])])
            col = self.T[:, j]
            rows = np.flatnonzero(col > PIVOT_TOL)
            if rows.size == 0:
                return UNBOUNDED
            ratios = self.b[rows] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + FEAS_TOL]
            # Bland's leaving rule: smallest basic variable index among ties
            r = int(ties[np.argmin(self.basis[ties])])
            stall = stall + 1 if best <= FEAS_TOL else 0
            self._pivot(r, j)
        raise SolverError("simplex iteration limit reached")

    def solve(self) -> LpSolution:
        lp = self.lp
        total = self.T.shape[1]
        if total > self.n_struct:
            cost1 = np.zeros(total)
            cost1[self.n_struct:] = -1.0
            status = self._run(cost1, total)
            if status != OPTIMAL:
                raise SolverError("phase 1 cannot be unbounded")
            infeas = float(self.b[self.basis >= self.n_struct].sum())
            if infeas > FEAS_TOL * max(1.0, float(np.abs(self.original_b).max(initial=0.0))):
                return LpSolution(INFEASIBLE, iterations=self.iterations,
                                  stats={"bland_pivots": self.bland_pivots})
            self._drive_out_artificials()
        cost = np.zeros(self.n_struct)
        cost[: self.n] = lp.objective
        self.T = self.T[:, : self.n_struct]
        self.original = self.original[:, : self.n_struct]
        status = self._run(cost, self.n_struct)
        stats = {"bland_pivots": self.bland_pivots, "rows": self.T.shape[0], "cols": self.T.shape[1]}
        if status == UNBOUNDED:
            return LpSolution(UNBOUNDED, iterations=self.iterations, stats=stats)

        z = np.zeros(self.n_struct)
        z[self.basis] = self._refined_basic_values()
        x = np.clip(z[: self.n], 0.0, None) + lp.lower
        x = np.minimum(x, lp.upper)
        return LpSolution(OPTIMAL, float(lp.objective @ x), x, self.iterations, stats=stats)

    def _drive_out_artificials(self) -> None:
        keep = []
        for r in range(self.T.shape[0]):
            if self.basis[r] < self.n_struct:
                keep.append(r)
                continue
            nz = np.flatnonzero(np.abs(self.T[r, : self.n_struct]) > PIVOT_TOL)
            if nz.size:
                self._pivot(r, int(nz[0]))
                keep.append(r)
            # otherwise the row is redundant and dropped
        keep = np.array(keep, dtype=int)
        self.T = self.T[keep]
        self.b = self.b[keep]
        self.basis = self.basis[keep]
        self.original = self.original[keep]
        self.original_b = self.original_b[keep]

    def _refined_basic_values(self) -> np.ndarray:
        """Recompute ``B^-1 b`` from the original columns to shed accumulated pivot error."""
        if self.basis.size == 0:
            return np.zeros(0)
        B = self.original[:, self.basis]
        try:
            xb = np.linalg.solve(B, self.original_b)
        except np.linalg.LinAlgError:
            return np.clip(self.b, 0.0, None)
        if not np.all(np.isfinite(xb)) or np.max(np.abs(xb - self.b), initial=0.0) > 1e-6:
            xb = self.b
        xb = np.where(np.abs(xb - np.round(xb)) <= INT_TOL * 1e-2, np.round(xb), xb)
        return np.clip(xb, 0.0, None)


# --------------------------------------------------------------------------
# HiGHS backend
# --------------------------------------------------------------------------


def _solve_highs(lp: LinearProgram) -> LpSolution:
    from scipy.optimize import linprog

    A = lp.matrix if sp.issparse(lp.matrix) else sp.csr_matrix(lp.matrix)
    senses = np.array(lp.senses)
    le = senses == "<="
    ge = senses == ">="
    eq = senses == "="
    A_ub = sp.vstack([A[le], -A[ge]]) if (le.any() or ge.any()) else None
    b_ub = np.concatenate([lp.rhs[le], -lp.rhs[ge]]) if A_ub is not None else None
    A_eq = A[eq] if eq.any() else None
    b_eq = lp.rhs[eq] if eq.any() else None
    bounds = np.column_stack([lp.lower, np.where(np.isinf(lp.upper), np.inf, lp.upper)])
    res = linprog(
        -lp.objective, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
        method="highs-ds",
        options={"primal_feasibility_tolerance": FEAS_TOL, "dual_feasibility_tolerance": OPT_TOL},
    )
    iterations = int(getattr(res, "nit", 0) or 0)
    if res.status == 2:
        return LpSolution(INFEASIBLE, iterations=iterations)
    if res.status == 3:
        return LpSolution(UNBOUNDED, iterations=iterations)
    if res.status != 0:
        raise SolverError(f"HiGHS failed: {res.message}")
    x = np.clip(np.asarray(res.x, dtype=float), lp.lower, lp.upper)
    snapped = np.round(x)
    x = np.where(np.abs(x - snapped) <= INT_TOL * 1e-2, snapped, x)
    return LpSolution(OPTIMAL, float(lp.objective @ x), x, iterations)
