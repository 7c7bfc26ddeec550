"""Dense two-phase simplex for small standard-form LPs, plus a sufficient
test for a variable being zero in every optimal solution.

maximize c.x  subject to  lhs[i].x <= rhs[i]  (or == on flagged rows), x >= 0.

Bland's rule on both pivot choices keeps the solver cycle-free and fully
deterministic: identical inputs give identical vertices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


EPS = 1e-9
PIVOT_EPS = 1e-10
MAX_ITER = 10**6


class LPStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LinearProgram:
    """maximize objective.x s.t. lhs.x (<= | ==) rhs, x >= 0."""

    objective: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    equality: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.objective, dtype=float)
        a = np.atleast_2d(np.asarray(self.lhs, dtype=float))
        b = np.asarray(self.rhs, dtype=float)
        eq = np.asarray(self.equality, dtype=bool)
        if a.size == 0:
            a = a.reshape(0, c.size)
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "lhs", a)
        object.__setattr__(self, "rhs", b)
        object.__setattr__(self, "equality", eq)
        if a.shape != (b.size, c.size) or eq.size != b.size:
            raise ValueError("inconsistent LP dimensions")
        if not (np.isfinite(c).all() and np.isfinite(a).all() and np.isfinite(b).all()):
            raise ValueError("LP entries must be finite")

    @property
    def num_vars(self) -> int:
        return self.objective.size

    @property
    def num_rows(self) -> int:
        return self.rhs.size


def maximize(
    c,
    a_ub=None,
    b_ub=None,
    a_eq=None,
    b_eq=None,
) -> LinearProgram:
    """Assemble a LinearProgram from separate <= and == blocks."""
    c = np.asarray(c, dtype=float)
    rows: list[np.ndarray] = []
    rhs: list[float] = []
    eq: list[bool] = []
    if a_ub is not None and len(a_ub):
        a_ub = np.atleast_2d(np.asarray(a_ub, dtype=float))
        rows.append(a_ub)
        rhs.extend(np.asarray(b_ub, dtype=float).ravel())
        eq.extend([False] * a_ub.shape[0])
    if a_eq is not None and len(a_eq):
        a_eq = np.atleast_2d(np.asarray(a_eq, dtype=float))
        rows.append(a_eq)
        rhs.extend(np.asarray(b_eq, dtype=float).ravel())
        eq.extend([True] * a_eq.shape[0])
    lhs = np.vstack(rows) if rows else np.zeros((0, c.size))
    return LinearProgram(
        objective=c,
        lhs=lhs,
        rhs=np.asarray(rhs, dtype=float),
        equality=np.asarray(eq, dtype=bool),
    )


@dataclass(frozen=True)
class LPSolution:
    x: np.ndarray
    value: float
    status: LPStatus
    iterations: int


def _pivot(tableau: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    tableau -= np.outer(factors, tableau[row])
    basis[row] = col


def _run_simplex(
    tableau: np.ndarray, basis: np.ndarray, ncols: int, start_iter: int
) -> tuple[str, int]:
    """Maximize the objective encoded in the last tableau row over columns
    [0, ncols).  Bland's rule: lowest eligible entering column, lowest
    basis index on ratio ties."""
    it = start_iter
    m = tableau.shape[0] - 1
    while True:
        it += 1
        if it > MAX_ITER:
            raise RuntimeError("simplex iteration cap exceeded")
        red = tableau[-1, :ncols]
        enter = -1
        for j in range(ncols):
            if red[j] > EPS:
                enter = j
                break
        if enter < 0:
            return "optimal", it
        col = tableau[:m, enter]
        best_ratio = math.inf
        leave = -1
        for r in range(m):
            if col[r] > PIVOT_EPS:
                ratio = tableau[r, -1] / col[r]
                if ratio < best_ratio - PIVOT_EPS or (
                    abs(ratio - best_ratio) <= PIVOT_EPS
                    and (leave < 0 or basis[r] < basis[leave])
                ):
                    best_ratio = ratio
                    leave = r
        if leave < 0:
            return "unbounded", it
        _pivot(tableau, basis, leave, enter)


def solve_lp(lp: LinearProgram) -> LPSolution:
    """Two-phase simplex.  Returns one optimal vertex for feasible bounded
    programs, otherwise the infeasible/unbounded status."""
    n = lp.num_vars
    m = lp.num_rows
    a = lp.lhs.copy()
    b = lp.rhs.copy()
    eq = lp.equality.copy()

    flip = b < 0
    a[flip] *= -1.0
    b[flip] *= -1.0

    # Columns: x (n) | slacks for <= rows (one each) | artificials.
    ineq_rows = np.flatnonzero(~eq)
    slack_of_row = {int(r): n + k for k, r in enumerate(ineq_rows)}
    nslack = len(ineq_rows)
    needs_artificial = [bool(eq[r] or flip[r]) for r in range(m)]
    art_rows = [r for r in range(m) if needs_artificial[r]]
    nart = len(art_rows)
    ncols = n + nslack + nart

    tab = np.zeros((m + 1, ncols + 1))
    tab[:m, :n] = a
    tab[:m, -1] = b
    basis = np.full(m, -1, dtype=int)
    for r in ineq_rows:
        sign = -1.0 if flip[r] else 1.0
        tab[r, slack_of_row[int(r)]] = sign
    for k, r in enumerate(art_rows):
        tab[r, n + nslack + k] = 1.0
        basis[r] = n + nslack + k
    for r in ineq_rows:
        if not needs_artificial[int(r)]:
            basis[int(r)] = slack_of_row[int(r)]

    iterations = 0
    if nart:
        # Phase 1: maximize -(sum of artificials).
        obj = np.zeros(ncols + 1)
        obj[n + nslack :ncols] = -1.0
        tab[-1, :] = obj
        for r in range(m):
            if basis[r] >= n + nslack:
                tab[-1, :] += tab[r, :]
        status, iterations = _run_simplex(tab, basis, ncols, iterations)
        # the objective cell carries -z, so z* = -tab[-1, -1]; any residual
        # artificial mass (z* < 0) means the program is infeasible
        if status != "optimal" or tab[-1, -1] > EPS:
            return LPSolution(
                x=np.zeros(n), value=math.nan, status=LPStatus.INFEASIBLE, iterations=iterations
            )
        # Drive leftover artificials out of the basis (or drop dead rows).
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] >= n + nslack:
                piv = -1
                for j in range(n + nslack):
                    if abs(tab[r, j]) > PIVOT_EPS:
                        piv = j
                        break
                if piv >= 0:
                    _pivot(tab, basis, r, piv)
                else:
                    keep[r] = False
        if not keep.all():
            rows = np.concatenate([np.flatnonzero(keep), [m]])
            tab = tab[rows]
            basis = basis[keep]
            m = int(keep.sum())

    # Phase 2 over original + slack columns only.
    ncols2 = n + nslack
    tab2 = np.zeros((m + 1, ncols2 + 1))
    tab2[:m, :ncols2] = tab[:m, :ncols2]
    tab2[:m, -1] = tab[:m, -1]
    tab2[-1, :n] = lp.objective
    for r in range(m):
        coef = tab2[-1, basis[r]]
        if abs(coef) > PIVOT_EPS:
            tab2[-1, :] -= coef * tab2[r, :]
    status, iterations = _run_simplex(tab2, basis, ncols2, iterations)
    if status == "unbounded":
        return LPSolution(
            x=np.zeros(n), value=math.inf, status=LPStatus.UNBOUNDED, iterations=iterations
        )
    x = np.zeros(ncols2)
    for r in range(m):
        x[basis[r]] = tab2[r, -1]
    x = np.where(np.abs(x) < EPS, 0.0, x)[:n]
    return LPSolution(
        x=x,
        value=float(lp.objective @ x),
        status=LPStatus.OPTIMAL,
        iterations=iterations,
    )


# ---------------------------------------------------------------------------
# Zero-variable dominance test
# ---------------------------------------------------------------------------

_SIGN_TOL = 1e-12


def zero_variable_test(lp: LinearProgram, r: int) -> bool:
    """Sufficient condition for x[r] = 0 in every optimal solution.

    Looks for a column q whose scaled copy can absorb any mass on column r
    without losing feasibility while strictly improving the objective:
    there must be a multiplier H >= 0 with H * lhs[:, q] <= lhs[:, r]
    componentwise and H * c[q] > c[r].  Row signatures split into: rows
    bounding H from above (q-coefficient positive, r-coefficient
    nonnegative), rows bounding it from below (both negative), and rows
    that forbid any H (q-coefficient nonnegative, r-coefficient negative).
    The upper bound is floored, which only strengthens the test.  Equality
    rows are handled as opposed inequality pairs.  Sufficient, not
    necessary.
    """
    c = lp.objective
    n = lp.num_vars
    if not 0 <= r < n:
        raise IndexError(f"variable index {r} out of range")
    rows = [lp.lhs[~lp.equality]]
    if lp.equality.any():
        rows.append(lp.lhs[lp.equality])
        rows.append(-lp.lhs[lp.equality])
    a = np.vstack(rows) if rows else np.zeros((0, n))

    for q in range(n):
        if q == r:
            continue
        aq = a[:, q]
        ar = a[:, r]
        blocking = (aq >= -_SIGN_TOL) & (ar < -_SIGN_TOL)
        if blocking.any():
            continue
        upper = (aq > _SIGN_TOL) & (ar >= -_SIGN_TOL)
        lower = (aq < -_SIGN_TOL) & (ar <= _SIGN_TOL)
        if not upper.any() and not lower.any():
            if c[q] > _SIGN_TOL:
                return True
            continue
        if upper.any():
            ratios = np.maximum(ar[upper], 0.0) / aq[upper]
            h = math.floor(ratios.min() + _SIGN_TOL)
            if lower.any():
                m2 = (np.minimum(ar[lower], 0.0) / aq[lower]).max()
                if h < m2 - _SIGN_TOL:
                    continue
        else:
            h = (np.minimum(ar[lower], 0.0) / aq[lower]).max()
        if h < 0:
            continue
        if h * c[q] > c[r] + EPS:
            return True
    return False
