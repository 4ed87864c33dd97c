"""Dense two-phase bounded-variable primal simplex.

Intended for the small and medium LPs of this package (tens to a few hundred
rows).  Variables may carry arbitrary bounds.  They are mapped to
min c^T x, A x = b, 0 <= x <= u (u possibly infinite) and upper bounds are
handled implicitly: a nonbasic variable sits at either bound and may flip
between them without a pivot.

Pricing uses Bland's rule by default (smallest eligible index entering,
smallest basic index leaving on ratio ties), which cannot cycle.
``rule="dantzig"`` picks the most attractive reduced cost instead and
falls back to Bland after a run of degenerate pivots.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"

PIVOT_TOL = 1e-9
COST_TOL = 1e-9
FEAS_TOL = 1e-8
DEGENERATE_STREAK = 50


@dataclass
class LinearProgram:
    c: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    maximize: bool = False

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, n)
        self.b_eq = np.asarray(self.b_eq, dtype=float).ravel()
        if self.b_eq.size != self.A_eq.shape[0]:
            raise ValueError("A_eq and b_eq have inconsistent row counts")
        if not np.all(np.isfinite(self.b_eq)):
            raise ValueError("right-hand side must be finite")
        self.lower = np.zeros(n) if self.lower is None else np.broadcast_to(np.asarray(self.lower, float), (n,)).copy()
        self.upper = np.full(n, np.inf) if self.upper is None else np.broadcast_to(np.asarray(self.upper, float), (n,)).copy()
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if np.any(self.lower == np.inf) or np.any(self.upper == -np.inf):
            raise ValueError("invalid infinite bound")

    @property
    def num_vars(self) -> int:
        return self.c.size


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None = None
    value: float | None = None
    iterations: int = 0
    basis: np.ndarray | None = field(default=None, repr=False)

    @property
    def success(self) -> bool:
        return self.status == OPTIMAL


class _StandardForm:
    """x_orig = offset + T @ x_std with 0 <= x_std <= ub."""

    def __init__(self, lp: LinearProgram):
        n = lp.num_vars
        cols = []  # (orig index, sign, width)
        offset = np.zeros(n)
        for j in range(n):
            lo, hi = lp.lower[j], lp.upper[j]
            if np.isfinite(lo):
                offset[j] = lo
                cols.append((j, 1.0, hi - lo))
            elif np.isfinite(hi):
                offset[j] = hi
                cols.append((j, -1.0, np.inf))
            else:
                cols.append((j, 1.0, np.inf))
                cols.append((j, -1.0, np.inf))
        T = np.zeros((n, len(cols)))
        for k, (j, sgn, _) in enumerate(cols):
            T[j, k] = sgn
        sense = -1.0 if lp.maximize else 1.0
        self.A = lp.A_eq @ T
        self.b = lp.b_eq - lp.A_eq @ offset
        self.c = sense * (lp.c @ T)
        self.ub = np.array([w for _, _, w in cols])
        self.T, self.offset = T, offset

    def to_original(self, x_std: np.ndarray) -> np.ndarray:
        return self.offset + self.T @ x_std


class _Tableau:
    def __init__(self, A, b, ub, basis, cost):
        self.tab = A.copy()  # B^{-1} A, with B = I initially
        self.beta = b.copy()  # values of the basic variables
        self.ub = ub
        self.basis = basis
        self.at_upper = np.zeros(A.shape[1], bool)
        self.set_cost(cost)

    def set_cost(self, cost):
        self.cost = cost
        self.d = cost - cost[self.basis] @ self.tab

    def pivot(self, r: int, k: int) -> None:
        tab = self.tab
        tab[r] /= tab[r, k]
        col = tab[:, k].copy()
        col[r] = 0.0
        tab -= np.outer(col, tab[r])
        self.d = self.d - self.d[k] * tab[r]
        self.basis[r] = k

    def x(self) -> np.ndarray:
        x = np.where(self.at_upper, self.ub, 0.0)
        x[self.basis] = self.beta
        return x

    def run(self, allowed: np.ndarray, max_iter: int, rule: str) -> tuple[str, int]:
        m = self.tab.shape[0]
        ub = self.ub
        degenerate = 0
        for it in range(max_iter + 1):
            d = self.d
            nonbasic = allowed.copy()
            nonbasic[self.basis] = False
            gain = np.where(self.at_upper, d, -d)
            candidates = np.flatnonzero(nonbasic & (gain > COST_TOL))
            if candidates.size == 0:
                return OPTIMAL, it
            if it == max_iter:
                return ITERATION_LIMIT, it
            if rule == "bland" or degenerate >= DEGENERATE_STREAK:
                k = candidates[0]
            else:
                k = candidates[np.argmax(gain[candidates])]

            direction = -1.0 if self.at_upper[k] else 1.0
            alpha = direction * self.tab[:, k]
            # basic values move as beta - t * alpha
            t_best = ub[k]
            leave = -1
            to_upper = False
            dec = np.flatnonzero(alpha > PIVOT_TOL)
            inc = np.flatnonzero(alpha < -PIVOT_TOL)
            ratios = np.full(m, np.inf)
            ratios[dec] = np.maximum(self.beta[dec], 0.0) / alpha[dec]
            ub_b = ub[self.basis[inc]]
            ratios[inc] = np.maximum(ub_b - self.beta[inc], 0.0) / -alpha[inc]
            t_rows = ratios.min() if m else np.inf
            if np.isinf(t_best) and np.isinf(t_rows):
                return UNBOUNDED, it
            if t_rows < t_best or (t_rows == t_best and np.isfinite(t_rows)):
                tol = 1e-12 * max(1.0, abs(t_rows))
                tied = np.flatnonzero(ratios <= t_rows + tol)
                leave = tied[np.argmin(self.basis[tied])]
                to_upper = alpha[leave] < 0
                t_best = t_rows

            self.beta -= t_best * alpha
            degenerate = degenerate + 1 if t_best <= 1e-12 else 0
            entering_value = ub[k] - t_best if self.at_upper[k] else t_best
            if leave < 0:
                # bound flip, no basis change
                self.at_upper[k] = not self.at_upper[k]
                continue
            old = self.basis[leave]
            self.at_upper[old] = to_upper
            self.at_upper[k] = False
            self.pivot(leave, k)
            self.beta[leave] = entering_value
        return ITERATION_LIMIT, max_iter


def simplex_solve(lp: LinearProgram, max_iter: int = 50_000, rule: str = "bland") -> LPResult:
    if rule not in ("bland", "dantzig"):
        raise ValueError("rule must be 'bland' or 'dantzig'")
    sf = _StandardForm(lp)
    A, b, c, ub = sf.A.copy(), sf.b.copy(), sf.c, sf.ub
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1

    # reuse unit columns with room for the right-hand side as the starting basis
    basis = np.full(m, -1)
    for k in range(n):
        col = A[:, k]
        nz = np.flatnonzero(col)
        if nz.size == 1 and col[nz[0]] == 1.0 and basis[nz[0]] < 0 and b[nz[0]] <= ub[k]:
            basis[nz[0]] = k
    need = np.flatnonzero(basis < 0)
    n_art = need.size

    A_full = np.zeros((m, n + n_art))
    A_full[:, :n] = A
    A_full[need, n + np.arange(n_art)] = 1.0
    basis[need] = n + np.arange(n_art)
    ub_full = np.concatenate([ub, np.full(n_art, np.inf)])

    total = 0
    if n_art:
        cost1 = np.zeros(n + n_art)
        cost1[n:] = 1.0
        tb = _Tableau(A_full, b, ub_full, basis, cost1)
        status, it = tb.run(np.ones(n + n_art, bool), max_iter, rule)
        total += it
        if status == ITERATION_LIMIT:
            return LPResult(ITERATION_LIMIT, iterations=total)
        if tb.beta[tb.basis >= n].sum() > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
            return LPResult(INFEASIBLE, iterations=total)
        # drive artificials (now at zero) out of the basis, drop redundant rows
        keep = np.ones(m, bool)
        for r in range(m):
            if tb.basis[r] >= n:
                nz = np.flatnonzero(np.abs(tb.tab[r, :n]) > PIVOT_TOL)
                nz = nz[~np.isin(nz, tb.basis)]
                if nz.size:
                    k = nz[0]
                    value = ub[k] if tb.at_upper[k] else 0.0
                    tb.at_upper[k] = False
                    tb.pivot(r, k)
                    tb.beta[r] = value
                else:
                    keep[r] = False
        tab = tb.tab[keep][:, :n]
        beta = tb.beta[keep]
        basis = tb.basis[keep]
        at_upper = tb.at_upper[:n]
        A, b = A[keep], b[keep]
    else:
        tab, beta, at_upper = A_full, b.copy(), np.zeros(n, bool)

    tb = _Tableau.__new__(_Tableau)
    tb.tab, tb.beta, tb.ub, tb.basis, tb.at_upper = tab.copy(), beta.copy(), ub, basis.copy(), at_upper.copy()
    tb.set_cost(c)
    status, it = tb.run(np.ones(n, bool), max_iter - total, rule)
    total += it
    if status != OPTIMAL:
        return LPResult(status, iterations=total)

    x_std = tb.x()
    # recompute basic values from the original data to shed pivoting error
    nb = np.ones(n, bool)
    nb[tb.basis] = False
    rhs = b - A[:, nb] @ x_std[nb]
    if tb.basis.size:
        x_std[tb.basis] = np.linalg.lstsq(A[:, tb.basis], rhs, rcond=None)[0]
    x_std = np.clip(x_std, 0.0, ub)
    x = sf.to_original(x_std)
    return LPResult(OPTIMAL, x=x, value=float(lp.c @ x), iterations=total, basis=tb.basis.copy())


def max_violation(lp: LinearProgram, x: np.ndarray) -> float:
    """Largest constraint or bound violation of ``x``."""
    eq = np.abs(lp.A_eq @ x - lp.b_eq).max(initial=0.0)
    lo = np.max(lp.lower - x, initial=0.0)
    hi = np.max(x - lp.upper, initial=0.0)
    return float(max(eq, lo, hi, 0.0))
