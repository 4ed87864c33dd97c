"""Dual-certificate feasibility checks and exact basis pursuit via the simplex.

The certificate LP looks for c with

    (P e_j / ||P e_j||) . c  = 1           for j in J
    (P e_i / ||P e_i||) . c <= 1 - delta   for i not in J

Since P = V V^T, only V^T c matters, so the LP is posed in the k SVD
coordinates and lifted back with c = V (V^T c).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .forward import WEIGHT_WARN, ForwardModel, apply_pinv
from .simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram, simplex_solve

log = logging.getLogger(__name__)

DEFAULT_DELTA = 1e-3


class BasisPursuitInfeasible(RuntimeError):
    pass


@dataclass
class CertificateReport:
    feasible: bool
    J: np.ndarray
    delta: float
    c: np.ndarray | None = field(default=None, repr=False)
    gamma_hat: float | None = None
    status: str = ""
    low_weight: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "feasible": bool(self.feasible),
            "verdict": "certificate found" if self.feasible else "certificate not found",
            "status": self.status,
            "J": [int(j) for j in self.J],
            "delta": self.delta,
            "gamma_hat": None if self.gamma_hat is None or not np.isfinite(self.gamma_hat) else float(self.gamma_hat),
            "c_norm": None if self.c is None else float(np.linalg.norm(self.c)),
            "c": None if self.c is None else [float(v) for v in self.c],
            "low_weight": self.low_weight,
        }


def normalized_directions(model: ForwardModel) -> np.ndarray:
    """Row i holds V^T (P e_i / ||P e_i||), i.e. V_i / w_i."""
    return model.V / model.weights[:, None]


def certificate_margin(model: ForwardModel, J, c) -> tuple[np.ndarray, float]:
    """Inner products on J and the largest one off J, for a certificate c in R^n."""
    J = np.asarray(J, dtype=int)
    vals = normalized_directions(model) @ (model.V.T @ np.asarray(c, float))
    off = np.delete(vals, J)
    return vals[J], float(off.max()) if off.size else -np.inf


def pair_certificate(model: ForwardModel, j1: int, j2: int) -> np.ndarray:
    """Closed-form c satisfying the equality conditions for J = {j1, j2}."""
    N = normalized_directions(model)
    p1 = model.V @ N[j1]
    p2 = model.V @ N[j2]
    return (p1 + p2) / (1.0 + p1 @ p2)


def check_certificate(
    model: ForwardModel,
    J,
    delta: float = DEFAULT_DELTA,
    optimize: bool = False,
    weight_threshold: float = WEIGHT_WARN,
) -> CertificateReport:
    J = np.unique(np.asarray(J, dtype=int))
    n = model.shape[1]
    if J.size == 0:
        raise ValueError("J must be nonempty")
    if J.min() < 0 or J.max() >= n:
        raise ValueError(f"J must be a subset of 0..{n - 1}")
    if not delta > 0:
        raise ValueError("delta must be positive")
    if np.any(model.weights <= 0):
        raise ValueError("all weights must be positive")
    low = [int(j) for j in J if model.weights[j] < weight_threshold]
    if low:
        log.warning("support indices %s have near-null-space columns (w < %g)", low, weight_threshold)

    k = model.rank
    N = normalized_directions(model)
    Jc = np.setdiff1d(np.arange(n), J)
    nc = Jc.size
    A = np.zeros((n, k + nc))
    A[: J.size, :k] = N[J]
    A[J.size :, :k] = N[Jc]
    A[J.size :, k:] = np.eye(nc)
    b = np.concatenate([np.ones(J.size), np.full(nc, 1.0 - delta)])
    lower = np.concatenate([np.full(k, -np.inf), np.zeros(nc)])
    cost = np.concatenate([np.zeros(k), np.ones(nc)]) if optimize else np.zeros(k + nc)
    lp = LinearProgram(cost, A, b, lower=lower, maximize=True)

    res = simplex_solve(lp)
    if res.status == UNBOUNDED and optimize:
        # the margin can be made arbitrarily large; any feasible point will do
        res = simplex_solve(LinearProgram(np.zeros(k + nc), A, b, lower=lower))
    if res.status != OPTIMAL:
        return CertificateReport(False, J, delta, status=res.status, low_weight=low)

    coeffs = res.x[:k]
    c = model.V @ coeffs
    off = N[Jc] @ coeffs
    gamma = float(off.max()) if nc else -np.inf
    return CertificateReport(True, J, delta, c=c, gamma_hat=gamma, status=res.status, low_weight=low)


def max_margin_certificate(model: ForwardModel, J, max_delta: float = 1.0) -> CertificateReport:
    """Certificate with the largest uniform margin delta <= max_delta off J.

    Same rows as :func:`check_certificate` with delta promoted to a variable
    and maximized.  A smaller gamma_hat tightens the regularized error bounds.
    """
    J = np.unique(np.asarray(J, dtype=int))
    n = model.shape[1]
    if J.size == 0 or J.min() < 0 or J.max() >= n:
        raise ValueError(f"J must be a nonempty subset of 0..{n - 1}")
    k = model.rank
    N = normalized_directions(model)
    Jc = np.setdiff1d(np.arange(n), J)
    nc = Jc.size
    # variables: c' (k, free), slacks (nc, >= 0), delta (<= max_delta)
    A = np.zeros((n, k + nc + 1))
    A[: J.size, :k] = N[J]
    A[J.size :, :k] = N[Jc]
    A[J.size :, k : k + nc] = np.eye(nc)
    A[J.size :, -1] = 1.0
    b = np.concatenate([np.ones(J.size), np.ones(nc)])
    lower = np.concatenate([np.full(k, -np.inf), np.zeros(nc), [-np.inf]])
    upper = np.concatenate([np.full(k + nc, np.inf), [max_delta]])
    cost = np.zeros(k + nc + 1)
    cost[-1] = 1.0
    # delta = 1 makes every off-J row degenerate; Bland alone stalls there in
    # floating point, Dantzig pricing (with its Bland fallback) does not
    res = simplex_solve(LinearProgram(cost, A, b, lower=lower, upper=upper, maximize=True), rule="dantzig")
    if res.status != OPTIMAL:
        return CertificateReport(False, J, 0.0, status=res.status)
    delta = float(res.x[-1])
    coeffs = res.x[:k]
    gamma = float((N[Jc] @ coeffs).max()) if nc else -np.inf
    if not delta > 0:
        return CertificateReport(False, J, delta, status="no positive margin")
    return CertificateReport(True, J, delta, c=model.V @ coeffs, gamma_hat=gamma, status=res.status)


def basis_pursuit_lp(model: ForwardModel, b, s: float = np.inf) -> LinearProgram:
    """min sum w_i x_i  s.t.  V^T x = V^T A^+ b,  0 <= x <= s."""
    q = apply_pinv(model, b)
    n = model.shape[1]
    return LinearProgram(model.weights.copy(), model.V.T, model.V.T @ q, lower=np.zeros(n), upper=np.full(n, s))


def solve_basis_pursuit(model: ForwardModel, b, s: float = np.inf) -> np.ndarray:
    if not s > 0:
        raise ValueError("s must be positive")
    res = simplex_solve(basis_pursuit_lp(model, b, s))
    if res.status == INFEASIBLE:
        raise BasisPursuitInfeasible(f"data not attainable with 0 <= x <= {s}")
    if res.status == UNBOUNDED:
        raise RuntimeError("basis pursuit LP reported unbounded; objective is bounded below by 0")
    if res.status != OPTIMAL:
        raise RuntimeError(f"basis pursuit LP failed: {res.status}")
    return res.x
