"""ADMM for box-constrained, weighted-l1 regularized least squares.

Two objectives are supported:

* ``"projected"``:  1/2 ||P x - A^+ b||^2 + alpha sum_i w_i |x_i|
* ``"direct"``:     1/2 ||A x - b||^2     + alpha sum_i w_i |x_i|

both subject to 0 <= x <= s.  The splitting is x = z with the smooth term on
x and the l1 term plus the box on z.  Both x-updates are closed form in the
SVD basis, so an iteration costs a handful of (n x k) products.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .forward import ForwardModel, apply_pinv

MODES = ("projected", "direct")


@dataclass
class RecoveryProblem:
    model: ForwardModel
    b: np.ndarray
    alpha: float
    s: float = np.inf
    mode: str = "projected"
    max_iters: int = 5000
    # None -> rho = alpha; the l1 term then moves null-space components at O(1) speed
    rho: float | None = None
    tol_primal: float | None = None
    tol_dual: float | None = None
    # None -> the model's weights; pass np.ones(n) for unweighted l1
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        m, n = self.model.shape
        if self.b.shape != (m,):
            raise ValueError(f"b must have shape ({m},), got {self.b.shape}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.s > 0:
            raise ValueError("s must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rho is not None and not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != (n,) or np.any(self.weights <= 0):
                raise ValueError("weights must be a positive vector of length n")

    # Unset rho and tolerances are resolved on use, so dataclasses.replace
    # with a new alpha picks up matching defaults.
    @property
    def step(self) -> float:
        return float(self.alpha) if self.rho is None else float(self.rho)

    @property
    def primal_tol(self) -> float:
        return 1e-8 * np.sqrt(self.n) if self.tol_primal is None else self.tol_primal

    @property
    def dual_tol(self) -> float:
        # the dual residual carries a factor rho
        return 1e-8 * np.sqrt(self.n) * self.step if self.tol_dual is None else self.tol_dual

    @property
    def w(self) -> np.ndarray:
        return self.model.weights if self.weights is None else self.weights

    @property
    def n(self) -> int:
        return self.model.shape[1]


@dataclass
class AdmmResult:
    x: np.ndarray
    iterations_run: int
    converged: bool
    weighted_l1: float
    data_misfit: float
    primal_residual_history: np.ndarray = field(repr=False)
    dual_residual_history: np.ndarray = field(repr=False)
    objective_history: np.ndarray = field(repr=False)
    dual: np.ndarray = field(repr=False, default=None)


def prox_weighted_l1_box(v, threshold, s=np.inf):
    """argmin_{0 <= z <= s} 1/2 (z - v)^2 + threshold |z|, elementwise."""
    v = np.asarray(v, dtype=float)
    shrunk = np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)
    out = np.minimum(np.maximum(shrunk, 0.0), s)  # s may be an array; min with inf is a no-op
    return out if out.ndim else float(out)


def _target(problem: RecoveryProblem) -> np.ndarray:
    """The vector the smooth term is fitted to, in the coordinates of x."""
    return apply_pinv(problem.model, problem.b)


def objective(problem: RecoveryProblem, x, q: np.ndarray | None = None) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n,):
        raise ValueError(f"x must have shape ({problem.n},), got {x.shape}")
    model = problem.model
    reg = problem.alpha * float(np.sum(problem.w * np.abs(x)))
    if problem.mode == "projected":
        if q is None:
            q = _target(problem)
        r = model.V @ (model.V.T @ x) - q
    else:
        # rank-k factorization of A, consistent with the x-update
        r = model.U @ (model.sigma * (model.V.T @ x)) - problem.b
    return 0.5 * float(r @ r) + reg


def solve(problem: RecoveryProblem, z0=None, u0=None) -> AdmmResult:
    """Run ADMM from ``z0`` (default zero) and scaled dual ``u0`` (default zero)."""
    model = problem.model
    V, sigma, U = model.V, model.sigma, model.U
    n = problem.n
    rho = problem.step
    w = problem.w
    thresh = problem.alpha * w / rho
    s = problem.s

    if problem.mode == "projected":
        q = _target(problem)
        rhs0 = q
        # (P + rho I)^{-1} = (1/rho)(I - VV^T) + 1/(1+rho) VV^T
        range_scale = 1.0 / (1.0 + rho) - 1.0 / rho
    else:
        q = None
        rhs0 = V @ (sigma * (U.T @ problem.b))
        # (A^T A + rho I)^{-1} = V diag(1/(sigma^2+rho)) V^T + (1/rho)(I - VV^T)
        range_scale = 1.0 / (sigma**2 + rho) - 1.0 / rho

    z = np.zeros(n) if z0 is None else np.array(z0, dtype=float)
    u = np.zeros(n) if u0 is None else np.array(u0, dtype=float)
    r_hist, s_hist, obj_hist = [], [], []
    converged = False
    it = 0
    for it in range(1, problem.max_iters + 1):
        y = rhs0 + rho * (z - u)
        x = y / rho + V @ (range_scale * (V.T @ y))
        z_old = z
        z = prox_weighted_l1_box(x + u, thresh, s)
        u = u + x - z
        r_norm = float(np.linalg.norm(x - z))
        s_norm = rho * float(np.linalg.norm(z - z_old))
        if not (np.isfinite(r_norm) and np.isfinite(s_norm)):
            raise FloatingPointError(f"ADMM diverged at iteration {it} (non-finite residual)")
        r_hist.append(r_norm)
        s_hist.append(s_norm)
        obj_hist.append(objective(problem, z, q))
        if r_norm <= problem.primal_tol and s_norm <= problem.dual_tol:
            converged = True
            break

    misfit = float(np.linalg.norm(model.A @ z - problem.b))
    return AdmmResult(
        x=z,
        iterations_run=it,
        converged=converged,
        weighted_l1=float(np.sum(w * z)),
        data_misfit=misfit,
        primal_residual_history=np.array(r_hist),
        dual_residual_history=np.array(s_hist),
        objective_history=np.array(obj_hist),
        dual=u,
    )


def write_trace(result: AdmmResult, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iteration", "primal_residual", "dual_residual", "objective"])
        for i, (r, s, o) in enumerate(
            zip(result.primal_residual_history, result.dual_residual_history, result.objective_history), 1
        ):
            wr.writerow([i, repr(float(r)), repr(float(s)), repr(float(o))])
    return path
