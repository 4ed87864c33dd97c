"""Discrete forward map from source coefficients to weighted boundary traces.

A = Mb^{1/2} E L^{-1} M R with L = K + epsilon M on the state mesh, E the
restriction to boundary nodes and R the coarse-to-fine prolongation.  The
projection onto N(A)^perp, the pseudoinverse and the weights
w_i = ||P e_i|| all come from one rank-k truncated SVD of A.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem

log = logging.getLogger(__name__)

DEFAULT_RANK = 20
WEIGHT_WARN = 1e-3
RANK_RTOL = 1e-12

MAGIC = "SPARSESRC-FORWARD"
FORMAT_VERSION = 1


class SingularOperatorError(RuntimeError):
    def __init__(self, msg: str, condition_estimate: float = np.inf):
        super().__init__(f"{msg} (condition estimate {condition_estimate:.3e})")
        self.condition_estimate = condition_estimate


@dataclass(frozen=True)
class ForwardModel:
    A: np.ndarray = field(repr=False)
    U: np.ndarray = field(repr=False)
    sigma: np.ndarray
    V: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    epsilon: float | None = None
    source_mesh: fem.TriMesh | None = None
    state_mesh: fem.TriMesh | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    @property
    def rank(self) -> int:
        return self.sigma.shape[0]

    def projection_matrix(self) -> np.ndarray:
        return self.V @ self.V.T

    @classmethod
    def from_matrix(cls, A, svd_rank: int | None = None, **meta) -> "ForwardModel":
        """Wrap an arbitrary dense matrix; ``svd_rank=None`` keeps the numerical rank."""
        A = np.asarray(A, dtype=float)
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
        numerical = int(np.sum(s > RANK_RTOL * s[0])) if s.size and s[0] > 0 else 0
        if numerical == 0:
            raise SingularOperatorError("forward matrix is zero", np.inf)
        k = numerical if svd_rank is None else int(svd_rank)
        if k < 1:
            raise ValueError("svd_rank must be >= 1")
        if k > min(A.shape):
            raise ValueError(f"svd_rank {k} exceeds min(m, n) = {min(A.shape)}")
        if k > numerical:
            warnings.warn(
                f"svd_rank {k} exceeds numerical rank {numerical}; using {numerical}",
                RuntimeWarning,
                stacklevel=2,
            )
            k = numerical
        V = Vt[:k].T.copy()
        weights = np.linalg.norm(V, axis=1)
        return cls(A, U[:, :k].copy(), s[:k].copy(), V, weights, **meta)


def _factor(L: sp.spmatrix):
    try:
        lu = spla.splu(L.tocsc())
    except RuntimeError as err:
        raise SingularOperatorError(f"L_eps is singular: {err}") from err
    piv = np.abs(lu.U.diagonal())
    if piv.min() <= 1e-13 * piv.max():
        inv = spla.LinearOperator(L.shape, matvec=lu.solve, rmatvec=lambda v: lu.solve(v, trans="T"))
        cond = spla.norm(L, 1) * spla.onenormest(inv)
        raise SingularOperatorError("L_eps is numerically singular", cond)
    return lu


def assemble_forward_matrix(state_mesh: fem.TriMesh, source_mesh: fem.TriMesh, epsilon: float) -> np.ndarray:
    K = fem.assemble_stiffness(state_mesh)
    M = fem.assemble_mass(state_mesh)
    if source_mesh.nodes_per_side == state_mesh.nodes_per_side:
        R = sp.identity(state_mesh.num_nodes, format="csr")
    else:
        R = fem.prolongation(source_mesh, state_mesh)
    lu = _factor((K + epsilon * M).tocsc())

    bnd = state_mesh.boundary_nodes
    # L is symmetric, so E L^{-1} = (L^{-1} E^T)^T: m solves instead of n
    E_t = np.zeros((state_mesh.num_nodes, bnd.size))
    E_t[bnd, np.arange(bnd.size)] = 1.0
    Z = lu.solve(E_t)
    rows = np.asarray((M @ R).T @ Z).T  # (m, n_source)
    return np.sqrt(fem.boundary_weights(state_mesh))[:, None] * rows


def build_forward(
    state_mesh: fem.TriMesh,
    source_mesh: fem.TriMesh,
    epsilon: float = 1.0,
    svd_rank: int = DEFAULT_RANK,
) -> ForwardModel:
    same = source_mesh.nodes_per_side == state_mesh.nodes_per_side
    if not same and not fem.is_nested(source_mesh, state_mesh):
        raise ValueError("source mesh must equal the state mesh or be its nested coarsening")
    A = assemble_forward_matrix(state_mesh, source_mesh, epsilon)
    if not 1 <= svd_rank <= min(A.shape):
        raise ValueError(f"svd_rank must lie in [1, {min(A.shape)}], got {svd_rank}")
    return ForwardModel.from_matrix(
        A, svd_rank, epsilon=float(epsilon), source_mesh=source_mesh, state_mesh=state_mesh
    )


def _check_len(v, n: int, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise ValueError(f"{what} must have shape ({n},), got {v.shape}")
    return v


def apply_pinv(model: ForwardModel, b) -> np.ndarray:
    """Rank-k pseudoinverse image V diag(1/sigma) U^T b."""
    b = _check_len(b, model.shape[0], "b")
    return model.V @ ((model.U.T @ b) / model.sigma)


def apply_projection(model: ForwardModel, x) -> np.ndarray:
    x = _check_len(x, model.shape[1], "x")
    return model.V @ (model.V.T @ x)


def max_property_index(model: ForwardModel, j: int) -> int:
    """argmax_i |[W^{-1} P e_j]_i|; ties go to the smallest index."""
    n = model.shape[1]
    if not 0 <= j < n:
        raise IndexError(f"column index {j} out of range for n = {n}")
    if np.any(model.weights <= 0):
        raise ValueError("all weights must be positive")
    scores = np.abs(model.V @ model.V[j]) / model.weights
    best = int(np.argmax(scores))
    ties = np.flatnonzero(scores >= scores[best] * (1 - 1e-12))
    if ties.size > 1:
        log.info("max_property_index(%d): tie between %s, returning %d", j, ties.tolist(), best)
    return best


def max_property_failures(model: ForwardModel) -> np.ndarray:
    """Columns j whose max-property index is not j.

    Exact pseudoinverses have none; a truncated TSVD may, so callers log
    this rather than assert it.
    """
    if np.any(model.weights <= 0):
        raise ValueError("all weights must be positive")
    scores = np.abs(model.V @ model.V.T) / model.weights[:, None]  # column j scores entry i
    own = np.diag(scores)
    return np.flatnonzero(scores.max(axis=0) > own * (1 + 1e-12))


def min_weight_report(model: ForwardModel) -> tuple[float, int]:
    i = int(np.argmin(model.weights))
    return float(model.weights[i]), i


def tikhonov_projection_column(model_or_matrix, i: int, gamma: float) -> np.ndarray:
    """Solve (A^T A + gamma I) x = A^T A e_i, which tends to P e_i as gamma -> 0."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    A = model_or_matrix.A if isinstance(model_or_matrix, ForwardModel) else np.asarray(model_or_matrix, float)
    n = A.shape[1]
    # same minimizer as the normal equations, without squaring the conditioning
    stacked = np.vstack([A, np.sqrt(gamma) * np.eye(n)])
    rhs = np.concatenate([A[:, i], np.zeros(n)])
    return np.linalg.lstsq(stacked, rhs, rcond=None)[0]


def save_model(model: ForwardModel, path) -> Path:
    path = Path(path)
    meta = {
        "magic": np.array(MAGIC),
        "version": np.array(FORMAT_VERSION),
        "epsilon": np.array(np.nan if model.epsilon is None else model.epsilon),
        "source_n": np.array(model.source_mesh.nodes_per_side if model.source_mesh else 0),
        "state_n": np.array(model.state_mesh.nodes_per_side if model.state_mesh else 0),
    }
    with open(path, "wb") as fh:
        np.savez(fh, A=model.A, U=model.U, sigma=model.sigma, V=model.V, weights=model.weights, **meta)
    return path


def load_model(path) -> ForwardModel:
    with np.load(path, allow_pickle=False) as data:
        if "magic" not in data or str(data["magic"]) != MAGIC:
            raise ValueError(f"{path} is not a forward model cache")
        version = int(data["version"])
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported cache version {version}")
        eps = float(data["epsilon"])
        source_n, state_n = int(data["source_n"]), int(data["state_n"])
        return ForwardModel(
            A=data["A"],
            U=data["U"],
            sigma=data["sigma"],
            V=data["V"],
            weights=data["weights"],
            epsilon=None if np.isnan(eps) else eps,
            source_mesh=fem.build_mesh(source_n) if source_n else None,
            state_mesh=fem.build_mesh(state_n) if state_n else None,
        )
