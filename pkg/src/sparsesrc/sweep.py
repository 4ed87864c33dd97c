"""Strength estimation by sweeping the box bound, and Morozov selection of alpha.

For a constant-strength source the curve g(s) = ||W y(s)||_1 is flat for
s at or above the true strength and rises as s shrinks below it, so the
strength shows up as the vertex of an L-shaped curve.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import admm
from .forward import apply_pinv

log = logging.getLogger(__name__)

LOW_CONFIDENCE_RATIO = 2.0
ALPHA_BRACKET = (1e-8, 1e2)
MOROZOV_BAND = (0.9, 1.1)


@dataclass
class SweepResult:
    s_grid: np.ndarray
    g_values: np.ndarray
    converged: np.ndarray
    solutions: list[np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.s_grid = np.asarray(self.s_grid, dtype=float)
        self.g_values = np.asarray(self.g_values, dtype=float)
        self.converged = np.asarray(self.converged, dtype=bool)

    @property
    def derivative(self) -> np.ndarray:
        """Backward differences; the first entry is NaN."""
        d = np.full(self.s_grid.size, np.nan)
        d[1:] = np.diff(self.g_values) / np.diff(self.s_grid)
        return d

    def is_non_increasing(self, rtol: float = 1e-3) -> bool:
        slack = rtol * abs(self.g_values[0]) if self.g_values.size else 0.0
        return bool(np.all(np.diff(self.g_values) <= slack))


@dataclass
class Vertex:
    s: float
    confident: bool
    curvature: np.ndarray = field(repr=False)


def default_grid(problem: admm.RecoveryProblem, num: int = 26) -> np.ndarray:
    s_hat = float(np.max(np.abs(apply_pinv(problem.model, problem.b))))
    if s_hat <= 0:
        raise ValueError("A^+ b vanishes; no magnitude scale to sweep over")
    return np.linspace(0.1 * s_hat, 2.0 * s_hat, num)


def sweep_strength(
    template: admm.RecoveryProblem,
    s_grid=None,
    warm_start: bool = True,
    keep_solutions: bool = True,
) -> SweepResult:
    """Solve the template problem once per bound s.

    With ``warm_start`` the grid is traversed from the largest s down and each
    solve starts from the previous solution clipped to the new box.
    """
    grid = default_grid(template) if s_grid is None else np.asarray(s_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("s_grid must be a nonempty 1-D sequence")
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("s_grid must be positive and strictly increasing")

    g = np.empty(grid.size)
    conv = np.zeros(grid.size, bool)
    sols: list[np.ndarray | None] = [None] * grid.size
    z = u = None
    for idx in range(grid.size - 1, -1, -1):
        s = float(grid[idx])
        problem = dataclasses.replace(template, s=s)
        if warm_start and z is not None:
            res = admm.solve(problem, z0=np.minimum(z, s), u0=u)
        else:
            res = admm.solve(problem)
        z, u = res.x, res.dual
        g[idx] = res.weighted_l1
        conv[idx] = res.converged
        sols[idx] = res.x
    return SweepResult(grid, g, conv, sols if keep_solutions else None)


def detect_vertex(sweep: SweepResult, method: str = "peak") -> Vertex:
    """Locate the kink of g(s) from the jumps in its difference quotient.

    The jump at s_i is |slope(s_i, s_i+1) - slope(s_i-1, s_i)|, which on a
    uniform grid is the absolute second difference over the step.

    ``method="max"`` returns the largest jump.  ``method="peak"`` (default)
    only considers jumps exceeding both neighbours, so a convex trend that
    merely grows towards one end of the grid is not mistaken for a vertex;
    without any such peak it falls back to ``"max"`` with low confidence.
    Ties go to the larger s.
    """
    if method not in ("peak", "max"):
        raise ValueError("method must be 'peak' or 'max'")
    s, g = sweep.s_grid, sweep.g_values
    if s.size < 3:
        raise ValueError("vertex detection needs at least 3 grid points")
    slopes = np.diff(g) / np.diff(s)
    jumps = np.abs(np.diff(slopes))  # jumps[i] belongs to s[i + 1]
    # round-off in a straight segment must not read as a kink
    jumps[jumps <= 1e-9 * max(np.abs(slopes).max(), 1e-300)] = 0.0
    median = float(np.median(jumps))

    candidates = np.arange(jumps.size)
    peaked = True
    if method == "peak":
        inner = np.arange(1, jumps.size - 1)
        is_peak = (jumps[inner] > jumps[inner - 1]) & (jumps[inner] >= jumps[inner + 1])
        if is_peak.any():
            candidates = inner[is_peak]
        else:
            peaked = False
    top = jumps[candidates].max()
    tied = candidates[jumps[candidates] >= top * (1 - 1e-9)]
    best = int(tied[-1]) + 1
    confident = peaked and top > 0 and bool(top >= LOW_CONFIDENCE_RATIO * median)
    if not confident:
        log.warning("L-curve vertex at s = %g is low-confidence (jump %.3g, median %.3g)", s[best], top, median)
    curvature = np.full(s.size, np.nan)
    curvature[1:-1] = jumps
    return Vertex(float(s[best]), confident, curvature)


def write_sweep_csv(sweep: SweepResult, path, vertex: Vertex | None = None) -> Path:
    path = Path(path)
    if vertex is None and sweep.s_grid.size >= 3:
        vertex = detect_vertex(sweep)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["s", "g", "derivative", "converged"])
        for s, g, d, c in zip(sweep.s_grid, sweep.g_values, sweep.derivative, sweep.converged):
            wr.writerow([repr(float(s)), repr(float(g)), "" if np.isnan(d) else repr(float(d)), int(c)])
        if vertex is not None:
            wr.writerow(["# vertex", repr(vertex.s), "confidence", "high" if vertex.confident else "low"])
    return path


MOROZOV_SPACES = ("projected", "data")


def expected_noise_norm(model, tau: float, space: str = "projected") -> float:
    """E||noise|| for i.i.d. N(0, tau^2) data noise, measured where the misfit is.

    ``"data"``: ||tau rho|| ~ tau sqrt(m).  ``"projected"``: the noise seen
    by the projected problem is A^+ (tau rho), of norm ~ tau ||Sigma^-1||_F.
    """
    if space == "data":
        return float(tau * np.sqrt(model.shape[0]))
    if space == "projected":
        return float(tau * np.sqrt(np.sum(model.sigma**-2.0)))
    raise ValueError(f"space must be one of {MOROZOV_SPACES}")


def misfit(problem: admm.RecoveryProblem, x: np.ndarray, space: str = "projected") -> float:
    model = problem.model
    if space == "data":
        return float(np.linalg.norm(model.A @ x - problem.b))
    if space == "projected":
        return float(np.linalg.norm(model.V @ (model.V.T @ x) - apply_pinv(model, problem.b)))
    raise ValueError(f"space must be one of {MOROZOV_SPACES}")


@dataclass
class MorozovResult:
    alpha: float
    misfit: float
    target: float
    in_band: bool
    monotone: bool
    space: str
    solution: np.ndarray = field(repr=False)
    history: list[tuple[float, float]] = field(default_factory=list, repr=False)
    unconverged: list[float] = field(default_factory=list)


def morozov_alpha(
    template: admm.RecoveryProblem,
    noise_estimate: float,
    space: str = "projected",
    bracket: tuple[float, float] = ALPHA_BRACKET,
    band: tuple[float, float] = MOROZOV_BAND,
    max_bisections: int = 40,
) -> MorozovResult:
    """Bisect log(alpha) until the misfit lies within band * noise_estimate.

    ``space`` selects the misfit: ``"data"`` uses ||A y - b||, ``"projected"``
    uses ||P y - A^+ b||, the data term of the problem actually solved.  Pair
    it with :func:`expected_noise_norm` for the same space.  The misfit is
    assumed to grow with alpha.  When the band cannot be reached the closer
    bracket end is returned with ``in_band=False``; a misfit that is not
    monotone along the evaluated points is reported via ``monotone``, and
    alphas whose solves stopped at ``max_iters`` are listed in ``unconverged``.
    """
    if not noise_estimate > 0:
        raise ValueError("noise_estimate must be positive")
    if space not in MOROZOV_SPACES:
        raise ValueError(f"space must be one of {MOROZOV_SPACES}")
    lo_t, hi_t = band[0] * noise_estimate, band[1] * noise_estimate
    cache: dict[float, tuple[admm.AdmmResult, float]] = {}

    def run(alpha: float) -> float:
        if alpha not in cache:
            problem = dataclasses.replace(template, alpha=alpha)
            res = admm.solve(problem)
            cache[alpha] = (res, misfit(problem, res.x, space))
        return cache[alpha][1]

    def done(alpha: float, in_band: bool) -> MorozovResult:
        pts = sorted((a, m) for a, (_, m) in cache.items())
        mis = np.array([m for _, m in pts])
        monotone = bool(np.all(np.diff(mis) >= -1e-8 * max(1.0, mis.max(initial=0.0))))
        if not monotone:
            log.warning("misfit is not monotone in alpha over the evaluated points")
        stalled = sorted(a for a, (r, _) in cache.items() if not r.converged)
        if stalled:
            log.info("ADMM hit max_iters at alpha = %s; those misfits are approximate", stalled)
        res, m = cache[alpha]
        return MorozovResult(alpha, m, float(noise_estimate), in_band, monotone, space, res.x, pts, stalled)

    a_lo, a_hi = bracket
    m_lo, m_hi = run(a_lo), run(a_hi)
    if lo_t <= m_lo <= hi_t:
        return done(a_lo, True)
    if lo_t <= m_hi <= hi_t:
        return done(a_hi, True)
    if m_lo > hi_t:
        log.warning("misfit at alpha = %g already exceeds the target band", a_lo)
        return done(a_lo, False)
    if m_hi < lo_t:
        log.warning("misfit at alpha = %g stays below the target band", a_hi)
        return done(a_hi, False)

    log_lo, log_hi = np.log10(a_lo), np.log10(a_hi)
    for _ in range(max_bisections):
        mid = 10.0 ** (0.5 * (log_lo + log_hi))
        m = run(mid)
        if lo_t <= m <= hi_t:
            return done(mid, True)
        if m < lo_t:
            log_lo = np.log10(mid)
        else:
            log_hi = np.log10(mid)
    best = min(cache, key=lambda a: abs(cache[a][1] - noise_estimate))
    return done(best, False)
