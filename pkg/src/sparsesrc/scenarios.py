"""Source shapes, synthetic boundary data, recovery metrics and artifact export.

Scenario geometry lives in JSON files under ``sparsesrc/configs``; a
scenario names the grids used to generate data and to invert, epsilon,
alpha (possibly per noise level), the box bound and the shapes.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import scipy.sparse as sp

from . import admm, fem, forward, sweep

log = logging.getLogger(__name__)

SHAPE_KINDS = ("points", "rectangle", "disk", "horseshoe", "hollow_rectangle")
EXAMPLES = ("ex1", "ex1mag", "ex2", "ex3", "ex4", "ex5")
_GEOM_TOL = 1e-9


# --------------------------------------------------------------------- sources


@dataclass(frozen=True)
class Shape:
    kind: str
    strength: float
    params: dict[str, Any]

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}; expected one of {SHAPE_KINDS}")
        if not self.strength > 0:
            raise ValueError("shape strength must be positive")
        for key, val in self.params.items():
            vals = np.ravel(np.asarray(val, dtype=float))
            if key in ("thickness", "r"):
                if np.any(vals <= 0):
                    raise ValueError(f"{self.kind}: {key} must be positive")
            elif np.any(vals < -_GEOM_TOL) or np.any(vals > 1 + _GEOM_TOL):
                raise ValueError(f"{self.kind}: {key} lies outside the unit square")

    @classmethod
    def from_dict(cls, d: dict) -> "Shape":
        d = dict(d)
        kind = d.pop("kind")
        strength = float(d.pop("strength", 1.0))
        return cls(kind, strength, d)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "strength": self.strength, **self.params}

    def contains(self, xy: np.ndarray) -> np.ndarray:
        """Boolean mask of points inside the shape (boundary included)."""
        x, y = xy[:, 0], xy[:, 1]
        p, t = self.params, _GEOM_TOL

        def box(x0, x1, y0, y1):
            return (x >= x0 - t) & (x <= x1 + t) & (y >= y0 - t) & (y <= y1 + t)

        if self.kind == "rectangle":
            return box(p["x0"], p["x1"], p["y0"], p["y1"])
        if self.kind == "disk":
            return (x - p["cx"]) ** 2 + (y - p["cy"]) ** 2 <= p["r"] ** 2 + t
        if self.kind == "hollow_rectangle":
            d = p["thickness"]
            inner = (x > p["x0"] + d + t) & (x < p["x1"] - d - t) & (y > p["y0"] + d + t) & (y < p["y1"] - d - t)
            return box(p["x0"], p["x1"], p["y0"], p["y1"]) & ~inner
        if self.kind == "horseshoe":
            # two vertical arms joined at the bottom; open towards larger y
            d = p["thickness"]
            left = box(p["x0"], p["x0"] + d, p["y0"], p["y1"])
            right = box(p["x1"] - d, p["x1"], p["y0"], p["y1"])
            base = box(p["x0"], p["x1"], p["y0"], p["y0"] + d)
            return left | right | base
        raise ValueError(f"{self.kind} has no area")


@dataclass(frozen=True)
class SourceSpec:
    shapes: tuple[Shape, ...]

    @classmethod
    def from_list(cls, shapes: list[dict]) -> "SourceSpec":
        return cls(tuple(Shape.from_dict(s) for s in shapes))

    def to_list(self) -> list[dict]:
        return [s.to_dict() for s in self.shapes]


def rasterize_source(spec: SourceSpec, mesh: fem.TriMesh) -> np.ndarray:
    """Nodal coefficients; overlapping shapes keep the larger strength."""
    x = np.zeros(mesh.num_nodes)
    for shape in spec.shapes:
        if shape.kind == "points":
            for px, py in np.atleast_2d(np.asarray(shape.params["coords"], dtype=float)):
                i = int(np.argmin((mesh.coords[:, 0] - px) ** 2 + (mesh.coords[:, 1] - py) ** 2))
                x[i] = max(x[i], shape.strength)
        else:
            mask = shape.contains(mesh.coords)
            x[mask] = np.maximum(x[mask], shape.strength)
    if not np.any(x):
        raise ValueError(f"source has empty support on the {mesh.nodes_per_side}x{mesh.nodes_per_side} grid")
    return x


# ------------------------------------------------------------------------ data


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian noise of absolute scale ``tau``, or ``level`` times the data range."""

    tau: float | None = None
    level: float | None = None
    seed: int = 0

    def __post_init__(self):
        if (self.tau is None) == (self.level is None):
            raise ValueError("give exactly one of tau and level")
        if (self.tau if self.tau is not None else self.level) < 0:
            raise ValueError("noise scale must be non-negative")

    def resolve_tau(self, b_clean: np.ndarray) -> float:
        if self.tau is not None:
            return float(self.tau)
        return float(self.level * (b_clean.max() - b_clean.min()))


@dataclass
class DataSet:
    b: np.ndarray
    b_clean: np.ndarray
    tau: float
    x_star: np.ndarray = field(repr=False)

    @property
    def noise_level(self) -> float:
        return self.tau / float(self.b_clean.max() - self.b_clean.min())

    @property
    def noise_norm_estimate(self) -> float:
        """tau * sqrt(m), the expected norm of the added noise."""
        return self.tau * np.sqrt(self.b.size)


def boundary_trace(
    x_source: np.ndarray, state_mesh: fem.TriMesh, source_mesh: fem.TriMesh, epsilon: float
) -> np.ndarray:
    """Mb^{1/2} E L^{-1} M R x with a single sparse solve."""
    K = fem.assemble_stiffness(state_mesh)
    M = fem.assemble_mass(state_mesh)
    if source_mesh.nodes_per_side == state_mesh.nodes_per_side:
        f = np.asarray(x_source, dtype=float)
    else:
        f = fem.prolongation(source_mesh, state_mesh) @ x_source
    lu = forward._factor(sp.csc_matrix(K + epsilon * M))
    u = lu.solve(M @ f)
    return np.sqrt(fem.boundary_weights(state_mesh)) * u[state_mesh.boundary_nodes]


def generate_data(
    spec: SourceSpec,
    state_mesh: fem.TriMesh,
    source_mesh: fem.TriMesh,
    epsilon: float,
    noise: NoiseSpec | None = None,
) -> DataSet:
    """Boundary data b = A x* + tau * rho on ``state_mesh``."""
    x_star = rasterize_source(spec, source_mesh)
    b_clean = boundary_trace(x_star, state_mesh, source_mesh, epsilon)
    tau = 0.0 if noise is None else noise.resolve_tau(b_clean)
    b = b_clean.copy()
    if tau > 0:
        rng = np.random.default_rng(noise.seed)
        b = b + tau * rng.standard_normal(b.size)
    return DataSet(b, b_clean, tau, x_star)


def restrict_boundary(data: DataSet, fine_state: fem.TriMesh, coarse_state: fem.TriMesh) -> DataSet:
    """Sample the coarse boundary nodes and rescale to the coarse boundary weights."""
    if coarse_state.nodes_per_side == fine_state.nodes_per_side:
        return data
    node_map = fem.nested_node_map(coarse_state, fine_state)
    position = {int(node): k for k, node in enumerate(fine_state.boundary_nodes)}
    idx = np.array([position[int(node_map[c])] for c in coarse_state.boundary_nodes])
    scale = np.sqrt(fem.boundary_weights(coarse_state) / fem.boundary_weights(fine_state)[idx])
    # the boundary weights double uniformly, so tau scales by the same constant
    tau = data.tau * float(scale.mean())
    return DataSet(scale * data.b[idx], scale * data.b_clean[idx], tau, data.x_star)


@lru_cache(maxsize=8)
def cached_forward(state_n: int, source_n: int, epsilon: float, rank: int = forward.DEFAULT_RANK) -> forward.ForwardModel:
    return forward.build_forward(fem.build_mesh(state_n), fem.build_mesh(source_n), epsilon, rank)


# --------------------------------------------------------------------- metrics


@dataclass
class RecoveryReport:
    support_precision: float
    support_recall: float
    linf_error: float
    l2_error: float
    weighted_l1: float | None = None
    misfit: float | None = None
    runtime: float | None = None
    parameters: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def compute_metrics(x, x_star, threshold_frac: float = 0.1, weights=None) -> RecoveryReport:
    """Support read as {x_i > threshold_frac * max(x)}.

    An all-zero ``x`` has empty support, which counts as precision 1.
    """
    x = np.asarray(x, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    if x.shape != x_star.shape:
        raise ValueError("x and x_star must have equal length")
    if not 0 < threshold_frac < 1:
        raise ValueError("threshold_frac must lie in (0, 1)")
    top = x.max(initial=0.0)
    found = x > threshold_frac * top if top > 0 else np.zeros(x.size, bool)
    truth = x_star != 0
    hits = np.count_nonzero(found & truth)
    precision = hits / np.count_nonzero(found) if found.any() else 1.0
    recall = hits / np.count_nonzero(truth) if truth.any() else 1.0
    diff = x - x_star
    return RecoveryReport(
        support_precision=float(precision),
        support_recall=float(recall),
        linf_error=float(np.abs(diff).max(initial=0.0)),
        l2_error=float(np.linalg.norm(diff)),
        weighted_l1=None if weights is None else float(np.sum(np.asarray(weights) * np.abs(x))),
    )


# ---------------------------------------------------------------------- export


def write_solution_csv(x, mesh: fem.TriMesh, path) -> Path:
    x = np.asarray(x, dtype=float)
    if x.shape != (mesh.num_nodes,):
        raise ValueError(f"x must have length {mesh.num_nodes}")
    path = Path(path)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["node_index", "x_coord", "y_coord", "value"])
        for i, ((cx, cy), v) in enumerate(zip(mesh.coords, x)):
            wr.writerow([i, f"{cx:.17g}", f"{cy:.17g}", f"{v:.17g}"])
    return path


def read_solution_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["value"]) for r in rows])


def write_pgm(x, mesh: fem.TriMesh, path) -> Path:
    """Binary 8-bit graymap of the nodal grid, top image row = largest y."""
    x = np.asarray(x, dtype=float)
    if x.shape != (mesh.num_nodes,):
        raise ValueError(f"x must have length {mesh.num_nodes}")
    n = mesh.nodes_per_side
    scale = max(float(x.max(initial=0.0)), 1e-15)
    img = np.clip(np.rint(255.0 * np.clip(x, 0.0, None) / scale), 0, 255).astype(np.uint8)
    img = img.reshape(n, n)[::-1]
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{n} {n}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary graymap")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


def export_heatmap(x, mesh: fem.TriMesh, path) -> tuple[Path, Path]:
    """Write ``<path>.csv`` and ``<path>.pgm``."""
    base = Path(path)
    base = base.with_suffix("") if base.suffix in (".csv", ".pgm") else base
    return (
        write_solution_csv(x, mesh, base.with_suffix(".csv")),
        write_pgm(x, mesh, base.with_suffix(".pgm")),
    )


# ------------------------------------------------------------------- scenarios


def load_scenario(name_or_path) -> dict:
    """Parse a bundled scenario by name, or any JSON file by path."""
    p = Path(str(name_or_path))
    if p.suffix == ".json" and p.exists():
        text = p.read_text()
    elif str(name_or_path) in EXAMPLES:
        text = resources.files("sparsesrc").joinpath("configs").joinpath(f"{name_or_path}.json").read_text()
    else:
        raise ValueError(f"unknown example {name_or_path!r}; expected one of {EXAMPLES} or a JSON path")
    return json.loads(text)


def _as_float(v) -> float:
    return float("inf") if isinstance(v, str) and v.lower() in ("inf", "infinity", "none") else float(v)


@dataclass
class ExampleRun:
    name: str
    report: RecoveryReport
    x: np.ndarray = field(repr=False)
    x_star: np.ndarray = field(repr=False)
    mesh: fem.TriMesh = field(repr=False)
    data: DataSet = field(repr=False)
    model: forward.ForwardModel = field(repr=False)
    result: admm.AdmmResult = field(repr=False)
    sweep: sweep.SweepResult | None = field(default=None, repr=False)
    morozov: sweep.MorozovResult | None = field(default=None, repr=False)
    artifacts: list[Path] = field(default_factory=list)


def run_example(name: str, out_dir=None, **overrides) -> ExampleRun:
    """Run a scenario end to end.

    Recognized overrides: epsilon, alpha (a number or ``"morozov"``), s (a
    number, ``"inf"`` or ``"sweep"``), noise_level, seed, rank, max_iters,
    unweighted, threshold_frac, mode, sweep_grid, morozov_space.
    """
    cfg = load_scenario(name)
    label = Path(str(name)).stem
    unknown = set(overrides) - {
        "epsilon", "alpha", "s", "noise_level", "seed", "rank", "max_iters",
        "unweighted", "threshold_frac", "mode", "sweep_grid", "morozov_space",
    }
    if unknown:
        raise ValueError(f"unknown overrides: {sorted(unknown)}")
    eps = float(overrides.get("epsilon", cfg["epsilon"]))
    rank = int(overrides.get("rank", forward.DEFAULT_RANK))
    level = float(overrides.get("noise_level", 0.0))
    seed = int(overrides.get("seed", 0))
    max_iters = int(overrides.get("max_iters", 5000))
    frac = float(overrides.get("threshold_frac", 0.1))
    mode = overrides.get("mode", "projected")
    spec = SourceSpec.from_list(cfg["shapes"])

    t0 = time.perf_counter()
    data_state = fem.build_mesh(cfg["data_state_grid"])
    data_source = fem.build_mesh(cfg["data_source_grid"])
    model = cached_forward(cfg["state_grid"], cfg["source_grid"], eps, rank)
    inv_source, inv_state = model.source_mesh, model.state_mesh
    noise = NoiseSpec(level=level, seed=seed) if level > 0 else None
    data = restrict_boundary(generate_data(spec, data_state, data_source, eps, noise), data_state, inv_state)
    x_star = rasterize_source(spec, inv_source)

    alpha_opt = overrides.get("alpha", cfg.get("alpha"))
    if alpha_opt is None:
        table = {float(k): v for k, v in cfg["alpha_by_noise"].items()}
        alpha_opt = table.get(level, "morozov")
    s_opt = overrides.get("s", cfg.get("s", "inf"))
    weights = np.ones(model.shape[1]) if overrides.get("unweighted") else None
    template = admm.RecoveryProblem(
        model, data.b, alpha=1.0, mode=mode, max_iters=max_iters, weights=weights
    )

    mz = None
    if isinstance(alpha_opt, str) and alpha_opt == "morozov":
        if data.tau <= 0:
            raise ValueError("Morozov selection needs noisy data")
        box = dataclasses.replace(template, s=_as_float(s_opt) if s_opt != "sweep" else np.inf)
        space = overrides.get("morozov_space", "projected")
        mz = sweep.morozov_alpha(box, sweep.expected_noise_norm(model, data.tau, space), space)
        alpha = mz.alpha
    else:
        alpha = float(alpha_opt)
    template = dataclasses.replace(template, alpha=alpha)

    sw = None
    if isinstance(s_opt, str) and s_opt == "sweep":
        grid = overrides.get("sweep_grid")
        if grid is None:
            g = cfg.get("sweep")
            grid = np.linspace(g["start"], g["stop"], g["num"]) if g else None
        sw = sweep.sweep_strength(template, grid)
        s = sweep.detect_vertex(sw).s
    else:
        s = _as_float(s_opt)

    res = admm.solve(dataclasses.replace(template, s=s))
    report = compute_metrics(res.x, x_star, frac, weights=template.w)
    report.misfit = res.data_misfit
    report.runtime = time.perf_counter() - t0
    report.parameters = {
        "example": label, "epsilon": eps, "alpha": alpha, "s": s, "rank": rank,
        "noise_level": level, "seed": seed, "max_iters": max_iters, "mode": mode,
        "unweighted": bool(overrides.get("unweighted", False)),
        "iterations_run": res.iterations_run, "converged": res.converged,
    }
    if mz is not None:
        report.parameters["morozov_in_band"] = mz.in_band
        report.parameters["morozov_space"] = mz.space
    if sw is not None:
        report.parameters["vertex_confident"] = sweep.detect_vertex(sw).confident
    run = ExampleRun(label, report, res.x, x_star, inv_source, data, model, res, sw, mz)
    if out_dir is not None:
        run.artifacts = write_run_artifacts(run, out_dir)
    return run


def write_run_artifacts(run: ExampleRun, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = list(export_heatmap(run.x, run.mesh, out / "solution"))
    paths += list(export_heatmap(run.x_star, run.mesh, out / "true_source"))
    rep = out / "report.json"
    rep.write_text(json.dumps(run.report.to_dict(), indent=2, default=float) + "\n")
    paths.append(rep)
    if run.sweep is not None:
        paths.append(sweep.write_sweep_csv(run.sweep, out / "sweep.csv"))
    return paths
