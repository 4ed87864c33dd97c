"""Command line interface.

Exit status: 0 on success, 2 when the problem is infeasible or degenerate
(no certificate, unattainable data, singular operator), 1 on other errors.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import admm, certificate, fem, forward, scenarios, sweep

log = logging.getLogger("sparsesrc")

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2

GLOBAL_DEFAULTS = {
    "epsilon": 1.0,
    "alpha": 1e-4,
    "s": float("inf"),
    "rank": forward.DEFAULT_RANK,
    "iters": 5000,
    "seed": 0,
    "noise_level": 0.0,
    "out_dir": ".",
}


class Infeasible(Exception):
    """Signals exit status 2."""


def _parse_s(text: str) -> float:
    return float("inf") if text.strip().lower() in ("inf", "infinity", "none") else float(text)


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    text = Path(path).read_text()
    parser.read_string("[settings]\n" + text)
    out = {}
    for key, raw in parser["settings"].items():
        key = key.replace("-", "_")
        if key not in GLOBAL_DEFAULTS:
            raise ValueError(f"unknown config key {key!r} in {path}")
        kind = type(GLOBAL_DEFAULTS[key])
        out[key] = _parse_s(raw) if key == "s" else (raw if kind is str else kind(raw))
    return out


def _settings(args) -> dict:
    merged = dict(GLOBAL_DEFAULTS)
    if args.config:
        merged.update(read_config(args.config))
    for key in GLOBAL_DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return merged


def _explicit(args) -> dict:
    """Global settings given on the command line or in the config file."""
    given = read_config(args.config) if args.config else {}
    for key in GLOBAL_DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            given[key] = val
    return given


def read_vector(path) -> np.ndarray:
    path = Path(path)
    with open(path) as fh:
        head = fh.readline()
    if head.startswith("node_index"):
        return scenarios.read_solution_csv(path)
    return np.atleast_1d(np.loadtxt(path, delimiter="," if "," in head else None))


def write_vector(x, path) -> Path:
    path = Path(path)
    np.savetxt(path, np.asarray(x), fmt="%.17g")
    return path


def _out(cfg) -> Path:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _problem(args, cfg, model, b, **extra) -> admm.RecoveryProblem:
    weights = np.ones(model.shape[1]) if getattr(args, "unweighted", False) else None
    return admm.RecoveryProblem(
        model, b, cfg["alpha"], s=cfg["s"], mode=getattr(args, "mode", "projected"),
        max_iters=cfg["iters"], weights=weights, **extra,
    )


def _save_solution(x, model, out: Path, stem: str) -> list[Path]:
    if model.source_mesh is not None and model.source_mesh.num_nodes == x.size:
        return list(scenarios.export_heatmap(x, model.source_mesh, out / stem))
    return [write_vector(x, out / f"{stem}.txt")]


# ----------------------------------------------------------------- commands


def cmd_build_forward(args, cfg) -> int:
    model = forward.build_forward(
        fem.build_mesh(args.state_grid), fem.build_mesh(args.source_grid), cfg["epsilon"], cfg["rank"]
    )
    path = forward.save_model(model, _out(cfg) / args.output)
    w_min, i_min = forward.min_weight_report(model)
    if w_min < args.weight_warn:
        log.warning("smallest weight %.3g at node %d is below %g: that column is nearly in the null space",
                    w_min, i_min, args.weight_warn)
    broken = forward.max_property_failures(model)
    if broken.size:
        log.info("max-property fails for %d of %d columns of the truncated model", broken.size, model.shape[1])
    print(json.dumps({
        "model": str(path), "shape": list(model.shape), "rank": model.rank,
        "sigma_max": float(model.sigma[0]), "sigma_min": float(model.sigma[-1]),
        "min_weight": w_min, "min_weight_index": i_min,
        "max_property_failures": int(broken.size),
    }, indent=2))
    return EXIT_OK


def cmd_recover(args, cfg) -> int:
    model = forward.load_model(args.model)
    res = admm.solve(_problem(args, cfg, model, read_vector(args.data)))
    out = _out(cfg)
    paths = _save_solution(res.x, model, out, "solution")
    if args.trace:
        paths.append(admm.write_trace(res, out / args.trace))
    print(json.dumps({
        "iterations_run": res.iterations_run, "converged": res.converged,
        "weighted_l1": res.weighted_l1, "data_misfit": res.data_misfit,
        "artifacts": [str(p) for p in paths],
    }, indent=2))
    return EXIT_OK


def cmd_basis_pursuit(args, cfg) -> int:
    model = forward.load_model(args.model)
    try:
        x = certificate.solve_basis_pursuit(model, read_vector(args.data), cfg["s"])
    except certificate.BasisPursuitInfeasible as err:
        raise Infeasible(str(err)) from err
    paths = _save_solution(x, model, _out(cfg), "basis_pursuit")
    print(json.dumps({
        "weighted_l1": float(model.weights @ x), "support_size": int(np.count_nonzero(x > 1e-7)),
        "artifacts": [str(p) for p in paths],
    }, indent=2))
    return EXIT_OK


def _parse_support(text: str) -> list[int]:
    return [int(tok) for tok in text.replace(",", " ").split()]


def cmd_certificate(args, cfg) -> int:
    model = forward.load_model(args.model)
    if args.support_from:
        J = np.flatnonzero(read_vector(args.support_from) > args.support_threshold)
    else:
        J = _parse_support(args.support)
    if args.max_margin:
        report = certificate.max_margin_certificate(model, J)
    else:
        report = certificate.check_certificate(model, J, args.delta, optimize=args.optimize)
    print(json.dumps(report.to_dict(), indent=2))
    if not report.feasible:
        raise Infeasible("certificate not found")
    return EXIT_OK


def _grid(text: str | None):
    if text is None:
        return None
    start, stop, num = text.split(":")
    return np.linspace(float(start), float(stop), int(num))


def cmd_sweep(args, cfg) -> int:
    model = forward.load_model(args.model)
    template = _problem(args, cfg, model, read_vector(args.data))
    result = sweep.sweep_strength(template, _grid(args.grid), warm_start=not args.cold)
    vertex = sweep.detect_vertex(result, args.vertex_method)
    path = sweep.write_sweep_csv(result, _out(cfg) / "sweep.csv", vertex)
    print(json.dumps({
        "vertex_s": vertex.s, "confident": vertex.confident,
        "non_increasing": result.is_non_increasing(),
        "s": result.s_grid.tolist(), "g": result.g_values.tolist(), "csv": str(path),
    }, indent=2))
    return EXIT_OK


def cmd_morozov(args, cfg) -> int:
    model = forward.load_model(args.model)
    template = _problem(args, cfg, model, read_vector(args.data))
    eta = args.eta if args.eta is not None else sweep.expected_noise_norm(model, args.tau, args.space)
    res = sweep.morozov_alpha(template, eta, args.space)
    paths = _save_solution(res.solution, model, _out(cfg), "morozov_solution")
    print(json.dumps({
        "alpha": res.alpha, "misfit": res.misfit, "target": res.target, "in_band": res.in_band,
        "monotone": res.monotone, "space": res.space, "unconverged_alphas": res.unconverged,
        "artifacts": [str(p) for p in paths],
    }, indent=2))
    return EXIT_OK


def cmd_example(args, cfg) -> int:
    given = _explicit(args)
    overrides = {}
    for key, target in (("epsilon", "epsilon"), ("alpha", "alpha"), ("s", "s"), ("rank", "rank"),
                        ("iters", "max_iters"), ("seed", "seed"), ("noise_level", "noise_level")):
        if key in given:
            overrides[target] = given[key]
    if args.morozov:
        overrides["alpha"] = "morozov"
    if args.sweep:
        overrides["s"] = "sweep"
    if args.unweighted:
        overrides["unweighted"] = True
    if args.mode != "projected":
        overrides["mode"] = args.mode
    out = Path(cfg["out_dir"]) / args.name
    run = scenarios.run_example(args.name, out_dir=out, **overrides)
    run.artifacts.append(write_vector(run.data.b, out / "data.txt"))
    print(json.dumps({**run.report.to_dict(), "artifacts": [str(p) for p in run.artifacts]}, indent=2, default=float))
    return EXIT_OK


def cmd_metrics(args, cfg) -> int:
    rep = scenarios.compute_metrics(read_vector(args.x), read_vector(args.truth), args.threshold_frac)
    print(json.dumps(rep.to_dict(), indent=2))
    return EXIT_OK


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparsesrc", description=__doc__.splitlines()[0])
    g = p.add_argument_group("global settings (override --config)")
    g.add_argument("--epsilon", type=float)
    g.add_argument("--alpha", type=float)
    g.add_argument("--s", type=_parse_s, help="box bound; 'inf' for none")
    g.add_argument("--rank", type=int, help="TSVD rank")
    g.add_argument("--iters", type=int, help="ADMM iterations")
    g.add_argument("--seed", type=int)
    g.add_argument("--noise-level", dest="noise_level", type=float)
    g.add_argument("--out-dir", dest="out_dir")
    g.add_argument("--config", help="key = value file with any of the settings above")
    g.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("build-forward", help="assemble A and its TSVD and cache them")
    c.add_argument("--source-grid", type=int, default=17)
    c.add_argument("--state-grid", type=int, default=33)
    c.add_argument("-o", "--output", default="forward.npz")
    c.add_argument("--weight-warn", type=float, default=forward.WEIGHT_WARN,
                   help="warn when some w_i falls below this")
    c.set_defaults(func=cmd_build_forward)

    def with_model(cmd, data=True):
        cmd.add_argument("--model", required=True, help="cache written by build-forward")
        if data:
            cmd.add_argument("--data", required=True, help="boundary data, one value per line")

    def with_recovery(cmd):
        cmd.add_argument("--mode", choices=admm.MODES, default="projected")
        cmd.add_argument("--unweighted", action="store_true", help="use W = I")

    c = sub.add_parser("recover", help="ADMM solve of the regularized problem")
    with_model(c)
    with_recovery(c)
    c.add_argument("--trace", help="write the per-iteration trace to this CSV name")
    c.set_defaults(func=cmd_recover)

    c = sub.add_parser("basis-pursuit", help="exact LP solve of the alpha -> 0 problem")
    with_model(c)
    c.set_defaults(func=cmd_basis_pursuit)

    c = sub.add_parser("certificate", help="search for a dual certificate for a support J")
    with_model(c, data=False)
    grp = c.add_mutually_exclusive_group(required=True)
    grp.add_argument("--support", help="0-based indices, comma or space separated")
    grp.add_argument("--support-from", help="vector file; J = entries above --support-threshold")
    c.add_argument("--support-threshold", type=float, default=0.0)
    c.add_argument("--delta", type=float, default=certificate.DEFAULT_DELTA)
    c.add_argument("--optimize", action="store_true", help="also minimize the slacks")
    c.add_argument("--max-margin", action="store_true", help="maximize the margin delta instead")
    c.set_defaults(func=cmd_certificate)

    c = sub.add_parser("sweep", help="g(s) sweep and L-curve vertex")
    with_model(c)
    with_recovery(c)
    c.add_argument("--grid", help="start:stop:num (default 26 points on [0.1, 2] * max|A^+ b|)")
    c.add_argument("--cold", action="store_true", help="disable warm starts")
    c.add_argument("--vertex-method", choices=("peak", "max"), default="peak")
    c.set_defaults(func=cmd_sweep)

    c = sub.add_parser("morozov", help="discrepancy-principle choice of alpha")
    with_model(c)
    with_recovery(c)
    grp = c.add_mutually_exclusive_group(required=True)
    grp.add_argument("--tau", type=float, help="per-entry noise standard deviation")
    grp.add_argument("--eta", type=float, help="target misfit norm")
    c.add_argument("--space", choices=sweep.MOROZOV_SPACES, default="projected")
    c.set_defaults(func=cmd_morozov)

    c = sub.add_parser("example", help="run a bundled scenario or a scenario JSON file")
    c.add_argument("name", help=f"one of {', '.join(scenarios.EXAMPLES)} or a .json path")
    c.add_argument("--morozov", action="store_true", help="select alpha by the discrepancy principle")
    c.add_argument("--sweep", action="store_true", help="select s from the L-curve vertex")
    c.add_argument("--unweighted", action="store_true")
    c.add_argument("--mode", choices=admm.MODES, default="projected")
    c.set_defaults(func=cmd_example)

    c = sub.add_parser("metrics", help="support precision/recall and errors")
    c.add_argument("--x", required=True)
    c.add_argument("--truth", required=True)
    c.add_argument("--threshold-frac", type=float, default=0.1)
    c.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _settings(args)
        return args.func(args, cfg)
    except (Infeasible, forward.SingularOperatorError) as err:
        print(f"sparsesrc: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except Exception as err:  # noqa: BLE001 - report and map to exit status 1
        if args.verbose:
            raise
        print(f"sparsesrc: error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
