"""g(s) curves for the constant-strength scenarios, with the vertex pick.

    python3 scripts/strength_sweep.py [--example ex2] [--grid 0.4:1.4:11] [--cold]
"""
import argparse
import dataclasses
from pathlib import Path

import numpy as np

from sparsesrc import admm, scenarios, sweep


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--example", default="ex2")
    ap.add_argument("--grid", help="start:stop:num; defaults to the scenario's sweep block")
    ap.add_argument("--alpha", type=float, nargs="*", default=[1e-4])
    ap.add_argument("--cold", action="store_true")
    ap.add_argument("--out", default="results/sweeps")
    args = ap.parse_args()

    base = scenarios.run_example(args.example, s="inf", max_iters=1)  # data and model only
    cfg = scenarios.load_scenario(args.example)
    if args.grid:
        a, b, n = args.grid.split(":")
        grid = np.linspace(float(a), float(b), int(n))
    else:
        g = cfg.get("sweep", {"start": 0.4, "stop": 1.4, "num": 11})
        grid = np.linspace(g["start"], g["stop"], g["num"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    template = admm.RecoveryProblem(base.model, base.data.b, alpha=1.0)
    for alpha in args.alpha:
        res = sweep.sweep_strength(dataclasses.replace(template, alpha=alpha), grid, warm_start=not args.cold)
        for method in ("peak", "max"):
            v = sweep.detect_vertex(res, method)
            print(f"{args.example} alpha={alpha:g} {method:4s}: vertex s={v.s:g} confident={v.confident}")
        path = sweep.write_sweep_csv(res, out / f"{args.example}_alpha{alpha:g}.csv")
        print("  non-increasing:", res.is_non_increasing(), "->", path)
        for s, g in zip(res.s_grid, res.g_values):
            print(f"  s={s:6.3f}  g={g:.6f}")


if __name__ == "__main__":
    main()
