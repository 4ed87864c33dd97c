"""Discrepancy-principle alpha for the noisy scenarios, next to the reference values.

    python3 scripts/noise_study.py [--seeds 0 1 2] [--space projected|data]
"""
import argparse

from sparsesrc import scenarios

REFERENCE_ALPHA = {("ex4", 0.01): 0.01, ("ex4", 0.05): 0.15, ("ex5", 0.01): 0.05, ("ex5", 0.05): 0.2}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="*", default=[0])
    ap.add_argument("--space", choices=("projected", "data"), default="projected")
    ap.add_argument("--iters", type=int, default=5000)
    args = ap.parse_args()
    for (name, level), ref in REFERENCE_ALPHA.items():
        for seed in args.seeds:
            run = scenarios.run_example(name, noise_level=level, seed=seed, alpha="morozov",
                                        morozov_space=args.space, max_iters=args.iters)
            mz = run.morozov
            print(f"{name} {level:.0%} seed={seed}: alpha={mz.alpha:.3g} (reference {ref:g}, ratio "
                  f"{mz.alpha / ref:.2f}) in_band={mz.in_band} precision={run.report.support_precision:.3f}")


if __name__ == "__main__":
    main()
