"""Modulated vs standard actor on the redundant reacher: weight ratio and final returns."""

import argparse

import numpy as np

from fastdsac.experiments import run_entropy_sink


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--env-steps", type=int, default=50_000)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--quiet", action="store_true")
    args = p.parse_args()
    log = None if args.quiet else print
    np.set_printoptions(precision=3, suppress=True)
    wins = 0
    for seed in args.seeds:
        r = run_entropy_sink(seed, args.env_steps, tau=args.tau, log=log)
        wins += r.passed
        print(f"seed {seed}: ratio={r.ratio:.3f} eval_dem={r.eval_dem:.4f} "
              f"eval_standard={r.eval_standard:.4f} ({r.seconds:.0f}s)")
        print(f"  per-dim weights {r.per_dim}")
    print(f"{wins}/{len(args.seeds)} seeds with ratio >= 1.5 and dem >= standard")


if __name__ == "__main__":
    main()
