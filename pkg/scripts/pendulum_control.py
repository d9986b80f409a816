"""Pendulum swing-up with the modulated and the standard actor."""

import argparse

from fastdsac.experiments import run_control


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--actors", nargs="+", default=["standard", "dem"])
    p.add_argument("--env-steps", type=int, default=100_000)
    p.add_argument("--quiet", action="store_true")
    args = p.parse_args()
    log = None if args.quiet else print
    for kind in args.actors:
        for seed in args.seeds:
            r = run_control(kind, seed, args.env_steps, log=log)
            print(f"{kind} seed {seed}: eval_return={r.eval_return:.1f} "
                  f"-logpi running mean={r.entropy_running_mean:.3f} ({r.seconds:.0f}s)")


if __name__ == "__main__":
    main()
