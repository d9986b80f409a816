"""Effect of the modulation temperature on how sharply weights concentrate.

Trains one modulated reacher agent, then replays a deterministic episode
with the weights recomputed at several temperatures.
"""

import argparse

import numpy as np

from fastdsac.envs import relevant_dim_report
from fastdsac.experiments import EVAL_SEED, _train, desk_config, make_trainer
from fastdsac.trainer import record_weights


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--env-steps", type=int, default=20_000)
    p.add_argument("--taus", type=float, nargs="+", default=[0.1, 0.3, 1.0, 3.0, 10.0, 1e6])
    args = p.parse_args()
    tr = make_trainer(desk_config("redundant_reacher", "dem", args.seed))
    _train(tr, args.env_steps)
    steps = tr.env_spec.max_episode_steps
    for tau in args.taus:
        trace = record_weights(tr.actor, tr.make_eval_env(EVAL_SEED), steps, tau)
        rep = relevant_dim_report(trace, tr.env_spec)
        print(f"tau={tau:g}: ratio={rep.ratio:.3f} w_min={trace.min():.4f} "
              f"w_max={trace.max():.4f} row_mean_err={np.abs(trace.mean(1) - 1).max():.1e}")


if __name__ == "__main__":
    main()
