"""Fit each critic on the 5-state chain with a frozen policy and compare to analytic Q."""

import argparse

import numpy as np

from fastdsac.experiments import run_chain_oracle


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--updates", type=int, default=10_000)
    p.add_argument("--atoms", type=int, default=5, help="C51 atom count")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    np.set_printoptions(precision=4, suppress=True)
    for kind in ("continuous", "c51"):
        r = run_chain_oracle(kind, args.updates, args.atoms, args.seed)
        print(f"{kind}: q={r.q} analytic={r.q_analytic}")
        print(f"  max_rel_error={r.max_rel_error:.4f} max_abs_gap={r.max_abs_gap:.4f} sigma={r.sigma}")
        if r.atom_spacing is not None:
            print(f"  atom_spacing={r.atom_spacing:.4f} quarter={r.atom_spacing / 4:.4f}")


if __name__ == "__main__":
    main()
