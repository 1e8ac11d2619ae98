"""UKI against EKI on the 10x10 Hilbert system: error |m_n - 1| per iteration."""

import argparse

import numpy as np

from kalinv.engines import Ensemble, HyperParams, initial_state, run
from kalinv.problems.linear import hilbert


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-theta", type=int, default=10)
    ap.add_argument("--iters", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    prob = hilbert(args.n_theta)
    hp = HyperParams.for_problem(prob, alpha=1.0)
    cols = {"uki": run("uki", prob, hp, initial_state(prob, hp), args.iters).column("param_error")}
    for J in (2 * args.n_theta + 1, 100 * args.n_theta + 1):
        ens = Ensemble.sample(initial_state(prob, hp), J, seed=args.seed)
        cols[f"eki J={J}"] = run("eki", prob, hp, ens, args.iters, rng=args.seed).column("param_error")
    print("   n " + "".join(f"{k:>14s}" for k in cols))
    for n in [1, 2, 5, 10, 20, 30, 40, 50]:
        if n <= args.iters:
            print(f"{n:4d} " + "".join(f"{v[n - 1]:14.4f}" for v in cols.values()))
    print("minimum at n = " + ", ".join(f"{k}: {int(np.argmin(v)) + 1}" for k, v in cols.items()))


if __name__ == "__main__":
    main()
