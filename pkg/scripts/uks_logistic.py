"""UKS posterior of the logistic model against a random-walk Metropolis reference."""

import argparse

import numpy as np

from kalinv.gaussian import GaussianState
from kalinv.problems.linear import logistic
from kalinv.sampler import BayesianSpec, run_uks, rw_metropolis


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h", type=float, default=5e-5)
    ap.add_argument("--t-end", type=float, default=10.0)
    ap.add_argument("--samples", type=int, default=5_000_000)
    ap.add_argument("--burn-in", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    spec = BayesianSpec.from_problem(logistic())
    uks = run_uks(spec, GaussianState(spec.r0, spec.prior_cov), args.h, args.t_end).final
    mc = rw_metropolis(spec, args.samples, 1.0, args.burn_in, seed=args.seed)
    np.set_printoptions(precision=4, suppress=True)
    print("UKS   mean", uks.mean, "\n      cov\n", uks.cov)
    print(f"MCMC  mean {mc.mean}  (acceptance {mc.acceptance_rate:.3f})\n      cov\n", mc.cov)


if __name__ == "__main__":
    main()
