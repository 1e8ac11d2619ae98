"""UKI on the 2-parameter linear systems: parameter error and covariance per iteration."""

import argparse

import numpy as np

from kalinv.engines import HyperParams, initial_state, uki_step
from kalinv.errors import NoConvergence
from kalinv.problems.linear import linear2
from kalinv.theory import LinearProblemSpec, solve_steady_covariance


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--iters", type=int, default=30)
    args = ap.parse_args()
    print("case       n   |m_n - ref|  |C_n - C_inf|     |C_n|")
    for variant, alpha in [("NS", 1.0), ("OD", 1.0), ("UD", 1.0), ("UD", 0.5)]:
        prob = linear2(variant)
        hp = HyperParams.for_problem(prob, alpha=alpha)
        try:
            c_inf = solve_steady_covariance(LinearProblemSpec.from_problem(prob, hp)).c_inf
        except NoConvergence:
            c_inf = None  # UD with alpha = 1: the covariance grows without bound
        state = initial_state(prob, hp)
        for n in range(1, args.iters + 1):
            state = uki_step(state, prob, hp)
            if n % 5 and n != 1:
                continue
            err = np.linalg.norm(state.mean - prob.theta_ref)
            dc = "-" if c_inf is None else f"{np.linalg.norm(state.cov - c_inf):.3e}"
            print(f"{variant} a={alpha:<4} {n:3d} {err:12.3e} {dc:>13s} {np.linalg.norm(state.cov):10.3f}")
        print(f"   final mean {np.round(state.mean, 4)}")


if __name__ == "__main__":
    main()
