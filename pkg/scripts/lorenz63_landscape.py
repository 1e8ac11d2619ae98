"""Raw and Gaussian-averaged Lorenz63 map x3-bar(r) with their gradients; writes CSV."""

import argparse

from kalinv.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--r-min", type=float, default=20.0)
    ap.add_argument("--r-max", type=float, default=30.0)
    ap.add_argument("--sigma-r", type=float, default=0.22**0.5)
    ap.add_argument("--n-points", type=int, default=101)
    ap.add_argument("--out", default="lorenz63_landscape.csv")
    a = ap.parse_args()
    argv = ["landscape", "--problem", "lorenz63:one_param", "--r-min", str(a.r_min), "--r-max", str(a.r_max),
            "--sigma-r", str(a.sigma_r), "--n-points", str(a.n_points), "--out", a.out]
    raise SystemExit(cli_main(argv))


if __name__ == "__main__":
    main()
