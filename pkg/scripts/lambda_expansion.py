"""Residual of the quadratic expansion of the leading eigenvalue, divided by
t^3, over a fine t ladder.  Shows where the cubic regime starts per chain.

    python scripts/lambda_expansion.py --chains B,C,E
"""

import argparse

import numpy as np

from condwalk.fixtures import fixture
from condwalk.spectral import cubic_ratios, lambda_expansion_check


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--chains", default="B,C,E")
    ap.add_argument("--steps", type=int, default=10)
    args = ap.parse_args()

    ts = [0.2 * 2.0 ** -j for j in range(args.steps)]
    print("t       " + " ".join(f"{t:9.5f}" for t in ts))
    for name in args.chains.split(","):
        rows = lambda_expansion_check(fixture(name), ts)
        q = cubic_ratios(rows)
        print(f"{name:7s} " + " ".join(f"{v:9.4f}" for v in q))
        print(f"{'':7s} residual at t=0.01: {lambda_expansion_check(fixture(name), [0.01])[0][2]:.3e}, "
              f"median ratio {np.median(q):.4f}")


if __name__ == "__main__":
    main()
