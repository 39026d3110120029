"""Standard error of the plain and V-transformed estimators of P(tau_y > n)
at equal sample size, against the binned DP value.

    python scripts/transform_variance.py --N 200000 --seed 1
"""

import argparse
import time

from condwalk.dist import survival_curve
from condwalk.fixtures import fixture
from condwalk.mc import constant_phi, h_transform_estimate, simulate_paths
from condwalk.verify import build_tables


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--chain", default="B")
    ap.add_argument("--x", default="1")
    ap.add_argument("--y", type=float, default=1.0)
    ap.add_argument("--n", default="16,64,256,1024")
    ap.add_argument("--N", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    chain = fixture(args.chain)
    V, _ = build_tables(chain)
    ns = [int(v) for v in args.n.split(",")]
    dp = survival_curve(chain, args.x, args.y, max(ns), h=V.dy)
    print(f"{'n':>5s} {'DP':>10s} {'plain':>10s} {'se':>9s} {'transform':>10s} {'se':>9s} {'se ratio':>8s} {'s':>5s}")
    for n in ns:
        t0 = time.perf_counter()
        p = simulate_paths(chain, args.x, args.y, n, args.N, args.seed, keep_paths=False).survival
        q = h_transform_estimate(chain, V, args.x, args.y, n, constant_phi, args.N, args.seed)
        print(f"{n:5d} {dp[n]:10.6f} {p.mean:10.6f} {p.std_err:9.2e} {q.mean:10.6f} {q.std_err:9.2e} "
              f"{p.std_err / q.std_err:8.1f} {time.perf_counter() - t0:5.1f}")


if __name__ == "__main__":
    main()
