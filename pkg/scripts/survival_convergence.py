"""sqrt(n) P(tau_y > n) against its limit over doubling n, at two bin widths.

    python scripts/survival_convergence.py --chain B --x 1 --y 1 --n-max 8192
"""

import argparse
import math

from condwalk.dist import default_h, survival_curve
from condwalk.fixtures import fixture
from condwalk.verify import TheoremInputs, build_tables, limit_constant


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--chain", default="B")
    ap.add_argument("--x", default="1")
    ap.add_argument("--y", type=float, default=1.0)
    ap.add_argument("--n-max", type=int, default=8192)
    args = ap.parse_args()

    chain = fixture(args.chain)
    h0 = default_h(chain)
    ns = [2 ** k for k in range(6, int(math.log2(args.n_max)) + 1)]
    cols = {}
    for h in (h0, h0 / 2):
        V, Vs = build_tables(chain, dy=h)
        lim = limit_constant("SURVIVAL", chain, V, Vs, TheoremInputs(x=args.x, y=args.y))
        curve = survival_curve(chain, args.x, args.y, ns[-1], h=h)
        cols[h] = [math.sqrt(n) * curve[n] / lim for n in ns]
        print(f"h={h:g}: limit {lim:.8f}, V(x, y) = {V(args.x, args.y):.8f}")
    print(f"{'n':>6s} " + " ".join(f"{'ratio h=' + format(h, 'g'):>16s}" for h in cols))
    for i, n in enumerate(ns):
        print(f"{n:6d} " + " ".join(f"{cols[h][i]:16.6f}" for h in cols))


if __name__ == "__main__":
    main()
