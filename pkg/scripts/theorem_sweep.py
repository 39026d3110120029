"""Run every limit-theorem check on one chain and print a summary table.

    python scripts/theorem_sweep.py --chain B --n 512,1024,2048,4096,8192
"""

import argparse
import json
import time

import numpy as np

from condwalk.dist import BoundaryFunctional
from condwalk.fixtures import fixture
from condwalk.verify import TheoremInputs, build_tables, run_verification


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--chain", default="B")
    ap.add_argument("--x", default="1")
    ap.add_argument("--y", type=float, default=1.0)
    ap.add_argument("--n", default="512,1024,2048,4096,8192")
    ap.add_argument("--h", type=float)
    ap.add_argument("--json", help="write all reports here")
    args = ap.parse_args()

    chain = fixture(args.chain)
    n_list = [int(v) for v in args.n.split(",")]
    t0 = time.perf_counter()
    tables = build_tables(chain, dy=args.h)
    print(f"tables: dy={tables[0].dy} in {time.perf_counter() - t0:.1f}s")

    g = BoundaryFunctional(1, 1, lambda pre, suf, z: np.maximum(0.0, 1.0 - z) ** 2)
    runs = [
        ("SURVIVAL", TheoremInputs(x=args.x, y=args.y)),
        ("RAYLEIGH", TheoremInputs(x=args.x, y=args.y)),
        ("STONE", TheoremInputs(x=args.x, y=0.0, z=0.0, a=0.5)),
        ("LLTC", TheoremInputs(x=args.x, y=args.y, z=0.5, a=0.5)),
        ("COROL", TheoremInputs(x=args.x, y=args.y, z=0.5, a=0.5)),
        ("GNLLT", TheoremInputs(x=args.x, y=args.y, a=0.5, t=1.0)),
        ("CAPEBIS", TheoremInputs(x=args.x, y=args.y)),
        ("CAPE", TheoremInputs(x=args.x, y=args.y, g=g)),
    ]
    reports = []
    print(f"{'theorem':9s} {'n':>6s} {'estimate':>13s} {'limit':>13s} {'ratio':>9s} verdict")
    for name, inp in runs:
        t0 = time.perf_counter()
        rep = run_verification(name, chain, inp, n_list, h=args.h, tables=tables)
        reports.append(rep.to_dict())
        last = -1
        ratio = rep.ratios[last] if rep.ratios else float("nan")
        print(f"{name:9s} {rep.n_list[last]:6d} {rep.estimates[last]:13.6g} "
              f"{rep.limit_values[last]:13.6g} {ratio:9.5f} {rep.verdict} "
              f"({time.perf_counter() - t0:.1f}s)")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(reports, fh, indent=1, default=float)


if __name__ == "__main__":
    main()
