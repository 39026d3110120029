"""Harmonic tables of the lattice fixtures.  For the fair +-1 walk the exact
answer is V(y) = ceil(y) for y > 0, 1/2 on (-1, 0] and 0 below; the table
reproduces it on every node, including the continuation above the grid.

    python scripts/lattice_tables.py
"""

import numpy as np

from condwalk.fixtures import fixture
from condwalk.harmonic import compute_harmonic, harmonicity_residual


def main():
    A = fixture("A")
    V = compute_harmonic(A)
    ys = np.array([-1.0, -0.5, 0.0, 0.25, 1.0, 1.01, 2.5, 10.0, 10.5, V.y_max + 3.3, 1000.4])
    want = np.where(ys > 0, np.ceil(ys - 1e-12), np.where(ys > -1, 0.5, 0.0))
    got = V.eval_many(np.zeros(len(ys), dtype=int), ys)
    print(f"CHAIN-A: period {V.period} nodes, tail defect {V.tail_defect:.1e}")
    for y, g, w in zip(ys, got, want):
        print(f"  y={y:9.3f}  V={g:12.6f}  ceil-rule={w:10.3f}")
    C = fixture("C")
    T = compute_harmonic(C)
    print(f"CHAIN-C: period {T.period} nodes, kappa {T.kappa:.6f}, "
          f"periodic part range {np.ptp(T.kappa_periodic):.4f}, "
          f"3-step residual {harmonicity_residual(T, C, 3):.1e}")


if __name__ == "__main__":
    main()
