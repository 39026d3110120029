"""The five reference chains used throughout tests and scripts.

A  iid fair coin, f = +-1 (lattice, span 2)
B  iid uniform on 3 states, irrational f with Pf = 0 (non-lattice)
C  2-state chain, f = (3, -4) (lattice, span 7, shift -4)
D  4-state sparse chain, f a coboundary (sigma^2 = 0)
E  3-state doubly stochastic, non-reversible (non-lattice)
"""

from __future__ import annotations

import math

from .chain import ChainSpec, from_matrix

SQRT2 = math.sqrt(2.0)


def chain_a() -> ChainSpec:
    return from_matrix([[0.5, 0.5], [0.5, 0.5]], [1.0, -1.0])


def chain_b() -> ChainSpec:
    third = 1.0 / 3.0
    return from_matrix([[third] * 3] * 3, [1.0, SQRT2, -1.0 - SQRT2])


def chain_c() -> ChainSpec:
    return from_matrix([[0.7, 0.3], [0.4, 0.6]], [3.0, -4.0])


def chain_d() -> ChainSpec:
    P = [
        [0.0, 1.0, 0.0, 0.0],
        [0.2, 0.0, 0.4, 0.4],
        [1.0, 0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0],
    ]
    return from_matrix(P, [1.0, -1.0, 0.0, 0.0])


def chain_e() -> ChainSpec:
    P = [[0.2, 0.5, 0.3], [0.3, 0.2, 0.5], [0.5, 0.3, 0.2]]
    return from_matrix(P, [1.0, SQRT2, -1.0 - SQRT2])


FIXTURES = {
    "A": chain_a,
    "B": chain_b,
    "C": chain_c,
    "D": chain_d,
    "E": chain_e,
}


def fixture(name: str) -> ChainSpec:
    return FIXTURES[name.upper()]()
