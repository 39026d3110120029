"""Time reversal of a chain with respect to its stationary law, and an
exact path-enumeration check of the reversal identity."""

from __future__ import annotations

import itertools
import math
from typing import Callable, Sequence

import numpy as np

from .chain import ChainSpec, stationary_distribution
from .errors import BudgetExceeded

PathFunctional = Callable[[tuple], float]

ENUM_BUDGET = 10_000_000


def dual_chain(chain: ChainSpec) -> ChainSpec:
    """P*(x, x*) = nu(x*) P(x*, x) / nu(x), carrying the observable -f."""
    nu = stationary_distribution(chain).nu
    Pstar = (chain.transition.T * nu[None, :]) / nu[:, None]
    Pstar = Pstar / Pstar.sum(axis=1, keepdims=True)
    return ChainSpec(chain.states, Pstar, -chain.f)


def _path_weights(P: np.ndarray, init: np.ndarray, length: int) -> tuple[np.ndarray, np.ndarray]:
    """All index paths of ``length`` states (lexicographic) and their probabilities."""
    d = P.shape[0]
    paths = np.array(list(itertools.product(range(d), repeat=length)), dtype=np.intp)
    w = init[paths[:, 0]].copy()
    for k in range(1, length):
        w *= P[paths[:, k - 1], paths[:, k]]
    return paths, w


def verify_duality(chain: ChainSpec, n: int, F: PathFunctional,
                   m: Sequence[float] | None = None,
                   budget: int = ENUM_BUDGET) -> tuple[float, float]:
    """Both sides of E_m F(X_1..X_n) = E*_nu[F(X*_n..X*_1) m(X*_{n+1}) / nu(X*_{n+1})].

    Each side is a plain sum over every path of the relevant chain.
    """
    d = chain.d
    if d ** (n + 2) > budget:
        raise BudgetExceeded(f"{d}^{n + 2} path terms exceed budget {budget}")
    nu = stationary_distribution(chain).nu
    m = nu if m is None else np.asarray(m, dtype=float)
    Pstar = dual_chain(chain).transition

    paths, w = _path_weights(chain.transition, m, n + 1)
    lhs = math.fsum(float(wi) * F(tuple(p[1:].tolist())) for p, wi in zip(paths, w) if wi)

    paths, w = _path_weights(Pstar, nu, n + 2)
    terms = []
    for p, wi in zip(paths, w):
        if not wi:
            continue
        last = p[n + 1]
        rev = tuple(p[n:0:-1].tolist())
        terms.append(float(wi) * F(rev) * m[last] / nu[last])
    rhs = math.fsum(terms)
    return lhs, rhs


def adjoint_gap(chain: ChainSpec, g, h, n: int) -> float:
    """|nu(g P*^n h) - nu(h P^n g)|."""
    nu = stationary_distribution(chain).nu
    Ps = np.linalg.matrix_power(dual_chain(chain).transition, n)
    P = np.linalg.matrix_power(chain.transition, n)
    return abs(float(nu @ (g * (Ps @ h)) - nu @ (h * (P @ g))))


def functional_battery(chain: ChainSpec, n: int, seed: int = 0) -> dict[str, PathFunctional]:
    """Twenty path functionals of n states, mixing indicators, walk sums and
    random tables; used by the CLI oracle and the acceptance suite."""
    d = chain.d
    f = chain.f
    rng = np.random.default_rng(seed)
    table = rng.random(d ** min(n, 3))
    weights = rng.normal(size=(n, d))
    g1 = rng.random(d)
    target = tuple(int(i) for i in rng.integers(0, d, size=n))

    def walk(p):
        return np.cumsum(f[list(p)])

    out: dict[str, PathFunctional] = {
        "one": lambda p: 1.0,
        "first_state_0": lambda p: float(p[0] == 0),
        "last_state_0": lambda p: float(p[-1] == 0),
        "fixed_path": lambda p: float(p == target),
        "f_last": lambda p: float(f[p[-1]]),
        "f_first": lambda p: float(f[p[0]]),
        "sum_f": lambda p: float(walk(p)[-1]),
        "sum_f_sq": lambda p: float(walk(p)[-1] ** 2),
        "walk_positive": lambda p: float(np.all(walk(p) > 0)),
        "walk_end_positive": lambda p: float(walk(p)[-1] > 0),
        "max_walk": lambda p: float(np.max(walk(p))),
        "exp_sum": lambda p: float(np.exp(0.3 * walk(p)[-1])),
        "cos_sum": lambda p: float(np.cos(1.7 * walk(p)[-1])),
        "pair_01": lambda p: float(p[0] == 0 and p[-1] == d - 1),
        "visits_0": lambda p: float(sum(1 for s in p if s == 0)),
        "weighted": lambda p: float(sum(weights[k, s] for k, s in enumerate(p))),
        "product_g": lambda p: float(np.prod(g1[list(p)])),
        "table_head": lambda p: float(table[int(np.ravel_multi_index(p[:min(n, 3)], (d,) * min(n, 3)))]),
        "increasing": lambda p: float(all(a <= b for a, b in zip(p, p[1:]))),
        "time_weighted_f": lambda p: float(sum((k + 1) * f[s] for k, s in enumerate(p))),
    }
    return out
