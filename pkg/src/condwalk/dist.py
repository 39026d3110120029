"""Binned forward evolution of the joint law of (X_n, y + S_n), optionally
killed at the first time the walk is <= 0, plus a brute-force path oracle.

Bins have width h and centres at integer multiples of h, so 0 is a centre.
A step by f(x') moves each bin's mass to the real point centre + f(x') and
splits it between the two neighbouring centres in proportion to distance;
the first moment is preserved exactly.  In killed mode every bin whose
centre is <= 0 is emptied after each step.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .chain import ChainSpec, stationary_distribution
from .errors import BinUnderflow, BudgetExceeded

KILLED = "killed"
FREE = "free"

STEP_BUDGET = 50_000_000_000   # bin-updates per evolution
ENUM_BUDGET = 10_000_000
TRUNCATION_TOL = 1e-10


@dataclass
class BinnedLaw:
    h: float
    k_lo: int                 # bin j has centre (k_lo + j) * h
    weights: np.ndarray       # (d, B)
    n: int
    mode: str
    killed_mass: float = 0.0
    truncated_mass: float = 0.0

    @property
    def alive_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def lo(self) -> float:
        return (self.k_lo - 0.5) * self.h

    @property
    def centers(self) -> np.ndarray:
        return (self.k_lo + np.arange(self.weights.shape[-1])) * self.h

    def row(self, x: int) -> np.ndarray:
        return self.weights[x]

    def marginal(self) -> np.ndarray:
        return self.weights.sum(axis=0)

    def cdf(self, u, psi=None) -> np.ndarray:
        """Mass (optionally psi-weighted by state) of walk values <= u, with the
        bin mass spread uniformly over each bin."""
        w = self.marginal() if psi is None else np.asarray(psi, dtype=float) @ self.weights
        cum = np.concatenate([[0.0], np.cumsum(w)])
        pos = (np.asarray(u, dtype=float) - self.lo) / self.h
        j = np.clip(np.floor(pos).astype(np.int64), 0, len(w))
        frac = np.clip(pos - j, 0.0, 1.0)
        part = np.where(j < len(w), w[np.minimum(j, len(w) - 1)] * frac, 0.0)
        return np.where(pos <= 0, 0.0, cum[j] + part)

    def to_rows(self, states) -> list[tuple[str, float, float]]:
        c = self.centers
        out = []
        for i, s in enumerate(states):
            nz = np.flatnonzero(self.weights[i])
            out += [(s, float(c[j]), float(self.weights[i, j])) for j in nz]
        return out


@dataclass(frozen=True)
class BoundaryFunctional:
    """g(prefix states, suffix states, z) >= 0 with (1+z)^(2+eps) g bounded.

    ``g`` receives two tuples of state indices (lengths l and m) and a numpy
    array of walk values, and returns an array of the same shape.
    """
    l: int
    m: int
    g: Callable[[tuple, tuple, np.ndarray], np.ndarray]
    eps: float = 1.0

    def attest_decay(self, d: int, z_max: float = 1e4) -> float:
        z = np.geomspace(1e-3, z_max, 400)
        worst = 0.0
        for pre in itertools.product(range(d), repeat=self.l):
            for suf in itertools.product(range(d), repeat=self.m):
                worst = max(worst, float(np.max(self.g(pre, suf, z) * (1 + z) ** (2 + self.eps))))
        return worst


@dataclass
class _Walker:
    """Mutable evolution state for a batch of laws on a common grid."""
    chain: ChainSpec
    h: float
    mode: str
    k_lo: int
    W: np.ndarray            # (nb, d, B)
    y_ref: float
    drift: float
    spread: float
    n: int = 0
    killed: np.ndarray = field(default=None)
    truncated: np.ndarray = field(default=None)
    ja: int = 0
    jb: int = 0

    def __post_init__(self):
        nb = self.W.shape[0]
        self.killed = np.zeros(nb)
        self.truncated = np.zeros(nb)
        f = self.chain.f / self.h
        self._k = np.floor(f).astype(np.int64)
        self._fr = f - self._k
        self._PT = np.ascontiguousarray(self.chain.transition.T)
        nz = np.flatnonzero(self.W.sum(axis=(0, 1)))
        self.ja, self.jb = int(nz[0]), int(nz[-1]) + 1
        self._j0 = -self.k_lo          # index of the centre at 0

    def allowed(self, n: int) -> tuple[int, int]:
        fmax = float(np.max(np.abs(self.chain.f)))
        # splitting can push mass one bin further out per step
        R = n * (fmax + self.h)
        if self.spread > 0:
            R = min(R, 8.0 * self.spread * math.sqrt(n) + fmax)
        mid = self.y_ref + n * self.drift
        lo = int(math.floor((mid - R) / self.h)) - 1 - self.k_lo
        hi = int(math.ceil((mid + R) / self.h)) + 2 - self.k_lo
        B = self.W.shape[-1]
        lo = max(lo, 0)
        if self.mode == KILLED:
            lo = max(lo, self._j0 + 1)
        return lo, min(hi, B)

    def step(self):
        W = self.W
        ja, jb = self.ja, self.jb
        U = np.matmul(self._PT, W[:, :, ja:jb])
        kmin = int(self._k.min())
        kmax = int(self._k.max()) + 1
        na, nbnd = ja + kmin, jb + kmax
        B = W.shape[-1]
        if na < 0 or nbnd > B:
            raise BinUnderflow(f"walk range left the allocated grid at step {self.n + 1}")
        W[:, :, na:nbnd] = 0.0
        # clear the old window as well
        W[:, :, ja:jb] = 0.0
        for x in range(W.shape[1]):
            k, fr = int(self._k[x]), float(self._fr[x])
            u = U[:, x, :]
            if fr == 0.0:
                W[:, x, ja + k:jb + k] += u
            else:
                W[:, x, ja + k:jb + k] += (1.0 - fr) * u
                W[:, x, ja + k + 1:jb + k + 1] += fr * u
        lo, hi = self.allowed(self.n + 1)
        if self.mode == KILLED and na <= self._j0:
            dead = W[:, :, na:self._j0 + 1]
            self.killed += dead.sum(axis=(1, 2))
            dead[...] = 0.0
        if na < lo:
            seg = W[:, :, na:lo]
            self.truncated += seg.sum(axis=(1, 2))
            seg[...] = 0.0
        if nbnd > hi:
            seg = W[:, :, hi:nbnd]
            self.truncated += seg.sum(axis=(1, 2))
            seg[...] = 0.0
        self.ja, self.jb = max(na, lo), max(min(nbnd, hi), max(na, lo) + 1)
        self.n += 1
        if float(self.truncated.max()) > TRUNCATION_TOL:
            raise BinUnderflow(f"{self.truncated.max():.2e} mass left the tracked range")

    def law(self, i: int = 0) -> BinnedLaw:
        return BinnedLaw(self.h, self.k_lo, self.W[i].copy(), self.n, self.mode,
                         float(self.killed[i]), float(self.truncated[i]))


def _walk_scale(chain: ChainSpec) -> tuple[float, float]:
    """(drift, sigma) for sizing the grid; sigma = 0 for degenerate chains."""
    from .spectral import poisson_solution

    nu = stationary_distribution(chain).nu
    drift = float(nu @ chain.f)
    c = chain.with_f(chain.f - drift)
    theta = poisson_solution(c, nu)
    s2 = float(nu @ (c.f * c.f) + 2 * nu @ (c.f * (chain.transition @ theta)))
    return drift, math.sqrt(max(s2, 0.0)) if s2 > 1e-10 else 0.0


def default_h(chain: ChainSpec) -> float:
    _, sigma = _walk_scale(chain)
    return 0.01 * min(1.0, sigma) if sigma > 0 else 0.01


def _make_walker(chain: ChainSpec, starts: Sequence[tuple[int, float, float]], n: int,
                 h: float, mode: str, budget: int) -> _Walker:
    """``starts`` is a list of (state, y, weight), one batch entry each."""
    if h <= 0:
        raise ValueError("bin width must be positive")
    if mode not in (KILLED, FREE):
        raise ValueError(f"mode must be {KILLED!r} or {FREE!r}")
    drift, sigma = _walk_scale(chain)
    fmax = float(np.max(np.abs(chain.f)))
    ys = [y for _, y, _ in starts]
    R = n * (fmax + h)
    if sigma > 0:
        R = min(R, 8.0 * sigma * math.sqrt(max(n, 1)) + fmax)
    top = max(ys) + max(n * drift, 0.0) + R + 4 * fmax + 4 * h
    bottom = min(ys) + min(n * drift, 0.0) - R - 4 * fmax - 4 * h
    if mode == KILLED:
        bottom = max(bottom, -2.0 * fmax - 4 * h)
        bottom = min(bottom, min(ys) - 2 * h)
    k_lo = int(math.floor(bottom / h))
    B = int(math.ceil(top / h)) - k_lo + 1
    if n * chain.d * B * len(starts) > budget:
        raise BudgetExceeded(f"{n} steps x {chain.d} states x {B} bins x {len(starts)} exceeds {budget}")
    W = np.zeros((len(starts), chain.d, B))
    for i, (x, y, wt) in enumerate(starts):
        u = y / h - k_lo
        j = int(math.floor(u))
        fr = u - j
        W[i, x, j] += wt * (1.0 - fr)
        if fr > 0:
            W[i, x, j + 1] += wt * fr
    return _Walker(chain, h, mode, k_lo, W, float(np.mean(ys)), drift, sigma)


def evolve_binned(chain: ChainSpec, x0, y: float, n: int, h: float | None = None,
                  mode: str = KILLED, budget: int = STEP_BUDGET,
                  snapshots: Sequence[int] | None = None):
    """Law of (X_n, y + S_n) (on {tau_y > n} in killed mode).

    With ``snapshots`` a dict {k: BinnedLaw} is returned for every requested
    k <= n instead of the single final law.
    """
    h = default_h(chain) if h is None else h
    x = chain.index(x0)
    wk = _make_walker(chain, [(x, float(y), 1.0)], n, h, mode, budget)
    want = set(snapshots or [])
    out = {}
    if 0 in want:
        out[0] = wk.law()
    for _ in range(n):
        wk.step()
        if wk.n in want:
            out[wk.n] = wk.law()
    return out if snapshots is not None else wk.law()


def survival_curve(chain: ChainSpec, x0, y: float, n_max: int, h: float | None = None,
                   budget: int = STEP_BUDGET) -> np.ndarray:
    """[P_x(tau_y > k) for k = 0..n_max] from one killed evolution."""
    h = default_h(chain) if h is None else h
    wk = _make_walker(chain, [(chain.index(x0), float(y), 1.0)], n_max, h, KILLED, budget)
    out = np.empty(n_max + 1)
    out[0] = 1.0
    for k in range(1, n_max + 1):
        wk.step()
        out[k] = wk.W[0, :, wk.ja:wk.jb].sum()
    return out


def survival_sequence(chain: ChainSpec, x0, y: float, n_list: Sequence[int],
                      h: float | None = None) -> list[float]:
    n_list = list(n_list)
    if not n_list:
        return []
    curve = survival_curve(chain, x0, y, max(n_list), h)
    return [float(curve[n]) for n in n_list]


def tau_pmf(chain: ChainSpec, x0, y: float, n_max: int, h: float | None = None) -> np.ndarray:
    """[P_x(tau_y = k) for k = 1..n_max]; index 0 of the result is k = 1."""
    curve = survival_curve(chain, x0, y, n_max, h)
    pmf = curve[:-1] - curve[1:]
    return np.maximum(pmf, 0.0)


def prob_interval(law: BinnedLaw, z: float, a: float, psi=None) -> float:
    if a <= 0:
        return 0.0
    c = law.cdf([z, z + a], psi)
    return float(c[1] - c[0])


def conditioned_interval_expectation(chain: ChainSpec, x0, y: float, n: int, psi, z: float,
                                     a: float, h: float | None = None,
                                     law: BinnedLaw | None = None) -> float:
    """E_x(psi(X_n); y + S_n in [z, z+a], tau_y > n)."""
    if law is None:
        law = evolve_binned(chain, x0, y, n, h, KILLED)
    return prob_interval(law, z, a, psi=np.asarray(psi, dtype=float))


def enumerate_paths(chain: ChainSpec, x0, y: float, n: int, budget: int = ENUM_BUDGET):
    """Every length-n path from x0: (states (N, n), walk values (N, n), probs (N,))."""
    d = chain.d
    if d ** n > budget:
        raise BudgetExceeded(f"{d}^{n} paths exceed budget {budget}")
    x = chain.index(x0)
    if n == 0:
        return (np.zeros((1, 0), dtype=np.intp), np.zeros((1, 0)), np.ones(1))
    paths = np.array(list(itertools.product(range(d), repeat=n)), dtype=np.intp)
    P = chain.transition
    prob = P[x, paths[:, 0]].copy()
    for k in range(1, n):
        prob *= P[paths[:, k - 1], paths[:, k]]
    walks = y + np.cumsum(chain.f[paths], axis=1)
    return paths, walks, prob


def enumerate_exact(chain: ChainSpec, x0, y: float, n: int,
                    predicate: Callable[[np.ndarray, np.ndarray], np.ndarray],
                    budget: int = ENUM_BUDGET) -> float:
    """Exact E_x[predicate(path, walk)] by summing over all d^n paths.

    ``predicate`` is vectorised: it receives the (N, n) state and walk-value
    arrays and returns N weights (booleans allowed).
    """
    paths, walks, prob = enumerate_paths(chain, x0, y, n, budget)
    vals = np.asarray(predicate(paths, walks), dtype=float)
    return math.fsum((prob * vals).tolist())


def survives(paths, walks):
    return np.all(walks > 0, axis=1)


def in_interval(z: float, a: float, killed: bool = True, psi=None):
    def pred(paths, walks):
        end = walks[:, -1] if walks.shape[1] else np.zeros(len(walks))
        ok = (end >= z) & (end <= z + a)
        if killed:
            ok &= np.all(walks > 0, axis=1)
        w = ok.astype(float)
        if psi is not None:
            w *= np.asarray(psi)[paths[:, -1]]
        return w
    return pred


def psi_star(chain: ChainSpec, xp) -> np.ndarray:
    """Reversal weights psi*_{x'}(x*) = P(x', x*) / nu(x*); nu(psi*_{x'}) = 1."""
    nu = stationary_distribution(chain).nu
    return chain.transition[chain.index(xp)] / nu


def boundary_functional_expectation(chain: ChainSpec, x0, y: float, n: int,
                                    g: BoundaryFunctional, h: float | None = None,
                                    budget: int = STEP_BUDGET) -> float:
    """E_x(g(X_1..X_l, X_{n-m+1}..X_n, y + S_n); tau_y > n).

    The first l steps are enumerated exactly; each surviving prefix seeds one
    entry of a batched killed evolution up to time n - m, and the last m steps
    are folded in exactly from the bin centres.
    """
    if g.l + g.m > 4:
        raise BudgetExceeded("boundary segments limited to l + m <= 4")
    if n <= g.l + g.m:
        raise ValueError("need n > l + m")
    h = default_h(chain) if h is None else h
    d = chain.d
    P, f = chain.transition, chain.f
    x = chain.index(x0)

    prefixes, starts = [], []
    for pre in itertools.product(range(d), repeat=g.l):
        w, val, s, ok = 1.0, float(y), x, True
        for nxt in pre:
            w *= P[s, nxt]
            val += f[nxt]
            s = nxt
            if w == 0 or val <= 0:
                ok = False
                break
        if ok:
            prefixes.append(pre)
            starts.append((s, val, w))
    if not starts:
        return 0.0
    steps = n - g.l - g.m
    wk = _make_walker(chain, starts, steps, h, KILLED, budget)
    # a prefix endpoint split onto a centre <= 0 is dead, as after any binned step
    dead = wk.W[:, :, :wk._j0 + 1]
    wk.killed += dead.sum(axis=(1, 2))
    dead[...] = 0.0
    for _ in range(steps):
        wk.step()

    c = (wk.k_lo + np.arange(wk.W.shape[-1])) * h
    sl = slice(wk.ja, wk.jb)
    c = c[sl]
    total = 0.0
    for i, pre in enumerate(prefixes):
        W = wk.W[i, :, sl]
        if g.m == 0:
            total += float(np.sum(W.sum(axis=0) * g.g(pre, (), c)))
            continue
        for suf in itertools.product(range(d), repeat=g.m):
            # P(x_{n-m}, s1) for every state at time n-m, then along the suffix
            rowp = P[:, suf[0]].copy()
            wsuf = 1.0
            for a_, b_ in zip(suf, suf[1:]):
                wsuf *= P[a_, b_]
            if wsuf == 0 or not rowp.any():
                continue
            mass = (rowp[:, None] * W).sum(axis=0) * wsuf
            val = c.copy()
            alive = np.ones_like(c, dtype=bool)
            for s in suf:
                val = val + f[s]
                alive &= val > 0
            total += float(np.sum(np.where(alive, mass * g.g(pre, suf, np.maximum(val, 0.0)), 0.0)))
    return total
