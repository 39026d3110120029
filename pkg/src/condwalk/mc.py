"""Monte Carlo for the killed walk: plain path simulation and a sampler for
the Doob transform built from a harmonic table.

Random streams come from numpy's counter-based Philox generator keyed by
(seed, worker), so a run split over workers is reproducible and each
worker's accumulator can be merged in any grouping.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .chain import ChainSpec
from .errors import NumericalWeightBlowup, ZeroHarmonic
from .harmonic import HarmonicTable

log = logging.getLogger(__name__)

CHUNK = 100_000
WEIGHT_FLOOR = 1e-12

Phi = Callable[[np.ndarray, np.ndarray], np.ndarray]


def stream(seed: int, worker: int = 0) -> np.random.Generator:
    """Independent generator for one worker of a seeded run."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(worker)])))


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_err: float
    n_samples: int
    seed: int


@dataclass
class Accumulator:
    """Running sum, sum of squares and count for one worker."""
    total: float = 0.0
    total_sq: float = 0.0
    count: int = 0

    def add(self, values: np.ndarray) -> None:
        self.total += math.fsum(values.tolist())
        self.total_sq += math.fsum((values * values).tolist())
        self.count += int(values.size)

    def merge(self, other: "Accumulator") -> "Accumulator":
        return Accumulator(self.total + other.total, self.total_sq + other.total_sq,
                           self.count + other.count)

    def estimate(self, seed: int, scale: float = 1.0) -> McEstimate:
        n = self.count
        mean = self.total / n
        var = max(self.total_sq / n - mean * mean, 0.0) * n / max(n - 1, 1)
        return McEstimate(scale * mean, scale * math.sqrt(var / n), n, int(seed))


@dataclass
class SimulationSummary:
    survival: McEstimate
    states: np.ndarray          # X_n of surviving paths
    values: np.ndarray          # y + S_n of surviving paths

    def empirical_law(self, d: int, bins: np.ndarray) -> np.ndarray:
        """Histogram (d, len(bins) - 1) of survivors, normalised by all N paths."""
        out = np.zeros((d, len(bins) - 1))
        for x in range(d):
            out[x] = np.histogram(self.values[self.states == x], bins=bins)[0]
        return out / self.survival.n_samples


def _split(N: int, workers: int) -> list[int]:
    base, extra = divmod(N, workers)
    return [base + (1 if w < extra else 0) for w in range(workers)]


def _draw(rng: np.random.Generator, cum: np.ndarray, cur: np.ndarray) -> np.ndarray:
    """Next states given current states and row-wise cumulative kernel."""
    u = rng.random(len(cur))
    rows = cum[cur]
    nxt = (u[:, None] >= rows).sum(axis=1)
    return np.minimum(nxt, cum.shape[1] - 1)


def simulate_paths(chain: ChainSpec, x0, y: float, n: int, N: int, seed: int,
                   workers: int = 1, keep_paths: bool = True) -> SimulationSummary:
    """N independent paths of the exact kernel, killed when the walk is <= 0."""
    if N < 1:
        raise ValueError("N must be >= 1")
    x = chain.index(x0)
    cum = np.cumsum(chain.transition, axis=1)
    f = chain.f
    acc = Accumulator()
    kept_s, kept_v = [], []
    for w, Nw in enumerate(_split(N, workers)):
        rng = stream(seed, w)
        wacc = Accumulator()
        for start in range(0, Nw, CHUNK):
            m = min(CHUNK, Nw - start)
            st = np.full(m, x, dtype=np.intp)
            val = np.full(m, float(y))
            alive = np.ones(m, dtype=bool)
            for _ in range(n):
                st = _draw(rng, cum, st)
                val = val + f[st]
                alive &= val > 0
            wacc.add(alive.astype(float))
            if keep_paths:
                kept_s.append(st[alive])
                kept_v.append(val[alive])
        acc = acc.merge(wacc)
    states = np.concatenate(kept_s) if kept_s else np.zeros(0, dtype=np.intp)
    values = np.concatenate(kept_v) if kept_v else np.zeros(0)
    return SimulationSummary(acc.estimate(seed), states, values)


@dataclass
class TransformLog:
    """Row-sum diagnostics of the transformed kernel over all visited points."""
    max_row_error: float = 0.0
    steps: int = 0
    notes: list[str] = field(default_factory=list)


def _node_values(table: HarmonicTable, xs: np.ndarray, ks: np.ndarray) -> np.ndarray:
    """V at integer grid nodes ks (absolute multiples of dy), with the linear
    tail above the table and 0 at or below 0."""
    G = table.values.shape[1]
    j = ks - table.k_min
    inside = table.values[xs, np.clip(j, 0, G - 1)]
    tail = table.tail(xs, ks * table.dy)
    out = np.where(j >= G, tail, inside)
    return np.where(ks > 0, out, 0.0)


def h_transform_estimate(chain: ChainSpec, table: HarmonicTable, x0, y: float, n: int,
                         phi: Phi | Sequence[Phi], N: int, seed: int, workers: int = 1,
                         walk: str = "grid", row_tol: float | None = None,
                         diagnostics: TransformLog | None = None):
    """Estimate E_x(phi(X_n, y + S_n); tau_y > n) as V(x, y) * mean(phi / V)
    over paths of the V-transformed kernel, which never dies.

    ``walk="grid"`` runs the binned walk on the table's nodes (shifts split
    between the two neighbouring nodes, as in ``dist``); the node-kill table
    is exactly harmonic for it, so rows sum to 1 up to the solve residual and
    the result matches the binned laws.  ``walk="continuous"`` moves by the
    exact f and evaluates V by interpolation; the small row-sum defect is
    renormalised at each step and recorded in ``diagnostics``.

    A sequence of phis is evaluated on the same paths and gives a list.
    """
    if walk not in ("grid", "continuous"):
        raise ValueError("walk must be 'grid' or 'continuous'")
    phis = list(phi) if isinstance(phi, (list, tuple)) else [phi]
    x = chain.index(x0)
    d = chain.d
    P, f = chain.transition, chain.f
    if row_tol is None:
        base = table.residual if np.isfinite(table.residual) else 1e-8
        row_tol = 10.0 * max(base, table.tail_defect, 1e-12)
    diag = diagnostics if diagnostics is not None else TransformLog()
    dy = table.dy

    if walk == "grid":
        u0 = y / dy
        k0 = math.floor(u0 + 1e-9)
        if abs(u0 - k0) > 1e-9:
            raise ValueError("grid walk needs y on a table node")
        kf = np.floor(f / dy + 1e-12).astype(np.int64)
        frf = f / dy - kf
        frf[frf < 1e-12] = 0.0
        # node values over every reachable node, so steps are plain lookups
        off = k0 + n * int(kf.min()) - 1
        top = k0 + n * (int(kf.max()) + 1) + 2
        ks = np.arange(off, top + 1)
        Vext = np.stack([_node_values(table, np.full(len(ks), s), ks) for s in range(d)])
        v0 = float(Vext[x, k0 - off])
    else:
        v0 = float(table.eval_many(np.array([x]), np.array([float(y)]))[0])
    if v0 <= 0:
        raise ZeroHarmonic(f"V({chain.states[x]}, {y}) = {v0} is not positive")

    accs = [Accumulator() for _ in phis]
    width = 2 * d if walk == "grid" else d
    for w, Nw in enumerate(_split(N, workers)):
        rng = stream(seed, w)
        waccs = [Accumulator() for _ in phis]
        for start in range(0, Nw, CHUNK):
            m = min(CHUNK, Nw - start)
            rows = np.arange(m)
            st = np.full(m, x, dtype=np.intp)
            pos = np.full(m, k0 - off, dtype=np.int64) if walk == "grid" else np.full(m, float(y))
            cur_v = np.full(m, v0)
            cand_v = np.empty((m, width))
            cand_w = np.empty((m, width))
            for _ in range(n):
                if walk == "grid":
                    # candidates: (x', lower node), (x', upper node) for each x'
                    for xp in range(d):
                        lo = pos + kf[xp]
                        p = P[st, xp]
                        cand_v[:, 2 * xp] = Vext[xp, lo]
                        cand_v[:, 2 * xp + 1] = Vext[xp, lo + 1]
                        cand_w[:, 2 * xp] = p * (1.0 - frf[xp]) * cand_v[:, 2 * xp]
                        cand_w[:, 2 * xp + 1] = p * frf[xp] * cand_v[:, 2 * xp + 1]
                else:
                    for xp in range(d):
                        wv = pos + f[xp]
                        cand_v[:, xp] = np.where(wv > 0, table.eval_many(np.full(m, xp), wv), 0.0)
                        cand_w[:, xp] = P[st, xp] * cand_v[:, xp]
                cum = np.cumsum(cand_w, axis=1)
                rs = cum[:, -1]
                err = float(np.max(np.abs(rs / cur_v - 1.0)))
                diag.max_row_error = max(diag.max_row_error, err)
                diag.steps += 1
                if walk == "grid" and err > row_tol:
                    raise NumericalWeightBlowup(
                        f"transformed rows sum to 1 +- {err:.2e}, above {row_tol:.1e}")
                u = rng.random(m) * rs
                pick = np.minimum((u[:, None] >= cum).sum(axis=1), width - 1)
                # a zero-weight candidate can only be hit at a cumulative tie
                bad = cand_w[rows, pick] <= 0
                if bad.any():
                    pick[bad] = np.argmax(cand_w[bad] > 0, axis=1)
                new_v = cand_v[rows, pick]
                if walk == "grid":
                    st = pick // 2
                    pos = pos + kf[st] + (pick % 2)
                else:
                    st = pick
                    pos = pos + f[st]
                if float(np.min(new_v)) < WEIGHT_FLOOR:
                    raise NumericalWeightBlowup(f"V = {float(np.min(new_v)):.2e} at a sampled point")
                cur_v = new_v
            vals = (pos + off) * dy if walk == "grid" else pos
            for acc_w, ph in zip(waccs, phis):
                acc_w.add(np.asarray(ph(st, vals), dtype=float) / cur_v)
        accs = [a.merge(b) for a, b in zip(accs, waccs)]
    if walk == "continuous" and diag.max_row_error > row_tol:
        msg = f"continuous transform renormalised rows by up to {diag.max_row_error:.2e}"
        diag.notes.append(msg)
        log.info(msg)
    out = [a.estimate(seed, scale=v0) for a in accs]
    return out if isinstance(phi, (list, tuple)) else out[0]


def interval_phi(z: float, a: float, h: float | None = None, psi=None) -> Phi:
    """phi(x, v) = psi(x) 1{v in [z, z+a]}; with ``h`` the indicator is replaced
    by the overlap fraction of the bin [v - h/2, v + h/2], matching the
    uniform-within-bin convention of binned laws."""
    wts = None if psi is None else np.asarray(psi, dtype=float)

    def phi(states, values):
        if h is None:
            out = ((values >= z) & (values <= z + a)).astype(float)
        else:
            lo = np.maximum(values - h / 2, z)
            hi = np.minimum(values + h / 2, z + a)
            out = np.clip(hi - lo, 0.0, None) / h
        if wts is not None:
            out = out * wts[states]
        return out
    return phi


def constant_phi(states, values):
    return np.ones(len(values))


def harmonic_phi(table: HarmonicTable) -> Phi:
    """phi = V itself; the transform estimate of it is exactly V(x, y)."""
    def phi(states, values):
        ks = np.rint(values / table.dy).astype(np.int64)
        on_grid = np.abs(values / table.dy - ks) < 1e-9
        return np.where(on_grid, _node_values(table, states, ks), table.eval_many(states, values))
    return phi
