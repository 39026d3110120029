"""Tabulated harmonic function V(x, y) of the walk killed on leaving (0, inf).

V is the limit of E_x(y + S_n; tau_y > n).  On a uniform y-grid it solves the
one-step equation

    V(x, y) = sum_x' P(x, x') 1{y + f(x') > 0} V(x', y + f(x'))

with V linearly interpolated between nodes and continued above the grid by
V(x, y) = y + c(x).  By default the kill is applied to the two interpolation
nodes instead of to y + f(x'); the table is then the exact harmonic function
of the binned walk used for finite-n laws, so both sides of a limit check
share one discretisation.  Writing S_n = M_n + PTheta(X_0) - PTheta(X_n) with M a
martingale shows c(x) = PTheta(x) + kappa for a single constant kappa; kappa
is fixed self-consistently as the mean of V - y - PTheta over the top 10% of
the grid.

When every f is a multiple of dy the grid walk only visits y + gZ, with g the
gcd of the steps, and V - y - PTheta tends to a g-periodic function of y
rather than a constant (for the simple walk V(y) = ceil(y)).  The tail then
carries one kappa per residue class of nodes mod g, each fixed by its own
top-block mean; for all other chains g is one node and this reduces to the
single constant.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .chain import ChainSpec, stationary_distribution
from .errors import BudgetExceeded, NoConvergence
from .spectral import poisson_solution, require_nondegenerate

TOP_FRACTION = 0.10
# points within this many node widths of the top node count as on the grid
NODE_EPS = 1e-9


@dataclass(frozen=True)
class HarmonicGrid:
    y_min: float
    y_max: float
    dy: float

    @classmethod
    def default_for(cls, chain: ChainSpec, sigma: float, dy: float | None = None,
                    y_max: float | None = None) -> "HarmonicGrid":
        fmax = float(np.max(np.abs(chain.f)))
        if dy is None:
            vals = np.unique(chain.f)
            gap = float(np.min(np.diff(vals))) if len(vals) > 1 else fmax
            dy = min(gap / 8.0, 0.01)
        if y_max is None:
            y_max = 50.0 * sigma
        # nodes sit on multiples of dy so that 0 and round numbers are nodes
        lo = math.floor((-fmax - 1.0) / dy) * dy
        hi = math.ceil(y_max / dy) * dy
        return cls(lo, hi, dy)


@dataclass
class HarmonicTable:
    k_min: int
    dy: float
    values: np.ndarray
    tail_offset: np.ndarray
    kappa: float
    converged_at: int
    residual: float
    chain_digest: str
    states: tuple[str, ...]
    cutoff: float
    method: str = "direct"
    residual_trace: list[float] = field(default_factory=list)
    kill: str = "node"
    # per-residue deviation of kappa from its mean, classes of nodes mod period
    kappa_periodic: np.ndarray | None = None

    @property
    def period(self) -> int:
        return 1 if self.kappa_periodic is None else len(self.kappa_periodic)

    def tail(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Continuation above the grid: y + c(x), plus the periodic part."""
        out = ys + self.tail_offset[xs]
        if self.period > 1:
            u = ys / self.dy
            k = np.floor(u).astype(np.int64)
            fr = u - k
            dk = self.kappa_periodic
            p = self.period
            out = out + dk[k % p] * (1.0 - fr) + dk[(k + 1) % p] * fr
        return out

    @property
    def y_grid(self) -> np.ndarray:
        return (self.k_min + np.arange(self.values.shape[1])) * self.dy

    @property
    def y_min(self) -> float:
        return self.k_min * self.dy

    @property
    def y_max(self) -> float:
        return (self.k_min + self.values.shape[1] - 1) * self.dy

    @property
    def tail_defect(self) -> float:
        """Relative mismatch between the last node and the linear tail."""
        top = self.values[:, -1]
        xs = np.arange(len(top))
        gap = np.abs(top - self.tail(xs, np.full(len(top), self.y_max)))
        return float(np.max(gap) / max(1.0, float(top.max())))

    def __call__(self, x, y):
        return eval_harmonic(self, x, y)

    def eval_many(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Vectorised V(xs[i], ys[i]) for integer state indices."""
        xs = np.asarray(xs, dtype=np.intp)
        ys = np.asarray(ys, dtype=float)
        G = self.values.shape[1]
        u = ys / self.dy - self.k_min
        j = np.clip(np.floor(u).astype(np.int64), 0, G - 2)
        frac = np.clip(u - j, 0.0, 1.0)
        inside = self.values[xs, j] * (1.0 - frac) + self.values[xs, j + 1] * frac
        out = np.where(u > G - 1 + NODE_EPS, self.tail(xs, ys), inside)
        return np.where(ys <= self.cutoff, 0.0, np.where(ys < self.y_min, 0.0, out))

    def step_values(self, xs: np.ndarray, ws: np.ndarray) -> np.ndarray:
        """Value of landing at ws[i] in state xs[i] after one step, killed
        according to the table's convention."""
        xs = np.asarray(xs, dtype=np.intp)
        ws = np.asarray(ws, dtype=float)
        if self.kill == "exact":
            return np.where(ws > 0, self.eval_many(xs, ws), 0.0)
        G = self.values.shape[1]
        u = ws / self.dy - self.k_min
        j = np.clip(np.floor(u).astype(np.int64), 0, G - 2)
        frac = np.clip(u - j, 0.0, 1.0)
        lo = np.where(j + self.k_min > 0, self.values[xs, j], 0.0)
        hi = np.where(j + 1 + self.k_min > 0, self.values[xs, j + 1], 0.0)
        inside = lo * (1.0 - frac) + hi * frac
        out = np.where(u > G - 1 + NODE_EPS, self.tail(xs, ws), inside)
        return np.where(ws < self.y_min, 0.0, out)

    def to_csv(self, path: str | Path) -> None:
        ys = self.y_grid
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["state", "y", "V"])
            for i, s in enumerate(self.states):
                for y, v in zip(ys, self.values[i]):
                    w.writerow([s, repr(float(y)), repr(float(v))])

    @classmethod
    def from_csv(cls, path: str | Path, chain: ChainSpec, kill: str = "node") -> "HarmonicTable":
        rows: dict[str, list[tuple[float, float]]] = {}
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                rows.setdefault(rec["state"], []).append((float(rec["y"]), float(rec["V"])))
        ys = np.array([y for y, _ in rows[chain.states[0]]])
        dy = float(np.median(np.diff(ys)))
        k_min = int(round(ys[0] / dy))
        values = np.array([[v for _, v in rows[s]] for s in chain.states])
        top = _top_block(values.shape[1])
        shift = chain.transition @ _theta_or_zero(chain)
        gaps = values[:, top] - ys[None, top] - shift[:, None]
        period = grid_period(chain, dy)
        kap = np.array([gaps[:, (k_min + top) % period == r].mean() for r in range(period)])
        kappa = float(kap.mean())
        dk = kap - kappa if period > 1 else None
        return cls(k_min, dy, values, shift + kappa, kappa, 0, float("nan"), chain.digest(),
                   chain.states, -float(np.max(chain.f)), method="csv", kill=kill,
                   kappa_periodic=dk)


def _theta_or_zero(chain: ChainSpec) -> np.ndarray:
    try:
        return poisson_solution(chain)
    except Exception:
        return np.zeros(chain.d)


def grid_period(chain: ChainSpec, dy: float) -> int:
    """Period in nodes of the set of nodes the grid walk can reach: the gcd of
    f / dy when all are integers, else 1."""
    u = chain.f / dy
    k = np.rint(u)
    if np.any(np.abs(u - k) > 1e-9 * np.maximum(1.0, np.abs(u))):
        return 1
    g = int(np.gcd.reduce(np.abs(k).astype(np.int64)))
    return max(g, 1)


def eval_harmonic(table: HarmonicTable, x, y) -> float:
    xi = table.states.index(str(x)) if not isinstance(x, (int, np.integer)) else int(x)
    return float(table.eval_many(np.array([xi]), np.array([float(y)]))[0])


def _build_operator(chain: ChainSpec, k_min: int, G: int, dy: float, shift: np.ndarray,
                    kill: str = "node", period: int = 1):
    """Sparse one-step kernel on the grid plus its escape-above-the-grid parts.

    Returns (Q, E, esc_const): for node rows, (QV)[row] + (E kappa)[row] +
    esc_const[row] is the one-step expectation, kappa holding one value per
    residue class of nodes mod ``period``.  With ``kill="exact"``
    a successor survives iff y + f(x') > 0; with ``kill="node"`` each of the
    two interpolation nodes survives iff it is > 0, which makes the table the
    exact harmonic function of the binned walk in ``dist``.
    """
    d = chain.d
    P, f = chain.transition, chain.f
    ys = (k_min + np.arange(G)) * dy
    rows, cols, vals = [], [], []
    erows, ecols, evals = [], [], []
    esc_const = np.zeros(d * G)
    for x in range(d):
        base = x * G
        for xp in np.flatnonzero(P[x] > 0):
            p = P[x, xp]
            w = ys + f[xp]
            alive = w > 0
            above = alive & (w / dy - k_min > G - 1 + NODE_EPS)
            inside = alive & ~above
            k = np.flatnonzero(inside)
            u = w[k] / dy - k_min
            j = np.clip(np.floor(u).astype(np.int64), 0, G - 2)
            fr = np.clip(u - j, 0.0, 1.0)
            w_lo, w_hi = p * (1.0 - fr), p * fr
            if kill == "node":
                w_lo = np.where(j + k_min > 0, w_lo, 0.0)
                w_hi = np.where(j + 1 + k_min > 0, w_hi, 0.0)
            rows += [base + k, base + k]
            cols += [xp * G + j, xp * G + j + 1]
            vals += [w_lo, w_hi]
            ka = np.flatnonzero(above)
            erows.append(base + ka)
            ecols.append(np.rint(w[ka] / dy).astype(np.int64) % period)
            evals.append(np.full(len(ka), p))
            esc_const[base + ka] += p * (w[ka] + shift[xp])
    Q = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(d * G, d * G))
    E = sp.csr_matrix((np.concatenate(evals), (np.concatenate(erows), np.concatenate(ecols))),
                      shape=(d * G, period))
    return Q, E, esc_const


def _top_block(G: int) -> np.ndarray:
    m = max(2, int(round(TOP_FRACTION * G)))
    return np.arange(G - m, G)


def compute_harmonic(chain: ChainSpec, grid: HarmonicGrid | None = None, tol: float = 1e-8,
                     max_iter: int = 2_000_000, method: str = "direct",
                     max_nodes: int = 5_000_000, kill: str = "node") -> HarmonicTable:
    prof = require_nondegenerate(chain)
    if grid is None:
        grid = HarmonicGrid.default_for(chain, prof.sigma)
    dy = grid.dy
    k_min = int(round(grid.y_min / dy))
    k_max = int(round(grid.y_max / dy))
    G = k_max - k_min + 1
    d = chain.d
    if d * G > max_nodes:
        raise BudgetExceeded(f"{d * G} grid unknowns exceed {max_nodes}")
    ys = (k_min + np.arange(G)) * dy

    nu = stationary_distribution(chain).nu
    shift = chain.transition @ poisson_solution(chain, nu)
    period = grid_period(chain, dy)
    Q, E, esc_const = _build_operator(chain, k_min, G, dy, shift, kill, period)
    top = _top_block(G)
    if period > 1 and len(top) < 2 * period:
        raise ValueError(f"top block of {len(top)} nodes is shorter than two periods of {period}")
    N = d * G
    # kappa_r = mean of V - y - shift over top nodes of residue class r
    cls_of = np.tile((k_min + top) % period, d)
    top_idx = (np.arange(d)[:, None] * G + top[None, :]).ravel()
    counts = np.bincount(cls_of, minlength=period).astype(float)
    M = sp.csr_matrix((1.0 / counts[cls_of], (cls_of, top_idx)), shape=(period, N))
    top_target = M @ (np.tile(ys, d) + np.repeat(shift, G))

    trace: list[float] = []
    if method == "direct":
        # unknowns (V, kappa); last rows are the kappa self-consistency conditions
        A = sp.hstack([sp.eye(N, format="csr") - Q, -E])
        A = sp.vstack([A, sp.hstack([-M, sp.eye(period)])]).tocsc()
        b = np.concatenate([esc_const, -top_target])
        sol = spla.spsolve(A, b)
        V, kap = sol[:N], sol[N:]
        iters = 1
    elif method == "jacobi":
        V = np.maximum(np.tile(ys, d), 0.0)
        kap = M @ V - top_target
        iters = 0
        while True:
            iters += 1
            V_new = Q @ V + E @ kap + esc_const
            kap = M @ V_new - top_target
            change = float(np.max(np.abs(V_new - V)))
            V = V_new
            if iters % 100 == 0:
                trace.append(change)
            if change <= tol:
                break
            if iters >= max_iter:
                raise NoConvergence(f"sup-change {change:.2e} after {iters} sweeps; trace {trace[-5:]}")
    else:
        raise ValueError(f"unknown method {method!r}")

    resid = float(np.max(np.abs(Q @ V + E @ kap + esc_const - V)))
    kappa = float(np.mean(kap))
    trace.append(resid)
    if method == "direct" and resid > tol:
        raise NoConvergence(f"direct solve residual {resid:.2e} > tol {tol:.1e}")
    values = V.reshape(d, G)
    # exact zeros where no successor survives (already zero up to rounding)
    cutoff = -float(np.max(chain.f))
    values[:, ys <= cutoff] = 0.0
    return HarmonicTable(k_min=k_min, dy=dy, values=values, tail_offset=shift + kappa,
                         kappa=kappa, converged_at=iters, residual=resid,
                         chain_digest=chain.digest(), states=chain.states, cutoff=cutoff,
                         method=method, residual_trace=trace, kill=kill,
                         kappa_periodic=(kap - kappa) if period > 1 else None)


def one_step_residual(table: HarmonicTable, chain: ChainSpec, relative: bool = True) -> np.ndarray:
    """|QV - V| on every grid node (divided by max(1, V) when ``relative``)."""
    P, f = chain.transition, chain.f
    ys = table.y_grid
    out = np.zeros_like(table.values)
    for x in range(chain.d):
        acc = np.zeros_like(ys)
        for xp in np.flatnonzero(P[x] > 0):
            acc += P[x, xp] * table.step_values(np.full(len(ys), xp, dtype=np.intp), ys + f[xp])
        out[x] = np.abs(acc - table.values[x])
    if relative:
        out = out / np.maximum(1.0, table.values)
    return out


def harmonicity_residual(table: HarmonicTable, chain: ChainSpec, probe_n: int,
                         probes=None, budget: int = 10_000_000) -> float:
    """Max relative gap between the n-step expectation of V along surviving
    paths and V(x, y) over probe points, by expanding all paths.

    Paths follow the walk the table is harmonic for: with ``kill="node"`` each
    step splits between the two neighbouring nodes and drops nodes <= 0 (the
    starting point is split once without a kill); with ``kill="exact"`` values
    move by f and die at <= 0.
    """
    d = chain.d
    width = 2 * d if table.kill == "node" else d
    if width ** probe_n > budget:
        raise BudgetExceeded(f"{width}^{probe_n} paths exceed budget")
    if probes is None:
        ys = table.y_grid
        pick = ys[np.linspace(0, len(ys) - 1, 25).astype(int)]
        probes = [(x, float(y)) for x in range(d) for y in pick]
    P, f = chain.transition, chain.f
    dy = table.dy
    worst = 0.0
    for x, y in probes:
        v = eval_harmonic(table, x, y)
        if table.kill == "node":
            u = y / dy
            k = math.floor(u + 1e-9)
            fr = max(u - k, 0.0) if abs(u - k) > 1e-9 else 0.0
            st = np.array([x, x], dtype=np.intp)
            ks = np.array([k, k + 1], dtype=np.int64)
            wt = np.array([1.0 - fr, fr])
            kf = np.floor(f / dy + 1e-12).astype(np.int64)
            frf = np.where(f / dy - kf < 1e-12, 0.0, f / dy - kf)
            for _ in range(probe_n):
                st2 = np.repeat(np.arange(d), 2)[None, :].repeat(len(st), axis=0).ravel()
                ks2 = (ks[:, None] + np.stack([kf, kf + 1], axis=1).ravel()[None, :]).ravel()
                split = np.stack([1.0 - frf, frf], axis=1).ravel()
                wt2 = (wt[:, None] * np.repeat(P[st], 2, axis=1) * split[None, :]).ravel()
                keep = (wt2 > 0) & (ks2 > 0)
                st, ks, wt = st2[keep], ks2[keep], wt2[keep]
            lhs = float(np.sum(wt * _grid_values(table, st, ks)))
        else:
            st = np.array([x], dtype=np.intp)
            val = np.array([y], dtype=float)
            wt = np.array([1.0])
            for step in range(probe_n):
                st2 = np.repeat(np.arange(d)[None, :], len(st), axis=0).ravel()
                val2 = (val[:, None] + f[None, :]).ravel()
                wt2 = (wt[:, None] * P[st]).ravel()
                keep = (wt2 > 0) if step == probe_n - 1 else (val2 > 0) & (wt2 > 0)
                st, val, wt = st2[keep], val2[keep], wt2[keep]
            lhs = float(np.sum(wt * table.step_values(st, val)))
        worst = max(worst, abs(lhs - v) / max(1.0, v))
    return worst


def _grid_values(table: HarmonicTable, xs: np.ndarray, ks: np.ndarray) -> np.ndarray:
    """V at absolute node indices: stored values, the tail above the grid, 0 below."""
    G = table.values.shape[1]
    j = ks - table.k_min
    inside = table.values[xs, np.clip(j, 0, G - 1)]
    out = np.where(j >= G, table.tail(xs, ks * table.dy), inside)
    return np.where(j < 0, 0.0, out)


def sandwich_constant(table: HarmonicTable, delta: float = 0.1) -> float:
    """Smallest c with (1-delta) y+ - c <= V <= (1+delta) y+ + c on the grid."""
    yp = np.maximum(table.y_grid, 0.0)[None, :]
    V = table.values
    return float(max(np.max((1 - delta) * yp - V), np.max(V - (1 + delta) * yp), 0.0))


def tail_fit(table: HarmonicTable) -> np.ndarray:
    """Per-state mean of V - y over the top 10% of the grid."""
    top = _top_block(table.values.shape[1])
    return (table.values[:, top] - table.y_grid[None, top]).mean(axis=1)
