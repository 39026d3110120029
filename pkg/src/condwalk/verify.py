"""Limit constants built from nu, sigma, V and V*, and finite-n comparisons
against them.

Every local constant is an integral over z of an integrand that is an exact
finite sum over states of table lookups.  Integrands are sampled at table
nodes and the piecewise-linear interpolant is integrated exactly; with the
node-kill tables this makes the one-step dual reduction hold to the solve
residual.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .chain import ChainSpec, stationary_distribution
from .dist import (BoundaryFunctional, FREE, KILLED, boundary_functional_expectation,
                   default_h, evolve_binned, prob_interval, survival_curve)
from .dual import dual_chain
from .errors import InsufficientN, LatticeWalk, TableMismatch
from .harmonic import HarmonicGrid, HarmonicTable, compute_harmonic
from .spectral import LatticeCertificate, detect_lattice, require_nondegenerate

THEOREMS = ("GNLLT", "LLTC", "COROL", "CAPE", "CAPEBIS", "SURVIVAL", "RAYLEIGH", "STONE")

TOLERANCE = {
    "SURVIVAL": 0.05,
    "STONE": 0.01,
    "RAYLEIGH": 0.02,
    "LLTC": 0.10,
    "COROL": 0.10,
    "GNLLT": 0.10,
    "CAPE": 0.15,
    "CAPEBIS": 0.15,
}

SQRT_2PI = math.sqrt(2.0 * math.pi)


class AnalyticLaws:
    """Closed-form densities and distribution functions used by the limits."""

    @staticmethod
    def phi(t):
        return np.exp(-0.5 * np.square(t)) / SQRT_2PI

    @staticmethod
    def phi_plus(t):
        t = np.asarray(t, dtype=float)
        return np.where(t >= 0, t * np.exp(-0.5 * t * t), 0.0)

    @staticmethod
    def Phi_plus(t):
        t = np.asarray(t, dtype=float)
        return np.where(t >= 0, -np.expm1(-0.5 * t * t), 0.0)

    @staticmethod
    def phi_sigma(u, sigma: float):
        """Centred normal density with standard deviation sigma."""
        return np.exp(-0.5 * np.square(u) / sigma ** 2) / (SQRT_2PI * sigma)


@dataclass
class TheoremInputs:
    x: object = 0
    y: float = 1.0
    z: float = 0.0
    a: float = 0.5
    psi: Sequence[float] | None = None
    g: BoundaryFunctional | None = None
    t: float | None = None          # z = t sigma sqrt(n) when set

    def psi_vector(self, d: int) -> np.ndarray:
        return np.ones(d) if self.psi is None else np.asarray(self.psi, dtype=float)

    def describe(self) -> dict:
        out = {"x": str(self.x), "y": self.y, "z": self.z, "a": self.a, "t": self.t,
               "psi": None if self.psi is None else [float(v) for v in self.psi]}
        if self.g is not None:
            out["g"] = {"l": self.g.l, "m": self.g.m, "eps": self.g.eps}
        return out


@dataclass
class TheoremReport:
    theorem: str
    inputs: dict
    n_list: list[int]
    estimates: list[float]
    limit_value: float
    limit_values: list[float]
    ratios: list[float]
    deviations: list[float]
    tolerance: float
    verdict: str
    engine: str = "dp"
    h: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def rows(self) -> list[tuple[int, float, float, float]]:
        return list(zip(self.n_list, self.estimates, self.limit_values, self.ratios))


def verdict(deviations: Sequence[float], tol: float) -> str:
    """converging: last deviation within tol and non-increasing over the last
    three n; failed: last deviation outside tol and not shrinking."""
    dev = [float(v) for v in deviations]
    last3 = dev[-3:]
    trend = all(b <= a for a, b in zip(last3, last3[1:]))
    within = dev[-1] <= tol
    if within and trend:
        return "converging"
    if not within and not trend:
        return "failed"
    return "inconclusive"


# ---------------------------------------------------------------- quadrature

def _nodes(lo: float, hi: float, dy: float) -> np.ndarray:
    """lo, every grid node strictly inside (lo, hi), hi."""
    k0 = math.floor(lo / dy) + 1
    k1 = math.ceil(hi / dy) - 1
    inner = np.arange(k0, k1 + 1) * dy
    inner = inner[(inner > lo) & (inner < hi)]
    return np.concatenate([[lo], inner, [hi]])


def integrate_on_grid(fun: Callable[[np.ndarray], np.ndarray], lo: float, hi: float,
                      dy: float) -> float:
    """Integral over [lo, hi] of the piecewise-linear interpolant of ``fun``
    through the grid nodes (multiples of dy)."""
    if hi <= lo:
        return 0.0
    k_lo, k_hi = math.floor(lo / dy), math.ceil(hi / dy)
    kn = np.arange(k_lo, k_hi + 1)
    vals = np.asarray(fun(kn * dy), dtype=float)
    pts = _nodes(lo, hi, dy)
    pv = np.interp(pts, kn * dy, vals)
    return float(np.sum(0.5 * (pv[1:] + pv[:-1]) * np.diff(pts)))


# ------------------------------------------------------------------- tables

def _check_tables(chain: ChainSpec, V: HarmonicTable, Vs: HarmonicTable | None):
    if V.chain_digest != chain.digest():
        raise TableMismatch("V table was built for a different chain")
    if Vs is not None and Vs.chain_digest != dual_chain(chain).digest():
        raise TableMismatch("V* table was built for a different chain than the dual")


def build_tables(chain: ChainSpec, dy: float | None = None, kill: str = "node"):
    """(V, V*) tables on a common grid step."""
    sigma = require_nondegenerate(chain).sigma
    dy = default_h(chain) if dy is None else dy
    dual = dual_chain(chain)
    V = compute_harmonic(chain, HarmonicGrid.default_for(chain, sigma, dy=dy), kill=kill)
    Vs = compute_harmonic(dual, HarmonicGrid.default_for(dual, sigma, dy=dy), kill=kill)
    return V, Vs


def _dual_step_integrand(chain: ChainSpec, Vs: HarmonicTable, psi: np.ndarray):
    """z' -> E*_nu(psi(X1*) V*(X1*, z' + S1*); tau*_{z'} > 1)."""
    nu = stationary_distribution(chain).nu
    f = chain.f
    d = chain.d

    def fun(zs):
        out = np.zeros_like(zs)
        for x1 in range(d):
            if nu[x1] * psi[x1] == 0:
                continue
            out += nu[x1] * psi[x1] * Vs.step_values(np.full(len(zs), x1), zs - f[x1])
        return out
    return fun


def _nu_vstar(chain: ChainSpec, Vs: HarmonicTable):
    nu = stationary_distribution(chain).nu

    def fun(zs):
        return sum(nu[x] * Vs.eval_many(np.full(len(zs), x), zs) for x in range(chain.d))
    return fun


def _cape_integrand(chain: ChainSpec, V: HarmonicTable, Vs: HarmonicTable,
                    x: int, y: float, g: BoundaryFunctional):
    """z -> sum over (prefix, dual suffix) of g * V(X_l, y+S_l) * V*(X*_m, z+S*_m) * nu,
    with both killing constraints."""
    P, f = chain.transition, chain.f
    d = chain.d
    nu = stationary_distribution(chain).nu
    Ps = dual_chain(chain).transition

    prefixes = []
    for pre in itertools.product(range(d), repeat=g.l):
        w, val, s, ok = 1.0, float(y), x, True
        for k, nxt in enumerate(pre):
            w *= P[s, nxt]
            val += f[nxt]
            s = nxt
            if w == 0 or (k < g.l - 1 and val <= 0):
                ok = False
                break
        if ok:
            vv = float(V.step_values(np.array([s]), np.array([val]))[0])
            if vv > 0:
                prefixes.append((pre, w * vv))

    # dual paths x1*, ..., xm*; the start x* sums out against nu
    duals = []
    for dp in itertools.product(range(d), repeat=g.m):
        w = nu[dp[0]]
        for a_, b_ in zip(dp, dp[1:]):
            w *= Ps[a_, b_]
        if w > 0:
            duals.append((dp, w))

    def fun(zs):
        out = np.zeros_like(zs)
        for dp, wd in duals:
            walk = zs.copy()
            alive = np.ones_like(zs, dtype=bool)
            for k, s in enumerate(dp):
                walk = walk - f[s]
                if k < g.m - 1:
                    alive &= walk > 0
            vstar = np.where(alive, Vs.step_values(np.full(len(zs), dp[-1]), walk), 0.0)
            if not np.any(vstar):
                continue
            suf = tuple(reversed(dp))
            for pre, wp in prefixes:
                out += wp * wd * vstar * np.asarray(g.g(pre, suf, zs), dtype=float)
        return out
    return fun


def _binned_kill_probability(step: float, dy: float):
    """z -> probability that the binned walk at node z lands on a node <= 0
    after a shift by ``step`` split between neighbouring nodes."""
    kf = math.floor(step / dy + 1e-12)
    fr = step / dy - kf
    fr = 0.0 if fr < 1e-12 else fr

    def q(zs):
        k = np.rint(zs / dy)
        return (1.0 - fr) * (k + kf <= 0) + fr * (k + kf + 1 <= 0)
    return q


def limit_constant(theorem: str, chain: ChainSpec, V: HarmonicTable,
                   Vs: HarmonicTable | None, inputs: TheoremInputs,
                   z_max: float | None = None):
    """Scalar limit for the theorem; for GNLLT a function (z, n) -> limit."""
    theorem = theorem.upper()
    _check_tables(chain, V, Vs)
    sigma = require_nondegenerate(chain).sigma
    nu = stationary_distribution(chain).nu
    x = chain.index(inputs.x)
    vxy = float(V(x, inputs.y))
    psi = inputs.psi_vector(chain.d)
    dy = V.dy

    if theorem == "SURVIVAL":
        return 2.0 * vxy / (SQRT_2PI * sigma)
    if theorem == "RAYLEIGH":
        return 0.0
    if theorem == "STONE":
        return inputs.a * float(nu @ psi) / (SQRT_2PI * sigma)
    if theorem == "GNLLT":
        c = 2.0 * inputs.a * float(nu @ psi) * vxy / (SQRT_2PI * sigma ** 2)

        def profile(z, n):
            return c * AnalyticLaws.phi_plus(np.asarray(z) / (math.sqrt(n) * sigma))
        return profile

    if Vs is None:
        raise TableMismatch("this constant needs the dual table")
    pref = 2.0 * vxy / (SQRT_2PI * sigma ** 3)
    if theorem == "LLTC":
        fun = _dual_step_integrand(chain, Vs, psi)
        return pref * integrate_on_grid(fun, inputs.z, inputs.z + inputs.a, dy)
    if theorem == "COROL":
        return pref * integrate_on_grid(_nu_vstar(chain, Vs), inputs.z, inputs.z + inputs.a, dy)
    if theorem == "CAPEBIS":
        total = 0.0
        for xs in range(chain.d):
            top = -float(chain.f[xs])
            if top <= 0:
                continue
            if Vs.kill == "node":
                # kill probability of the binned step from node z by f(xs)
                q = _binned_kill_probability(float(chain.f[xs]), dy)
                fun = lambda zs, xs=xs, q=q: np.where(  # noqa: E731
                    zs > 0, Vs.eval_many(np.full(len(zs), xs), zs) * q(zs), 0.0)
                total += nu[xs] * integrate_on_grid(fun, 0.0, (math.ceil(top / dy) + 1) * dy, dy)
            else:
                fun = lambda zs, xs=xs: Vs.eval_many(np.full(len(zs), xs), zs)  # noqa: E731
                total += nu[xs] * integrate_on_grid(fun, 0.0, top, dy)
        return pref * total
    if theorem == "CAPE":
        if inputs.g is None:
            raise ValueError("CAPE needs a boundary functional g")
        g = inputs.g
        if g.l < 1 or g.m < 1 or g.l > 2 or g.m > 2:
            raise ValueError("CAPE supports 1 <= l, m <= 2")
        fun = _cape_integrand(chain, V, Vs, x, inputs.y, g)
        top = Vs.y_max if z_max is None else z_max
        return 2.0 / (SQRT_2PI * sigma ** 3) * integrate_on_grid(fun, 0.0, top, dy)
    raise ValueError(f"unknown theorem {theorem!r}")


# ------------------------------------------------------------- estimation

def _require_non_lattice(chain: ChainSpec) -> None:
    ev = detect_lattice(chain)
    if isinstance(ev, LatticeCertificate):
        raise LatticeWalk(f"lattice walk: span {ev.a_lat:.6g}, shift {ev.theta_lat:.6g}")


def _snapshots(chain, x, y, n_list, h, mode):
    return evolve_binned(chain, x, y, max(n_list), h, mode, snapshots=list(n_list))


def _dp_estimates(theorem, chain, inputs, n_list, h, sigma):
    x = chain.index(inputs.x)
    y = inputs.y
    psi = inputs.psi_vector(chain.d)
    if theorem == "SURVIVAL":
        curve = survival_curve(chain, x, y, max(n_list), h)
        return [math.sqrt(n) * curve[n] for n in n_list], {}
    if theorem == "CAPEBIS":
        curve = survival_curve(chain, x, y, max(n_list), h)
        return [n ** 1.5 * max(curve[n - 1] - curve[n], 0.0) for n in n_list], {}
    if theorem == "CAPE":
        return [n ** 1.5 * boundary_functional_expectation(chain, x, y, n, inputs.g, h)
                for n in n_list], {}
    if theorem == "STONE":
        laws = _snapshots(chain, x, y, n_list, h, FREE)
        out = []
        for n in n_list:
            z = inputs.z if inputs.t is None else inputs.t * sigma * math.sqrt(n)
            out.append(math.sqrt(n) * prob_interval(laws[n], z, inputs.a, psi))
        return out, {}
    laws = _snapshots(chain, x, y, n_list, h, KILLED)
    if theorem == "RAYLEIGH":
        ts = np.linspace(0.0, 5.0, 501)
        out = []
        for n in n_list:
            law = laws[n]
            cdf = law.cdf(ts * sigma * math.sqrt(n)) / law.alive_mass
            out.append(float(np.max(np.abs(cdf - AnalyticLaws.Phi_plus(ts)))))
        return out, {"t_grid": [0.0, 5.0, 501]}
    scale = {"GNLLT": 1.0, "LLTC": 1.5, "COROL": 1.5}[theorem]
    out = []
    for n in n_list:
        z = inputs.z if inputs.t is None else inputs.t * sigma * math.sqrt(n)
        out.append(n ** scale * prob_interval(laws[n], z, inputs.a, psi))
    return out, {}


def _mc_estimates(theorem, chain, inputs, n_list, V, N, seed, sigma):
    from .mc import constant_phi, h_transform_estimate, interval_phi

    x = chain.index(inputs.x)
    psi = inputs.psi_vector(chain.d)
    est, errs = [], []
    for n in n_list:
        if theorem == "SURVIVAL":
            e = h_transform_estimate(chain, V, x, inputs.y, n, constant_phi, N, seed)
            s = math.sqrt(n)
        elif theorem in ("GNLLT", "LLTC", "COROL"):
            z = inputs.z if inputs.t is None else inputs.t * sigma * math.sqrt(n)
            phi = interval_phi(z, inputs.a, V.dy, psi)
            e = h_transform_estimate(chain, V, x, inputs.y, n, phi, N, seed)
            s = n if theorem == "GNLLT" else n ** 1.5
        else:
            raise ValueError(f"engine mc does not support {theorem}")
        est.append(s * e.mean)
        errs.append(s * e.std_err)
    return est, {"std_err": errs, "N": N, "seed": seed}


def run_verification(theorem: str, chain: ChainSpec, inputs: TheoremInputs,
                     n_list: Sequence[int], engine: str = "dp", h: float | None = None,
                     tables: tuple[HarmonicTable, HarmonicTable] | None = None,
                     N: int = 100_000, seed: int | None = None) -> TheoremReport:
    theorem = theorem.upper()
    if theorem not in THEOREMS:
        raise ValueError(f"unknown theorem {theorem!r}")
    n_list = sorted(int(n) for n in n_list)
    if len(n_list) < 4:
        raise InsufficientN(f"need at least 4 values of n, got {len(n_list)}")
    if theorem == "CAPE" and inputs.g is None:
        raise ValueError("CAPE needs a boundary functional")
    if engine == "mc" and seed is None:
        raise ValueError("engine mc needs an explicit seed")
    prof = require_nondegenerate(chain)
    sigma = prof.sigma
    if theorem not in ("SURVIVAL", "RAYLEIGH"):
        _require_non_lattice(chain)
    h = default_h(chain) if h is None else h
    if tables is None:
        tables = build_tables(chain, dy=h)
    V, Vs = tables

    if engine == "dp":
        est, extra = _dp_estimates(theorem, chain, inputs, n_list, h, sigma)
    elif engine == "mc":
        est, extra = _mc_estimates(theorem, chain, inputs, n_list, V, N, seed, sigma)
    else:
        raise ValueError("engine must be 'dp' or 'mc'")

    lim = limit_constant(theorem, chain, V, Vs, inputs)
    tol = TOLERANCE[theorem]
    if theorem == "GNLLT":
        lims = [float(lim(inputs.z if inputs.t is None else inputs.t * sigma * math.sqrt(n), n))
                for n in n_list]
        limit_value = lims[-1]
    elif theorem == "STONE":
        peak = float(lim)
        prof_n = [AnalyticLaws.phi((inputs.z if inputs.t is None else inputs.t * sigma * math.sqrt(n))
                                   / (sigma * math.sqrt(n)) - inputs.y / (sigma * math.sqrt(n)))
                  * SQRT_2PI for n in n_list]
        lims = [peak * p for p in prof_n]
        limit_value = lims[-1]
        extra["peak"] = peak
    else:
        limit_value = float(lim)
        lims = [limit_value] * len(n_list)

    if theorem == "RAYLEIGH":
        ratios = []
        dev = list(est)
    elif theorem == "STONE":
        ratios = [e / l if l else float("nan") for e, l in zip(est, lims)]
        dev = [abs(e - l) / extra["peak"] for e, l in zip(est, lims)]
    else:
        ratios = [e / l if l else float("nan") for e, l in zip(est, lims)]
        dev = [abs(r - 1.0) for r in ratios]

    return TheoremReport(theorem=theorem, inputs=inputs.describe(), n_list=n_list,
                         estimates=[float(e) for e in est], limit_value=float(limit_value),
                         limit_values=[float(v) for v in lims], ratios=[float(r) for r in ratios],
                         deviations=[float(v) for v in dev], tolerance=tol,
                         verdict=verdict(dev, tol), engine=engine, h=h, extra=extra)
