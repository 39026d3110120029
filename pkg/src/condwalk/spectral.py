"""Fourier-perturbed transfer operator, asymptotic variance, and the
degeneracy / lattice decision procedures.

``P_t(x, x') = P(x, x') exp(i t f(x'))``; ``r_t`` is its spectral radius and
``lambda_t`` the eigenvalue branch through 1 at t = 0.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .chain import ChainSpec, require_centered, stationary_distribution
from .errors import (
    AmbiguousScan,
    BranchLoss,
    Degenerate,
    NonConvergence,
    SingularSystem,
)

TWO_PI = 2.0 * math.pi
COCYCLE_TOL = 1e-9
PHASE_TOL = 1e-8
NEAR_ONE = 1e-6


@dataclass
class SpectralProfile:
    sigma2: float
    theta: np.ndarray
    sigma2_series: float | None = None
    series_terms: int = 0
    r_curve: list[tuple[float, float]] = field(default_factory=list)
    lambda_curve: list[tuple[float, complex]] = field(default_factory=list)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


@dataclass(frozen=True)
class DegeneracyCertificate:
    h: np.ndarray
    m: float
    residual: float


@dataclass(frozen=True)
class LatticeCertificate:
    t_star: float
    theta_lat: float
    a_lat: float
    phases: np.ndarray
    residual: float
    r_at_t: float


@dataclass(frozen=True)
class NonLatticeEvidence:
    max_r: float
    t_at_max: float
    t_range: tuple[float, float]


def perturbed_matrix(chain: ChainSpec, t: float) -> np.ndarray:
    if t == 0:
        return chain.transition.astype(complex)
    return chain.transition * np.exp(1j * t * chain.f)[None, :]


def spectral_radius(M: np.ndarray, tol: float = 1e-13, max_iter: int = 100_000) -> float:
    M = np.asarray(M)
    if M.shape[0] <= 64:
        r = float(np.max(np.abs(np.linalg.eigvals(M))))
    else:
        r = _radius_by_powers(M, tol, max_iter)
    bound = float(np.max(np.abs(M).sum(axis=1)))
    return min(r, bound + 1e-9)


def _radius_by_powers(M, tol, max_iter):
    # Gelfand's formula on repeated squares: ||M^(2^j)||^(2^-j) -> r with error
    # O(j 2^-j), so a few dozen normalised squarings suffice.
    nrm = float(np.linalg.norm(M, 2))
    if nrm == 0:
        return 0.0
    A = M / nrm
    log_r, scale = math.log(nrm), 1.0
    prev = nrm
    for _ in range(min(max_iter, 200)):
        A = A @ A
        s = float(np.linalg.norm(A, 2))
        if s == 0:
            return 0.0
        A /= s
        scale *= 2.0
        log_r += math.log(s) / scale
        est = math.exp(log_r)
        if abs(est - prev) < tol * max(1.0, est):
            return est
        prev = est
    raise NonConvergence("repeated squaring did not settle")


def r_t(chain: ChainSpec, t: float) -> float:
    return spectral_radius(perturbed_matrix(chain, t))


def poisson_solution(chain: ChainSpec, nu: np.ndarray | None = None) -> np.ndarray:
    """Theta with (I - P) Theta = f and nu(Theta) = 0 (f must be centred)."""
    if nu is None:
        nu = stationary_distribution(chain).nu
    d = chain.d
    A = np.eye(d) - chain.transition + np.outer(np.ones(d), nu)
    try:
        theta = np.linalg.solve(A, chain.f)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("I - P + Pi is singular") from exc
    resid = np.max(np.abs(theta - chain.transition @ theta - chain.f))
    if resid > 1e-10 * max(1.0, np.max(np.abs(chain.f))):
        raise SingularSystem(f"Poisson residual {resid:.2e}")
    return theta


def _series_variance(chain: ChainSpec, nu: np.ndarray, tail_tol: float = 1e-13,
                     max_terms: int = 1_000_000) -> tuple[float, int]:
    P, f = chain.transition, chain.f
    # decay rate of P^n on the nu-centred subspace
    rho = float(np.max(np.abs(np.linalg.eigvals(P - np.outer(np.ones(chain.d), nu)))))
    rho = min(rho, 1 - 1e-12)
    total = float(nu @ (f * f))
    g = f.copy()
    fnorm = float(np.sum(nu * np.abs(f)))
    for n in range(1, max_terms + 1):
        g = P @ g
        total += 2.0 * float(nu @ (f * g))
        tail = 2.0 * fnorm * float(np.max(np.abs(g))) * rho / (1.0 - rho)
        if tail < tail_tol:
            return total, n
    raise NonConvergence("variance series did not reach its tail bound")


def asymptotic_variance(chain: ChainSpec) -> SpectralProfile:
    nu = stationary_distribution(chain).nu
    require_centered(chain, nu)
    theta = poisson_solution(chain, nu)
    f = chain.f
    sigma2 = float(nu @ (f * f) + 2.0 * nu @ (f * (chain.transition @ theta)))
    series, terms = _series_variance(chain, nu)
    if abs(sigma2 - series) > 1e-10 * max(1.0, abs(sigma2)):
        raise SingularSystem(f"Poisson sigma2 {sigma2!r} vs series {series!r}")
    if sigma2 < 0 and sigma2 > -1e-10:
        sigma2 = 0.0
    return SpectralProfile(sigma2=sigma2, theta=theta, sigma2_series=series,
                           series_terms=terms)


def require_nondegenerate(chain: ChainSpec) -> SpectralProfile:
    prof = asymptotic_variance(chain)
    if prof.sigma2 <= 1e-10:
        raise Degenerate(f"sigma^2 = {prof.sigma2:.3e}")
    return prof


def _bfs_tree(chain: ChainSpec, root: int = 0):
    """Parent map, depth and visit order of a BFS tree on the support digraph."""
    P = chain.transition
    parent = {root: None}
    depth = {root: 0}
    order = [root]
    queue = deque([root])
    while queue:
        x = queue.popleft()
        for xp in np.flatnonzero(P[x] > 0).tolist():
            if xp not in parent:
                parent[xp] = x
                depth[xp] = depth[x] + 1
                order.append(xp)
                queue.append(xp)
    return parent, depth, order


def detect_degeneracy(chain: ChainSpec) -> DegeneracyCertificate | None:
    """Look for h, m with f(x') = h(x) - h(x') + m on every edge."""
    nu = stationary_distribution(chain).nu
    f = chain.f
    m = float(nu @ f)
    parent, _, order = _bfs_tree(chain)
    h = np.zeros(chain.d)
    for x in order[1:]:
        h[x] = h[parent[x]] - f[x] + m
    resid = 0.0
    for x, xp in chain.edges():
        resid = max(resid, abs(f[xp] - (h[x] - h[xp] + m)))
    if resid > COCYCLE_TOL * max(1.0, float(np.max(np.abs(f)))):
        return None
    return DegeneracyCertificate(h=h, m=m, residual=resid)


def lattice_grid(t_max: float, grid: int) -> np.ndarray:
    n_log = max(8, grid // 8)
    logpart = np.geomspace(1e-3, 0.1, n_log, endpoint=False)
    linpart = np.linspace(0.1, t_max, grid - n_log)
    return np.concatenate([logpart, linpart])


def _golden_max(fun, a: float, b: float, tol: float = 1e-12, max_iter: int = 200):
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = fun(d)
    t = (a + b) / 2
    return t, fun(t)


def _phase_residual(chain: ChainSpec, t: float, theta: float, phases: np.ndarray) -> float:
    f = chain.f
    worst = 0.0
    for x, xp in chain.edges():
        lhs = phases[xp] * np.exp(1j * t * f[xp])
        rhs = phases[x] * np.exp(1j * t * theta)
        worst = max(worst, abs(lhs - rhs))
    return worst


def certify_lattice(chain: ChainSpec, t_approx: float) -> LatticeCertificate | None:
    """Try to build the unimodular eigenfunction of P_t near ``t_approx``.

    Phases alpha and the constant c = t*theta are propagated along a BFS tree
    with c unknown; a non-tree edge pins c, the winding numbers of all edges
    are read off, and (t, c, alpha) are then solved exactly by least squares
    with those integers fixed.
    """
    f = chain.f
    parent, depth, order = _bfs_tree(chain)
    F = {order[0]: 0.0}
    for x in order[1:]:
        F[x] = F[parent[x]] + f[x]
    edges = chain.edges()
    tree = {(parent[x], x) for x in order[1:]}

    candidates = []
    for x, xp in edges:
        if (x, xp) in tree:
            continue
        k = depth[x] + 1 - depth[xp]
        if k == 0:
            continue
        rhs = t_approx * (F[x] + f[xp] - F[xp])
        candidates = [(rhs + TWO_PI * j) / k for j in range(abs(k))]
        break
    if not candidates:
        candidates = [0.0]

    d = chain.d
    for c in candidates:
        alpha = np.array([depth[x] * c - t_approx * F[x] for x in range(d)])
        wind = []
        loose = True
        for x, xp in edges:
            u = (alpha[xp] + t_approx * f[xp] - alpha[x] - c) / TWO_PI
            k = round(u)
            if abs(u - k) > 1e-2:
                loose = False
                break
            wind.append(k)
        if not loose or not any(wind):
            continue
        # unknowns: t, c, alpha_1..alpha_{d-1} (alpha_0 = 0)
        A = np.zeros((len(edges), d + 1))
        b = TWO_PI * np.array(wind, dtype=float)
        for row, (x, xp) in enumerate(edges):
            A[row, 0] = f[xp]
            A[row, 1] = -1.0
            if xp:
                A[row, 1 + xp] += 1.0
            if x:
                A[row, 1 + x] -= 1.0
        sol, *_ = np.linalg.lstsq(A, b, rcond=None)
        t_star = abs(float(sol[0]))
        if t_star <= 0:
            continue
        sgn = 1.0 if sol[0] > 0 else -1.0
        c_star = sgn * float(sol[1])
        alpha_star = np.concatenate([[0.0], sgn * sol[2:]])
        a = TWO_PI / t_star
        theta = c_star / t_star
        # canonical shift in (-a, 0]
        theta = theta - a * math.ceil(theta / a)
        if theta <= -a:
            theta += a
        phases = np.exp(1j * alpha_star)
        resid = _phase_residual(chain, t_star, theta, phases)
        r = r_t(chain, t_star)
        if resid <= PHASE_TOL and abs(r - 1.0) <= PHASE_TOL:
            return LatticeCertificate(t_star, theta, a, phases, resid, r)
    return None


def detect_lattice(chain: ChainSpec, t_max: float = 10.0, grid: int = 2048,
                   evidence_from: float = 0.05):
    """Scan r_t on (0, t_max]; return a LatticeCertificate or NonLatticeEvidence."""
    ts = lattice_grid(t_max, grid)
    rs = np.array([r_t(chain, t) for t in ts])
    fun = lambda t: r_t(chain, t)  # noqa: E731

    peaks = []
    for i in range(1, len(ts)):
        left = rs[i - 1]
        right = rs[i + 1] if i + 1 < len(ts) else -np.inf
        if rs[i] >= left and rs[i] >= right:
            lo = ts[i - 1]
            hi = ts[i + 1] if i + 1 < len(ts) else ts[i]
            peaks.append((lo, hi))

    ambiguous = []
    refined = []
    for lo, hi in peaks:
        t, r = _golden_max(fun, lo, hi)
        refined.append((t, r))
        if r > 1.0 - NEAR_ONE:
            cert = certify_lattice(chain, t)
            if cert is not None:
                return cert
            ambiguous.append((t, r))
    if ambiguous:
        t, r = ambiguous[0]
        raise AmbiguousScan(f"r_t = {r:.10f} at t = {t:.6f} but no phase certificate")

    cands = [(r, t) for t, r in zip(ts, rs) if t >= evidence_from]
    cands += [(r, t) for t, r in refined if t >= evidence_from]
    best_r, best_t = max(cands)
    return NonLatticeEvidence(max_r=float(best_r), t_at_max=float(best_t),
                              t_range=(evidence_from, t_max))


def leading_eigenvalue_branch(chain: ChainSpec, ts, max_step: float = 0.01,
                              min_step: float = 1e-7) -> list[complex]:
    """lambda_t for each t in ``ts``, continued from lambda_0 = 1."""
    ts = [float(t) for t in ts]
    order = sorted(range(len(ts)), key=lambda i: abs(ts[i]))
    out = [0j] * len(ts)
    lam, t_cur = 1.0 + 0j, 0.0
    for i in order:
        target = abs(ts[i])
        while t_cur < target:
            step = min(max_step, target - t_cur)
            while True:
                ev = np.linalg.eigvals(perturbed_matrix(chain, t_cur + step))
                dist = np.sort(np.abs(ev - lam))
                if len(dist) == 1 or dist[1] - dist[0] > 1e-8:
                    break
                if dist[1] <= 1e-10 or step <= min_step:
                    raise BranchLoss(f"two eigenvalues within {dist[1]:.1e} of lambda at t={t_cur + step}")
                step /= 2
            lam = ev[np.argmin(np.abs(ev - lam))]
            t_cur += step
        out[i] = lam if ts[i] >= 0 else np.conj(lam)
    return out


def lambda_expansion_check(chain: ChainSpec, t_list, sigma2: float | None = None,
                           strict: bool = False):
    """[(t, lambda_t, |lambda_t - 1 + t^2 sigma^2 / 2|)] for each t."""
    if sigma2 is None:
        sigma2 = asymptotic_variance(chain).sigma2
    lams = leading_eigenvalue_branch(chain, t_list)
    rows = []
    for t, lam in zip(t_list, lams):
        resid = abs(lam - 1.0 + 0.5 * t * t * sigma2) if t else 0.0
        rows.append((float(t), complex(lam), float(resid)))
    if strict and not cubic_order_ok(rows):
        raise NonConvergence("lambda_t residual is not of cubic order")
    return rows


def cubic_ratios(rows) -> np.ndarray:
    return np.array([r / t ** 3 for t, _, r in rows if t > 0])


def cubic_order_ok(rows, factor: float = 2.0) -> bool:
    q = cubic_ratios(rows)
    med = float(np.median(q))
    return bool(med > 0 and np.all(q <= factor * med) and np.all(q >= med / factor))


def r_curve(chain: ChainSpec, ts) -> list[tuple[float, float]]:
    return [(float(t), r_t(chain, t)) for t in ts]
