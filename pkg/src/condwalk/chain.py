"""Finite Markov chains carrying a real observable: the triple (states, P, f).

All matrices are dense row-major numpy arrays; chains are expected to be
small (d up to about 100).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateLabel,
    NegativeEntry,
    NotCentered,
    NotPrimitive,
    RowSumError,
    ValidationError,
)

ROW_SUM_TOL = 1e-9
CENTER_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ChainSpec:
    states: tuple[str, ...]
    transition: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        P = np.array(self.transition, dtype=float)
        f = np.array(self.f, dtype=float)
        P.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "states", tuple(str(s) for s in self.states))

    @property
    def d(self) -> int:
        return len(self.states)

    @property
    def P(self) -> np.ndarray:
        return self.transition

    def index(self, state) -> int:
        """Accept a label or an integer position."""
        if isinstance(state, (int, np.integer)) and str(state) not in self.states:
            if not 0 <= state < self.d:
                raise KeyError(state)
            return int(state)
        return self.states.index(str(state))

    def with_f(self, f) -> "ChainSpec":
        return ChainSpec(self.states, self.transition, np.asarray(f, dtype=float))

    def scaled(self, lam: float) -> "ChainSpec":
        return self.with_f(lam * self.f)

    def edges(self) -> list[tuple[int, int]]:
        rows, cols = np.nonzero(self.transition > 0)
        return list(zip(rows.tolist(), cols.tolist()))

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.transition).tobytes())
        h.update(np.ascontiguousarray(self.f).tobytes())
        return h.hexdigest()[:16]

    def to_document(self) -> dict:
        return {
            "states": list(self.states),
            "transition": self.transition.tolist(),
            "f": self.f.tolist(),
        }


@dataclass(frozen=True)
class StationaryDist:
    nu: np.ndarray

    def mean(self, g) -> float:
        return float(np.dot(self.nu, g))


@dataclass
class HypothesisReport:
    primitive: bool
    k0: int | None
    centered: bool
    nu_f: float
    nondegenerate: bool
    certificate: Any = None
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.primitive and self.centered and self.nondegenerate


def _as_float(v) -> float:
    if isinstance(v, bool):
        raise ValidationError(f"boolean is not a number: {v!r}")
    try:
        x = float(v)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"not a number: {v!r}") from exc
    if not np.isfinite(x):
        raise ValidationError(f"non-finite value: {v!r}")
    return x


def validate_spec(raw: Mapping[str, Any]) -> ChainSpec:
    """Build a ChainSpec from a parsed chain document, checking every invariant.

    Rows within ``ROW_SUM_TOL`` of 1 are renormalised so the stored matrix is
    stochastic to rounding.
    """
    try:
        states = list(raw["states"])
        rows = [[_as_float(v) for v in row] for row in raw["transition"]]
        f = [_as_float(v) for v in raw["f"]]
    except KeyError as exc:
        raise ValidationError(f"missing key {exc.args[0]!r}") from exc
    except TypeError as exc:
        raise ValidationError(f"malformed document: {exc}") from exc

    d = len(states)
    if d < 2:
        raise DimensionMismatch(f"need at least 2 states, got {d}")
    if len(set(map(str, states))) != d:
        raise DuplicateLabel(f"state labels not unique: {states}")
    if len(rows) != d or any(len(r) != d for r in rows):
        raise DimensionMismatch(f"transition must be {d}x{d}")
    if len(f) != d:
        raise DimensionMismatch(f"f has length {len(f)}, expected {d}")

    P = np.array(rows)
    if (P < 0).any():
        i, j = np.argwhere(P < 0)[0]
        raise NegativeEntry(f"P[{i},{j}] = {P[i, j]} < 0")
    if (P > 1).any():
        i, j = np.argwhere(P > 1)[0]
        raise RowSumError(f"P[{i},{j}] = {P[i, j]} > 1")
    sums = P.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
    if bad.size:
        raise RowSumError(f"row {bad[0]} sums to {sums[bad[0]]!r}")
    P = P / sums[:, None]
    return ChainSpec(tuple(map(str, states)), P, np.array(f))


def load_chain(path: str | Path) -> ChainSpec:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: {exc}") from exc
    return validate_spec(raw)


def save_chain(chain: ChainSpec, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(chain.to_document(), fh, indent=2)
        fh.write("\n")


def from_matrix(P, f, states: Sequence[str] | None = None) -> ChainSpec:
    P = np.asarray(P, dtype=float)
    if states is None:
        states = [str(i + 1) for i in range(P.shape[0])]
    return validate_spec({"states": list(states), "transition": P.tolist(),
                          "f": list(np.asarray(f, dtype=float))})


def primitivity_index(chain: ChainSpec) -> int | None:
    """Smallest k with P^k entrywise positive, searched up to Wielandt's bound."""
    A = (chain.transition > 0).astype(np.int64)
    d = chain.d
    M = A.copy()
    for k in range(1, (d - 1) ** 2 + 2):
        if M.all():
            return k
        M = ((M @ A) > 0).astype(np.int64)
    return None


def _stationary_solve(P: np.ndarray) -> np.ndarray:
    d = P.shape[0]
    A = P.T - np.eye(d)
    A[-1, :] = 1.0
    b = np.zeros(d)
    b[-1] = 1.0
    return np.linalg.solve(A, b)


def _stationary_power(P: np.ndarray, tol: float = 1e-15, max_iter: int = 1_000_000) -> np.ndarray:
    d = P.shape[0]
    nu = np.full(d, 1.0 / d)
    # squaring accelerates slowly mixing chains
    Q = P.copy()
    for _ in range(max_iter):
        new = nu @ Q
        new /= new.sum()
        if np.max(np.abs(new - nu)) <= tol:
            return new
        nu = new
        Q = Q @ Q
        Q /= Q.sum(axis=1, keepdims=True)
    return nu


def stationary_distribution(chain: ChainSpec) -> StationaryDist:
    if primitivity_index(chain) is None:
        raise NotPrimitive("transition matrix is not primitive")
    P = chain.transition
    nu = _stationary_solve(P)
    # one refinement step cleans up the solve's rounding
    nu = nu @ P
    nu = nu / nu.sum()
    check = _stationary_power(P)
    if np.max(np.abs(nu - check)) > 1e-10:
        raise NotPrimitive("linear-solve and power-iteration stationary laws disagree")
    nu.setflags(write=False)
    return StationaryDist(nu)


def center_function(chain: ChainSpec) -> ChainSpec:
    nu = stationary_distribution(chain).nu
    f = chain.f - float(nu @ chain.f)
    # second pass absorbs the cancellation error of the first
    f = f - float(nu @ f)
    return chain.with_f(f)


def require_centered(chain: ChainSpec, nu: np.ndarray | None = None) -> float:
    if nu is None:
        nu = stationary_distribution(chain).nu
    m = float(nu @ chain.f)
    if abs(m) > CENTER_TOL:
        raise NotCentered(f"nu(f) = {m:.3e}")
    return m


def matrix_power(chain: ChainSpec, n: int) -> np.ndarray:
    return np.linalg.matrix_power(chain.transition, n)


def check_hypotheses(chain: ChainSpec) -> HypothesisReport:
    from .spectral import detect_degeneracy

    k0 = primitivity_index(chain)
    if k0 is None:
        return HypothesisReport(False, None, False, float("nan"), False,
                                notes=["P is not primitive"])
    nu = stationary_distribution(chain).nu
    m = float(nu @ chain.f)
    centered = abs(m) <= CENTER_TOL
    notes = []
    if not centered:
        notes.append(f"f is not centred: nu(f) = {m:.6g}")
    cert = detect_degeneracy(chain)
    if cert is not None:
        notes.append("f is a coboundary plus constant on the support graph: sigma^2 = 0")
    return HypothesisReport(True, k0, centered, m, cert is None, cert, notes)
