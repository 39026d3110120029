import numpy as np
import pytest
from hypothesis import given, strategies as st

from condwalk.dist import (
    FREE,
    BoundaryFunctional,
    boundary_functional_expectation,
    conditioned_interval_expectation,
    enumerate_exact,
    evolve_binned,
    prob_interval,
    psi_star,
    survival_curve,
    survival_sequence,
    survives,
    tau_pmf,
)
from condwalk.chain import stationary_distribution
from condwalk.errors import BudgetExceeded

from conftest import random_chain


def test_survival_goldens_b(chain_b):
    assert abs(evolve_binned(chain_b, "1", 0.5, 1).alive_mass - 2 / 3) < 1e-14
    assert abs(evolve_binned(chain_b, "1", 0.5, 2).alive_mass - 4 / 9) < 1e-3
    assert abs(enumerate_exact(chain_b, "1", 0.5, 2, survives) - 4 / 9) < 1e-15


def test_tau_pmf_b(chain_b):
    pmf = tau_pmf(chain_b, "1", 0.5, 2, h=1e-3)
    assert abs(pmf[0] - 1 / 3) < 1e-12
    assert abs(pmf[1] - 2 / 9) < 1e-3


def test_survival_at_zero_steps(chain_b):
    assert survival_curve(chain_b, "1", 0.5, 0)[0] == 1.0
    assert evolve_binned(chain_b, "1", 0.5, 0).alive_mass == 1.0


def test_exact_survival_e(chains):
    E = chains["E"]
    got = [enumerate_exact(E, 0, 0.5, n, survives) for n in (1, 2, 3, 4)]
    assert np.allclose(got, [0.7, 0.39, 0.39, 0.3586], atol=1e-14)


def test_two_step_transition_e(chains):
    E = chains["E"]
    p = enumerate_exact(E, 0, 0.0, 2, lambda paths, walks: paths[:, -1] == 2)
    assert abs(p - 0.37) < 1e-15


def test_prob_interval_edge_cases(chain_b):
    law = evolve_binned(chain_b, "1", 0.5, 3)
    assert prob_interval(law, 1.0, 0.0) == 0.0
    assert abs(prob_interval(law, -100, 1000) - law.alive_mass) < 1e-14


def test_free_interval_b(chain_b):
    law = evolve_binned(chain_b, "1", 0.0, 1, mode=FREE)
    assert abs(prob_interval(law, 0.9, 0.2) - 1 / 3) < 1e-2


def test_conditioned_interval(chain_b):
    assert conditioned_interval_expectation(chain_b, "1", 0.5, 1, [0, 0, 0], 1.0, 1.0) == 0.0
    got = conditioned_interval_expectation(chain_b, "1", 0.5, 1, [1, 0, 0], 1.0, 1.0)
    assert abs(got - 1 / 3) < 1e-2
    law = evolve_binned(chain_b, "1", 0.5, 4)
    assert conditioned_interval_expectation(chain_b, "1", 0.5, 4, [1, 1, 1], 0.7, 0.9, law=law) \
        == prob_interval(law, 0.7, 0.9)


def test_snapshots_match_single_runs(chain_b):
    snaps = evolve_binned(chain_b, "1", 1.0, 12, snapshots=[0, 5, 12])
    assert snaps[0].alive_mass == 1.0
    one = evolve_binned(chain_b, "1", 1.0, 5)
    assert np.allclose(snaps[5].weights.sum(), one.weights.sum(), atol=1e-15)
    assert survival_sequence(chain_b, "1", 1.0, [5, 12]) == pytest.approx(
        [snaps[5].alive_mass, snaps[12].alive_mass], abs=1e-14)


def test_mass_balance(chain_b):
    law = evolve_binned(chain_b, "1", 1.0, 200)
    assert abs(law.alive_mass + law.killed_mass + law.truncated_mass - 1) < 1e-12
    assert law.truncated_mass <= 1e-10


def test_killed_law_has_no_mass_at_or_below_zero(chain_b):
    law = evolve_binned(chain_b, "1", 1.0, 30)
    assert law.weights[:, law.centers <= 0].sum() == 0.0


def test_boundary_functional_reduces_to_survival(chain_b):
    g = BoundaryFunctional(0, 0, lambda pre, suf, z: np.ones_like(z))
    n, h = 40, 0.01
    got = boundary_functional_expectation(chain_b, "1", 1.0, n, g, h=h)
    assert abs(got - survival_curve(chain_b, "1", 1.0, n, h=h)[n]) < 1e-12


def test_boundary_functional_against_enumeration(chains):
    E = chains["E"]
    z0 = 2.3
    g = BoundaryFunctional(1, 0, lambda pre, suf, z: (pre[0] == 1) * (z <= z0) * np.ones_like(z))

    def pred(paths, walks):
        return (paths[:, 0] == 1) & np.all(walks > 0, axis=1) & (walks[:, -1] <= z0)
    want = enumerate_exact(E, 0, 0.73, 6, pred)
    got = boundary_functional_expectation(E, 0, 0.73, 6, g, h=1e-3)
    assert abs(got - want) < 5e-3


def test_boundary_functional_with_suffix(chains):
    E = chains["E"]
    w = np.array([0.3, 1.0, 0.6])
    ws = np.array([1.0, 0.2, 0.5])
    g = BoundaryFunctional(1, 1, lambda pre, suf, z: w[pre[0]] * ws[suf[0]] * np.maximum(0, 2 - z) ** 2)

    def pred(paths, walks):
        alive = np.all(walks > 0, axis=1)
        return alive * w[paths[:, 0]] * ws[paths[:, -1]] * np.maximum(0, 2 - walks[:, -1]) ** 2
    want = enumerate_exact(E, 0, 0.73, 7, pred)
    got = boundary_functional_expectation(E, 0, 0.73, 7, g, h=1e-3)
    assert abs(got - want) < 1e-2 * max(want, 1e-2)


def test_decay_attestation():
    g = BoundaryFunctional(0, 1, lambda pre, suf, z: np.maximum(0, 1 - z) ** 2)
    assert g.attest_decay(2) <= 8.0 + 1e-12


def test_psi_star_has_unit_mean(chains):
    C = chains["C"]
    nu = stationary_distribution(C).nu
    for x in range(C.d):
        assert abs(nu @ psi_star(C, x) - 1) < 1e-14


def test_budgets(chain_b):
    with pytest.raises(BudgetExceeded):
        enumerate_exact(chain_b, 0, 1.0, 20, survives)
    with pytest.raises(BudgetExceeded):
        evolve_binned(chain_b, 0, 1.0, 100, budget=1000)


@given(st.integers(2, 4), st.integers(1, 6), st.floats(0.05, 3.0), st.integers(0, 2 ** 32 - 1))
def test_free_law_preserves_mass_and_mean(d, n, y, seed):
    c = random_chain(np.random.default_rng(seed), d)
    law = evolve_binned(c, 0, y, n, h=0.01, mode=FREE)
    assert abs(law.alive_mass - 1) < 1e-12
    # splitting to neighbouring centres keeps the first moment
    want = enumerate_exact(c, 0, y, n, lambda p, w: w[:, -1])
    got = float(law.marginal() @ law.centers)
    assert abs(got - want) < 1e-9 * max(1.0, abs(y) + n * np.abs(c.f).max())


@given(st.integers(2, 3), st.integers(1, 5), st.floats(0.05, 2.0), st.integers(0, 2 ** 32 - 1))
def test_dp_close_to_enumeration(d, n, y, seed):
    c = random_chain(np.random.default_rng(seed), d)
    h = 1e-3
    # stay clear of walk values that land exactly on the boundary
    want = enumerate_exact(c, 0, y, n, survives)
    lo = enumerate_exact(c, 0, y - n * h, n, survives)
    hi = enumerate_exact(c, 0, y + n * h, n, survives)
    got = evolve_binned(c, 0, y, n, h=h).alive_mass
    assert min(lo, want) - 1e-9 <= got <= max(hi, want) + 1e-9


@given(st.floats(0.1, 10.0), st.integers(0, 2 ** 32 - 1))
def test_scale_equivariance(lam, seed):
    c = random_chain(np.random.default_rng(seed), 3)
    h, y, n = 0.01, 0.7, 8
    a = evolve_binned(c, 0, y, n, h=h)
    b = evolve_binned(c.scaled(lam), 0, lam * y, n, h=lam * h)
    assert np.allclose(a.alive_mass, b.alive_mass, atol=1e-9)
    assert abs(prob_interval(a, 0.3, 0.4) - prob_interval(b, 0.3 * lam, 0.4 * lam)) < 1e-9
