import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from condwalk.dist import evolve_binned, prob_interval, survival_curve
from condwalk.errors import NumericalWeightBlowup, ZeroHarmonic
from condwalk.mc import (
    Accumulator,
    TransformLog,
    constant_phi,
    h_transform_estimate,
    harmonic_phi,
    interval_phi,
    simulate_paths,
    stream,
)


def test_streams_are_reproducible_and_distinct():
    a = stream(7, 0).random(5)
    assert np.array_equal(a, stream(7, 0).random(5))
    assert not np.array_equal(a, stream(7, 1).random(5))
    assert not np.array_equal(a, stream(8, 0).random(5))


def test_zero_steps(chain_b):
    s = simulate_paths(chain_b, "1", 0.5, 0, 1000, seed=1)
    assert s.survival.mean == 1.0 and s.survival.std_err == 0.0


def test_plain_survival_b(chain_b):
    N = 1_000_000
    s = simulate_paths(chain_b, "1", 0.5, 2, N, seed=2024, keep_paths=False)
    p = 4 / 9
    assert abs(s.survival.mean - p) <= 4 * math.sqrt(p * (1 - p) / N)


def test_fixed_seed_is_deterministic(chain_b):
    a = simulate_paths(chain_b, "1", 1.0, 20, 5000, seed=11, workers=3)
    b = simulate_paths(chain_b, "1", 1.0, 20, 5000, seed=11, workers=3)
    assert a.survival == b.survival
    assert np.array_equal(a.values, b.values)


def test_empirical_law_mass(chain_b):
    s = simulate_paths(chain_b, "1", 1.0, 10, 20000, seed=5)
    h = s.empirical_law(3, np.linspace(0, 40, 81))
    assert abs(h.sum() - s.survival.mean) < 1e-12


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40), st.integers(1, 5))
def test_accumulator_merge_is_grouping_free(vals, k):
    v = np.array(vals)
    whole = Accumulator()
    whole.add(v)
    parts = Accumulator()
    for chunk in np.array_split(v, k):
        a = Accumulator()
        a.add(chunk)
        parts = parts.merge(a)
    assert parts.count == whole.count
    assert math.isclose(parts.total, whole.total, rel_tol=1e-12, abs_tol=1e-9)
    assert math.isclose(parts.total_sq, whole.total_sq, rel_tol=1e-12, abs_tol=1e-9)


def test_phi_v_is_exact(chain_b, tables_b):
    V = tables_b[0]
    est = h_transform_estimate(chain_b, V, "1", 1.0, 50, harmonic_phi(V), 2000, seed=3)
    assert est.mean == pytest.approx(V("1", 1.0), rel=1e-12)
    assert est.std_err < 1e-12 * est.mean


def test_transform_survival_matches_dp(chain_b, tables_b):
    V = tables_b[0]
    est = h_transform_estimate(chain_b, V, "1", 0.5, 64, constant_phi, 100_000, seed=9)
    dp = survival_curve(chain_b, "1", 0.5, 64, h=V.dy)[64]
    assert abs(est.mean - dp) <= 4 * est.std_err


def test_interval_phi_matches_dp(chain_b, tables_b):
    V = tables_b[0]
    n, z, a = 64, 4.0, 3.0
    phi = interval_phi(z, a, h=V.dy)
    est = h_transform_estimate(chain_b, V, "1", 1.0, n, phi, 100_000, seed=10)
    dp = prob_interval(evolve_binned(chain_b, "1", 1.0, n, h=V.dy), z, a)
    assert abs(est.mean - dp) <= 4 * est.std_err


def test_several_phis_share_paths(chain_b, tables_b):
    V = tables_b[0]
    one = h_transform_estimate(chain_b, V, "1", 1.0, 16, constant_phi, 5000, seed=4)
    both = h_transform_estimate(chain_b, V, "1", 1.0, 16, [constant_phi, harmonic_phi(V)], 5000, seed=4)
    assert both[0] == one


def test_workers_are_reproducible(chain_b, tables_b):
    V = tables_b[0]
    a = h_transform_estimate(chain_b, V, "1", 1.0, 16, constant_phi, 4000, seed=4, workers=4)
    b = h_transform_estimate(chain_b, V, "1", 1.0, 16, constant_phi, 4000, seed=4, workers=4)
    assert a == b


def test_zero_harmonic(chain_b, tables_b):
    with pytest.raises(ZeroHarmonic):
        h_transform_estimate(chain_b, tables_b[0], "1", -5.0, 4, constant_phi, 10, seed=1)


def test_row_error_guard(chain_b, tables_b):
    with pytest.raises(NumericalWeightBlowup):
        h_transform_estimate(chain_b, tables_b[0], "1", 1.0, 4, constant_phi, 10, seed=1,
                             row_tol=1e-30)


def test_grid_walk_needs_a_node(chain_b, tables_b):
    with pytest.raises(ValueError):
        h_transform_estimate(chain_b, tables_b[0], "1", 1.005, 4, constant_phi, 10, seed=1)


def test_continuous_walk_records_renormalisation(chain_b, tables_b):
    log = TransformLog()
    est = h_transform_estimate(chain_b, tables_b[0], "1", 1.0, 32, constant_phi, 20000, seed=6,
                               walk="continuous", diagnostics=log)
    assert log.steps == 32
    assert log.max_row_error > 0
    assert 0 < est.mean < 1


def test_interval_phi_weights():
    phi = interval_phi(1.0, 2.0, psi=[0.0, 2.0])
    out = phi(np.array([0, 1, 1, 1]), np.array([1.5, 1.5, 0.5, 3.0]))
    assert np.array_equal(out, [0.0, 2.0, 0.0, 2.0])
    binned = interval_phi(1.0, 2.0, h=1.0)
    assert np.allclose(binned(np.zeros(3, int), np.array([1.0, 2.0, 3.0])), [0.5, 1.0, 0.5])
