import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from condwalk.dist import BoundaryFunctional
from condwalk.errors import Degenerate, InsufficientN, LatticeWalk, TableMismatch
from condwalk.verify import (
    TOLERANCE,
    AnalyticLaws,
    TheoremInputs,
    integrate_on_grid,
    limit_constant,
    run_verification,
    verdict,
)


def test_analytic_laws_normalised():
    assert integrate.quad(AnalyticLaws.phi, -np.inf, np.inf)[0] == pytest.approx(1, abs=1e-12)
    assert integrate.quad(AnalyticLaws.phi_plus, 0, np.inf)[0] == pytest.approx(1, abs=1e-12)
    assert integrate.quad(lambda u: AnalyticLaws.phi_sigma(u, 2.5), -np.inf, np.inf)[0] \
        == pytest.approx(1, abs=1e-12)
    assert AnalyticLaws.Phi_plus(50.0) == 1.0
    assert AnalyticLaws.Phi_plus(-1.0) == 0.0
    assert AnalyticLaws.phi_plus(-1.0) == 0.0


def test_rayleigh_median():
    assert AnalyticLaws.Phi_plus(math.sqrt(2 * math.log(2))) == pytest.approx(0.5, abs=1e-15)


@given(st.floats(0.0, 8.0))
def test_rayleigh_cdf_is_integral_of_density(t):
    got = integrate.quad(AnalyticLaws.phi_plus, 0, t)[0]
    assert abs(got - AnalyticLaws.Phi_plus(t)) < 1e-12


@pytest.mark.parametrize("dev, want", [
    ([0.3, 0.2, 0.1, 0.04], "converging"),
    ([0.3, 0.2, 0.01, 0.04], "inconclusive"),
    ([0.01, 0.1, 0.2, 0.3], "failed"),
    ([0.3, 0.2, 0.15, 0.12], "inconclusive"),
    ([0.1, 0.1, 0.1, 0.05], "converging"),
])
def test_verdict_rule(dev, want):
    assert verdict(dev, 0.05) == want


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-5, 5), st.floats(0, 4))
def test_grid_quadrature_exact_for_linear(a, b, lo, width):
    got = integrate_on_grid(lambda z: a * z + b, lo, lo + width, 0.01)
    want = a * ((lo + width) ** 2 - lo ** 2) / 2 + b * width
    assert abs(got - want) < 1e-9 * max(1.0, abs(want))


def test_table_mismatch(chains, tables_b):
    V, Vs = tables_b
    with pytest.raises(TableMismatch):
        limit_constant("SURVIVAL", chains["E"], V, Vs, TheoremInputs())
    with pytest.raises(TableMismatch):
        limit_constant("COROL", chains["B"], V, V, TheoremInputs())


def test_constant_identities(chain_b, tables_b):
    V, Vs = tables_b
    inp = TheoremInputs(x="1", y=1.0, z=0.5, a=0.5)
    lltc = limit_constant("LLTC", chain_b, V, Vs, inp)
    corol = limit_constant("COROL", chain_b, V, Vs, inp)
    assert abs(lltc - corol) <= 1e-8
    assert limit_constant("COROL", chain_b, V, Vs, TheoremInputs(x="1", y=1.0, z=0.5, a=0.0)) == 0.0
    assert limit_constant("SURVIVAL", chain_b, V, Vs, TheoremInputs(x="1", y=-5.0)) == 0.0


def test_frozen_constants_b(chain_b, tables_b):
    V, Vs = tables_b
    inp = TheoremInputs(x="1", y=1.5, z=0.5, a=0.5)
    assert limit_constant("CAPEBIS", chain_b, V, Vs, inp) == pytest.approx(0.5969628895512912, rel=1e-9)
    assert limit_constant("SURVIVAL", chain_b, V, Vs, inp) == pytest.approx(1.1939191813065144, rel=1e-9)
    assert limit_constant("COROL", chain_b, V, Vs, inp) == pytest.approx(0.2528187080516895, rel=1e-9)


def test_psi_weighting_is_linear(chain_b, tables_b):
    V, Vs = tables_b
    base = TheoremInputs(x="1", y=1.0, z=0.5, a=0.5)
    parts = [limit_constant("LLTC", chain_b, V, Vs,
                            TheoremInputs(x="1", y=1.0, z=0.5, a=0.5, psi=np.eye(3)[i]))
             for i in range(3)]
    assert sum(parts) == pytest.approx(limit_constant("LLTC", chain_b, V, Vs, base), rel=1e-12)


def test_cape_needs_g(chain_b, tables_b):
    with pytest.raises(ValueError):
        limit_constant("CAPE", chain_b, *tables_b, TheoremInputs())


def test_run_verification_guards(chains, tables_b):
    B = chains["B"]
    with pytest.raises(InsufficientN):
        run_verification("SURVIVAL", B, TheoremInputs(), [8, 16, 32], tables=tables_b)
    with pytest.raises(ValueError):
        run_verification("SURVIVAL", B, TheoremInputs(), [8, 16, 32, 64], engine="mc", tables=tables_b)
    with pytest.raises(ValueError):
        run_verification("NOPE", B, TheoremInputs(), [8, 16, 32, 64], tables=tables_b)
    with pytest.raises(LatticeWalk):
        run_verification("LLTC", chains["A"], TheoremInputs(), [8, 16, 32, 64])
    with pytest.raises(Degenerate):
        run_verification("SURVIVAL", chains["D"], TheoremInputs(), [8, 16, 32, 64])


def test_survival_report_fields(chain_b, tables_b):
    rep = run_verification("SURVIVAL", chain_b, TheoremInputs(x="1", y=1.0),
                           [64, 128, 256, 512], tables=tables_b)
    assert rep.theorem == "SURVIVAL" and rep.tolerance == TOLERANCE["SURVIVAL"]
    assert len(rep.estimates) == len(rep.ratios) == len(rep.deviations) == 4
    assert rep.verdict in ("converging", "inconclusive", "failed")
    assert all(abs(r - 1) < 0.1 for r in rep.ratios)
    d = rep.to_dict()
    assert d["inputs"]["y"] == 1.0
    assert len(rep.rows()) == 4


def test_mc_engine_agrees_with_dp(chain_b, tables_b):
    inp = TheoremInputs(x="1", y=1.0)
    n = [16, 32, 48, 64]
    dp = run_verification("SURVIVAL", chain_b, inp, n, tables=tables_b)
    mc = run_verification("SURVIVAL", chain_b, inp, n, engine="mc", N=40_000, seed=3, tables=tables_b)
    for e_dp, e_mc, se in zip(dp.estimates, mc.estimates, mc.extra["std_err"]):
        assert abs(e_dp - e_mc) <= 4 * se


def test_cape_constant_scales_with_g(chain_b, tables_b):
    g1 = BoundaryFunctional(1, 1, lambda pre, suf, z: np.maximum(0, 1 - z) ** 2)
    g2 = BoundaryFunctional(1, 1, lambda pre, suf, z: 3 * np.maximum(0, 1 - z) ** 2)
    c1 = limit_constant("CAPE", chain_b, *tables_b, TheoremInputs(x="1", y=1.0, g=g1))
    c2 = limit_constant("CAPE", chain_b, *tables_b, TheoremInputs(x="1", y=1.0, g=g2))
    assert c1 > 0
    assert c2 == pytest.approx(3 * c1, rel=1e-12)
