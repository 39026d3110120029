import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from condwalk.chain import (
    ChainSpec,
    center_function,
    check_hypotheses,
    from_matrix,
    load_chain,
    primitivity_index,
    require_centered,
    save_chain,
    stationary_distribution,
    validate_spec,
)
from condwalk.errors import (
    DimensionMismatch,
    DuplicateLabel,
    NegativeEntry,
    NotCentered,
    NotPrimitive,
    RowSumError,
    ValidationError,
)

from conftest import CHAINS, random_chain


def doc(P, f, states=None):
    return {"states": states or [str(i) for i in range(len(P))], "transition": P, "f": f}


def test_chain_a_document_is_valid():
    c = validate_spec(doc([[0.5, 0.5], [0.5, 0.5]], [1, -1]))
    assert c.d == 2
    assert np.allclose(c.transition.sum(axis=1), 1.0)


@pytest.mark.parametrize("raw, exc", [
    (doc([[0.7, 0.4], [0.5, 0.5]], [1, -1]), RowSumError),
    (doc([[0.5, 0.5], [0.5, 0.5]], [1, -1, 0], ["a", "b", "c"]), DimensionMismatch),
    (doc([[0.5, 0.5], [0.5, 0.5]], [1, -1, 0]), DimensionMismatch),
    (doc([[1.2, -0.2], [0.5, 0.5]], [1, -1]), NegativeEntry),
    (doc([[0.5, 0.5], [0.5, 0.5]], [1, -1], ["a", "a"]), DuplicateLabel),
    (doc([[0.5, 0.5], [0.5, 0.5]], ["x", -1]), ValidationError),
    (doc([[0.5, 0.5], [0.5, 0.5]], [float("nan"), -1]), ValidationError),
    (doc([[0.5, 0.5], [0.5, 0.5]], [True, -1]), ValidationError),
    ({"states": ["a", "b"], "f": [1, -1]}, ValidationError),
    (doc([[1.0]], [0.0]), DimensionMismatch),
])
def test_invalid_documents(raw, exc):
    with pytest.raises(exc):
        validate_spec(raw)


def test_near_stochastic_rows_are_renormalised():
    c = validate_spec(doc([[0.5 + 1e-11, 0.5], [0.3, 0.7]], [1, -1]))
    assert np.all(np.abs(c.transition.sum(axis=1) - 1.0) < 1e-15)


def test_chain_is_immutable(chains):
    with pytest.raises(ValueError):
        chains["A"].transition[0, 0] = 0.0


def test_roundtrip(tmp_path, chains):
    for c in chains.values():
        p = tmp_path / "c.json"
        save_chain(c, p)
        back = load_chain(p)
        assert back.digest() == c.digest()
        assert back.states == c.states


def test_shipped_documents_match_fixtures(chains):
    for k, c in chains.items():
        assert load_chain(CHAINS / f"chain_{k.lower()}.json").digest() == c.digest()


def test_load_rejects_bad_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ValidationError):
        load_chain(p)


@pytest.mark.parametrize("name, nu", [
    ("A", [0.5, 0.5]),
    ("C", [4 / 7, 3 / 7]),
    ("E", [1 / 3, 1 / 3, 1 / 3]),
])
def test_stationary_goldens(chains, name, nu):
    assert np.allclose(stationary_distribution(chains[name]).nu, nu, atol=1e-14)


def test_primitivity(chains):
    assert primitivity_index(chains["A"]) == 1
    k0 = primitivity_index(chains["D"])
    assert k0 is not None
    M = np.linalg.matrix_power((chains["D"].transition > 0).astype(int), k0)
    assert (M > 0).all()
    M = np.linalg.matrix_power((chains["D"].transition > 0).astype(int), k0 - 1)
    assert not (M > 0).all()


def test_periodic_chain_is_not_primitive():
    c = from_matrix([[0, 1], [1, 0]], [1, -1])
    assert primitivity_index(c) is None
    with pytest.raises(NotPrimitive):
        stationary_distribution(c)
    assert not check_hypotheses(c).ok


def test_centering_examples(chains):
    C = chains["C"]
    assert np.allclose(center_function(C).f, [3, -4])
    assert np.allclose(center_function(C.with_f([1, 1])).f, [0, 0], atol=1e-15)
    E = chains["E"]
    assert np.allclose(center_function(E.with_f([1, 0, 0])).f, [2 / 3, -1 / 3, -1 / 3])


def test_uncentred_is_rejected(chains):
    with pytest.raises(NotCentered):
        require_centered(chains["C"].with_f([1, 0]))


def test_hypotheses_on_fixtures(chains):
    for k in "ABCE":
        assert check_hypotheses(chains[k]).ok
    rep = check_hypotheses(chains["D"])
    assert rep.primitive and rep.centered and not rep.nondegenerate


def test_index_accepts_labels_and_positions(chains):
    B = chains["B"]
    assert B.index("1") == 0
    assert B.index(0) == 0
    with pytest.raises(KeyError):
        B.index(7)


@given(st.integers(2, 7), st.integers(0, 2 ** 32 - 1))
def test_stationary_law_is_invariant(d, seed):
    c = random_chain(np.random.default_rng(seed), d, sparse=seed % 2 == 0)
    nu = stationary_distribution(c).nu
    assert np.all(nu > 0)
    assert abs(nu.sum() - 1) < 1e-12
    assert np.max(np.abs(nu @ c.transition - nu)) < 1e-12
    assert abs(nu @ c.f) < 1e-12


def test_document_is_json(chains):
    json.dumps(chains["B"].to_document())
