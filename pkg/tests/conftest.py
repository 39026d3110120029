import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from condwalk.fixtures import fixture
from condwalk.verify import build_tables

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")

ROOT = Path(__file__).resolve().parents[1]
CHAINS = ROOT / "chains"
SQRT2 = math.sqrt(2.0)


@pytest.fixture(scope="session")
def chains():
    return {k: fixture(k) for k in "ABCDE"}


@pytest.fixture(scope="session")
def chain_b():
    return fixture("B")


@pytest.fixture(scope="session")
def tables_b(chain_b):
    """(V, V*) for CHAIN-B at the default step; shared because the solve takes seconds."""
    return build_tables(chain_b)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        terminalreporter.write_line(results[num])


def random_chain(rng: np.random.Generator, d: int, sparse: bool = False):
    """Primitive chain with centred, generic f."""
    from condwalk.chain import center_function, from_matrix

    P = rng.random((d, d)) + 0.05
    if sparse:
        P *= rng.random((d, d)) < 0.6
        # a cycle plus self-loops keeps it irreducible and aperiodic
        P[np.arange(d), (np.arange(d) + 1) % d] += 0.1
        np.fill_diagonal(P, P.diagonal() + 0.1)
    P /= P.sum(axis=1, keepdims=True)
    return center_function(from_matrix(P, rng.normal(size=d)))
