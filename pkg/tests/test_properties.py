# tests/test_properties.py
"""Randomized identities over small generated base spaces."""
import numpy as np
import pytest

hypothesis = pytest.importorskip("hypothesis")
from hypothesis import given, settings  # noqa: E402
from hypothesis import strategies as st  # noqa: E402

from core.base_space import FiniteBaseSpace  # noqa: E402
from core.config_space import ConfigSpace, config_count, poisson_weights  # noqa: E402
from core.lift import check_carre_du_champ, check_intertwining, check_selfadjointness, random_config_functions  # noqa: E402


@st.composite
def reversible_bases(draw):
    """Symmetric conductances c_xy > 0 on a complete graph, weights m > 0, Q = c / m."""
    n = draw(st.integers(min_value=2, max_value=4))
    m = np.array(draw(st.lists(st.floats(0.25, 4.0), min_size=n, max_size=n)))
    c = np.zeros((n, n))
    for x in range(n):
        for y in range(x + 1, n):
            c[x, y] = c[y, x] = draw(st.floats(0.1, 3.0))
    q = c / m[:, None]
    np.fill_diagonal(q, -q.sum(axis=1))
    return FiniteBaseSpace(states=[f"s{i}" for i in range(n)], m=m.tolist(), Q=q.tolist())


@settings(max_examples=15, deadline=None)
@given(reversible_bases(), st.integers(min_value=0, max_value=3))
def test_enumeration_size(base, n_max):
    assert len(ConfigSpace(base, n_max)) == config_count(base.n, n_max)


@settings(max_examples=15, deadline=None)
@given(reversible_bases(), st.floats(0.2, 2.0))
def test_lifted_generator_is_selfadjoint(base, s):
    cspace = ConfigSpace(base, 3)
    assert check_selfadjointness(cspace, poisson_weights(cspace, s)).passed


@settings(max_examples=10, deadline=None)
@given(reversible_bases(), st.integers(min_value=0, max_value=1000))
def test_square_field_identity(base, seed):
    cspace = ConfigSpace(base, 2)
    assert check_carre_du_champ(cspace, random_config_functions(cspace, 2, seed=seed)).passed


@settings(max_examples=10, deadline=None)
@given(reversible_bases(), st.floats(0.05, 2.0))
def test_star_functions_intertwine(base, t):
    cspace = ConfigSpace(base, 2)
    f_samples = [np.eye(base.n)[0], np.arange(base.n, dtype=float)]
    assert check_intertwining(cspace, f_samples, [t]).passed
