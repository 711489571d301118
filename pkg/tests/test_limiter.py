import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uncorr.grid import Field, Mesh, extrapolate_ghost
from uncorr.limiter import (RatioConfig, convection_terms, explicit_convection, gradient_ratio,
                            lambda_factors, limiter_factors, van_leer_phi)
from uncorr.model import DriftPair

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_phi_values():
    assert van_leer_phi(1.0) == 1.0
    assert van_leer_phi(0.0) == 0.0
    assert van_leer_phi(-3.0) == 0.0
    assert van_leer_phi(3.0) == pytest.approx(1.5)


@given(finite)
def test_phi_bounds(t):
    p = van_leer_phi(t)
    if t <= 0:
        assert p == 0.0
    else:
        assert 0 <= p <= 2 * min(1.0, t) * (1 + 1e-15)


@given(st.floats(1e-6, 1e6))
def test_phi_symmetry(t):
    assert abs(van_leer_phi(t) - t * van_leer_phi(1 / t)) <= 1e-13 * max(1, t)


@given(finite, finite)
def test_phi_lipschitz(a, b):
    assert abs(van_leer_phi(a) - van_leer_phi(b)) <= 2 * abs(a - b) * (1 + 1e-12) + 1e-300


def test_ratio_config_validation():
    with pytest.raises(ValueError):
        RatioConfig(0.0)


def test_gradient_ratio_flat_field():
    f = Field(Mesh.square(0, 1, 5), np.ones((5, 5)))
    g = extrapolate_ghost(f)
    assert gradient_ratio(f, g, (3, 3), 1) == 1.0
    assert gradient_ratio(f, g, (3, 3), 2, inverse=True) == 1.0


def test_linear_field_unit_factors():
    m = Mesh(0, 1, 0, 2, 7, 9)
    f = Field.from_function(m, lambda x, y: 2 * x - y)
    lam = limiter_factors(f, extrapolate_ghost(f))
    for L in lam.as_tuple():
        np.testing.assert_allclose(L, 1.0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 8), st.integers(3, 8), st.integers(0, 2**31 - 1))
def test_vectorized_factors_match_pointwise(n1, n2, seed):
    m = Mesh(0, 1, 0, 1, n1, n2)
    f = Field(m, np.random.default_rng(seed).uniform(0, 1, m.shape))
    g = extrapolate_ghost(f)
    vec = limiter_factors(f, g).as_tuple()
    drift = DriftPair.from_values(0.3, -0.2)
    conv = convection_terms(f, g, drift).total()
    for i in range(1, n1 + 1):
        for j in range(1, n2 + 1):
            pt = lambda_factors(f, g, (i, j)).as_tuple()
            for a, b in zip(vec, pt):
                assert a[i - 1, j - 1] == pytest.approx(b, abs=1e-14)
            assert conv[i - 1, j - 1] == pytest.approx(explicit_convection(f, g, (i, j), drift), abs=1e-10)
            for L in pt:
                assert 0.0 <= L <= 2.0


def test_extremum_clips_upwind():
    # at a peak the downwind slope ratio is negative, so L+ at the peak is reduced
    m = Mesh(0, 1, 0, 1, 5, 5)
    v = np.zeros((5, 5))
    v[2, :] = 1.0
    f = Field(m, v)
    lam = lambda_factors(f, extrapolate_ghost(f), (2, 3))
    assert 0.0 <= lam.lambda1_plus <= 2.0
