import math

import numpy as np
import pytest

from oracles import A1_DEFAULT, A2_DEFAULT
from uncorr.model import (CorrelationBand, DriftPair, Edge, MarketParams, Scenario, default_params,
                          drift_coefficients, exp_transform, log_transform, select_rho, split,
                          transform_neumann_data)


def test_default_drifts():
    d = drift_coefficients(default_params())
    assert d.A1 == pytest.approx(0.02652, abs=1e-12)
    assert d.A2 == pytest.approx(0.0753102, abs=1e-12)
    assert d.A1 == pytest.approx(A1_DEFAULT)
    assert d.A1m == 0 and d.A2m == 0


def test_drift_split_negative():
    d = DriftPair.from_values(-0.3, 0.2)
    assert (d.A1p, d.A1m, d.A2p, d.A2m) == (0.0, 0.3, 0.2, 0.0)
    d = drift_coefficients(MarketParams(0.5, 0.2, 0.0, 0.1, 0.0))
    assert d.A1 == pytest.approx(-0.225)


def test_split_identity():
    v = np.linspace(-2, 2, 41)
    p, m = split(v)
    assert np.all(p >= 0) and np.all(m >= 0)
    np.testing.assert_array_equal(p - m, v)
    np.testing.assert_array_equal(p + m, np.abs(v))


@pytest.mark.parametrize("scenario,pos,neg", [("worst", -0.2, 0.6), ("best", 0.6, -0.2)])
def test_select_rho(scenario, pos, neg):
    band = CorrelationBand(-0.2, 0.6, scenario)
    rp, rm = select_rho(1.0, band)
    assert rp - rm == pytest.approx(pos)
    rp, rm = select_rho(-1.0, band)
    assert rp - rm == pytest.approx(neg)
    # a zero sign follows the positive branch
    rp, rm = select_rho(0.0, band)
    assert rp - rm == pytest.approx(pos)


def test_select_rho_array():
    band = CorrelationBand(-1, 1)
    rp, rm = select_rho(np.array([1.0, -1.0, 0.0]), band)
    np.testing.assert_array_equal(rp - rm, [-1, 1, -1])


@pytest.mark.parametrize("args", [(0.0, 0.2, 0.05), (0.2, -0.1, 0.05), (0.2, 0.2, -0.01)])
def test_params_validation(args):
    with pytest.raises(ValueError):
        MarketParams(*args)


def test_rate_flag():
    assert MarketParams(0.2, 0.2, 0.0).rate_flagged
    assert not default_params().rate_flagged


@pytest.mark.parametrize("band", [(0.5, -0.5), (-1.1, 0.0), (0.0, 1.2)])
def test_band_validation(band):
    with pytest.raises(ValueError):
        CorrelationBand(*band)


def test_band_scenario_coerced():
    assert CorrelationBand(-1, 1, "best").scenario is Scenario.BEST
    assert CorrelationBand(-0.2, 0.6).max_abs == 0.6


def test_log_transform_roundtrip():
    x1, x2, tau = log_transform(100.0, 50.0, 0.5, 2.0)
    assert (x1, x2, tau) == (pytest.approx(math.log(100)), pytest.approx(math.log(50)), 1.5)
    S1, S2, t = exp_transform(x1, x2, tau, 2.0)
    assert (S1, S2, t) == (pytest.approx(100), pytest.approx(50), pytest.approx(0.5))
    with pytest.raises(ValueError):
        log_transform(0.0, 1.0, 0.0, 1.0)


def test_neumann_transform_factor():
    g1 = lambda S1, S2, tau: np.ones_like(S1)
    assert transform_neumann_data(g1, Edge.E)(math.log(200), 0.0, 0.0) == pytest.approx(200)
    assert transform_neumann_data(g1, Edge.N)(0.0, math.log(7), 0.0) == pytest.approx(7)
