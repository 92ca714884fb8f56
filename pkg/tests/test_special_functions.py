import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from memcontrol import special_functions as sf
from memcontrol.errors import NotConverged, PoleError, RouteDisagreement
from memcontrol.special_functions import (
    Route,
    gamma_fn,
    ml3_contour,
    ml3_eval,
    ml3_recurrence_terms,
    ml3_series,
    ml3_terms,
)
from oracles import prabhakar_mp


@pytest.mark.parametrize("x, expected", [(1.0, 1.0), (0.5, math.sqrt(math.pi)), (5.0, 24.0)])
def test_gamma_known_values(x, expected):
    assert gamma_fn(x) == pytest.approx(expected, rel=1e-14)


@given(st.floats(0.1, 50.0))
def test_gamma_matches_mpmath(x):
    assert gamma_fn(x) == pytest.approx(float(mp.gamma(x)), rel=1e-13)


def test_gamma_reflection_negative():
    # Gamma(-1/2) = -2 sqrt(pi)
    assert gamma_fn(-0.5) == pytest.approx(-2 * math.sqrt(math.pi), rel=1e-14)
    assert gamma_fn(-2.5) == pytest.approx(float(mp.gamma(-2.5)), rel=1e-13)


@pytest.mark.parametrize("x", [0.0, -1.0, -3.0])
def test_gamma_poles(x):
    with pytest.raises(PoleError):
        gamma_fn(x)


def test_series_exponential():
    res = ml3_series(1, 1, 1, 1.0)
    assert res.value == pytest.approx(math.e, rel=1e-15)
    assert res.route is Route.SERIES
    assert res.terms_used >= 1


def test_series_at_zero_keeps_first_term():
    assert ml3_series(1.5, 0.5, 2, 0.0).value == pytest.approx(1 / math.gamma(0.5), rel=1e-15)


def test_series_against_extended_precision():
    ref = prabhakar_mp(1.5, 2, 3, -2, terms=200)
    assert ml3_series(1.5, 2, 3, -2.0).value == pytest.approx(ref, rel=1e-12)


def test_series_not_converged_when_budget_too_small():
    with pytest.raises(NotConverged):
        ml3_series(1.5, 1, 1, -20.0, max_terms=5)


@pytest.mark.parametrize("bad", [dict(q=0.0), dict(g=0.0), dict(tol=0.0)])
def test_series_rejects_bad_parameters(bad):
    args = dict(q=1.0, r=1.0, g=1.0, z=0.5, tol=1e-16) | bad
    with pytest.raises(ValueError):
        ml3_series(**args)


@given(
    st.floats(0.5, 2.0),
    st.floats(0.5, 3.0),
    st.floats(0.5, 3.0),
    st.floats(-10.0, 10.0),
)
def test_series_error_bounds_first_omitted_term(q, r, g, z):
    res = ml3_series(q, r, g, z)
    assert res.error_estimate >= 0
    nxt = abs(ml3_terms(q, r, g, z, res.terms_used + 1)[res.terms_used])
    assert res.error_estimate >= nxt


@given(
    st.floats(0.3, 2.5),
    st.floats(-0.9, 3.0),
    st.floats(0.2, 4.0),
    st.floats(-30.0, 30.0),
)
def test_recurrence_matches_closed_form_terms(q, r, g, z):
    rec = ml3_recurrence_terms(q, r, g, z, 60)
    direct = ml3_terms(q, r, g, z, 60)
    scale = np.abs(direct)
    mask = scale > 1e-280
    assert np.all(np.abs(rec[mask] - direct[mask]) <= 1e-12 * scale[mask])


def test_recurrence_handles_gamma_poles():
    # r = -1: 1/Gamma(q j + r) vanishes at j = 0 and wherever q j + r hits a pole
    rec = ml3_recurrence_terms(1.0, -1.0, 1.0, 2.0, 6)
    direct = ml3_terms(1.0, -1.0, 1.0, 2.0, 6)
    assert np.allclose(rec, direct, rtol=1e-13, atol=0)
    assert rec[0] == 0 and rec[1] == 0


@given(st.floats(0.3, 2.5), st.floats(0.2, 4.0), st.floats(0.2, 4.0))
def test_value_at_zero(q, r, g):
    assert ml3_eval(q, r, g, 0.0).value == pytest.approx(1 / math.gamma(r), rel=1e-13)


@given(st.floats(-10.0, 10.0))
def test_exponential_identity(z):
    assert ml3_eval(1, 1, 1, z).value == pytest.approx(math.exp(z), rel=1e-10)


def test_eval_exponential_far_left():
    assert ml3_eval(1, 1, 1, -50.0).value == pytest.approx(math.exp(-50), rel=1e-12)


def test_eval_at_zero_large_gamma():
    assert ml3_eval(1.5, 2, 3, 0.0).value == pytest.approx(1.0, rel=1e-15)


def test_series_and_contour_agree_inside_series_range():
    series = ml3_series(1.5, 1, 1, -5.0)
    contour = ml3_contour(1.5, 1, 1, -5.0)
    assert contour.route is Route.CONTOUR
    assert abs(series.value - contour.value) <= 1e-8 * abs(contour.value)


@pytest.mark.parametrize("z", [-20.0, -25.0, -30.0, -35.0, -40.0])
def test_overlap_band_agreement(z):
    series = ml3_series(1.5, 1, 1, z)
    contour = ml3_contour(1.5, 1, 1, z)
    assert abs(series.value - contour.value) <= 1e-8 * abs(contour.value)
    ml3_eval(1.5, 1, 1, z)


@pytest.mark.parametrize("params", [(1.5, 1, 1), (1.5, 2, 3), (1.5, 0.5, 2), (0.8, 1, 1), (1.2, 1.2, 1.0), (0.5, 1, 2), (1, 2, 3)])
@pytest.mark.parametrize("z", [-1.0, -5.0, -20.0, -30.0, -40.0, -50.0])
def test_eval_matches_extended_precision(params, z):
    q, r, g = params
    ref = prabhakar_mp(q, r, g, z)
    res = ml3_eval(q, r, g, z)
    err = abs(res.value - ref)
    assert err <= res.error_estimate
    if abs(z) <= 40:
        assert err <= 1e-8 * abs(ref)


def test_eval_uses_contour_beyond_switch():
    assert ml3_eval(1.5, 1, 1, -35.0).route is Route.CONTOUR
    assert ml3_eval(1.5, 1, 1, -10.0).route is Route.SERIES


def test_disagreement_in_band_is_reported(monkeypatch):
    real = sf.ml3_contour

    def skewed(*args, **kwargs):
        res = real(*args, **kwargs)
        return sf.EvalResult(res.value * (1 + 1e-6), res.error_estimate, res.terms_used, res.route)

    monkeypatch.setattr(sf, "ml3_contour", skewed)
    with pytest.raises(RouteDisagreement):
        ml3_eval(1.5, 1, 1, -20.0)


def test_complex_argument_series():
    z = 0.3 + 0.4j
    assert ml3_series(1, 1, 1, z).value == pytest.approx(complex(np.exp(z)), rel=1e-14)
