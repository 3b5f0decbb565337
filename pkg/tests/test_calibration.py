import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from miscat.calibration import (SQRT_E, CalibrationError, CalibrationParams, gumbel_cdf,
                                gumbel_quantile, i_d_constant, i_d_quadrature, omega,
                                scale_exponents, select_Cd, standard_K)


@given(st.floats(0.0, 10.0), st.floats(1e-6, 1.0))
def test_omega_is_one_at_the_admissible_edge(C_d, h):
    assert omega(CalibrationParams(SQRT_E * h, C_d), h) == pytest.approx(1.0, abs=1e-9)


def test_omega_formula_and_monotonicity():
    p = CalibrationParams(1.0, 3.0)
    r = math.sqrt(2 * math.log(1 / 0.01))
    assert omega(p, 0.01) == pytest.approx(r + 3 * math.log(r) / r)
    assert omega(p, 1e-4) > omega(p, 1e-2)


def test_omega_rejects_small_ratio():
    with pytest.raises(CalibrationError, match="sqrt"):
        omega(CalibrationParams(1.0, 3.0), 0.9)


def test_params_validation():
    with pytest.raises(CalibrationError):
        CalibrationParams(0.0, 1.0)
    with pytest.raises(CalibrationError):
        CalibrationParams(1.0, 1.0, gamma=1.5)


def test_select_cd():
    assert select_Cd("dense_full", 2, 1.0) == 5
    assert select_Cd("single_scale", 2, 1.0) == 1
    assert select_Cd("dense_squares", 2, 1.0) == 3
    assert select_Cd("dense_full", 2, 0.5) == 7
    with pytest.raises(CalibrationError):
        select_Cd("sparse", 2, 1.0)


@given(st.floats(0.01, 0.5), st.floats(1.01, 2.0))
def test_i1_is_log_ratio(delta, factor):
    Delta = min(delta * factor, 1.0)
    assert i_d_constant(delta, Delta, 1) == math.log(Delta / delta)


def test_i2_closed_form_and_quadrature():
    assert i_d_constant(0.2, 0.5, 2) == pytest.approx(math.log(1.225), abs=1e-12)
    assert i_d_quadrature(0.2, 0.5, 2) == pytest.approx(math.log(1.225), abs=1e-10)


@given(st.floats(0.05, 0.6), st.floats(0.05, 0.4))
def test_i2_matches_quadrature(delta, gap):
    Delta = min(delta + gap, 1.0)
    assert i_d_constant(delta, Delta, 2) == pytest.approx(i_d_quadrature(delta, Delta, 2), abs=1e-10)


def test_i_d_ordering():
    with pytest.raises(CalibrationError):
        i_d_constant(0.5, 0.2, 2)


@given(st.floats(0.1, 10.0))
def test_gumbel_is_a_cdf(prefactor):
    x = np.linspace(-20, 40, 2001)
    F = gumbel_cdf(x, prefactor)
    assert np.all(np.diff(F) >= 0)
    assert F[0] < 1e-6 and F[-1] > 1 - 1e-6
    p = np.array([0.1, 0.5, 0.9])
    assert np.allclose(gumbel_cdf(gumbel_quantile(p, prefactor), prefactor), p)


def test_standard_k():
    # det D^-2 = (2 pi)^(3/2) makes K equal to I_d when gamma = 1, d = 2
    assert standard_K(1.0, (2 * math.pi) ** 1.5, 0.3, 2) == pytest.approx(0.3)
    assert standard_K(0.5, math.sqrt(2 * math.pi), 0.3, 2) == pytest.approx(0.3)
    with pytest.raises(CalibrationError):
        standard_K(0.7, 1.0, 1.0, 2)


def test_scale_exponents():
    delta, Delta = scale_exponents(4 / 512, 30 / 512, 512)
    assert delta == pytest.approx(math.log(512 / 30) / math.log(512))
    assert Delta == pytest.approx(math.log(128) / math.log(512))
