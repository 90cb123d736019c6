import csv

import numpy as np
import pytest

from app.core.errors import InvalidParameterError
from app.numerics.gevrey import (
    SampledFunction,
    TensorProfile,
    dump_csv,
    fit_bump_growth,
    gevrey_norm_estimate,
    make_eta,
    make_U,
    make_V,
    make_W,
    ramp,
)


def test_ramp_endpoints_and_symmetry():
    x = np.array([-0.5, 0.0, 0.5, 1.0, 1.5])
    values = ramp(x, 2.0)
    assert values[0] == 0.0 and values[1] == 0.0
    assert values[2] == pytest.approx(0.5)
    assert values[3] == 1.0 and values[4] == 1.0
    assert ramp(0.3, 2.0) + ramp(0.7, 2.0) == pytest.approx(1.0)


def test_ramp_rejects_alpha_at_one():
    with pytest.raises(InvalidParameterError):
        ramp(0.5, 1.0)


def test_eta_plateau_and_support_are_exact():
    eta = make_eta(2.0, 4)
    plateau = np.linspace(-0.125, 0.125, 51)
    assert np.all(eta(plateau) == 1.0)
    outside = np.linspace(0.25, 0.75, 51)
    assert np.all(eta(outside) == 0.0)
    assert np.all(eta.derivative(outside, 3) == 0.0)
    with pytest.raises(InvalidParameterError):
        make_eta(2.0, 1.5)


def test_eta_derivatives_agree_with_finite_differences():
    eta = make_eta(2.0, 4)
    theta = np.array([0.15, 0.2, 0.8])
    for k in (1, 2):
        assert np.allclose(eta.derivative(theta, k), eta.numeric_derivative(theta, k), rtol=1e-4, atol=1e-6)


def test_W_is_quadratic_near_zero_and_vanishes_beyond_support():
    W = make_W(2, 0.18)
    assert W(0.01) == pytest.approx(0.5 * 0.01**2)
    assert W(0.99) == pytest.approx(0.5 * 0.01**2)
    assert W(0.2) == 0.0
    assert W.derivative(0.02, 2) == pytest.approx(1.0)
    with pytest.raises(InvalidParameterError):
        make_W(0, 0.18)


def test_V_plateau_quartic_window_and_sign():
    V = make_V(0.2, 0.2, 2.5)
    assert V(0.1) == pytest.approx(-0.5 * 2.5**2)
    assert V(0.5) == pytest.approx(0.0)
    assert V(0.6) == pytest.approx(-(0.1**4))
    theta = np.linspace(0.0, 1.0, 401)
    values = V(theta)
    assert np.all(values[np.abs(theta - 0.5) > 1e-9] < 0.0)
    with pytest.raises(InvalidParameterError):
        make_V(0.35, 0.2, 2.5)


def test_V_needs_a_plateau_deeper_than_two():
    for rho0 in (0.45, 2.0):
        with pytest.raises(InvalidParameterError):
            make_V(0.2, 0.2, rho0)
    assert make_V(0.2, 0.2, 2.01).params["rho0"] == 2.01


def test_U_has_unit_slope_shift_on_its_plateau():
    U = make_U(0.1)
    assert U.derivative(0.05, 1) == pytest.approx(-0.95)
    assert U.derivative(0.05, 2) == pytest.approx(1.0)
    with pytest.raises(InvalidParameterError):
        make_U(0.2)


def test_norm_of_constant_is_its_value():
    one = SampledFunction.constant(1.0)
    assert gevrey_norm_estimate(one, 2.0, 0.1, 6, grid=64) == pytest.approx(1.0)


def test_bump_norms_grow_with_p():
    fit = fit_bump_growth(2.0, 0.1, ps=(4, 8))
    assert fit.norms[1] > fit.norms[0] > 1.0
    assert fit.c > 0.0


def test_tensor_profile_gradient_uses_product_rule():
    eta = make_eta(2.0, 4)
    W = make_W(2, 0.18)
    profile = TensorProfile(((0, W), (1, eta)))
    angles = np.array([0.03, 0.16])
    grad = profile.gradient(angles)
    assert grad[0] == pytest.approx(W.derivative(0.03, 1) * eta(0.16))
    assert grad[1] == pytest.approx(W(0.03) * eta.derivative(0.16, 1))
    assert profile.value(angles) == pytest.approx(W(0.03) * eta(0.16))


def test_dump_csv_writes_three_derivatives(tmp_path):
    path = dump_csv(make_eta(2.0, 4), tmp_path / "eta.csv", samples=32)
    with path.open() as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["theta", "f", "df", "d2f"]
    assert len(rows) == 33
