import json
import math

import numpy as np
import pytest
import sympy as sp

from app.core.errors import InvalidParameterError, RegimeError
from app.dynamics.maps import AngleFunction, Composite, Kick, Shear
from app.dynamics.suspension import (
    ActionGrid,
    GeneratingFunction,
    SuspensionHamiltonian,
    SuspensionRamp,
    contract,
    dump_generating_function,
    fit_generating_function,
    mixed_map_apply,
    mixed_map_inverse,
    perturbation_size,
    suspend,
    verify_suspension,
)
from app.numerics.gevrey import SampledFunction

EPS = 1e-3
GRID = ActionGrid(32, 8, -0.5, 0.5)
x = sp.Symbol("x")
COSINE = SampledFunction.from_expression(sp.cos(2 * sp.pi * x), x, "cos")
H = Shear.quadratic(1)


def near_integrable():
    return Composite((H, Kick(AngleFunction.single(1, COSINE).scaled(EPS))))


def test_contraction_converges_and_reports_ratio():
    result = contract(lambda v: 0.5 * v + 1.0, np.zeros(3), tol=1e-13)
    assert np.allclose(result.value, 2.0)
    assert result.ratio == pytest.approx(0.5)


def test_contraction_divergence_is_a_regime_error():
    with pytest.raises(RegimeError):
        contract(lambda v: 2.0 * v + 1.0, np.zeros(2), max_iter=10)


def test_action_grid_limits():
    with pytest.raises(InvalidParameterError):
        ActionGrid(4, 8)
    with pytest.raises(InvalidParameterError):
        ActionGrid(32, 8, 0.5, 0.5)
    assert GRID.inner() == (-0.25, 0.25)


def test_mixed_map_inverse_undoes_apply():
    theta, r = sp.symbols("theta r")
    A = GeneratingFunction.from_expression(EPS * sp.sin(2 * sp.pi * theta) * (1 + r**2), theta, r, GRID)
    z = np.array([[0.1, 0.05], [0.6, -0.2]])
    image = mixed_map_apply(A, z)
    assert np.allclose(mixed_map_inverse(A, image), z, atol=1e-12)


def test_zero_generating_function_is_the_identity():
    z = np.array([0.3, 0.1])
    assert np.allclose(mixed_map_apply(GeneratingFunction.zero(GRID), z), z)


def test_generating_function_stays_on_its_grid():
    A = GeneratingFunction.zero(GRID)
    with pytest.raises(RegimeError):
        A.value(np.array([0.1]), np.array([0.9]))


def test_fitted_generating_function_of_a_kick():
    A = fit_generating_function(near_integrable(), H, GRID)
    theta = np.linspace(0.0, 1.0, 41)[:-1] + 0.0123
    r = np.full_like(theta, 0.1)
    expected = -EPS * 2.0 * math.pi * np.sin(2.0 * math.pi * theta)
    assert np.allclose(A.grad_theta(theta, r), expected, atol=1e-8)
    assert np.allclose(A.grad_r(theta, r), 0.0, atol=1e-10)
    assert A.diagnostics["exactness_residual"] < 1e-8
    assert A.slice_jacobian() > 0.0


def test_fit_rejects_a_map_with_flux():
    def table(theta, k):
        return np.full_like(theta, 1e-3 if k == 1 else 0.0)

    drift = SampledFunction("drift", table)
    psi = Composite((H, Kick(AngleFunction.single(1, drift))))
    with pytest.raises(RegimeError):
        fit_generating_function(psi, H, GRID)


def test_ramp_is_flat_outside_its_middle_half():
    eta = SuspensionRamp()
    assert float(eta(0.0)) == 0.0
    assert float(eta(1.0)) == 1.0
    assert float(eta(0.5)) == pytest.approx(0.5)
    assert eta.flat(0.1) and eta.flat(0.9) and not eta.flat(0.5)


def test_hamiltonian_equals_h_near_integer_times():
    S = suspend(near_integrable(), H, GRID)
    theta, r = np.array([0.2, 0.7]), np.array([0.1, -0.1])
    assert np.allclose(S(theta, r, 0.1), 0.5 * r**2)
    assert 0.0 < perturbation_size(S) < 10.0 * EPS
    with pytest.raises(InvalidParameterError):
        SuspensionHamiltonian(Shear(1, lambda v: v), S.A)


def test_perturbation_is_linear_in_the_kick():
    sizes = []
    for eps in (EPS, EPS / 2):
        psi = Composite((H, Kick(AngleFunction.single(1, COSINE).scaled(eps))))
        sizes.append(perturbation_size(suspend(psi, H, GRID)))
    assert sizes[0] / sizes[1] == pytest.approx(2.0, rel=0.1)


def test_time_one_flow_reproduces_the_map():
    psi = near_integrable()
    S = suspend(psi, H, GRID)
    report = verify_suspension(S, psi, samples=4, tolerance=1e-5)
    assert report.kind == "suspension"
    assert report.passed, report.margins


def test_dump_generating_function(tmp_path):
    A = fit_generating_function(near_integrable(), H, GRID)
    csv_path, meta = dump_generating_function(A, tmp_path / "A.csv")
    assert csv_path.read_text().splitlines()[0] == "theta,r,A,dA_dtheta,dA_dr"
    assert json.loads(meta.read_text())["grid"]["angles"] == 32
