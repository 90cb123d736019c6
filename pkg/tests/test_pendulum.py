import math

import numpy as np
import pytest

from app.core.errors import InvalidParameterError, RegimeError
from app.dynamics.maps import PendulumFlow
from app.dynamics.pendulum import (
    NormalForm,
    PeriodFunction,
    beta_constants,
    bracket_threshold,
    build_adapted_box,
    default_potential,
    island_linear_data,
    island_mu,
    linear_data_from_derivatives,
    local_return_map,
    normal_form_discrepancy,
    period_sweep,
    predicted_halvings,
    quartic_integral,
    solve_periodic_orbit,
    sweep_constants,
)
from scipy.special import gamma

V = default_potential()
QUARTIC_HALF = gamma(0.25) ** 2 / (4.0 * gamma(0.5))


def test_quartic_integral_reaches_its_tail():
    assert float(quartic_integral(0.5, 1e6)) == pytest.approx(QUARTIC_HALF, rel=1e-3)
    assert float(quartic_integral(1.5, 0.0)) == pytest.approx(0.0, abs=1e-14)


def test_period_decreases_with_energy():
    T = PeriodFunction(V, 2.0)
    e = np.array([1e-4, 1e-3, 1e-2])
    values = T(e)
    assert np.all(np.diff(values) < 0.0)
    assert np.all(T.derivative(e, 1) < 0.0)


def test_period_derivative_matches_finite_difference():
    T = PeriodFunction(V, 2.0)
    e, h = 1e-3, 1e-7
    numeric = (float(T(e + h)) - float(T(e - h))) / (2.0 * h)
    assert float(T.derivative(e, 1)) == pytest.approx(numeric, rel=1e-5)


def test_period_rejects_separatrix_energy():
    with pytest.raises(InvalidParameterError):
        PeriodFunction(V, 2.0)(0.0)


def test_periodic_orbit_solves_period_equation():
    orbit = solve_periodic_orbit(64, 2, V)
    assert orbit.residual < 1e-8
    assert float(PeriodFunction(V, 2.0)(orbit.e)) == pytest.approx(64.0, rel=1e-10)
    assert orbit.r > orbit.rho_N
    with pytest.raises(InvalidParameterError):
        solve_periodic_orbit(0, 2, V)


def test_rescaled_period_tends_to_the_quartic_constant():
    T = PeriodFunction(V, 1.0)
    limit = math.sqrt(2.0) * QUARTIC_HALF
    # the approach is like e^{1/4} T_regular: at e = 1e-4 the offset is still above 15%
    e = np.array([1e-8, 1e-10, 1e-12])
    scaled = e**0.25 * T(e)
    assert np.all(np.abs(np.diff(scaled)) > 0.0)
    assert abs(scaled[-1] - limit) < abs(scaled[0] - limit)
    assert scaled[-1] == pytest.approx(limit, rel=1e-2)


def test_small_energy_law_scales_like_N2_over_q4():
    limit = 4.0 * QUARTIC_HALF**4
    scaled = [solve_periodic_orbit(q, 2, V).e * q**4 / 4.0 for q in (64, 128)]
    assert scaled[1] == pytest.approx(scaled[0], rel=0.1)
    assert scaled[1] == pytest.approx(limit, rel=0.35)


def test_bracket_threshold_is_positive():
    assert bracket_threshold(V) > 0.0


def test_adapted_box_is_verified():
    box = build_adapted_box(64, 2, V=V)
    assert box.report is not None and box.report.passed
    assert box.ell == pytest.approx(0.18 / 8.0)
    assert box.ell_prime <= 8.0 * 0.18 / 64**5
    assert box.r_center - box.ell_prime > box.rho_N


def test_adapted_box_preconditions():
    with pytest.raises(InvalidParameterError):
        build_adapted_box(1, 2, V=V)
    with pytest.raises(InvalidParameterError):
        build_adapted_box(64, 2, delta=1.3, V=V)


def test_normal_form_vanishes_to_first_order_at_the_orbit():
    nf = NormalForm.build(64, 2, V)
    r = nf.orbit.r
    assert abs(float(nf.derivative(r, 1))) < 1e-8
    h = 1e-7
    numeric = (float(nf.derivative(r + h, 1)) - float(nf.derivative(r - h, 1))) / (2.0 * h)
    assert float(nf.derivative(r, 2)) == pytest.approx(numeric, rel=1e-4)
    with pytest.raises(RegimeError):
        nf.derivative(0.5 * nf.orbit.rho_N, 1)


def test_return_map_matches_normal_form_on_the_box():
    box = build_adapted_box(64, 2, V=V)
    assert normal_form_discrepancy(box, V, grid=16) < 1e-6


def test_box_search_starts_at_the_predicted_height():
    box = build_adapted_box(64, 2, V=V)
    skipped = predicted_halvings(64, 2, 0.18, V)
    assert skipped >= 0
    assert box.report.parameters["predicted_halvings"] == skipped
    assert box.report.parameters["halvings"] >= skipped
    assert box.ell_prime == pytest.approx(8.0 * 0.18 / 64**5 / 2 ** box.report.parameters["halvings"])
    assert build_adapted_box(64, 2, V=V) is box


def test_long_flows_are_composed_of_unit_pieces():
    z = np.array([[0.1, 2.4], [0.3, -2.6]])
    once = PendulumFlow(V, 2.0, 3.0).apply_lifted(z)
    stepped = z
    for _ in range(3):
        stepped = PendulumFlow(V, 2.0, 1.0).apply_lifted(stepped)
    assert np.array_equal(once, stepped)


def test_local_return_map_fixes_the_orbit():
    box = build_adapted_box(64, 2, V=V)
    F = local_return_map(box, island_mu(64, 2, V), V)
    x, R = F.step(np.array([0.0]), np.array([0.0]))
    assert abs(x[0]) < 1e-8 and abs(R[0]) < 1e-8
    assert F.inside(np.array([0.0]), np.array([0.0]))[0]


def test_linear_data_is_elliptic_below_threshold():
    mu = island_mu(64, 2, V, target=0.05)
    data = island_linear_data(64, 2, mu, V)
    assert data.mu * data.alpha == pytest.approx(0.05)
    assert abs(abs(data.lam) - 1.0) < 1e-12
    assert data.gamma0 == pytest.approx(-math.acos(1.0 - 0.025))
    assert data.nonresonant
    assert data.omega == pytest.approx(64**4 / 8.0)


def test_linear_data_regime_limits():
    with pytest.raises(RegimeError):
        linear_data_from_derivatives(64, 2, 1.0, 4.0, 1.0, 1.0)
    with pytest.raises(InvalidParameterError):
        linear_data_from_derivatives(64, 2, 0.0, 4.0, 1.0, 1.0)


def test_period_sweep_and_constants():
    rows = period_sweep([48, 64], 2, V=V)
    assert [row["q"] for row in rows] == [48.0, 64.0]
    constants = sweep_constants(rows)
    assert 0.0 < constants["C1"] <= constants["C2"]
    betas = beta_constants()
    assert len(betas) == 3 and all(b > 0 for b in betas)
