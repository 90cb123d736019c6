import csv
import math

import numpy as np
import pytest
import sympy as sp

from app.core.errors import InvalidParameterError
from app.core.geometry import AnnulusPoint
from app.dynamics.maps import (
    AngleFunction,
    Composite,
    Conjugated,
    Kick,
    PendulumFlow,
    Shear,
    compose,
    deviation,
    iterate,
    jacobian_determinant,
    orbit,
    product,
    rescale_conjugate,
    write_orbit_csv,
)
from app.numerics.gevrey import SampledFunction, make_V

x = sp.Symbol("x")
COSINE = SampledFunction.from_expression(sp.cos(2 * sp.pi * x), x, "cos")


def standard_map(eps: float = 0.1) -> Composite:
    return Composite((Kick(AngleFunction.single(1, COSINE).scaled(eps)), Shear.quadratic(1)))


def test_shear_moves_angle_by_action():
    image = Shear.quadratic(1)(AnnulusPoint([0.2], [0.3]))
    assert isinstance(image, AnnulusPoint)
    assert image.angles[0] == pytest.approx(0.5)
    assert image.actions[0] == pytest.approx(0.3)


def test_shear_wraps_on_the_torus():
    image = Shear.quadratic(1).apply(np.array([0.9, 0.3]))
    assert image[0] == pytest.approx(0.2)


def test_kick_subtracts_gradient():
    kick = Kick(AngleFunction.single(1, COSINE))
    image = kick.apply(np.array([0.25, 0.0]))
    assert image[1] == pytest.approx(2.0 * math.pi)


def test_composite_applies_last_map_first():
    m = standard_map(0.1)
    z = np.array([0.25, 0.1])
    r = 0.1 + 0.1 * 2.0 * math.pi * math.sin(2.0 * math.pi * 0.35)
    assert np.allclose(m.apply(z), [0.35, r])
    assert np.allclose(compose([m.maps[0], m.maps[1]]).apply(z), m.apply(z))


def test_negative_iterates_invert_forward_ones():
    m = standard_map(0.2)
    z = np.array([0.13, 0.27])
    forward = iterate(m, z, 7)
    back = iterate(m, forward, -7)
    assert np.allclose(back, z, atol=1e-12)


def test_iterate_rejects_wrong_dimension():
    with pytest.raises(InvalidParameterError):
        standard_map().apply(np.array([0.1, 0.2, 0.3, 0.4]))


def test_maps_preserve_area():
    z = np.array([[0.1, 0.2], [0.7, -0.3]])
    assert np.allclose(jacobian_determinant(standard_map(0.3), z), 1.0, atol=1e-6)


def test_pendulum_flow_conserves_energy_and_reverses():
    flow = PendulumFlow(make_V(0.2, 0.2, 2.5), 2)
    z = np.array([[0.45, 0.05], [0.1, 0.2]])
    image = flow.apply_lifted(z)
    assert np.allclose(flow.energy(image), flow.energy(z), atol=1e-9)
    assert np.allclose(flow.inverse().apply_lifted(image), z, atol=1e-9)


def test_product_acts_factorwise_and_rejects_overlap():
    m = product([(Shear.quadratic(1), [0]), (Shear.quadratic(1, 2.0), [1])], 2)
    image = m.apply(np.array([0.0, 0.0, 0.1, 0.1]))
    assert np.allclose(image, [0.1, 0.2, 0.1, 0.1])
    with pytest.raises(InvalidParameterError):
        product([(Shear.quadratic(1), [0]), (Shear.quadratic(1), [0])], 2)


def test_rescale_conjugate_matches_generic_conjugation():
    m = standard_map(0.1)
    q = 5.0
    closed = rescale_conjugate(m, q)
    generic = Conjugated(m, q)
    z = np.array([[0.31, 0.02], [0.77, -0.05]])
    assert np.allclose(closed.apply_lifted(z), generic.apply_lifted(z), atol=1e-12)
    with pytest.raises(InvalidParameterError):
        rescale_conjugate(m, 0.0)


def test_rescale_conjugate_of_pendulum_flow():
    flow = PendulumFlow(make_V(0.2, 0.2, 2.5), 2)
    closed = rescale_conjugate(flow, 3.0)
    assert isinstance(closed, PendulumFlow)
    assert closed.N == 6.0 and closed.t == 3.0
    z = np.array([0.4, 0.01])
    assert np.allclose(closed.apply_lifted(z), Conjugated(flow, 3.0).apply_lifted(z), atol=1e-6)


def test_orbit_shape():
    states = orbit(standard_map(), np.zeros((3, 2)), 4)
    assert states.shape == (5, 3, 2)


def test_deviation_counts_kicks_after_integrable_base():
    ledger = deviation(standard_map(0.1), alpha=2.0, L=0.1, max_order=2)
    assert len(ledger.terms) == 1
    assert ledger.total > 0.0
    with pytest.raises(InvalidParameterError):
        deviation(Composite((Shear.quadratic(1), Kick(AngleFunction.single(1, COSINE)))), 2.0, 0.1, 2)


def test_write_orbit_csv_with_energy(tmp_path):
    flow = PendulumFlow(make_V(0.2, 0.2, 2.5), 2)
    path = write_orbit_csv(flow, np.array([0.5, 0.1]), 3, tmp_path / "orbit.csv", energy=flow.energy)
    with path.open() as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["k", "theta_1", "r_1", "energy"]
    assert len(rows) == 5
