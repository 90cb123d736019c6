import math

import numpy as np
import pytest

from app.core.errors import InvalidParameterError
from app.core.geometry import (
    AnnulusPoint,
    BandRegion,
    Ellipse2D,
    LocalizationConstraint,
    PolygonCarrier,
    Polydisc,
    ProductRegion,
    UpperStrip,
    ball_volume,
    capacity_measure_bound,
    in_band,
    in_strip,
    polydisc_capacity,
    torus_distance,
    wrap_angle,
)
from app.core.schemas import EllipseSchema


def test_wrap_angle_representatives():
    assert wrap_angle(1.25) == 0.25
    assert wrap_angle(-0.25) == 0.75
    assert wrap_angle(-1e-18) == 0.0
    with pytest.raises(InvalidParameterError):
        wrap_angle(float("nan"))


def test_annulus_point_wraps_angles_and_rejects_bad_shapes():
    p = AnnulusPoint([1.5, -0.25], [0.1, -2.0])
    assert np.allclose(p.angles, [0.5, 0.75])
    assert p.n == 2
    assert AnnulusPoint.from_array(p.as_array()) == p
    with pytest.raises(InvalidParameterError):
        AnnulusPoint([0.1, 0.2], [0.0])
    with pytest.raises(InvalidParameterError):
        AnnulusPoint([0.1], [float("inf")])


def test_band_and_strip_membership():
    band = BandRegion(0.1)
    assert in_band(AnnulusPoint([0.95], [3.0]), band)
    assert not in_band(AnnulusPoint([0.2], [0.0]), band)
    assert torus_distance(0.95) == pytest.approx(0.05)
    strip = UpperStrip(0.1)
    assert in_strip(AnnulusPoint([0.3], [0.05]), strip)
    assert not in_strip(AnnulusPoint([0.3], [-0.01]), strip)
    with pytest.raises(InvalidParameterError):
        BandRegion(0.5)


def test_ellipse_area_and_boundary():
    P = np.array([[2.0, 0.0], [0.0, 0.5]])
    ellipse = Ellipse2D.from_disc(AnnulusPoint([0.0], [0.0]), P, 0.1)
    assert ellipse.area == pytest.approx(math.pi * 0.01)
    boundary = ellipse.boundary(64)
    quad = np.einsum("ki,ij,kj->k", boundary, ellipse.shape, boundary)
    assert np.allclose(quad, 1.0)
    assert ellipse.diameter == pytest.approx(0.4)


def test_ellipse_contains_across_the_seam():
    ellipse = Ellipse2D(AnnulusPoint([0.0], [0.0]), np.eye(2) / 0.01**2)
    assert ellipse.contains(np.array([0.999, 0.0]))
    assert not ellipse.contains(np.array([0.5, 0.0]))


def test_ellipse_rejects_indefinite_shape():
    with pytest.raises(InvalidParameterError):
        Ellipse2D(AnnulusPoint([0.0], [0.0]), np.diag([1.0, -1.0]))


def test_linear_image_scales_area_by_determinant():
    ellipse = Ellipse2D(AnnulusPoint([0.2], [0.1]), np.eye(2) * 100.0)
    A = np.array([[1.0, 1.0], [0.0, 1.0]])
    assert ellipse.linear_image(A).area == pytest.approx(ellipse.area)
    assert ellipse.scaled(2.0).area == pytest.approx(4.0 * ellipse.area)


def test_polygon_area_contains_and_inscribed_ellipse():
    center = AnnulusPoint([0.5], [0.5])
    square = PolygonCarrier(center, np.array([[0.4, 0.4], [0.6, 0.4], [0.6, 0.6], [0.4, 0.6]]))
    assert square.area == pytest.approx(0.04)
    assert square.contains(np.array([0.5, 0.5]))
    assert not square.contains(np.array([0.7, 0.5]))
    inscribed = square.inscribed_ellipse(np.eye(2))
    assert inscribed.area == pytest.approx(math.pi * 0.01)


def test_polygon_hull_of_drops_interior_points():
    center = AnnulusPoint([0.0], [0.0])
    points = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0], [0.0, 0.0]]) * 0.01
    hull = PolygonCarrier.hull_of(center, points)
    assert hull.vertices.shape == (4, 2)


def test_polygon_sagitta_ignores_stretching():
    phi = 2.0 * math.pi * np.arange(12) / 12
    ring = 0.01 * np.stack([np.cos(phi), 1e-3 * np.sin(phi)], axis=-1)
    thin = PolygonCarrier(AnnulusPoint([0.0], [0.5]), ring + np.array([0.0, 0.5]))
    assert thin.chord_sagitta() == pytest.approx(1.0 - math.cos(math.pi / 12))
    assert thin.diameter == pytest.approx(0.02)
    shrunk = thin.rescaled(4.0)
    assert shrunk.area == pytest.approx(thin.area / 4.0)
    assert shrunk.center.actions[0] == pytest.approx(0.125)


def test_polydisc_measure_capacity_and_bound():
    a = Ellipse2D(AnnulusPoint([0.0], [0.0]), np.eye(2) * 100.0)
    b = Ellipse2D(AnnulusPoint([0.5], [0.0]), np.eye(2) * 400.0)
    P = Polydisc((a, b))
    assert P.measure == pytest.approx(a.area * b.area)
    assert polydisc_capacity(P) == pytest.approx(b.area)
    bound = capacity_measure_bound(P)
    assert bound.bound_ok
    assert ball_volume(2) == pytest.approx(math.pi**2 / 2)
    points = P.sample_points(samples=16, interior=8)
    assert points.shape == (1 + 32 + 8, 4)
    assert np.all(P.contains(points, slack=1e-9))


def test_localization_constraint_modes():
    region = ProductRegion((BandRegion(0.1),))
    avoid = LocalizationConstraint(region, "avoid", 1, 3)
    assert avoid.applies_to(2) and not avoid.applies_to(4)
    assert avoid.violated(np.array([[0.05, 0.0]]))
    assert not avoid.violated(np.array([[0.3, 0.0]]))
    inside = LocalizationConstraint(region, "inside", 0, 0)
    assert inside.violated(np.array([[0.3, 0.0]]))


def test_ellipse_schema_round_trip_keeps_area():
    ellipse = Ellipse2D(AnnulusPoint([0.25], [0.1]), np.array([[400.0, 20.0], [20.0, 300.0]]))
    restored = EllipseSchema.from_carrier(ellipse).to_carrier()
    assert restored.area == pytest.approx(ellipse.area)
    assert np.allclose(restored.center_array, ellipse.center_array)
