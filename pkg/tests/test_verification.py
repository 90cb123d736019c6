import json

import numpy as np
import pytest

from app.core.errors import InvalidParameterError
from app.core.geometry import AnnulusPoint, Ellipse2D, Polydisc
from app.dynamics.constructions import build_G_Nmu, island_ellipse, periodic_ellipse, standard_wandering_disc
from app.dynamics.maps import Shear
from app.dynamics.pendulum import build_adapted_box, default_potential, island_linear_data, island_mu
from app.lab.verification import (
    normalized_excess,
    separation,
    separation_threshold,
    verify_localization,
    verify_periodic,
    verify_wandering,
)

E = periodic_ellipse(5, 0.1)


def test_normalized_excess_of_an_ellipse():
    carrier = Ellipse2D(AnnulusPoint([0.5], [0.0]), np.eye(2) * 100.0)
    points = np.array([[0.5, 0.0], [0.6, 0.0], [0.7, 0.0]])
    assert np.allclose(normalized_excess(carrier, points), [-1.0, 0.0, 1.0])
    assert np.allclose(separation(Polydisc((carrier,)), points), [0.0, 0.0, 1.0])
    assert separation_threshold(256, 10.0) == pytest.approx(10.0 * 2.0 * np.pi / 256)


def test_periodic_ellipse_passes_with_its_constraints():
    report = verify_periodic(E.host, E.carrier, 5, E.localization, samples=64)
    assert report.passed
    assert report.margins["localization_violations"] == 0.0
    assert report.margins["return_error"] <= report.tolerances["return"]


def test_wrong_period_is_reported_not_raised():
    report = verify_periodic(E.host, E.carrier, 4, samples=64)
    assert not report.passed
    assert report.failed == "return"


def test_periodic_domain_does_not_wander():
    report = verify_wandering(E.host, E.carrier, 5, samples=64)
    assert not report.passed
    assert report.failed == "disjoint"
    assert abs(report.margins["worst_k"]) == 5.0


def test_wandering_disc_separates_in_both_directions():
    W = standard_wandering_disc(4)
    report = verify_wandering(W.host, W.carrier, 12, samples=64)
    assert report.passed
    assert report.margins["min_separation"] > report.tolerances["separation"]


def test_localization_over_one_period():
    report = verify_localization(E.host, E.carrier, E.localization, 4, samples=64)
    assert report.passed and report.kind == "localization"


def test_dimension_mismatch_is_rejected():
    with pytest.raises(InvalidParameterError):
        verify_periodic(Shear.quadratic(2), E.carrier, 1)
    with pytest.raises(InvalidParameterError):
        verify_wandering(E.host, E.carrier, 0)


def test_report_json_is_reproducible():
    first = verify_periodic(E.host, E.carrier, 5, samples=32)
    second = verify_periodic(E.host, E.carrier, 5, samples=32)
    assert first.deterministic_json() == second.deterministic_json()
    assert "runtime_s" not in json.loads(first.deterministic_json())


def test_containment_is_strict_unless_a_slack_is_given():
    report = verify_periodic(E.host, E.carrier, 5, samples=32, exact=(False,))
    assert report.passed
    assert report.tolerances["containment_slack"] == 0.0
    assert not report.parameters["envelope"]
    with pytest.raises(InvalidParameterError):
        verify_periodic(E.host, E.carrier, 5, samples=32, containment_slack=-1e-3)


def test_linear_island_ellipse_is_not_invariant():
    V = default_potential()
    box = build_adapted_box(64, 2, V=V)
    mu = island_mu(64, 2, V)
    carrier = island_ellipse(box, island_linear_data(64, 2, mu, V))
    host = build_G_Nmu(V, None, 2, mu, box.delta)
    report = verify_periodic(host, carrier, 64, samples=32, exact=(False,))
    assert report.failed == "return_containment"
    assert report.margins["containment_excess"] > report.tolerances["containment"]


def test_envelope_must_match_the_carrier_dimension():
    with pytest.raises(InvalidParameterError):
        verify_periodic(E.host, E.carrier, 5, samples=32, envelope=Polydisc((E.carrier, E.carrier)))
