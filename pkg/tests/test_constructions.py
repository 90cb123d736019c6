import math

import numpy as np
import pytest

from app.core.errors import InvalidParameterError, RegimeError
from app.core.geometry import BandRegion, LocalizationConstraint, ProductRegion
from app.dynamics.constructions import (
    PrimeProduct,
    affine_iterate,
    assemble_Phi_j,
    assemble_Psi_jq,
    build_G_Nmu,
    coupled_ellipses,
    ellipse_return_matrix,
    pendulum_island,
    periodic_ellipse,
    primes_from,
    quotient_linear_part,
    rescale_carrier,
    standard_invariant_ellipse,
    standard_wandering_disc,
    tune_mu,
)
from app.dynamics.maps import deviation
from app.dynamics.pendulum import default_potential, island_mu
from app.lab.verification import certify, verify_periodic


def test_primes_and_products():
    assert primes_from(2, 5) == [2, 3, 5, 7, 11]
    assert primes_from(10, 2) == [11, 13]
    two = PrimeProduct.build(0, 2)
    assert two.primes == (5,) and two.N == 5
    three = PrimeProduct.build(0, 3)
    assert three.primes == (5, 7) and three.N == 35 and three.gap_ok
    with pytest.raises(InvalidParameterError):
        PrimeProduct.build(0, 1)


def test_periodic_ellipse_area_and_certificate():
    E = periodic_ellipse(5, 0.1)
    assert E.carrier.area == pytest.approx(math.pi / 6400)
    assert E.period == 5 and E.exact == (True,)
    report = certify(E, samples=64)
    assert report.passed, report.failed


def test_periodic_ellipse_preconditions():
    with pytest.raises(InvalidParameterError):
        periodic_ellipse(1, 0.1)
    with pytest.raises(InvalidParameterError):
        periodic_ellipse(5, 0.3)


def test_periodic_ellipses_return_onto_themselves():
    for p, nu in [(3, 0.2), (5, 0.1), (11, 0.04)]:
        E = periodic_ellipse(p, nu)
        assert E.carrier.area == pytest.approx(math.pi * nu / (128 * p), rel=1e-12)
        report = verify_periodic(E.host, E.carrier, p, E.localization, samples=64, tolerance=1e-10)
        assert report.passed, (p, nu, report.failed)
        assert report.margins["return_error"] < 1e-10 * E.carrier.diameter


def test_periodic_ellipse_must_return_to_the_quadratic_plateau():
    # nu p^2 = 6.05 exceeds 8 sin(gamma) = 5.51
    with pytest.raises(RegimeError, match="quadratic plateau"):
        periodic_ellipse(11, 0.05)


def test_first_iterate_sits_on_the_edge_of_the_wide_band():
    p, nu = 5, 0.1
    E = periodic_ellipse(p, nu)
    x, _ = affine_iterate(p, nu, 1, np.array([0.0]), np.array([0.0]))
    assert x[0] == pytest.approx(1.0 / p)
    wide = LocalizationConstraint(ProductRegion((BandRegion(1.0 / p),)), "avoid", 1, p - 1, "avoid B_1/p")
    narrow = LocalizationConstraint(ProductRegion((BandRegion(1.0 / (2 * p)),)), "avoid", 1, p - 1, "avoid B_1/2p")
    failing = verify_periodic(E.host, E.carrier, p, (wide,), samples=64)
    assert failing.failed == "localization"
    assert failing.notes[0].endswith("@1")
    assert verify_periodic(E.host, E.carrier, p, (narrow,), samples=64).passed


def test_affine_return_is_the_linear_part():
    p, nu = 5, 0.1
    x, y = np.array([1e-3]), np.array([-2e-4])
    u, v = affine_iterate(p, nu, p, x, y)
    expected = ellipse_return_matrix(p, nu) @ np.array([x[0], y[0]])
    assert np.allclose([u[0], v[0]], expected)
    assert np.linalg.det(ellipse_return_matrix(p, nu)) == pytest.approx(1.0)


def test_quotient_linear_part_is_elliptic():
    A = quotient_linear_part()
    assert np.trace(A) == pytest.approx(1.0)
    assert np.linalg.det(A) == pytest.approx(1.0)
    E = standard_invariant_ellipse()
    assert np.allclose(A.T @ E.shape @ A, E.shape)


def test_wandering_disc_area_scales_like_one_over_q():
    discs = [standard_wandering_disc(q) for q in (1, 4)]
    products = [d.carrier.area * d.parameters["q"] for d in discs]
    assert products[0] == pytest.approx(products[1])
    assert products[0] == pytest.approx(discs[0].parameters["C0"])
    assert rescale_carrier(discs[0].carrier, 1.0).area == pytest.approx(discs[0].carrier.area)


def test_wandering_disc_is_certified():
    report = certify(standard_wandering_disc(4), samples=64, window=12)
    assert report.kind == "wandering"
    assert report.passed, report.margins


def test_tune_mu_takes_the_smaller_branch():
    tuning = tune_mu(0, 64)
    assert tuning.N == 5
    assert tuning.mu == pytest.approx(min(tuning.polynomial, tuning.exponential))
    assert tuning.branch in ("polynomial", "exponential")
    with pytest.raises(InvalidParameterError):
        tune_mu(0, 2)


def test_pendulum_island_is_periodic_and_localized():
    island = pendulum_island(64, 2)
    assert island.period == 64
    assert island.parameters["mu"] * island.parameters["alpha"] == pytest.approx(0.05)
    report = certify(island, samples=16)
    assert report.passed, report.failed
    assert island.containment_slack == 0.0
    assert island.envelope is not None and island.carrier.area < island.envelope.area
    assert report.tolerances["containment_slack"] == 0.0
    assert report.parameters["envelope"]


def test_psi_assembly_is_periodic_and_localized():
    V = default_potential()
    assembly = assemble_Psi_jq(0, 3, 2, mu=island_mu(10, 5, V), V=V, sync_samples=16)
    host, domain = assembly
    assert assembly.primes.N == 35
    assert domain.period == 70 and domain.exact == (False, True)
    assert domain.envelope is not None and domain.envelope.n == 2
    assert assembly.sync is not None and assembly.sync.passed
    report = certify(domain, samples=16)
    assert report.passed, report.failed
    payload = assembly.to_dict()
    assert payload["deviation"]["scaled_by_N_squared"] == pytest.approx(assembly.ledger.total * 35**2)


def test_deviation_scales_like_one_over_N_squared():
    V = default_potential()
    scaled = []
    for j in range(3):
        N = PrimeProduct.build(j, 2).N
        tuning = tune_mu(j, 2 * N, V=V)
        scaled.append(deviation(build_G_Nmu(V, None, N, tuning.mu)).total * N**2)
    assert max(scaled) < 2.0 * min(scaled)


def test_coupled_ellipses_domain():
    pair = coupled_ellipses(3, 5)
    assert pair.domain.period == 15
    assert pair.domain.exact == (True, True)
    assert pair.domain.capacity == pytest.approx(min(f.area for f in pair.domain.polydisc.factors))


def test_phi_assembly_caps_the_period():
    assembly = assemble_Phi_j(0, 2, q_max=40, sync_samples=16)
    host, domain = assembly
    q_j = assembly.parameters["q_j"]
    assert q_j <= 40 and q_j % 5 == 0
    assert assembly.parameters["capped"] == (assembly.parameters["q_prescribed"] > 40)
    assert domain.kind == "wandering" and domain.window == 3 * q_j
    assert host.n == 2
    assert assembly.capacity.capacity == pytest.approx(min(assembly.capacity.factor_areas))
    assert assembly.sync is not None and assembly.sync.passed
    payload = assembly.to_dict()
    assert payload["primes"]["N"] == 5


def test_phi_assembly_refuses_uncapped_overflow():
    with pytest.raises(InvalidParameterError):
        assemble_Phi_j(0, 2, q_max=4, allow_cap=False)
