import numpy as np
import pytest
import sympy as sp

from app.core.errors import SyncError, UnsupportedCaseError
from app.core.geometry import as_polydisc
from app.dynamics.constructions import coupled_ellipses
from app.dynamics.coupling import (
    CoupledMap,
    check_prediction,
    check_sync,
    coupled_apply,
    predict_iterate,
    tensor_product,
    verify_coupled_periodic,
)
from app.dynamics.maps import AngleFunction, Shear
from app.numerics.gevrey import SampledFunction, make_eta

x = sp.Symbol("x")
COSINE = SampledFunction.from_expression(sp.cos(2 * sp.pi * x), x, "cos")
PAIR = coupled_ellipses(3, 5)
C, DOMAIN = PAIR


def sample_set(samples=16):
    return DOMAIN.polydisc.sample_points(samples, seed=3, interior=8)


def test_tensor_product_multiplies_factor_values():
    f = AngleFunction.single(1, COSINE)
    g = AngleFunction.single(1, make_eta(2.0, 4))
    fg = tensor_product(f, g)
    assert fg.n == 2
    angles = np.array([0.1, 0.05])
    assert fg.value(angles) == pytest.approx(float(COSINE(0.1)) * float(make_eta(2.0, 4)(0.05)))


def test_coupled_map_rejects_action_dependent_coupling():
    with pytest.raises(UnsupportedCaseError):
        CoupledMap(Shear.quadratic(1), lambda z: z, Shear.quadratic(1), AngleFunction.single(1, COSINE))


def test_product_formula_matches_expanded_kick():
    z = sample_set()
    assert np.allclose(C.apply_lifted(z), C.expand().apply_lifted(z), atol=1e-14)
    assert np.allclose(C.inverse().apply_lifted(C.apply_lifted(z)), z, atol=1e-12)


def test_coupled_apply_joins_the_factors():
    z = sample_set()[:4]
    x_part, xp_part = C.split(z)
    assert np.allclose(coupled_apply(C, x_part, xp_part), C.apply(z))


def test_sync_holds_on_the_periodic_ellipse():
    assert PAIR.sync.passed
    assert PAIR.sync.parameters["q"] == 5
    assert PAIR.sync.margins["max_abs_g_minus_1"] < 1e-12


def test_sync_fails_when_the_bump_is_too_wide():
    g = AngleFunction.single(1, make_eta(2.0, 2))
    V = as_polydisc(DOMAIN.polydisc.factors[1])
    report = check_sync(g, C.G, V.sample_points(32), 5)
    assert not report.passed
    assert "iterates" in report.failed


def test_prediction_needs_a_sync_report():
    with pytest.raises(SyncError):
        predict_iterate(C, sample_set(), 1, 0, None)
    stale = PAIR.sync.model_copy(update={"parameters": {**PAIR.sync.parameters, "q": 7}})
    with pytest.raises(SyncError):
        check_prediction(C, sample_set(), stale, [1])


def test_prediction_matches_direct_iteration():
    report = check_prediction(C, sample_set(), PAIR.sync, [1, 4, 5, 6, 11, 15, -1, -6])
    assert report.passed, report.margins
    assert report.kind == "prediction"


def test_product_of_ellipses_is_pq_periodic():
    U, V = DOMAIN.polydisc.factors
    report = verify_coupled_periodic(C, U, V, 3, PAIR.sync, DOMAIN.localization, samples=32)
    assert report.kind == "coupled_periodic"
    assert report.parameters["period"] == 15
    assert report.passed, report.failed
