from types import SimpleNamespace

import numpy as np
import pytest

from app.core.errors import InvalidParameterError
from app.lab.models import StabilityPoint
from app.lab.stability import (
    CONFINEMENT_NOTE,
    cosine_family,
    escape_time,
    fit_escape_law,
    measure_trend,
    quasi_random_ensemble,
    stability_sweep,
)


def test_cosine_family_dimensions():
    family = cosine_family(2)
    assert family.n == 2
    assert family(0.1).n == 2
    with pytest.raises(InvalidParameterError):
        cosine_family(0)


def test_ensemble_is_reproducible():
    a = quasi_random_ensemble(2, 16, action_range=0.5, seed=11)
    b = quasi_random_ensemble(2, 16, action_range=0.5, seed=11)
    assert a.shape == (16, 4)
    assert np.array_equal(a, b)
    assert np.all(a[:, 2:] < 0.5)


def test_unperturbed_family_never_escapes():
    family = cosine_family(1)
    result = escape_time(family(0.0), quasi_random_ensemble(1, 8), 0.1, 50)
    assert result.capped and result.escape_time == 50
    assert result.max_drift == 0.0


def test_strong_kick_escapes_at_once():
    family = cosine_family(1)
    ensemble = np.array([[0.25, 0.0]])
    result = escape_time(family(0.5), ensemble, 0.1, 50)
    assert result.escape_time == 1 and not result.capped


def test_sweep_orders_by_decreasing_eps_and_checks_monotonicity():
    sweep = stability_sweep(cosine_family(1), [0.0, 0.5], 0.1, cap=40, ensemble=np.array([[0.25, 0.0]]))
    assert [p.epsilon for p in sweep.points] == [0.5, 0.0]
    assert sweep.monotone
    assert sweep.growth_factor == pytest.approx(40.0)
    assert CONFINEMENT_NOTE in sweep.notes


def test_sweep_preconditions():
    with pytest.raises(InvalidParameterError):
        stability_sweep(cosine_family(1), [0.1], 0.0, cap=5)
    with pytest.raises(InvalidParameterError):
        stability_sweep(cosine_family(1), [-0.1], 0.1, cap=5)
    with pytest.raises(InvalidParameterError):
        stability_sweep(cosine_family(1), [0.1], 0.1, cap=5, ensemble=np.zeros((3, 4)))


def test_escape_law_fit_recovers_a_slope():
    points = [
        StabilityPoint(epsilon=eps, escape_time=int(round(np.exp(2.0 * (1.0 / eps) ** 0.5))), capped=False, max_drift=1.0)
        for eps in (0.5, 0.25, 0.125)
    ]
    fit = fit_escape_law(points, n=1, alpha=1.0)
    assert fit["slope"] == pytest.approx(2.0, rel=0.05)
    assert fit_escape_law(points[:1], 1, 1.0)["slope"] is None


def test_measure_trend_direction():
    def fake(j, total, areas):
        return SimpleNamespace(
            primes=SimpleNamespace(j=j), ledger=SimpleNamespace(total=total), capacity=SimpleNamespace(factor_areas=areas)
        )

    trend = measure_trend([fake(1, 0.01, (1e-3, 1e-2)), fake(0, 0.1, (1e-2, 1e-2))])
    assert trend["decreasing"]
    assert [row["j"] for row in trend["rows"]] == [0.0, 1.0]


def test_escape_times_grow_as_the_kick_shrinks_on_the_two_torus():
    ensemble = quasi_random_ensemble(2, 64, action_range=0.5, seed=3)
    # actions in [1/4, 3/4): away from the integer resonance of cos(2 pi theta)
    ensemble[:, 2:] += 0.25
    sweep = stability_sweep(cosine_family(2), [1e-1, 3e-2, 1e-2, 3e-3, 1e-3], 0.05, cap=2000, ensemble=ensemble)
    times = [p.escape_time for p in sweep.points]
    assert sweep.ensemble_size == 64
    assert sweep.monotone
    assert times[-1] >= 10 * times[0]
