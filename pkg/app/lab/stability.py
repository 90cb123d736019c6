"""Escape-time sweeps for near-integrable families Psi_eps = Phi^{eps u} o Phi^{|r|^2/2}.

For each eps an ensemble is iterated until the first point drifts farther
than rho in action (or the iteration cap). Stability over exponentially long
times shows up as escape times growing fast as eps decreases; the sweep checks
monotonicity and fits log T_esc against (1/eps)^{1/(2 n alpha)}.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import sympy as sp
from scipy.stats import qmc

from app.core.config import settings
from app.core.errors import InvalidParameterError
from app.dynamics.constructions import Assembly
from app.dynamics.maps import AngleFunction, Composite, Kick, Shear, SymplecticMap
from app.lab.models import StabilityPoint, StabilitySweep
from app.numerics.gevrey import SampledFunction

logger = logging.getLogger(__name__)

CONFINEMENT_NOTE = (
    "confinement exponents with explicit constants are out of reach at desk scale; "
    "only monotonicity of escape times and the direction of the drift are checked"
)


@dataclass(frozen=True)
class PerturbedFamily:
    """eps -> Phi^{eps u} o Phi^{|r|^2/2} on n factors."""

    u: AngleFunction
    label: str
    alpha: float = 1.0

    @property
    def n(self) -> int:
        return self.u.n

    def __call__(self, eps: float) -> SymplecticMap:
        return Composite((Kick(self.u.scaled(eps)), Shear.quadratic(self.n)))


def cosine_family(n: int = 1) -> PerturbedFamily:
    """u(theta) = sum_i cos(2 pi theta_i), analytic (alpha = 1)."""
    if n < 1:
        raise InvalidParameterError(f"cosine_family: n must be >= 1, got {n}")
    x = sp.Symbol("x")
    profile = SampledFunction.from_expression(sp.cos(2 * sp.pi * x), x, "cos(2 pi theta)")
    u = AngleFunction.single(n, profile, 0)
    for i in range(1, n):
        u = u + AngleFunction.single(n, profile, i)
    return PerturbedFamily(u, f"cos family n={n}", alpha=1.0)


def quasi_random_ensemble(n: int, size: Optional[int] = None, action_range: float = 1.0, seed: Optional[int] = None) -> np.ndarray:
    """Halton points: angles in [0, 1)^n, actions in [0, action_range)^n."""
    size = size or settings.lab.ensemble_size
    seed = settings.lab.seed if seed is None else seed
    points = qmc.Halton(d=2 * n, scramble=True, seed=seed).random(size)
    points[:, n:] *= action_range
    return points


@dataclass(frozen=True)
class EscapeResult:
    escape_time: int
    capped: bool
    max_drift: float


def escape_time(m: SymplecticMap, ensemble: np.ndarray, rho: float, cap: int) -> EscapeResult:
    """First k with |r_k - r_0| > rho for some ensemble point, or the cap."""
    n = m.n
    z = np.array(ensemble, dtype=float, copy=True)
    r0 = z[:, n:].copy()
    worst = 0.0
    for k in range(1, cap + 1):
        z = m.apply_lifted(z)
        drift = float(np.max(np.linalg.norm(z[:, n:] - r0, axis=-1)))
        worst = max(worst, drift)
        if drift > rho:
            return EscapeResult(k, False, worst)
    return EscapeResult(cap, True, worst)


def fit_escape_law(points: Sequence[StabilityPoint], n: int, alpha: float) -> Dict[str, Optional[float]]:
    """Least squares log T = a + b (1/eps)^{1/(2 n alpha)} over uncapped, eps > 0 points."""
    usable = [p for p in points if p.epsilon > 0 and not p.capped]
    if len(usable) < 2:
        return {"slope": None, "intercept": None, "residual": None}
    x = np.array([(1.0 / p.epsilon) ** (1.0 / (2 * n * alpha)) for p in usable])
    y = np.log([float(p.escape_time) for p in usable])
    coeffs, residuals, *_ = np.polyfit(x, y, 1, full=True)
    residual = float(np.sqrt(residuals[0] / len(usable))) if residuals.size else 0.0
    return {"slope": float(coeffs[0]), "intercept": float(coeffs[1]), "residual": residual}


def stability_sweep(
    family: PerturbedFamily,
    epsilons: Sequence[float],
    rho: float,
    cap: Optional[int] = None,
    ensemble: Optional[np.ndarray] = None,
    workers: int = 1,
) -> StabilitySweep:
    """Escape times per eps, sorted by decreasing eps."""
    if rho <= 0:
        raise InvalidParameterError(f"stability_sweep: rho must be positive, got {rho}")
    if any(eps < 0 for eps in epsilons):
        raise InvalidParameterError("stability_sweep: eps values must be non-negative")
    cap = cap or settings.lab.escape_cap
    ensemble = quasi_random_ensemble(family.n) if ensemble is None else np.asarray(ensemble, dtype=float)
    if ensemble.shape[-1] != 2 * family.n:
        raise InvalidParameterError(f"stability_sweep: ensemble states must have size {2 * family.n}")
    ordered = sorted(set(float(e) for e in epsilons), reverse=True)

    def run(eps: float) -> StabilityPoint:
        result = escape_time(family(eps), ensemble, rho, cap)
        logger.debug(f"eps={eps:.3e}: T_esc={result.escape_time}{' (cap)' if result.capped else ''}")
        return StabilityPoint(epsilon=eps, escape_time=result.escape_time, capped=result.capped, max_drift=result.max_drift)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(run, ordered))
    else:
        points = [run(eps) for eps in ordered]

    times = [p.escape_time for p in points]
    monotone = all(later >= earlier for earlier, later in zip(times, times[1:]))
    growth = [later / earlier for earlier, later in zip(times, times[1:]) if earlier > 0]
    fit = fit_escape_law(points, family.n, family.alpha)
    notes = [CONFINEMENT_NOTE]
    if not monotone:
        notes.append("escape times are not monotone in eps")
    sweep = StabilitySweep(
        family=family.label,
        n=family.n,
        alpha=family.alpha,
        rho=rho,
        cap=cap,
        ensemble_size=int(ensemble.shape[0]),
        points=points,
        monotone=monotone,
        growth_factor=min(growth) if growth else None,
        slope=fit["slope"],
        residual=fit["residual"],
        notes=notes,
    )
    logger.info(f"Stability sweep over {len(points)} eps values: monotone={monotone}, escape times {times}")
    return sweep


def measure_trend(assemblies: Sequence[Assembly]) -> Dict[str, object]:
    """Product of factor areas of the wandering polydiscs against their deviation.

    Direction check only: the measure should shrink along with the deviation.
    """
    rows: List[Dict[str, float]] = []
    for assembly in assemblies:
        rows.append(
            {
                "j": float(assembly.primes.j),
                "deviation": assembly.ledger.total,
                "measure": float(np.prod(assembly.capacity.factor_areas)),
            }
        )
    rows.sort(key=lambda row: row["deviation"], reverse=True)
    measures = [row["measure"] for row in rows]
    decreasing = all(later <= earlier for earlier, later in zip(measures, measures[1:]))
    return {"rows": rows, "decreasing": decreasing}
