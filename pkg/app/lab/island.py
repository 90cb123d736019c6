"""Numerical island detection around the elliptic point a_{q,N} of G_{N,mu}^q.

Initial conditions are spread along rays through the fixed point of the local
return map F_{q,N,mu}, equally spaced in the frame where its linear invariant
ellipse is the unit disc. An orbit is bounded when it stays in the adapted box
for the whole iteration budget, and a ray counts only up to its first escape.
The island is the convex hull of the orbit of the outermost bounded start.
Refining the radial grid keeps the old starts, so the area cannot drop.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.core.errors import InvalidParameterError, RegimeError
from app.core.geometry import AnnulusPoint, Ellipse2D, PolygonCarrier
from app.dynamics.constructions import CertifiedDomain, build_G_Nmu, island_ellipse, pendulum_localization
from app.dynamics.pendulum import (
    AdaptedBox,
    NormalForm,
    build_adapted_box,
    default_potential,
    island_linear_data,
    local_return_map,
)
from app.numerics.gevrey import SampledFunction

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IslandDetection:
    domain: CertifiedDomain
    area: float
    normalized_area: float
    radii: Tuple[float, ...]
    localized: bool
    degenerate: bool = False
    inscribed: Optional[Ellipse2D] = None
    runtime_s: float = 0.0

    def as_dict(self) -> Dict[str, Any]:
        return {
            "area": self.area,
            "area_N2_over_mu": self.normalized_area,
            "radii": list(self.radii),
            "localized": self.localized,
            "degenerate": self.degenerate,
            "inscribed_area": self.inscribed.area if self.inscribed is not None else None,
            "domain": self.domain.to_dict(),
        }


def _box_polygon(box: AdaptedBox) -> np.ndarray:
    return np.array(
        [
            [box.theta_center - box.ell, box.r_center - box.ell_prime],
            [box.theta_center + box.ell, box.r_center - box.ell_prime],
            [box.theta_center + box.ell, box.r_center + box.ell_prime],
            [box.theta_center - box.ell, box.r_center + box.ell_prime],
        ]
    )


def _localized(vertices: np.ndarray, N: float, delta: float) -> bool:
    theta_ok = np.all(np.abs(vertices[:, 0]) <= delta / (2.0 * N))
    r_ok = np.all((vertices[:, 1] >= 0.0) & (vertices[:, 1] <= 4.0 * delta / N))
    return bool(theta_ok and r_ok)


def _bounded_prefix(alive: np.ndarray) -> np.ndarray:
    """Length of the leading run of True along the last axis."""
    escaped = ~alive
    first = np.argmax(escaped, axis=-1)
    return np.where(escaped.any(axis=-1), first, alive.shape[-1])


def _ray_directions(shape: np.ndarray, rays: int) -> np.ndarray:
    """Boundary offsets of {v^T shape v <= 1} at equally spaced angles of its
    whitened frame, shape (rays, 2)."""
    phi = 2.0 * math.pi * np.arange(rays) / rays
    unit = np.stack([np.cos(phi), np.sin(phi)])
    lower = np.linalg.cholesky(shape)
    return np.linalg.solve(lower.T, unit).T


def detect_island(
    box: AdaptedBox,
    mu: float,
    V: Optional[SampledFunction] = None,
    rays: Optional[int] = None,
    radial: Optional[int] = None,
    iterations: Optional[int] = None,
    eta0: Optional[float] = None,
) -> IslandDetection:
    """Island of G_{N,mu} around a_{q,N}, carried by a convex polygon; q-periodic.

    ``mu = 0`` is the integrable control case: every action level is invariant
    and the whole adapted box is reported.
    """
    started = time.perf_counter()
    lab = settings.lab
    V = V or default_potential()
    rays = rays or lab.island_rays
    radial = radial or lab.island_radial_samples
    iterations = iterations or lab.island_iterations
    eta0 = lab.eta0 if eta0 is None else eta0
    if mu < 0:
        raise InvalidParameterError(f"detect_island: mu must be non-negative, got {mu}")
    N = int(box.N)
    nf = NormalForm.build(box.q, box.N, V)
    alpha = float(nf.derivative(nf.orbit.r, 2))
    if mu * alpha >= eta0:
        raise RegimeError(f"detect_island: mu alpha = {mu * alpha:.4g} not below eta0 = {eta0}")
    center = AnnulusPoint([box.theta_center], [box.r_center])
    host = build_G_Nmu(V, None, N, mu, box.delta)
    localization = pendulum_localization(box.q, N, box.delta)

    inscribed: Optional[Ellipse2D] = None
    slack = 0.0
    if mu == 0.0:
        polygon = PolygonCarrier(center, _box_polygon(box))
        radii: Tuple[float, ...] = (1.0,) * rays
        degenerate = True
        logger.info(f"Island scan q={box.q} N={N}: mu = 0, reporting the full adapted box")
    else:
        F = local_return_map(box, mu, V)
        linear = island_linear_data(box.q, N, mu, V)
        hint = island_ellipse(box, linear, 1.0).shape
        directions = _ray_directions(hint, rays)
        s = np.arange(1, radial + 1) / radial
        x0 = s[None, :] * directions[:, 0, None]
        R0 = s[None, :] * directions[:, 1, None]
        x, R = x0.copy(), R0.copy()
        alive = np.ones_like(x, dtype=bool)
        for _ in range(iterations):
            xn, Rn = F.step(x, R)
            x = np.where(alive, xn, x)
            R = np.where(alive, Rn, R)
            alive &= F.inside(x, R)
            if not alive.any():
                break
        prefix = _bounded_prefix(alive)
        if not np.any(prefix > 0):
            raise RegimeError(
                f"detect_island: no bounded orbit for q={box.q}, N={N}, mu={mu:.4g} in {iterations} iterations"
            )
        # outermost start whose whole ray segment from the centre stays bounded
        ray = int(np.argmax(prefix))
        xs, Rs = np.array([x0[ray, prefix[ray] - 1]]), np.array([R0[ray, prefix[ray] - 1]])
        # at least two turns of the linear rotation, at most a hundred budgets
        turns = 2 * math.ceil(2.0 * math.pi / max(abs(linear.gamma0), 1e-12))
        traces: List[np.ndarray] = []
        for _ in range(min(max(iterations, turns), 100 * iterations)):
            traces.append(np.stack([xs, Rs], axis=-1))
            xs, Rs = F.step(xs, Rs)
        orbit = np.concatenate(traces)
        polygon = PolygonCarrier.hull_of(center, orbit + np.array([box.theta_center, box.r_center]))
        slack = polygon.chord_sagitta()
        radii = tuple(float(prefix[k]) / radial for k in range(rays))
        degenerate = False
        try:
            inscribed = polygon.inscribed_ellipse(hint)
        except InvalidParameterError:
            logger.warning(f"Island hull for q={box.q}, N={N} does not surround a_q,N; no inscribed ellipse")
        logger.info(
            f"Island scan q={box.q} N={N} mu={mu:.4e}: {int(np.sum(prefix > 0))}/{rays} rays bounded, "
            f"outermost radius {radii[ray]:.3f}, area {polygon.area:.4e}"
        )

    area = polygon.area
    normalized = area * N**2 / mu if mu > 0 else math.inf
    domain = CertifiedDomain(
        polygon,
        "periodic",
        host,
        period=box.q,
        localization=localization,
        exact=(False,),
        label=f"Omega_{box.q},{N}",
        containment_slack=slack,
        parameters={
            "q": box.q,
            "N": N,
            "mu": mu,
            "alpha": alpha,
            "mu_alpha": mu * alpha,
            "box_area": box.area,
            "chord_sagitta": slack,
        },
    )
    return IslandDetection(
        domain,
        area,
        normalized,
        radii,
        _localized(polygon.vertices, box.N, box.delta),
        degenerate,
        inscribed,
        time.perf_counter() - started,
    )


def island_sweep(
    pairs: Sequence[Tuple[int, int]],
    V: Optional[SampledFunction] = None,
    target: Optional[float] = None,
    **scan: Any,
) -> Tuple[List[Dict[str, float]], Dict[str, float]]:
    """area N^2/mu across (q, N) with mu alpha_{q,N} at ``target``; fitted C_3, C_4."""
    V = V or default_potential()
    target = settings.assembly.mu_alpha_target if target is None else target
    rows = []
    for q, N in pairs:
        box = build_adapted_box(q, N, V=V)
        nf = NormalForm.build(q, N, V)
        mu = target / float(nf.derivative(nf.orbit.r, 2))
        found = detect_island(box, mu, V, **scan)
        rows.append(
            {
                "q": float(q),
                "N": float(N),
                "mu": mu,
                "area": found.area,
                "area_N2_over_mu": found.normalized_area,
                "localized": float(found.localized),
            }
        )
    values = [row["area_N2_over_mu"] for row in rows]
    constants = {"C3": float(min(values)), "C4": float(max(values))}
    logger.info(f"Island sweep over {len(rows)} (q, N) pairs: C3={constants['C3']:.4g}, C4={constants['C4']:.4g}")
    return rows, constants
