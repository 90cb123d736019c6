"""Sampling-based certification of periodic and wandering domains.

Carriers are sampled on the boundary of every factor plus random
boundary combinations. Iterates are compared with the carrier through the
normalized excess of each factor: ``s - 1`` for an ellipse with normalized
radius ``s``; for a polygon, the facet-plane distance over the largest vertex
radius, both measured after whitening the vertex cloud.
Both are scale free, so thin rescaled discs are judged like round ones.
"""

from __future__ import annotations

import logging
import math
import time
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np
from scipy.spatial import ConvexHull

from app.core.config import settings
from app.core.errors import InvalidParameterError
from app.core.geometry import (
    Carrier,
    Ellipse2D,
    LocalizationConstraint,
    Polydisc,
    annulus_difference,
    as_polydisc,
)
from app.dynamics.maps import SymplecticMap
from app.lab.models import VerificationReport

if TYPE_CHECKING:
    from app.dynamics.constructions import CertifiedDomain

logger = logging.getLogger(__name__)


def factor_points(z: np.ndarray, i: int, n: int) -> np.ndarray:
    return np.stack([z[..., i], z[..., n + i]], axis=-1)


def normalized_radius(carrier: Ellipse2D, points: np.ndarray) -> np.ndarray:
    """sqrt(v^T M v) for v the torus-aware offset from the center; 1 on the boundary."""
    diff = annulus_difference(np.asarray(points, dtype=float), carrier.center_array, 1)
    return np.sqrt(np.einsum("...i,ij,...j->...", diff, carrier.shape, diff))


def normalized_excess(carrier: Carrier, points: np.ndarray) -> np.ndarray:
    """Positive outside the carrier, non-positive inside; 1 means one radius away."""
    points = np.asarray(points, dtype=float)
    if isinstance(carrier, Ellipse2D):
        return normalized_radius(carrier, points) - 1.0
    # frame where the vertex offsets have unit covariance
    T = carrier.whitening()
    vertices = carrier.offsets() @ T.T
    local = carrier.offsets(points) @ T.T
    hull = ConvexHull(vertices)
    planes = local @ hull.equations[:, :2].T + hull.equations[:, 2]
    return np.max(planes, axis=-1) / float(np.hypot(vertices[:, 0], vertices[:, 1]).max())


def separation(P: Polydisc, z: np.ndarray) -> np.ndarray:
    """Normalized distance of each state from the polydisc (0 inside)."""
    n = P.n
    total = np.zeros(z.shape[:-1])
    for i, carrier in enumerate(P.factors):
        excess = normalized_excess(carrier, factor_points(z, i, n))
        total = total + np.maximum(excess, 0.0) ** 2
    return np.sqrt(total)


def separation_threshold(samples: int, factor: float) -> float:
    """``factor`` times the angular spacing 2 pi / samples of the boundary samples."""
    return factor * 2.0 * math.pi / samples


def _check_dimension(m: SymplecticMap, P: Polydisc) -> None:
    if m.n != P.n:
        raise InvalidParameterError(f"map acts on {m.n} factors but the carrier has {P.n}")


def verify_periodic(
    m: SymplecticMap,
    carrier: Carrier | Polydisc,
    period: int,
    constraints: Sequence[LocalizationConstraint] = (),
    samples: Optional[int] = None,
    tolerance: Optional[float] = None,
    exact: Optional[Sequence[bool]] = None,
    containment_slack: float = 0.0,
    disjoint_factor: Optional[float] = None,
    seed: Optional[int] = None,
    envelope: Optional[Carrier | Polydisc] = None,
) -> VerificationReport:
    """(a) the ``period``-th image returns onto the carrier, (b) iterates 0..period-1
    respect the localization constraints, (c) iterates 1..period-1 are disjoint
    from the carrier.

    Factors flagged exact must be mapped boundary onto boundary (normalized radius
    preserved to ``tolerance`` times the diameter). The others must come back
    inside their ``envelope`` factor (the carrier itself when no envelope is
    given) up to ``containment_slack`` normalized excess; with an envelope the
    carrier must also start inside it. The slack is reported with the tolerances.
    """
    started = time.perf_counter()
    lab = settings.lab
    P = as_polydisc(carrier)
    _check_dimension(m, P)
    if period < 1:
        raise InvalidParameterError(f"verify_periodic: period must be >= 1, got {period}")
    samples = samples or lab.boundary_samples
    seed = lab.seed if seed is None else seed
    tolerance = lab.hausdorff_tolerance if tolerance is None else tolerance
    factor = lab.disjoint_factor if disjoint_factor is None else disjoint_factor
    if exact is None:
        exact = [isinstance(f, Ellipse2D) for f in P.factors]
    if containment_slack < 0:
        raise InvalidParameterError(f"verify_periodic: containment_slack must be non-negative, got {containment_slack}")
    bounds = P if envelope is None else as_polydisc(envelope)
    if bounds.n != P.n:
        raise InvalidParameterError(f"verify_periodic: envelope has {bounds.n} factors but the carrier has {P.n}")
    n = P.n

    z0 = P.sample_points(samples, seed)
    z = z0
    min_sep = math.inf
    violations = []
    for k in range(period):
        if k:
            z = m.apply_lifted(z)
            min_sep = min(min_sep, float(np.min(separation(P, z))))
        for c in constraints:
            if c.applies_to(k) and c.violated(z):
                violations.append(f"{c.label or c.mode}@{k}")
    z = m.apply_lifted(z)
    if period > 1:
        # backward orbit of the center: P must not contain it in a forward image
        back = P.center_array[None, :]
        inverse = m.inverse()
        for _ in range(1, period):
            back = inverse.apply_lifted(back)
            min_sep = min(min_sep, float(np.min(separation(P, back))))

    return_error = 0.0
    containment_excess = 0.0
    for i, f in enumerate(P.factors):
        before, after = factor_points(z0, i, n), factor_points(z, i, n)
        if exact[i] and isinstance(f, Ellipse2D):
            drift = np.abs(normalized_radius(f, after) - normalized_radius(f, before))
            return_error = max(return_error, 0.5 * f.diameter * float(np.max(drift)))
        else:
            checked = after if envelope is None else np.concatenate([before, after])
            containment_excess = max(containment_excess, float(np.max(normalized_excess(bounds.factors[i], checked))))

    threshold = separation_threshold(samples, factor)
    tol_abs = tolerance * P.diameter
    # tolerance is relative to the diameter, excess to the half diameter
    containment_bound = containment_slack + 2.0 * tolerance
    margins = {
        "return_error": return_error,
        "containment_excess": containment_excess,
        "localization_violations": float(len(violations)),
        "min_separation": min_sep,
    }
    checks = [
        ("return", return_error <= tol_abs),
        ("return_containment", containment_excess <= containment_bound),
        ("localization", not violations),
        ("disjoint", period == 1 or min_sep > threshold),
    ]
    failed = next((name for name, ok in checks if not ok), None)
    notes = [f"first localization violation: {violations[0]}"] if violations else []
    report = VerificationReport(
        kind="periodic",
        passed=failed is None,
        margins=margins,
        tolerances={
            "return": tol_abs,
            "containment": containment_bound,
            "containment_slack": containment_slack,
            "separation": threshold,
        },
        parameters={
            "period": period,
            "samples": samples,
            "seed": seed,
            "points": int(z0.shape[0]),
            "n": n,
            "envelope": envelope is not None,
        },
        failed=failed,
        notes=notes,
        runtime_s=time.perf_counter() - started,
    )
    logger.info(f"Periodic check (period {period}, n={n}): {'pass' if report.passed else 'fail: ' + str(failed)}")
    return report


def verify_wandering(
    m: SymplecticMap,
    carrier: Carrier | Polydisc,
    window: int,
    samples: Optional[int] = None,
    disjoint_factor: Optional[float] = None,
    seed: Optional[int] = None,
) -> VerificationReport:
    """Psi^k(W) disjoint from W for 0 < |k| <= window, judged on forward and
    backward images of the samples."""
    started = time.perf_counter()
    lab = settings.lab
    if window < 1:
        raise InvalidParameterError(f"verify_wandering: window must be >= 1, got {window}")
    P = as_polydisc(carrier)
    _check_dimension(m, P)
    samples = samples or lab.boundary_samples
    seed = lab.seed if seed is None else seed
    factor = lab.disjoint_factor if disjoint_factor is None else disjoint_factor
    z0 = P.sample_points(samples, seed)
    threshold = separation_threshold(samples, factor)
    worst, worst_k = math.inf, 0
    for direction, step in ((1, m), (-1, m.inverse())):
        z = z0
        for k in range(1, window + 1):
            z = step.apply_lifted(z)
            sep = float(np.min(separation(P, z)))
            if sep < worst:
                worst, worst_k = sep, direction * k
    failed = None if worst > threshold else "disjoint"
    report = VerificationReport(
        kind="wandering",
        passed=failed is None,
        margins={"min_separation": worst, "worst_k": float(worst_k)},
        tolerances={"separation": threshold},
        parameters={"window": window, "samples": samples, "seed": seed, "points": int(z0.shape[0]), "n": P.n},
        failed=failed,
        runtime_s=time.perf_counter() - started,
    )
    logger.info(f"Wandering check |k| <= {window}: {'pass' if report.passed else f'fail at k={worst_k}'}")
    return report


def verify_localization(
    m: SymplecticMap,
    carrier: Carrier | Polydisc,
    constraints: Sequence[LocalizationConstraint],
    Q: int,
    samples: Optional[int] = None,
    seed: Optional[int] = None,
) -> VerificationReport:
    """Constraints over iterates 0..Q of the sample set."""
    started = time.perf_counter()
    P = as_polydisc(carrier)
    _check_dimension(m, P)
    samples = samples or settings.lab.boundary_samples
    seed = settings.lab.seed if seed is None else seed
    z = P.sample_points(samples, seed)
    violations = []
    for k in range(Q + 1):
        if k:
            z = m.apply_lifted(z)
        for c in constraints:
            if c.applies_to(k) and c.violated(z):
                violations.append(f"{c.label or c.mode}@{k}")
    return VerificationReport(
        kind="localization",
        passed=not violations,
        margins={"violations": float(len(violations))},
        parameters={"Q": Q, "samples": samples, "seed": seed, "constraints": [c.label for c in constraints]},
        failed=violations[0] if violations else None,
        runtime_s=time.perf_counter() - started,
    )


def certify(
    domain: "CertifiedDomain", samples: Optional[int] = None, window: Optional[int] = None
) -> VerificationReport:
    """Run the check matching the domain kind."""
    if domain.kind == "periodic":
        return verify_periodic(
            domain.host,
            domain.carrier,
            domain.period,
            domain.localization,
            samples=samples,
            exact=domain.exact,
            containment_slack=domain.containment_slack,
            envelope=domain.envelope,
        )
    if domain.kind == "wandering":
        return verify_wandering(domain.host, domain.carrier, window or domain.window, samples=samples)
    raise InvalidParameterError(f"unknown certified-domain kind '{domain.kind}'")
