"""Annulus geometry: points, bands, strips, ellipses, polydiscs, capacities.

Phase-space arrays use the layout ``(..., 2n)`` with the n angles first and the
n actions last. Angles are wrapped to [0, 1) whenever a point is stored;
"lifted" arrays keep real angles so that small sets straddling 0 stay
contiguous.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Optional, Protocol, Sequence, Tuple

import numpy as np
from scipy.spatial import ConvexHull, Delaunay
from scipy.spatial.distance import cdist

from app.core.errors import InvalidParameterError

logger = logging.getLogger(__name__)


def wrap_angle(x):
    """Canonical projection R -> T = R/Z with representatives in [0, 1)."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError("wrap_angle: non-finite angle")
    wrapped = np.mod(arr, 1.0)
    # np.mod(-1e-18, 1.0) rounds to 1.0
    wrapped = np.where(wrapped >= 1.0, 0.0, wrapped)
    if wrapped.ndim == 0:
        return float(wrapped)
    return wrapped


def angle_offset(x):
    """Signed representative of x mod 1 in [-1/2, 1/2)."""
    arr = np.asarray(x, dtype=float)
    return arr - np.floor(arr + 0.5)


def torus_distance(theta):
    """Distance from theta to 0 on T."""
    return np.abs(angle_offset(theta))


def annulus_difference(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    """a - b with the angle part reduced to [-1/2, 1/2)."""
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    diff[..., :n] = angle_offset(diff[..., :n])
    return diff


def ball_volume(n: int) -> float:
    """Lebesgue measure of the unit ball of R^{2n}."""
    return math.pi**n / math.factorial(n)


@dataclass(frozen=True)
class AnnulusPoint:
    angles: np.ndarray
    actions: np.ndarray

    def __post_init__(self) -> None:
        angles = np.atleast_1d(np.asarray(self.angles, dtype=float))
        actions = np.atleast_1d(np.asarray(self.actions, dtype=float))
        if angles.ndim != 1 or angles.shape != actions.shape:
            raise InvalidParameterError(
                f"AnnulusPoint: angles {angles.shape} and actions {actions.shape} must be equal 1-d shapes"
            )
        if not np.all(np.isfinite(actions)):
            raise InvalidParameterError("AnnulusPoint: non-finite action")
        object.__setattr__(self, "angles", np.atleast_1d(wrap_angle(angles)))
        object.__setattr__(self, "actions", actions)

    @property
    def n(self) -> int:
        return self.angles.shape[0]

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.angles, self.actions])

    @classmethod
    def from_array(cls, z: Sequence[float]) -> "AnnulusPoint":
        z = np.asarray(z, dtype=float)
        if z.ndim != 1 or z.shape[0] % 2:
            raise InvalidParameterError(f"AnnulusPoint.from_array: bad shape {z.shape}")
        n = z.shape[0] // 2
        return cls(z[:n], z[n:])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AnnulusPoint):
            return NotImplemented
        return bool(np.array_equal(self.angles, other.angles) and np.array_equal(self.actions, other.actions))

    def __hash__(self) -> int:
        return hash((self.angles.tobytes(), self.actions.tobytes()))


class FactorRegion(Protocol):
    """A subset of one annulus factor, tested on angle/action arrays."""

    def contains(self, theta: np.ndarray, r: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class BandRegion:
    """Vertical band B_d = {|theta| <= d mod 1}."""

    d: float

    def __post_init__(self) -> None:
        if not 0.0 < self.d < 0.5:
            raise InvalidParameterError(f"BandRegion: half-width must lie in (0, 1/2), got {self.d}")

    def contains(self, theta, r=None) -> np.ndarray:
        return torus_distance(theta) <= self.d

    def margin(self, theta) -> np.ndarray:
        """Positive outside the band, by the angular distance to its edge."""
        return torus_distance(theta) - self.d


@dataclass(frozen=True)
class UpperStrip:
    """Horizontal strip A+_d = T x [0, d]."""

    d: float

    def __post_init__(self) -> None:
        if not self.d > 0.0:
            raise InvalidParameterError(f"UpperStrip: height must be positive, got {self.d}")

    def contains(self, theta, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return (r >= 0.0) & (r <= self.d)


@dataclass(frozen=True)
class Intersection:
    parts: Tuple[FactorRegion, ...]

    def contains(self, theta, r) -> np.ndarray:
        result = np.ones(np.broadcast(np.asarray(theta), np.asarray(r)).shape, dtype=bool)
        for part in self.parts:
            result &= part.contains(theta, r)
        return result


@dataclass(frozen=True)
class ProductRegion:
    """Product of factor regions; ``None`` leaves a factor unconstrained."""

    factors: Tuple[Optional[FactorRegion], ...]

    @property
    def n(self) -> int:
        return len(self.factors)

    def contains(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        n = self.n
        result = np.ones(z.shape[:-1], dtype=bool)
        for i, region in enumerate(self.factors):
            if region is not None:
                result &= region.contains(z[..., i], z[..., n + i])
        return result


def in_band(p: AnnulusPoint, b: BandRegion) -> bool:
    if p.n != 1:
        raise InvalidParameterError("in_band expects a point of the 2-dimensional annulus")
    return bool(b.contains(p.angles[0]))


def in_strip(p: AnnulusPoint, s: UpperStrip) -> bool:
    if p.n != 1:
        raise InvalidParameterError("in_strip expects a point of the 2-dimensional annulus")
    return bool(s.contains(p.angles[0], p.actions[0]))


@dataclass(frozen=True)
class Ellipse2D:
    """Filled ellipse {center + v : v^T M v <= 1} in one annulus factor."""

    center: AnnulusPoint
    shape: np.ndarray
    boundary_samples: int = 256

    def __post_init__(self) -> None:
        if self.center.n != 1:
            raise InvalidParameterError("Ellipse2D center must be a point of the 2-dimensional annulus")
        shape = np.asarray(self.shape, dtype=float)
        if shape.shape != (2, 2) or not np.allclose(shape, shape.T, rtol=1e-12, atol=0.0):
            raise InvalidParameterError("Ellipse2D shape must be a symmetric 2x2 matrix")
        shape = 0.5 * (shape + shape.T)
        if np.linalg.eigvalsh(shape).min() <= 0.0:
            raise InvalidParameterError("Ellipse2D shape must be positive definite")
        if self.boundary_samples < 3:
            raise InvalidParameterError("Ellipse2D needs at least 3 boundary samples")
        object.__setattr__(self, "shape", shape)

    @classmethod
    def from_disc(
        cls, center: AnnulusPoint, P: np.ndarray, radius: float, boundary_samples: int = 256
    ) -> "Ellipse2D":
        """Image center + P(disc of the given radius)."""
        P_inv = np.linalg.inv(np.asarray(P, dtype=float))
        return cls(center, P_inv.T @ P_inv / radius**2, boundary_samples)

    @property
    def center_array(self) -> np.ndarray:
        return self.center.as_array()

    @property
    def area(self) -> float:
        return math.pi / math.sqrt(np.linalg.det(self.shape))

    @property
    def diameter(self) -> float:
        return 2.0 / math.sqrt(np.linalg.eigvalsh(self.shape).min())

    def boundary(self, samples: Optional[int] = None) -> np.ndarray:
        """Lifted boundary points, shape (samples, 2)."""
        samples = samples or self.boundary_samples
        t = 2.0 * np.pi * np.arange(samples) / samples
        unit = np.stack([np.cos(t), np.sin(t)])
        lower = np.linalg.cholesky(self.shape)
        offsets = np.linalg.solve(lower.T, unit).T
        return self.center_array + offsets

    def contains(self, points: np.ndarray, slack: float = 0.0) -> np.ndarray:
        diff = annulus_difference(np.asarray(points, dtype=float), self.center_array, 1)
        quad = np.einsum("...i,ij,...j->...", diff, self.shape, diff)
        return quad <= 1.0 + slack

    def linear_image(self, A: np.ndarray, center: Optional[AnnulusPoint] = None) -> "Ellipse2D":
        """Image of the ellipse under v -> A v about its center (optionally moved)."""
        A_inv = np.linalg.inv(np.asarray(A, dtype=float))
        return Ellipse2D(center or self.center, A_inv.T @ self.shape @ A_inv, self.boundary_samples)

    def scaled(self, factor: float) -> "Ellipse2D":
        return Ellipse2D(self.center, self.shape / factor**2, self.boundary_samples)


@dataclass(frozen=True)
class PolygonCarrier:
    """Convex polygon around a numerically found invariant curve."""

    center: AnnulusPoint
    vertices: np.ndarray

    def __post_init__(self) -> None:
        vertices = np.asarray(self.vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != 2 or vertices.shape[0] < 3:
            raise InvalidParameterError("PolygonCarrier needs at least three planar vertices")
        object.__setattr__(self, "vertices", vertices)

    @classmethod
    def hull_of(cls, center: AnnulusPoint, points: np.ndarray) -> "PolygonCarrier":
        points = np.asarray(points, dtype=float)
        hull = ConvexHull(points)
        return cls(center, points[hull.vertices])

    @property
    def area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))

    @property
    def center_array(self) -> np.ndarray:
        return self.center.as_array()

    @property
    def diameter(self) -> float:
        # 512-row blocks of the pairwise table
        blocks = np.array_split(self.vertices, max(1, len(self.vertices) // 512))
        return float(max(cdist(block, self.vertices).max() for block in blocks))

    def boundary(self, samples: Optional[int] = None) -> np.ndarray:
        return self.vertices

    def contains(self, points: np.ndarray, slack: float = 0.0) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        shifted = self.center_array + annulus_difference(points, self.center_array, 1)
        return Delaunay(self.vertices).find_simplex(shifted) >= 0

    def offsets(self, points: Optional[np.ndarray] = None) -> np.ndarray:
        """Torus-aware offsets from ``center`` (of the vertices by default)."""
        points = self.vertices if points is None else np.asarray(points, dtype=float)
        return annulus_difference(points, self.center_array, 1)

    def whitening(self) -> np.ndarray:
        """Linear map taking the vertex offsets to unit covariance."""
        offsets = self.offsets()
        covariance = offsets.T @ offsets / len(offsets)
        return np.linalg.inv(np.linalg.cholesky(covariance))

    def chord_sagitta(self) -> float:
        """Largest bulge of a convex curve through the vertices beyond the hull,
        over the largest vertex radius, measured in the whitened frame."""
        white = self.offsets() @ self.whitening().T
        angles = np.arctan2(white[:, 1], white[:, 0])
        order = np.argsort(angles)
        angles, radii = angles[order], np.hypot(white[order, 0], white[order, 1])
        gaps = np.diff(np.append(angles, angles[0] + 2.0 * math.pi))
        outer = np.maximum(radii, np.roll(radii, -1))
        return float(np.max(outer * (1.0 - np.cos(0.5 * gaps))) / radii.max())

    def rescaled(self, q: float) -> "PolygonCarrier":
        """Image under (theta, r) -> (theta, r / q)."""
        center = self.center
        return PolygonCarrier(AnnulusPoint(center.angles, center.actions / q), self.vertices / np.array([1.0, q]))

    def inscribed_ellipse(self, shape_hint: np.ndarray) -> Ellipse2D:
        """Largest multiple of the hint ellipse, centred at ``center``, inside the hull."""
        hull = ConvexHull(self.vertices)
        normals, offsets = hull.equations[:, :2], hull.equations[:, 2]
        # facet i: normals_i . x + offsets_i <= 0 inside
        slack = -(normals @ self.center_array + offsets)
        if np.any(slack <= 0.0):
            raise InvalidParameterError("PolygonCarrier center lies outside its hull")
        hint_inv = np.linalg.inv(np.asarray(shape_hint, dtype=float))
        support = np.sqrt(np.einsum("ki,ij,kj->k", normals, hint_inv, normals))
        scale = float(np.min(slack / support))
        return Ellipse2D(self.center, np.asarray(shape_hint, dtype=float) / scale**2)


Carrier = Ellipse2D | PolygonCarrier


@dataclass(frozen=True)
class Polydisc:
    factors: Tuple[Carrier, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        factors = tuple(self.factors)
        if not factors:
            raise InvalidParameterError("Polydisc needs at least one factor")
        object.__setattr__(self, "factors", factors)

    @property
    def n(self) -> int:
        return len(self.factors)

    @property
    def center_array(self) -> np.ndarray:
        centers = [f.center_array for f in self.factors]
        return np.array([c[0] for c in centers] + [c[1] for c in centers])

    @property
    def measure(self) -> float:
        return float(np.prod([f.area for f in self.factors]))

    @property
    def diameter(self) -> float:
        return float(math.sqrt(sum(f.diameter**2 for f in self.factors)))

    def contains(self, z: np.ndarray, slack: float = 0.0) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        n = self.n
        result = np.ones(z.shape[:-1], dtype=bool)
        for i, carrier in enumerate(self.factors):
            result &= carrier.contains(np.stack([z[..., i], z[..., n + i]], axis=-1), slack)
        return result

    def sample_points(self, samples: Optional[int] = None, seed: int = 0, interior: int = 64) -> np.ndarray:
        """Center, each factor boundary with the others at their centers, and random
        boundary combinations. Shape (K, 2n), lifted."""
        n = self.n
        center = self.center_array
        rows = [center]
        boundaries = [f.boundary(samples) for f in self.factors]
        for i, bnd in enumerate(boundaries):
            block = np.repeat(center[None, :], len(bnd), axis=0)
            block[:, i] = bnd[:, 0]
            block[:, n + i] = bnd[:, 1]
            rows.extend(block)
        if n > 1 and interior:
            rng = np.random.default_rng(seed)
            for _ in range(interior):
                z = center.copy()
                for i, bnd in enumerate(boundaries):
                    pick = bnd[rng.integers(len(bnd))]
                    z[i], z[n + i] = pick
                rows.append(z)
        return np.asarray(rows)


def as_polydisc(carrier: Carrier | Polydisc) -> Polydisc:
    if isinstance(carrier, Polydisc):
        return carrier
    return Polydisc((carrier,))


def polydisc_capacity(P: Polydisc | Iterable[Carrier]) -> float:
    """Gromov capacity of a product of discs: the smallest factor area."""
    factors = P.factors if isinstance(P, Polydisc) else tuple(P)
    if not factors:
        raise InvalidParameterError("polydisc_capacity: empty factor list")
    return float(min(f.area for f in factors))


@dataclass(frozen=True)
class CapacityBound:
    capacity: float
    measure_product: float
    bound: float
    bound_ok: bool


def capacity_measure_bound(P: Polydisc) -> CapacityBound:
    """Check C_G(P) <= pi (mu(P) / Vol(B^{2n}(1)))^{1/n}."""
    capacity = polydisc_capacity(P)
    measure = P.measure
    bound = math.pi * (measure / ball_volume(P.n)) ** (1.0 / P.n)
    return CapacityBound(capacity, measure, bound, capacity <= bound * (1.0 + 1e-12))


Mode = Literal["avoid", "inside"]


@dataclass(frozen=True)
class LocalizationConstraint:
    """Iterates ``first..last`` of a carrier must avoid (or stay inside) a region."""

    region: ProductRegion
    mode: Mode
    first: int
    last: int
    label: str = ""

    def applies_to(self, k: int) -> bool:
        return self.first <= k <= self.last

    def violated(self, points: np.ndarray) -> bool:
        inside = self.region.contains(points)
        if self.mode == "avoid":
            return bool(np.any(inside))
        return not bool(np.all(inside))
