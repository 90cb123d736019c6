"""Elementary exact symplectic maps of the annulus and their pipelines.

Maps act on arrays of shape ``(..., 2n)`` (angles first). ``apply_lifted``
keeps real angles; ``apply`` wraps them to [0, 1).
"""

from __future__ import annotations

import csv
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.config import settings
from app.core.errors import InvalidParameterError
from app.core.geometry import AnnulusPoint, wrap_angle
from app.core.schemas import MapDescription
from app.numerics.gevrey import SampledFunction, TensorProfile, gevrey_norm_estimate
from app.numerics.integrators import SplittingIntegrator

logger = logging.getLogger(__name__)

PointLike = Union[AnnulusPoint, np.ndarray, Sequence[float]]


def _as_array(p: PointLike) -> np.ndarray:
    if isinstance(p, AnnulusPoint):
        return p.as_array()
    return np.asarray(p, dtype=float)


def wrap_state(z: np.ndarray, n: int) -> np.ndarray:
    out = np.array(z, dtype=float, copy=True)
    out[..., :n] = wrap_angle(out[..., :n])
    return out


class SymplecticMap(ABC):
    """Composable exact symplectic map of the n-factor annulus."""

    n: int

    @abstractmethod
    def apply_lifted(self, z: np.ndarray) -> np.ndarray:
        """Image of lifted states; angles are not wrapped."""

    @abstractmethod
    def inverse(self) -> "SymplecticMap":
        """Exact inverse (closed form or reversed flow)."""

    @abstractmethod
    def describe(self) -> MapDescription:
        """JSON pipeline description."""

    def apply(self, z) -> np.ndarray:
        z = _as_array(z)
        self._check(z)
        return wrap_state(self.apply_lifted(z), self.n)

    def __call__(self, p: PointLike):
        image = self.apply(p)
        if isinstance(p, AnnulusPoint):
            return AnnulusPoint.from_array(image)
        return image

    def expand(self) -> "SymplecticMap":
        """Equivalent pipeline of elementary maps; elementary maps return themselves."""
        return self

    def _check(self, z: np.ndarray) -> None:
        if z.shape[-1] != 2 * self.n:
            raise InvalidParameterError(f"{type(self).__name__}: expected states of size {2 * self.n}, got {z.shape[-1]}")


@dataclass(frozen=True)
class AngleFunction:
    """u(theta) = sum_k c_k * profile_k(theta): the perturbations used by kicks."""

    n: int
    terms: Tuple[Tuple[float, TensorProfile], ...]

    @classmethod
    def single(cls, n: int, f: SampledFunction, index: int = 0, coef: float = 1.0) -> "AngleFunction":
        return cls(n, ((coef, TensorProfile(((index, f),))),))

    @classmethod
    def tensor(cls, n: int, factors: Sequence[Tuple[int, SampledFunction]], coef: float = 1.0) -> "AngleFunction":
        return cls(n, ((coef, TensorProfile(tuple(factors))),))

    def value(self, angles: np.ndarray) -> np.ndarray:
        angles = np.asarray(angles, dtype=float)
        total = np.zeros(angles.shape[:-1])
        for coef, profile in self.terms:
            total = total + coef * profile.value(angles)
        return total

    def gradient(self, angles: np.ndarray) -> np.ndarray:
        angles = np.asarray(angles, dtype=float)
        total = np.zeros_like(angles)
        for coef, profile in self.terms:
            total = total + coef * profile.gradient(angles)
        return total

    def scaled(self, factor: float) -> "AngleFunction":
        return AngleFunction(self.n, tuple((factor * c, p) for c, p in self.terms))

    def __add__(self, other: "AngleFunction") -> "AngleFunction":
        if other.n != self.n:
            raise InvalidParameterError("AngleFunction dimensions differ")
        return AngleFunction(self.n, self.terms + other.terms)

    def norm_estimate(self, alpha: float, L: float, max_order: int) -> float:
        return float(sum(abs(c) * p.norm_estimate(alpha, L, max_order) for c, p in self.terms))

    def label(self) -> str:
        return " + ".join(f"{c:.6g}*{p.label()}" for c, p in self.terms)


@dataclass(frozen=True)
class Shear(SymplecticMap):
    """Integrable map (theta, r) -> (theta + grad h(r), r)."""

    n: int
    gradient: Callable[[np.ndarray], np.ndarray]
    label: str = "h"
    homogeneous: bool = False
    params: Dict[str, float] = field(default_factory=dict)
    value: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @classmethod
    def quadratic(cls, n: int, scale: float = 1.0, indices: Optional[Sequence[int]] = None) -> "Shear":
        """h(r) = scale/2 * sum_{i in indices} r_i^2."""
        mask = np.zeros(n)
        mask[list(range(n)) if indices is None else list(indices)] = 1.0

        def gradient(r: np.ndarray) -> np.ndarray:
            return scale * mask * r

        def value(r: np.ndarray) -> np.ndarray:
            return 0.5 * scale * np.sum(mask * np.asarray(r, dtype=float) ** 2, axis=-1)

        idx = "all" if indices is None else ",".join(str(i + 1) for i in indices)
        return cls(n, gradient, f"{scale:g}/2 |r_{idx}|^2", True, {"scale": scale}, value)

    def apply_lifted(self, z: np.ndarray) -> np.ndarray:
        n = self.n
        out = np.array(z, dtype=float, copy=True)
        out[..., :n] += self.gradient(out[..., n:])
        return out

    def inverse(self) -> "Shear":
        grad, value = self.gradient, self.value
        negated = None if value is None else (lambda r: -value(r))
        return Shear(self.n, lambda r: -grad(r), f"-({self.label})", self.homogeneous, dict(self.params), negated)

    def scaled(self, factor: float) -> "Shear":
        grad, value = self.gradient, self.value
        params = dict(self.params)
        params["scale"] = params.get("scale", 1.0) * factor
        scaled = None if value is None else (lambda r: factor * value(r))
        return Shear(self.n, lambda r: factor * grad(r), f"{factor:g}*({self.label})", self.homogeneous, params, scaled)

    def describe(self) -> MapDescription:
        return MapDescription(kind="shear", dimension=self.n, parameters={"h": self.label, **self.params})


@dataclass(frozen=True)
class Kick(SymplecticMap):
    """Time-one map of an angle-only Hamiltonian: (theta, r) -> (theta, r - grad u(theta))."""

    u: AngleFunction

    @property
    def n(self) -> int:
        return self.u.n

    def apply_lifted(self, z: np.ndarray) -> np.ndarray:
        n = self.n
        out = np.array(z, dtype=float, copy=True)
        out[..., n:] -= self.u.gradient(out[..., :n])
        return out

    def inverse(self) -> "Kick":
        return Kick(self.u.scaled(-1.0))

    def describe(self) -> MapDescription:
        return MapDescription(kind="kick", dimension=self.n, parameters={"u": self.u.label()})


@dataclass(frozen=True)
class PendulumFlow(SymplecticMap):
    """Time-t flow of P_{V/N^2}(theta, r) = r^2/2 + V(theta)/N^2 on one factor."""

    V: SampledFunction
    N: float
    t: float = 1.0
    energy_tolerance: float = settings.pendulum.energy_tolerance
    min_steps_per_unit: int = settings.pendulum.min_steps_per_unit
    max_refinements: int = settings.pendulum.max_refinements
    n: int = 1

    def __post_init__(self) -> None:
        if self.N <= 0:
            raise InvalidParameterError(f"PendulumFlow: N must be positive, got {self.N}")

    @property
    def integrator(self) -> SplittingIntegrator:
        scale = 1.0 / self.N**2
        V = self.V
        return SplittingIntegrator(
            force=lambda theta: scale * V.derivative(theta, 1),
            potential=lambda theta: scale * V(theta),
            energy_tolerance=self.energy_tolerance,
            min_steps_per_unit=self.min_steps_per_unit,
            max_refinements=self.max_refinements,
        )

    def energy(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return 0.5 * z[..., 1] ** 2 + self.V(z[..., 0]) / self.N**2

    def apply_lifted(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        theta, r = self.integrator.flow(z[..., 0], z[..., 1], self.t)
        return np.stack([theta, r], axis=-1)

    def inverse(self) -> "PendulumFlow":
        return PendulumFlow(self.V, self.N, -self.t, self.energy_tolerance, self.min_steps_per_unit, self.max_refinements)

    def with_time(self, t: float) -> "PendulumFlow":
        return PendulumFlow(self.V, self.N, t, self.energy_tolerance, self.min_steps_per_unit, self.max_refinements)

    def describe(self) -> MapDescription:
        return MapDescription(
            kind="pendulum_flow",
            dimension=1,
            parameters={"N": self.N, "t": self.t, **self.V.params},
        )


@dataclass(frozen=True)
class Embedded(SymplecticMap):
    """Map acting on the factors ``indices`` of an n-factor annulus, identity elsewhere."""

    inner: SymplecticMap
    indices: Tuple[int, ...]
    n: int

    def __post_init__(self) -> None:
        if len(self.indices) != self.inner.n or len(set(self.indices)) != len(self.indices):
            raise InvalidParameterError("Embedded: indices must list inner.n distinct factors")
        if max(self.indices) >= self.n:
            raise InvalidParameterError("Embedded: factor index out of range")

    @property
    def columns(self) -> List[int]:
        return list(self.indices) + [self.n + i for i in self.indices]

    def apply_lifted(self, z: np.ndarray) -> np.ndarray:
        out = np.array(z, dtype=float, copy=True)
        cols = self.columns
        out[..., cols] = self.inner.apply_lifted(out[..., cols])
        return out

    def inverse(self) -> "Embedded":
        return Embedded(self.inner.inverse(), self.indices, self.n)

    def describe(self) -> MapDescription:
        inner = self.inner.describe()
        return MapDescription(
            kind="embedded", dimension=self.n, parameters={"factors": [i + 1 for i in self.indices]}, parts=[inner]
        )


@dataclass(frozen=True)
class Composite(SymplecticMap):
    """maps[0] o maps[1] o ... : the last map is applied first."""

    maps: Tuple[SymplecticMap, ...]

    def __post_init__(self) -> None:
        if not self.maps:
            raise InvalidParameterError("Composite needs at least one map")
        dims = {m.n for m in self.maps}
        if len(dims) != 1:
            raise InvalidParameterError(f"Composite: inconsistent dimensions {sorted(dims)}")

    @property
    def n(self) -> int:
        return self.maps[0].n

    def apply_lifted(self, z: np.ndarray) -> np.ndarray:
        for m in reversed(self.maps):
            z = m.apply_lifted(z)
        return z

    def inverse(self) -> "Composite":
        return Composite(tuple(m.inverse() for m in reversed(self.maps)))

    def describe(self) -> MapDescription:
        return MapDescription(kind="composite", dimension=self.n, parts=[m.describe() for m in self.maps])


@dataclass(frozen=True)
class Conjugated(SymplecticMap):
    """sigma^-1 o inner o sigma with sigma(theta, r) = (theta, q r)."""

    inner: SymplecticMap
    q: float

    @property
    def n(self) -> int:
        return self.inner.n

    def apply_lifted(self, z: np.ndarray) -> np.ndarray:
        n = self.n
        out = np.array(z, dtype=float, copy=True)
        out[..., n:] *= self.q
        out = self.inner.apply_lifted(out)
        out[..., n:] /= self.q
        return out

    def inverse(self) -> "Conjugated":
        return Conjugated(self.inner.inverse(), self.q)

    def describe(self) -> MapDescription:
        return MapDescription(kind="conjugated", dimension=self.n, parameters={"q": self.q}, parts=[self.inner.describe()])


def product(maps: Sequence[Tuple[SymplecticMap, Sequence[int]]], n: int) -> SymplecticMap:
    """F_1 x F_2 x ... for maps acting on disjoint factor sets."""
    seen: set = set()
    for m, idx in maps:
        if seen & set(idx):
            raise InvalidParameterError("product: factor sets overlap")
        seen |= set(idx)
    parts = tuple(Embedded(m, tuple(idx), n) for m, idx in maps)
    return parts[0] if len(parts) == 1 else Composite(parts)


def shear_apply(h: Shear, p: PointLike):
    return h(p)


def kick_apply(u: Kick, p: PointLike):
    return u(p)


def pendulum_flow(V: SampledFunction, N: float, t: float, p: PointLike):
    return PendulumFlow(V, N, t)(p)


def compose(maps: Sequence[SymplecticMap]) -> SymplecticMap:
    """Right-to-left composition: compose([A, B]) = A o B."""
    maps = tuple(maps)
    return maps[0] if len(maps) == 1 else Composite(maps)


def iterate(m: SymplecticMap, p: PointLike, k: int):
    """k-th iterate; negative k uses the exact inverse."""
    z = _as_array(p)
    step = m if k >= 0 else m.inverse()
    for _ in range(abs(k)):
        z = step.apply_lifted(z)
    z = wrap_state(z, m.n)
    if isinstance(p, AnnulusPoint):
        return AnnulusPoint.from_array(z)
    return z


def orbit(m: SymplecticMap, z0: np.ndarray, steps: int) -> np.ndarray:
    """Lifted orbit z_0 .. z_steps, shape (steps + 1, ..., 2n)."""
    z = np.asarray(z0, dtype=float)
    out = [z]
    for _ in range(steps):
        z = m.apply_lifted(z)
        out.append(z)
    return np.stack(out)


def rescale_conjugate(m: SymplecticMap, q: float) -> SymplecticMap:
    """Closed form of sigma^-1 o m o sigma, sigma(theta, r) = (theta, q r).

    Phi^{h + v} with h homogeneous of degree 2 becomes Phi^{q h + v/q}.
    """
    if q <= 0:
        raise InvalidParameterError(f"rescale_conjugate: q must be positive, got {q}")
    if isinstance(m, Shear) and m.homogeneous:
        return m.scaled(q)
    if isinstance(m, Kick):
        return Kick(m.u.scaled(1.0 / q))
    if isinstance(m, PendulumFlow):
        return PendulumFlow(m.V, m.N * q, m.t * q, m.energy_tolerance, m.min_steps_per_unit, m.max_refinements)
    if isinstance(m, Composite):
        return Composite(tuple(rescale_conjugate(part, q) for part in m.maps))
    if isinstance(m, Embedded):
        return Embedded(rescale_conjugate(m.inner, q), m.indices, m.n)
    expanded = m.expand()
    if expanded is not m:
        return rescale_conjugate(expanded, q)
    return Conjugated(m, q)


def jacobian_determinant(m: SymplecticMap, z: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """det D m at each state of z (shape (K, 2n)) by central differences."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    dim = z.shape[-1]
    columns = []
    for i in range(dim):
        shift = np.zeros(dim)
        shift[i] = h
        columns.append((m.apply_lifted(z + shift) - m.apply_lifted(z - shift)) / (2.0 * h))
    jac = np.stack(columns, axis=-1)
    return np.linalg.det(jac)


@dataclass(frozen=True)
class DeviationLedger:
    terms: Tuple[Tuple[str, float], ...]

    @property
    def total(self) -> float:
        return float(sum(v for _, v in self.terms))

    def as_dict(self) -> Dict[str, object]:
        return {"terms": [{"label": k, "norm": v} for k, v in self.terms], "total": self.total}


def _flatten(m: SymplecticMap, indices: Tuple[int, ...]) -> List[Tuple[Tuple[int, ...], SymplecticMap]]:
    """Elementary maps in application order, tagged with the factors they act on."""
    if isinstance(m, Composite):
        out: List[Tuple[Tuple[int, ...], SymplecticMap]] = []
        for part in reversed(m.maps):
            out.extend(_flatten(part, indices))
        return out
    if isinstance(m, Embedded):
        return _flatten(m.inner, tuple(indices[i] for i in m.indices))
    expanded = m.expand()
    if expanded is not m:
        return _flatten(expanded, indices)
    return [(indices, m)]


def _kick_factors(kick: Kick, indices: Tuple[int, ...]) -> set:
    return {indices[i] for _, profile in kick.u.terms for i in profile.indices}


def deviation(
    pipeline: SymplecticMap,
    alpha: float = settings.bumps.alpha,
    L: float = settings.bumps.L,
    max_order: int = settings.bumps.max_order,
) -> DeviationLedger:
    """Upper bound of the deviation from the exhibited decomposition
    Phi^{u_m} o ... o Phi^{u_1} o Phi^{h + u_0}."""
    elements = _flatten(pipeline, tuple(range(pipeline.n)))
    terms: List[Tuple[str, float]] = []
    perturbed: set = set()
    for idx, elem in elements:
        if isinstance(elem, Shear) and not perturbed & set(idx):
            continue
        if isinstance(elem, PendulumFlow) and elem.t == 1.0 and not perturbed & set(idx):
            norm = gevrey_norm_estimate(elem.V, alpha, L, max_order) / elem.N**2
            terms.append((f"V/{elem.N:g}^2 on factor {idx[0] + 1}", norm))
            continue
        if isinstance(elem, Kick):
            perturbed |= _kick_factors(elem, idx)
            terms.append((elem.u.label(), elem.u.norm_estimate(alpha, L, max_order)))
            continue
        raise InvalidParameterError(
            f"deviation: {type(elem).__name__} on factors {[i + 1 for i in idx]} breaks the integrable-base-then-kicks form"
        )
    return DeviationLedger(tuple(terms))


def write_orbit_csv(
    m: SymplecticMap,
    z0: np.ndarray,
    steps: int,
    path: Path | str,
    energy: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> Path:
    """Rows (k, theta_1..theta_n, r_1..r_n[, energy]) of one orbit."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    states = wrap_state(orbit(m, np.asarray(z0, dtype=float), steps), m.n)
    n = m.n
    header = ["k"] + [f"theta_{i + 1}" for i in range(n)] + [f"r_{i + 1}" for i in range(n)]
    if energy is not None:
        header.append("energy")
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for k, z in enumerate(states):
            row = [k] + [f"{v:.17g}" for v in z]
            if energy is not None:
                row.append(f"{float(energy(z)):.17g}")
            writer.writerow(row)
    logger.info(f"Wrote {steps + 1} orbit rows to {path}")
    return path
