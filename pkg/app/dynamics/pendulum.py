"""Pseudo-pendulum P_{V/N^2}(theta, r) = r^2/2 + V(theta)/N^2.

Period function and its energy derivatives, periodic-orbit solver, q-adapted
boxes, the local normal form A_{q,N} and the linear/twist data of the island
around a_{q,N} = (0, r_{q,N}).
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Chebyshev
from scipy.optimize import brentq
from scipy.special import binom, gamma

from app.core.config import settings
from app.core.errors import InvalidParameterError, RegimeError
from app.core.geometry import torus_distance
from app.dynamics.maps import PendulumFlow, SymplecticMap
from app.lab.models import VerificationReport
from app.numerics.gevrey import SampledFunction, make_V, make_W
from app.numerics.quadrature import composite_gauss_legendre, gauss_legendre, tanh_sinh

logger = logging.getLogger(__name__)

MAX_PERIOD_DERIVATIVE = 3


@lru_cache(maxsize=1)
def default_potential() -> SampledFunction:
    p = settings.potential
    return make_V(p.L0, p.theta_star, p.rho0, settings.bumps.alpha)


def _quartic_tail(m: float) -> float:
    """int_0^inf (1 + s^4)^-m ds."""
    return gamma(0.25) * gamma(m - 0.25) / (4.0 * gamma(m))


def quartic_integral(m: float, X) -> np.ndarray:
    """int_0^X (1 + s^4)^-m ds for m > 1/4, vectorised over X >= 0."""
    X = np.asarray(X, dtype=float)
    near = np.minimum(X, 1.0)
    direct = tanh_sinh(lambda s: (1.0 + s**4) ** -m, np.zeros_like(near), near, level=5)
    # beyond 1 integrate the tail in t = 1/s, where the integrand is bounded
    inv = 1.0 / np.maximum(X, 1.0)
    tail = tanh_sinh(lambda t: t ** (4.0 * m - 2.0) * (1.0 + t**4) ** -m, np.zeros_like(inv), inv, level=5)
    return np.where(X <= 1.0, direct, _quartic_tail(m) - tail)


@dataclass(frozen=True)
class PeriodFunction:
    """T_{V/N^2}(e) = int_0^1 du / sqrt(2(e - V(u)/N^2)) and its e-derivatives.

    [0, 1] is split at the plateau |u| <= L0 (exact), the two transition
    intervals (composite Gauss-Legendre) and the quartic window around 1/2,
    integrated after u = 1/2 + (N^2 e)^{1/4} s.
    """

    V: SampledFunction
    N: float = 1.0
    panels: int = settings.pendulum.quad_panels
    nodes: int = settings.pendulum.quad_nodes

    def __post_init__(self) -> None:
        missing = {"L0", "theta_star", "rho0"} - set(self.V.params)
        if missing:
            raise InvalidParameterError(f"PeriodFunction needs a pseudo-pendulum potential (missing {sorted(missing)})")
        if self.N <= 0:
            raise InvalidParameterError(f"PeriodFunction: N must be positive, got {self.N}")

    @property
    def L0(self) -> float:
        return self.V.params["L0"]

    @property
    def theta_star(self) -> float:
        return self.V.params["theta_star"]

    @property
    def rho_N(self) -> float:
        return self.V.params["rho0"] / self.N

    @cached_property
    def _transition(self) -> Tuple[np.ndarray, np.ndarray]:
        pts, wts = composite_gauss_legendre(self.L0, 0.5 - self.theta_star, self.panels, self.nodes)
        return self.V(pts) / self.N**2, wts

    def J(self, e, m: float) -> np.ndarray:
        """int_0^1 (e - V(u)/N^2)^-m du."""
        e = np.asarray(e, dtype=float)
        if np.any(~(e > 0.0)):
            raise InvalidParameterError("period: energy must be positive (the period is infinite on the separatrix)")
        plateau = 2.0 * self.L0 * (e + 0.5 * self.rho_N**2) ** -m
        v, wts = self._transition
        middle = 2.0 * ((e[..., None] - v) ** -m @ wts)
        scale = (self.N**2 * e) ** 0.25
        window = 2.0 * scale * e**-m * quartic_integral(m, self.theta_star / scale)
        return plateau + middle + window

    def derivative(self, e, k: int = 0) -> np.ndarray:
        """T^{(k)}(e), differentiating under the integral sign."""
        if not 0 <= k <= MAX_PERIOD_DERIVATIVE:
            raise InvalidParameterError(f"period derivative order {k} outside [0, {MAX_PERIOD_DERIVATIVE}]")
        coef = math.prod(-0.5 - j for j in range(k))
        return coef * self.J(e, 0.5 + k) / math.sqrt(2.0)

    def __call__(self, e) -> np.ndarray:
        return self.derivative(e, 0)

    def action_at(self, e) -> np.ndarray:
        """Action r > 0 on the plateau at energy e."""
        return np.sqrt(2.0 * np.asarray(e, dtype=float) + self.rho_N**2)

    def energy(self, theta, r) -> np.ndarray:
        return 0.5 * np.asarray(r, dtype=float) ** 2 + self.V(theta) / self.N**2


def period(V: SampledFunction, N: float, e) -> np.ndarray:
    return PeriodFunction(V, N)(e)


@dataclass(frozen=True)
class PeriodicOrbit:
    q: float
    N: float
    e: float
    r: float
    rho_N: float
    residual: float


def solve_periodic_orbit(q: float, N: float, V: Optional[SampledFunction] = None) -> PeriodicOrbit:
    """Energy e_{q,N} with T(e) = q and action r_{q,N} = sqrt(2e + rho_N^2)."""
    if not q > 0:
        raise InvalidParameterError(f"solve_periodic_orbit: q must be positive, got {q}")
    T = PeriodFunction(V or default_potential(), N)

    def gap(s: float) -> float:
        return float(T(math.exp(s))) - q

    lo, hi = math.log(1e-30), math.log(1e6)
    while gap(lo) < 0.0 and lo > math.log(1e-280):
        lo -= 50.0
    while gap(hi) > 0.0 and hi < math.log(1e12):
        hi += 5.0
    if gap(lo) < 0.0 or gap(hi) > 0.0:
        raise RegimeError(f"solve_periodic_orbit: could not bracket T(e) = {q} for N={N}")
    s = brentq(gap, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    e = math.exp(s)
    residual = abs(float(T(e)) - q)
    if residual > 1e-9 * max(1.0, q):
        logger.warning(f"Periodic orbit q={q} N={N}: residual |T(e) - q| = {residual:.3e}")
    return PeriodicOrbit(q=q, N=N, e=e, r=float(T.action_at(e)), rho_N=T.rho_N, residual=residual)


def bracket_threshold(V: Optional[SampledFunction] = None) -> float:
    """Smallest q/N with r_{q,N} <= 2 rho_N, i.e. T_V(3 rho0^2 / 2)."""
    V = V or default_potential()
    return float(PeriodFunction(V, 1.0)(1.5 * V.params["rho0"] ** 2))


# ---------------------------------------------------------------------------
# q-adapted boxes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdaptedBox:
    """[theta_c - ell, theta_c + ell] x [r_c - ell', r_c + ell'] around a_{q,N}."""

    q: int
    N: float
    delta: float
    ell: float
    ell_prime: float
    r_center: float
    rho_N: float
    theta_center: float = 0.0
    report: Optional[VerificationReport] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.ell < 0 or self.ell_prime < 0:
            raise InvalidParameterError("AdaptedBox: half sizes must be non-negative")

    @property
    def d(self) -> float:
        return self.delta / self.N

    @property
    def area(self) -> float:
        return 4.0 * self.ell * self.ell_prime

    def grid(self, count: int = settings.pendulum.box_grid) -> np.ndarray:
        s = np.linspace(-1.0, 1.0, count)
        x, y = np.meshgrid(self.theta_center + self.ell * s, self.r_center + self.ell_prime * s, indexing="ij")
        return np.stack([x.ravel(), y.ravel()], axis=-1)

    def with_height(self, ell_prime: float) -> "AdaptedBox":
        return AdaptedBox(self.q, self.N, self.delta, self.ell, ell_prime, self.r_center, self.rho_N, self.theta_center)


def verify_q_box(
    flow: SymplecticMap,
    q: int,
    center: Tuple[float, float],
    ell: float,
    ell_prime: float,
    d: float,
    grid: int = settings.pendulum.box_grid,
    separatrix: Optional[float] = None,
    kind: str = "q_box",
) -> VerificationReport:
    """Check that the box is q-adapted for the time-one map ``flow`` and the band B_d.

    Conditions in order: box inside B_{d/2}; images at t = 1..q-1 avoid the
    closed band of width d; the q-th image lies in the closed band of width
    d/2; optionally the box stays above the separatrix action.
    """
    started = time.perf_counter()
    s = np.linspace(-1.0, 1.0, grid)
    x, y = np.meshgrid(center[0] + ell * s, center[1] + ell_prime * s, indexing="ij")
    z = np.stack([x.ravel(), y.ravel()], axis=-1)
    margins: Dict[str, float] = {"containment": 0.5 * d - (abs(center[0]) + ell)}
    closest = np.inf
    for _ in range(1, q):
        z = flow.apply_lifted(z)
        closest = min(closest, float(np.min(torus_distance(z[:, 0]))))
    z = flow.apply_lifted(z)
    margins["avoid_band"] = closest - d if q > 1 else math.inf
    margins["return_band"] = 0.5 * d - float(np.max(torus_distance(z[:, 0])))
    if separatrix is not None:
        margins["above_separatrix"] = center[1] - ell_prime - separatrix
    failed = None
    for name in ("containment", "avoid_band", "return_band", "above_separatrix"):
        if name not in margins:
            continue
        value = margins[name]
        bad = value <= 0.0 if name in ("avoid_band", "above_separatrix") else value < 0.0
        if bad:
            failed = name
            break
    return VerificationReport(
        kind=kind,
        passed=failed is None,
        margins={k: float(v) for k, v in margins.items()},
        tolerances={"grid": float(grid)},
        parameters={"q": q, "center": list(map(float, center)), "ell": ell, "ell_prime": ell_prime, "d": d},
        failed=failed,
        runtime_s=time.perf_counter() - started,
    )


def verify_adapted_box(
    box: AdaptedBox, V: Optional[SampledFunction] = None, grid: int = settings.pendulum.box_grid
) -> VerificationReport:
    flow = PendulumFlow(V or default_potential(), box.N)
    report = verify_q_box(
        flow,
        box.q,
        (box.theta_center, box.r_center),
        box.ell,
        box.ell_prime,
        box.d,
        grid=grid,
        separatrix=box.rho_N,
        kind="adapted_box",
    )
    report.parameters.update({"N": box.N, "delta": box.delta})
    if not report.passed:
        logger.info(f"Adapted box q={box.q} N={box.N} fails {report.failed} (margin {report.margins[report.failed]:.3e})")
    return report


def _potential_key(V: SampledFunction) -> Tuple[Any, ...]:
    return (V.label, V.alpha, tuple(sorted(V.params.items())))


_ADAPTED_BOXES: Dict[Tuple[Any, ...], AdaptedBox] = {}


def predicted_halvings(q: int, N: float, delta: float, V: Optional[SampledFunction] = None) -> int:
    """Halvings of ell' = N^3 delta / q^5 before the twist spread |A''| ell' of the
    q-th image drops to ell = delta / (4N), the room left in B_{delta/2N}."""
    nf = NormalForm.build(q, N, V or default_potential())
    spread = abs(float(nf.derivative(nf.orbit.r, 2))) * N**3 * delta / q**5
    room = delta / (4.0 * N)
    return max(0, math.ceil(math.log2(spread / room))) if spread > room else 0


def build_adapted_box(
    q: int,
    N: float,
    delta: Optional[float] = None,
    V: Optional[SampledFunction] = None,
    max_halvings: int = settings.pendulum.max_halvings,
    grid: int = settings.pendulum.box_grid,
) -> AdaptedBox:
    """B_q(ell, ell') with ell = delta/(4N), ell' = N^3 delta / q^5 halved until verified.

    Halvings the normal-form twist already rules out are skipped; verified
    boxes are reused for the same potential and settings.
    """
    V = V or default_potential()
    delta = settings.pendulum.delta if delta is None else delta
    rho0 = V.params["rho0"]
    if not 0.0 < delta < 0.5 * rho0:
        raise InvalidParameterError(f"build_adapted_box: need 0 < delta < rho0/2 (delta={delta}, rho0={rho0})")
    if q < 2:
        raise InvalidParameterError(f"build_adapted_box: q must be >= 2, got {q}")
    key = (q, float(N), delta, max_halvings, grid, _potential_key(V), settings.pendulum.model_dump_json())
    if key in _ADAPTED_BOXES:
        return _ADAPTED_BOXES[key]
    orbit = solve_periodic_orbit(q, N, V)
    skipped = min(predicted_halvings(q, N, delta, V), max_halvings)
    box = AdaptedBox(q, N, delta, delta / (4.0 * N), N**3 * delta / q**5 / 2**skipped, orbit.r, orbit.rho_N)
    for halving in range(skipped, max_halvings + 1):
        report = verify_adapted_box(box, V, grid)
        if report.passed:
            logger.info(
                f"Adapted box q={q} N={N}: ell={box.ell:.3e} ell'={box.ell_prime:.3e} "
                f"after {halving} halvings ({skipped} predicted)"
            )
            report.parameters.update({"halvings": halving, "predicted_halvings": skipped})
            box = replace(box, report=report)
            _ADAPTED_BOXES[key] = box
            return box
        if report.failed == "containment":
            break
        box = box.with_height(0.5 * box.ell_prime)
    raise RegimeError(
        f"no q-adapted box for q={q}, N={N}, delta={delta}: condition {report.failed} fails "
        f"(margin {report.margins[report.failed]:.3e}) at ell'={box.ell_prime:.3e}"
    )


# ---------------------------------------------------------------------------
# Local normal form
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalForm:
    """A_{q,N}(r) = int_{e_{q,N}}^{P(0,r)} (q - T(h)) dh, with A' = r (q - T)."""

    period: PeriodFunction
    orbit: PeriodicOrbit

    @classmethod
    def build(cls, q: float, N: float, V: Optional[SampledFunction] = None) -> "NormalForm":
        V = V or default_potential()
        return cls(PeriodFunction(V, N), solve_periodic_orbit(q, N, V))

    @property
    def q(self) -> float:
        return self.orbit.q

    def energy_on_plateau(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        e = 0.5 * r**2 - 0.5 * self.period.rho_N**2
        if np.any(e <= 0.0):
            raise RegimeError("normal form: action at or below the separatrix")
        return e

    def value(self, r) -> np.ndarray:
        e = self.energy_on_plateau(r)
        return gauss_legendre(lambda h: self.q - self.period(h), np.full_like(e, self.orbit.e), e)

    def derivative(self, r, k: int = 1) -> np.ndarray:
        if k == 0:
            return self.value(r)
        r = np.asarray(r, dtype=float)
        e = self.energy_on_plateau(r)
        T = [self.period.derivative(e, j) for j in range(min(k, 4))]
        gap = self.q - T[0]
        if k == 1:
            return r * gap
        if k == 2:
            return gap - r**2 * T[1]
        if k == 3:
            return -3.0 * r * T[1] - r**3 * T[2]
        if k == 4:
            return -3.0 * T[1] - 6.0 * r**2 * T[2] - r**4 * T[3]
        raise InvalidParameterError(f"normal form derivative order {k} outside [0, 4]")


def normal_form_A(q: float, N: float, r, k: int = 0, V: Optional[SampledFunction] = None) -> np.ndarray:
    return NormalForm.build(q, N, V).derivative(r, k)


def normal_form_discrepancy(box: AdaptedBox, V: Optional[SampledFunction] = None, grid: int = settings.pendulum.box_grid) -> float:
    """max |phi^q(z) - (theta + 1 + A'(r), r)| over a box grid."""
    V = V or default_potential()
    nf = NormalForm.build(box.q, box.N, V)
    z = box.grid(grid)
    image = PendulumFlow(V, box.N, float(box.q)).apply_lifted(z)
    predicted_theta = z[:, 0] + 1.0 + nf.derivative(z[:, 1], 1)
    return float(max(np.max(np.abs(image[:, 0] - predicted_theta)), np.max(np.abs(image[:, 1] - z[:, 1]))))


@dataclass(frozen=True)
class LocalReturnMap:
    """F_{q,N,mu} = Phi^{mu W_N} o Phi^{A_{q,N}} in offsets (x, R) = (theta, r - r_{q,N})."""

    box: AdaptedBox
    mu: float
    shift: Chebyshev
    W: SampledFunction

    def step(self, x: np.ndarray, R: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        x_next = x + self.shift(R)
        return x_next, R - self.mu * self.W.derivative(x_next, 1)

    def inside(self, x: np.ndarray, R: np.ndarray) -> np.ndarray:
        return (np.abs(x) <= self.box.ell) & (np.abs(R) <= self.box.ell_prime)


def local_return_map(
    box: AdaptedBox,
    mu: float,
    V: Optional[SampledFunction] = None,
    degree: int = settings.pendulum.cheb_degree,
) -> LocalReturnMap:
    if mu < 0:
        raise InvalidParameterError(f"local_return_map: mu must be non-negative, got {mu}")
    nf = NormalForm.build(box.q, box.N, V)
    reach = 1.25 * max(box.ell_prime, 1e-300)
    shift = Chebyshev.interpolate(lambda R: nf.derivative(box.r_center + R, 1), degree, domain=[-reach, reach])
    return LocalReturnMap(box, mu, shift, make_W(int(box.N), box.delta, settings.bumps.alpha))


# ---------------------------------------------------------------------------
# Linear part and first twist coefficient
# ---------------------------------------------------------------------------


def twist_factor(lam: complex) -> complex:
    """R(lambda) = i (1 + lambda)/(1 - lambda) * (2 + lambda + 2 lambda^2)/(1 + lambda + lambda^2)."""
    return 1j * (1 + lam) / (1 - lam) * (2 + lam + 2 * lam**2) / (1 + lam + lam**2)


@dataclass(frozen=True)
class IslandLinearData:
    q: float
    N: float
    mu: float
    alpha: float
    S2: float
    S3: float
    gamma0: float
    lam: complex
    lam_minus_one: float
    a2: float
    a3: float
    R: complex
    b1: complex
    omega: float
    nonresonant: bool

    @property
    def twist(self) -> float:
        """3 a3 + 2 a2^2 |lambda - 1| Re R(lambda)."""
        return float(self.b1.real / self.lam_minus_one)

    @property
    def twist_ratio(self) -> float:
        return self.twist / self.omega**2

    def as_dict(self) -> Dict[str, float]:
        return {
            "q": self.q,
            "N": self.N,
            "mu": self.mu,
            "alpha": self.alpha,
            "gamma0": self.gamma0,
            "lambda_re": self.lam.real,
            "lambda_im": self.lam.imag,
            "a2": self.a2,
            "a3": self.a3,
            "b1_re": self.b1.real,
            "b1_im": self.b1.imag,
            "omega": self.omega,
            "twist": self.twist,
            "twist_ratio": self.twist_ratio,
        }


def linear_data_from_derivatives(q: float, N: float, mu: float, alpha: float, S2: float, S3: float) -> IslandLinearData:
    if not mu > 0.0:
        raise InvalidParameterError(f"island_linear_data: mu must be positive, got {mu}")
    product = mu * alpha
    if not 0.0 < product < 1.0:
        raise RegimeError(f"island_linear_data: mu*alpha = {product:.6g} outside (0, 1); ellipticity lost")
    gamma0 = -math.acos(1.0 - 0.5 * product)
    lam = complex(math.cos(gamma0), math.sin(gamma0))
    gap = math.sqrt(product)
    denom = 2.0 * gap * math.sin(gamma0)
    a2 = mu * S2 / (2.0 * denom)
    a3 = mu * S3 / (6.0 * denom)
    R = twist_factor(lam)
    b1 = gap * (3.0 * a3 + 2.0 * a2**2 * gap * R)
    nonresonant = all(abs(lam**p - 1.0) >= gap - 1e-15 for p in range(1, 7)) if gap < 0.25 else False
    return IslandLinearData(q, N, mu, alpha, S2, S3, gamma0, lam, gap, a2, a3, R, b1, q**4 / N**3, nonresonant)


def island_linear_data(q: float, N: float, mu: float, V: Optional[SampledFunction] = None) -> IslandLinearData:
    nf = NormalForm.build(q, N, V)
    r = nf.orbit.r
    alpha, S2, S3 = (float(nf.derivative(r, k)) for k in (2, 3, 4))
    return linear_data_from_derivatives(q, N, mu, alpha, S2, S3)


def island_mu(q: float, N: float, V: Optional[SampledFunction] = None, target: Optional[float] = None) -> float:
    """mu with mu * alpha_{q,N} fixed at ``target``."""
    target = settings.assembly.mu_alpha_target if target is None else target
    nf = NormalForm.build(q, N, V)
    return target / float(nf.derivative(nf.orbit.r, 2))


def beta_constants(kmax: int = 3) -> List[float]:
    """beta_k = binom(k - 1/2, k) I(k + 1/2) / I(1/2)^{4k+1}, I(m) = int_0^inf (1 + x^4)^-m dx."""
    base = _quartic_tail(0.5)
    return [float(binom(k - 0.5, k) * _quartic_tail(k + 0.5) / base ** (4 * k + 1)) for k in range(1, kmax + 1)]


def period_sweep(
    qs: Sequence[float],
    N: float,
    mus: Optional[Sequence[float]] = None,
    V: Optional[SampledFunction] = None,
) -> List[Dict[str, float]]:
    """Rows (q, N, mu, e, r, alpha, gamma0, a2, a3, Re b1, omega) for a q sweep."""
    V = V or default_potential()
    rows = []
    for i, q in enumerate(qs):
        nf = NormalForm.build(q, N, V)
        r = nf.orbit.r
        alpha, S2, S3 = (float(nf.derivative(r, k)) for k in (2, 3, 4))
        mu = mus[i] if mus is not None else settings.assembly.mu_alpha_target / alpha
        data = linear_data_from_derivatives(q, N, mu, alpha, S2, S3)
        rows.append(
            {
                "q": float(q),
                "N": float(N),
                "mu": mu,
                "e": nf.orbit.e,
                "r": r,
                "alpha": alpha,
                "gamma0": data.gamma0,
                "a2": data.a2,
                "a3": data.a3,
                "b1_re": data.b1.real,
                "omega": data.omega,
                "twist_ratio": data.twist_ratio,
            }
        )
    logger.info(f"Period sweep N={N}: {len(rows)} values of q")
    return rows


def sweep_constants(rows: Sequence[Dict[str, float]]) -> Dict[str, float]:
    """Fitted C_1, C_2 of C_1 N^2/q^4 <= e_{q,N} <= C_2 N^2/q^4 and the last alpha N^4/q^5."""
    scaled = [row["e"] * row["q"] ** 4 / row["N"] ** 2 for row in rows]
    ratios = [row["alpha"] * row["N"] ** 4 / row["q"] ** 5 for row in rows]
    return {"C1": float(min(scaled)), "C2": float(max(scaled)), "beta1_rho0_sq": float(ratios[-1])}
