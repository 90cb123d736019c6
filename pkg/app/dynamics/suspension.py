"""Generating functions in mixed variables and suspensions of near-integrable maps.

Everything here acts on a single annulus factor. A generating function
A(theta, r') defines F_A: (theta, r) -> (theta', r') implicitly through

    r = r' + d_theta A(theta, r'),    theta' = theta + d_r' A(theta, r').

A map Psi close to the shear Phi^h factors as Psi = Phi^h o F_A, and

    H(theta, r, t) = h(r) + eta'(t) A(theta_0, r),
    (theta_0, .) = F_{eta(t) A}^{-1}(theta - t h'(r), r),

is a time-periodic Hamiltonian whose flow from t = 0 to t = 1 is Psi. The flow
at intermediate times follows the isotopy Phi^{t h} o F_{eta(t) A}.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import sympy as sp
from scipy.integrate import solve_ivp
from scipy.interpolate import RectBivariateSpline, make_interp_spline

from app.core.config import settings
from app.core.errors import InvalidParameterError, RegimeError
from app.core.geometry import AnnulusPoint, angle_offset, wrap_angle
from app.core.schemas import MapDescription
from app.dynamics.maps import Composite, Shear, SymplecticMap
from app.lab.models import SCHEMA_VERSION, VerificationReport
from app.numerics.gevrey import SampledFunction, make_eta
from app.numerics.quadrature import composite_gauss_legendre, gauss_legendre

logger = logging.getLogger(__name__)

# periodic padding of the angle axis for the quintic splines
_PAD = 6
_SPLINE_ORDER = 5

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ActionGrid:
    """Uniform angles on [0, 1) times equispaced actions on [low, high]."""

    angles: int = settings.suspension.grid_angles
    actions: int = settings.suspension.grid_actions
    low: float = settings.suspension.action_min
    high: float = settings.suspension.action_max

    def __post_init__(self) -> None:
        if self.angles < 8 or self.actions < _SPLINE_ORDER + 1:
            raise InvalidParameterError(
                f"ActionGrid: need at least 8 angles and {_SPLINE_ORDER + 1} actions, got {self.angles}x{self.actions}"
            )
        if not self.high > self.low:
            raise InvalidParameterError(f"ActionGrid: empty action range [{self.low}, {self.high}]")

    @property
    def theta(self) -> np.ndarray:
        return np.arange(self.angles) / self.angles

    @property
    def r(self) -> np.ndarray:
        return np.linspace(self.low, self.high, self.actions)

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.theta, self.r, indexing="ij")

    @classmethod
    def from_settings(cls) -> "ActionGrid":
        s = settings.suspension
        return cls(s.grid_angles, s.grid_actions, s.action_min, s.action_max)

    def inner(self, fraction: float = 0.25) -> Tuple[float, float]:
        """Action range shrunk by ``fraction`` of the span at both ends."""
        span = self.high - self.low
        return self.low + fraction * span, self.high - fraction * span


# ---------------------------------------------------------------------------
# Contraction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContractionResult:
    value: np.ndarray
    iterations: int
    residual: float
    ratio: float


def contract(
    step: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    what: str = "fixed point",
) -> ContractionResult:
    """Iterate ``x <- step(x)`` until two successive iterates agree to ``tol``.

    ``ratio`` is the largest observed quotient of successive step sizes while
    the steps are still above rounding level.
    """
    tol = settings.suspension.fixed_point_tolerance if tol is None else tol
    max_iter = settings.suspension.max_iterations if max_iter is None else max_iter
    x = np.asarray(x0, dtype=float)
    previous = math.inf
    ratio = 0.0
    size = math.inf
    for k in range(1, max_iter + 1):
        nxt = step(x)
        size = float(np.max(np.abs(nxt - x))) if nxt.size else 0.0
        x = nxt
        floor = 4.0 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(x))) if x.size else 1.0)
        if math.isfinite(previous) and previous > 1e3 * floor:
            ratio = max(ratio, size / previous)
        if size <= max(tol, floor):
            return ContractionResult(x, k, size, ratio)
        if not math.isfinite(size):
            break
        previous = size
    raise RegimeError(
        f"{what}: contraction did not converge in {max_iter} iterations (last step {size:.3e}); "
        "the generating function is too large for this regime"
    )


# ---------------------------------------------------------------------------
# Generating functions
# ---------------------------------------------------------------------------


def _periodic_spline(grid: ActionGrid, data: np.ndarray) -> RectBivariateSpline:
    theta = grid.theta
    ext_theta = np.concatenate([theta[-_PAD:] - 1.0, theta, theta[:_PAD] + 1.0])
    ext_data = np.concatenate([data[-_PAD:], data, data[:_PAD]], axis=0)
    ky = min(_SPLINE_ORDER, grid.actions - 1)
    return RectBivariateSpline(ext_theta, grid.r, ext_data, kx=_SPLINE_ORDER, ky=ky)


@dataclass(frozen=True, eq=False)
class GeneratingFunction:
    """A(theta, r') on a tensor grid with its two partial derivatives.

    Each of value / d_theta / d_r is interpolated by its own periodic quintic
    spline. ``closed_form`` evaluators, when present, replace the splines.
    """

    grid: ActionGrid
    values: np.ndarray
    d_theta: np.ndarray
    d_r: np.ndarray
    label: str = "A"
    closed_form: Optional[Tuple[Evaluator, Evaluator, Evaluator]] = None
    diagnostics: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        expected = (self.grid.angles, self.grid.actions)
        for name in ("values", "d_theta", "d_r"):
            if np.shape(getattr(self, name)) != expected:
                raise InvalidParameterError(f"GeneratingFunction.{name}: expected shape {expected}")

    @classmethod
    def zero(cls, grid: Optional[ActionGrid] = None) -> "GeneratingFunction":
        grid = grid or ActionGrid.from_settings()
        blank = np.zeros((grid.angles, grid.actions))

        def nothing(theta: np.ndarray, r: np.ndarray) -> np.ndarray:
            return np.zeros(np.broadcast(theta, r).shape)

        return cls(grid, blank, blank.copy(), blank.copy(), "0", (nothing, nothing, nothing))

    @classmethod
    def from_expression(
        cls,
        expr: sp.Expr,
        theta: sp.Symbol,
        r: sp.Symbol,
        grid: Optional[ActionGrid] = None,
        label: Optional[str] = None,
    ) -> "GeneratingFunction":
        """Closed-form A from a sympy expression, 1-periodic in ``theta``."""
        grid = grid or ActionGrid.from_settings()
        lambdified = [sp.lambdify((theta, r), e, modules="numpy") for e in (expr, sp.diff(expr, theta), sp.diff(expr, r))]

        def wrap(func: Callable) -> Evaluator:
            def evaluate(t: np.ndarray, s: np.ndarray) -> np.ndarray:
                t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
                return np.broadcast_to(np.asarray(func(t, s), dtype=float), t.shape).copy()

            return evaluate

        evaluators = tuple(wrap(f) for f in lambdified)
        T, R = grid.mesh()
        return cls(
            grid,
            evaluators[0](T, R),
            evaluators[1](T, R),
            evaluators[2](T, R),
            label or str(expr),
            evaluators,
        )

    @cached_property
    def _splines(self) -> Tuple[RectBivariateSpline, ...]:
        return tuple(_periodic_spline(self.grid, data) for data in (self.values, self.d_theta, self.d_r))

    def _evaluate(self, which: int, theta, r) -> np.ndarray:
        theta, r = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(r, dtype=float))
        slack = 1e-9 * (self.grid.high - self.grid.low)
        if r.size and (np.min(r) < self.grid.low - slack or np.max(r) > self.grid.high + slack):
            raise RegimeError(
                f"{self.label}: action {float(np.min(r)):.6g}..{float(np.max(r)):.6g} left the working domain "
                f"[{self.grid.low}, {self.grid.high}]"
            )
        if self.closed_form is not None:
            return self.closed_form[which](theta, r)
        out = self._splines[which].ev(wrap_angle(theta).ravel(), r.ravel())
        return out.reshape(theta.shape)

    def value(self, theta, r) -> np.ndarray:
        return self._evaluate(0, theta, r)

    def grad_theta(self, theta, r) -> np.ndarray:
        return self._evaluate(1, theta, r)

    def grad_r(self, theta, r) -> np.ndarray:
        return self._evaluate(2, theta, r)

    def scaled(self, factor: float) -> "GeneratingFunction":
        closed = None
        if self.closed_form is not None:
            closed = tuple(_scaled_evaluator(f, factor) for f in self.closed_form)
        return replace(
            self,
            values=factor * self.values,
            d_theta=factor * self.d_theta,
            d_r=factor * self.d_r,
            label=f"{factor:g}*({self.label})",
            closed_form=closed,
        )

    def slice_jacobian(self) -> float:
        """min over grid nodes of d/dr' (r' + d_theta A): positive iff every r'-slice is invertible."""
        T, R = self.grid.mesh()
        mixed = self._splines[1].ev(T.ravel(), R.ravel(), dx=0, dy=1)
        return float(np.min(1.0 + mixed))

    def max_gradient(self) -> float:
        return float(max(np.max(np.abs(self.d_theta)), np.max(np.abs(self.d_r))))


def _scaled_evaluator(f: Evaluator, factor: float) -> Evaluator:
    return lambda theta, r: factor * f(theta, r)


def _state(p) -> np.ndarray:
    if isinstance(p, AnnulusPoint):
        if p.n != 1:
            raise InvalidParameterError(f"generating functions act on one factor, got n={p.n}")
        return p.as_array()
    z = np.asarray(p, dtype=float)
    if z.shape[-1] != 2:
        raise InvalidParameterError(f"generating functions act on states of size 2, got {z.shape[-1]}")
    return z


def _mixed_forward(A: GeneratingFunction, z: np.ndarray, scale: float, tol: Optional[float]) -> Tuple[np.ndarray, ContractionResult]:
    theta, r = z[..., 0], z[..., 1]
    sol = contract(lambda rp: r - scale * A.grad_theta(theta, rp), r.copy(), tol, what="mixed_map_apply")
    rp = sol.value
    return np.stack([theta + scale * A.grad_r(theta, rp), rp], axis=-1), sol


def _mixed_backward(A: GeneratingFunction, z: np.ndarray, scale: float, tol: Optional[float]) -> Tuple[np.ndarray, ContractionResult]:
    theta_p, rp = z[..., 0], z[..., 1]
    sol = contract(lambda th: theta_p - scale * A.grad_r(th, rp), theta_p.copy(), tol, what="mixed_map_inverse")
    theta = sol.value
    return np.stack([theta, rp + scale * A.grad_theta(theta, rp)], axis=-1), sol


@dataclass(frozen=True, eq=False)
class GeneratingMap(SymplecticMap):
    """F_{scale * A}, or its inverse, as a map of one annulus factor."""

    A: GeneratingFunction
    scale: float = 1.0
    inverted: bool = False
    tol: Optional[float] = None
    n: int = 1

    def apply_lifted(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.scale == 0.0:
            return z.copy()
        solve = _mixed_backward if self.inverted else _mixed_forward
        return solve(self.A, z, self.scale, self.tol)[0]

    def inverse(self) -> "GeneratingMap":
        return replace(self, inverted=not self.inverted)

    def describe(self) -> MapDescription:
        return MapDescription(
            kind="generating",
            dimension=1,
            parameters={"A": self.A.label, "scale": self.scale, "inverted": self.inverted},
        )


def mixed_map_apply(A: GeneratingFunction, p, scale: float = 1.0, tol: Optional[float] = None):
    """F_A(p): solve r = r' + d_theta A(theta, r') for r', then shift the angle."""
    z = _state(p)
    image, _ = _mixed_forward(A, z, scale, tol)
    image[..., 0] = wrap_angle(image[..., 0])
    return AnnulusPoint.from_array(image) if isinstance(p, AnnulusPoint) else image


def mixed_map_inverse(A: GeneratingFunction, p, scale: float = 1.0, tol: Optional[float] = None):
    """F_A^{-1}(p): solve theta' = theta + d_r' A(theta, r') for theta."""
    z = _state(p)
    image, _ = _mixed_backward(A, z, scale, tol)
    image[..., 0] = wrap_angle(image[..., 0])
    return AnnulusPoint.from_array(image) if isinstance(p, AnnulusPoint) else image


def contraction_ratio(A: GeneratingFunction, points: np.ndarray, scale: float = 1.0) -> float:
    """Largest observed step ratio of the forward solve over ``points``."""
    return _mixed_forward(A, _state(points), scale, None)[1].ratio


# ---------------------------------------------------------------------------
# Recovering A from a map
# ---------------------------------------------------------------------------


def integrate_exact_form(grid: ActionGrid, b_theta: np.ndarray, b_r: np.ndarray) -> Tuple[np.ndarray, float]:
    """Primitive of beta = b_theta dtheta + b_r dr' on the grid, plus its angular flux.

    Integrates along theta at the lowest action (spectrally, so the primitive
    is periodic), then along r' (quintic spline antiderivative). The flux is the
    largest mean of b_theta over a circle r' = const; it vanishes for exact beta.
    """
    flux = float(np.max(np.abs(b_theta.mean(axis=0))))
    coeffs = np.fft.rfft(b_theta[:, 0])
    k = np.arange(coeffs.size)
    primitive = np.zeros_like(coeffs)
    primitive[1:] = coeffs[1:] / (2j * np.pi * k[1:])
    base = np.fft.irfft(primitive, n=grid.angles)
    base = base - base[0]
    anti = make_interp_spline(grid.r, b_r, k=min(_SPLINE_ORDER, grid.actions - 1), axis=1).antiderivative()
    along = anti(grid.r) - anti(grid.r[0])[:, None]
    return base[:, None] + along, flux


def exactness_residual(A: GeneratingFunction, loops: int = 64, seed: Optional[int] = None) -> float:
    """Largest |loop integral| of (d_theta A, d_r A) around random grid cells.

    Edges are integrated with Simpson's rule, midpoints from the gradient
    splines. ``loops=0`` checks every cell.
    """
    grid = A.grid
    cells_total = grid.angles * (grid.actions - 1)
    if loops and loops < cells_total:
        rng = np.random.default_rng(settings.lab.seed if seed is None else seed)
        picks = rng.choice(cells_total, size=loops, replace=False)
    else:
        picks = np.arange(cells_total)
    i, j = np.divmod(picks, grid.actions - 1)
    h_theta = 1.0 / grid.angles
    t0 = grid.theta[i]
    t1 = t0 + h_theta
    r0, r1 = grid.r[j], grid.r[j + 1]
    tm, rm = 0.5 * (t0 + t1), 0.5 * (r0 + r1)
    s_theta, s_r = A._splines[1], A._splines[2]

    def ev(spline: RectBivariateSpline, t: np.ndarray, r: np.ndarray) -> np.ndarray:
        return spline.ev(wrap_angle(t), r)

    def simpson(f0: np.ndarray, fm: np.ndarray, f1: np.ndarray, length) -> np.ndarray:
        return length * (f0 + 4.0 * fm + f1) / 6.0

    bottom = simpson(ev(s_theta, t0, r0), ev(s_theta, tm, r0), ev(s_theta, t1, r0), h_theta)
    right = simpson(ev(s_r, t1, r0), ev(s_r, t1, rm), ev(s_r, t1, r1), r1 - r0)
    top = simpson(ev(s_theta, t0, r1), ev(s_theta, tm, r1), ev(s_theta, t1, r1), h_theta)
    left = simpson(ev(s_r, t0, r0), ev(s_r, t0, rm), ev(s_r, t0, r1), r1 - r0)
    return float(np.max(np.abs(bottom + right - top - left)))


def fit_generating_function(
    psi: SymplecticMap,
    h: Shear,
    grid: Optional[ActionGrid] = None,
    tol: Optional[float] = None,
) -> GeneratingFunction:
    """Generating function A with psi = Phi^h o F_A on the grid.

    For every node (theta, r') the action r with F^(2)(theta, r) = r' is found
    by contraction, F = Phi^{-h} o psi; then beta = (r - r') dtheta +
    (theta' - theta) dr' is integrated.
    """
    if psi.n != 1 or h.n != 1:
        raise InvalidParameterError("fit_generating_function works on one annulus factor")
    grid = grid or ActionGrid.from_settings()
    tol = settings.suspension.exactness_tolerance if tol is None else tol
    started = time.perf_counter()
    F = Composite((h.inverse(), psi))
    T, Rp = grid.mesh()

    def image_of(r: np.ndarray) -> np.ndarray:
        return F.apply_lifted(np.stack([T, r], axis=-1))

    sol = contract(lambda r: r + (Rp - image_of(r)[..., 1]), Rp.copy(), what="fit_generating_function")
    r = sol.value
    image = image_of(r)
    d_theta = r - Rp
    d_r = image[..., 0] - T
    values, flux = integrate_exact_form(grid, d_theta, d_r)
    A = GeneratingFunction(grid, values, d_theta, d_r, label="A")
    loop = exactness_residual(A, loops=0)
    jacobian = A.slice_jacobian()
    diagnostics = {
        "exactness_residual": loop,
        "flux": flux,
        "contraction_ratio": sol.ratio,
        "iterations": float(sol.iterations),
        "fixed_point_residual": sol.residual,
        "slice_jacobian": jacobian,
        "max_gradient": A.max_gradient(),
        "runtime_s": time.perf_counter() - started,
    }
    if loop > tol or flux > tol:
        raise RegimeError(
            f"fit_generating_function: map is not exact near Phi^h on the grid "
            f"(loop residual {loop:.3e}, flux {flux:.3e}, tolerance {tol:.1e})"
        )
    if jacobian <= 0.0:
        raise RegimeError(f"fit_generating_function: r'-slice not invertible (min Jacobian {jacobian:.3e})")
    logger.info(
        f"Fitted generating function on {grid.angles}x{grid.actions} grid: loop residual {loop:.2e}, "
        f"contraction ratio {sol.ratio:.2e} after {sol.iterations} iterations"
    )
    return replace(A, diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# Suspension
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SuspensionRamp:
    """eta(t) = G(t)/G(1) with G the primitive of a bump supported in [1/4, 3/4]."""

    alpha: float = settings.suspension.ramp_alpha

    @cached_property
    def bump(self) -> SampledFunction:
        return make_eta(self.alpha, 4.0)

    @cached_property
    def total(self) -> float:
        nodes, weights = composite_gauss_legendre(0.25, 0.75, 64, 20)
        return float(self.bump(nodes - 0.5) @ weights)

    def derivative(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.bump(t - 0.5) / self.total

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        upper = np.clip(t, 0.25, 0.75)
        edges = 0.25 + (upper - 0.25)[..., None] * np.linspace(0.0, 1.0, 17)
        pieces = gauss_legendre(self.derivative, edges[..., :-1], edges[..., 1:], nodes=16)
        return np.where(t >= 0.75, 1.0, pieces.sum(axis=-1))

    def flat(self, t: float) -> bool:
        return t <= 0.25 or t >= 0.75


@dataclass(frozen=True, eq=False)
class SuspensionHamiltonian:
    """H(theta, r, t) = h(r) + eta'(t) A(theta_0, r); equal to h near t = 0 and t = 1."""

    h: Shear
    A: GeneratingFunction
    eta: SuspensionRamp = field(default_factory=SuspensionRamp)
    fd_step: float = settings.suspension.fd_step

    def __post_init__(self) -> None:
        if self.h.n != 1:
            raise InvalidParameterError("SuspensionHamiltonian: h must act on one factor")
        if self.h.value is None:
            raise InvalidParameterError(f"SuspensionHamiltonian: h '{self.h.label}' has no value evaluator")

    def _h_value(self, r: np.ndarray) -> np.ndarray:
        return self.h.value(r[..., None])

    def _h_gradient(self, r: np.ndarray) -> np.ndarray:
        return self.h.gradient(r[..., None])[..., 0]

    def perturbation(self, theta, r, t: float) -> np.ndarray:
        """eta'(t) A(theta_0, r); exactly zero on the flat zones of eta."""
        theta, r = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(r, dtype=float))
        t = float(t) % 1.0
        if self.eta.flat(t):
            return np.zeros(theta.shape)
        weight = float(self.eta(t))
        shifted = np.stack([theta - t * self._h_gradient(r), r], axis=-1)
        # solved to rounding level: the vector field differentiates this
        start, _ = _mixed_backward(self.A, shifted, weight, 0.0)
        return float(self.eta.derivative(t)) * self.A.value(start[..., 0], r)

    def __call__(self, theta, r, t: float) -> np.ndarray:
        theta, r = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(r, dtype=float))
        return self._h_value(r) + self.perturbation(theta, r, t)

    def vector_field(self, t: float, theta: np.ndarray, r: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(dtheta/dt, dr/dt) = (dH/dr, -dH/dtheta)."""
        dtheta = self._h_gradient(r)
        if self.eta.flat(float(t) % 1.0):
            return dtheta, np.zeros_like(r)
        s = self.fd_step
        dK_dr = (self.perturbation(theta, r + s, t) - self.perturbation(theta, r - s, t)) / (2.0 * s)
        dK_dtheta = (self.perturbation(theta + s, r, t) - self.perturbation(theta - s, r, t)) / (2.0 * s)
        return dtheta + dK_dr, -dK_dtheta

    def time_map(self, t: float) -> SymplecticMap:
        """Phi^{t h} o F_{eta(t) A}, the isotopy from the identity to psi."""
        return Composite((self.h.scaled(t), GeneratingMap(self.A, float(self.eta(t)))))


def suspend(psi: SymplecticMap, h: Shear, grid: Optional[ActionGrid] = None) -> SuspensionHamiltonian:
    return SuspensionHamiltonian(h, fit_generating_function(psi, h, grid))


def suspension_value(S: SuspensionHamiltonian, theta, r, t: float) -> np.ndarray:
    """H(theta, r, t); t is read modulo 1, H extends 1-periodically."""
    return S(theta, r, t)


def perturbation_size(S: SuspensionHamiltonian, times: int = 17) -> float:
    """max |H - h| over the grid nodes inside the half action range and times in the ramp."""
    low, high = S.A.grid.inner()
    T, R = np.meshgrid(S.A.grid.theta, np.linspace(low, high, 16), indexing="ij")
    best = 0.0
    for t in np.linspace(0.25, 0.75, times)[1:-1]:
        best = max(best, float(np.max(np.abs(S.perturbation(T, R, t)))))
    return best


def flow(S: SuspensionHamiltonian, z0: np.ndarray, times: Sequence[float]) -> Dict[float, np.ndarray]:
    """Integrate the flow of H from t = 0; lifted states at each requested time."""
    z0 = np.atleast_2d(np.asarray(z0, dtype=float))
    count = z0.shape[0]
    s = settings.suspension

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        dtheta, dr = S.vector_field(t, y[:count], y[count:])
        return np.concatenate([dtheta, dr])

    stops = sorted({float(t) for t in times if 0.0 < t <= 1.0})
    y0 = np.concatenate([z0[:, 0], z0[:, 1]])
    sol = solve_ivp(rhs, (0.0, max(stops)), y0, method="DOP853", t_eval=stops, rtol=s.ode_rtol, atol=s.ode_atol, max_step=0.125)
    if not sol.success:
        raise RegimeError(f"suspension flow integration failed: {sol.message}")
    out = {0.0: z0.copy()}
    for k, t in enumerate(sol.t):
        y = sol.y[:, k]
        out[float(t)] = np.stack([y[:count], y[count:]], axis=-1)
    return out


def _state_deviation(a: np.ndarray, b: np.ndarray) -> float:
    d_theta = angle_offset(a[..., 0] - b[..., 0])
    return float(np.max(np.hypot(d_theta, a[..., 1] - b[..., 1])))


def verify_suspension(
    S: SuspensionHamiltonian,
    psi: SymplecticMap,
    samples: int = 50,
    tolerance: float = 1e-5,
    checkpoints: Sequence[float] = (0.25, 0.5, 0.75),
    seed: Optional[int] = None,
) -> VerificationReport:
    """Time-one flow of H against psi, and intermediate flow against the isotopy."""
    started = time.perf_counter()
    seed = settings.lab.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    low, high = S.A.grid.inner()
    z0 = np.stack([rng.uniform(0.0, 1.0, samples), rng.uniform(low, high, samples)], axis=-1)
    states = flow(S, z0, list(checkpoints) + [1.0])
    final = _state_deviation(states[1.0], psi.apply_lifted(z0))
    isotopy = 0.0
    for t in checkpoints:
        isotopy = max(isotopy, _state_deviation(states[float(t)], S.time_map(float(t)).apply_lifted(z0)))
    checks = [("time_one", final <= tolerance), ("isotopy", isotopy <= tolerance)]
    failed = next((name for name, ok in checks if not ok), None)
    report = VerificationReport(
        kind="suspension",
        passed=failed is None,
        margins={"time_one_deviation": final, "isotopy_deviation": isotopy},
        tolerances={"deviation": tolerance},
        parameters={
            "samples": samples,
            "seed": seed,
            "checkpoints": list(checkpoints),
            "grid": asdict(S.A.grid),
            "A": S.A.label,
            "h": S.h.label,
        },
        failed=failed,
        runtime_s=time.perf_counter() - started,
    )
    logger.info(f"Suspension check on {samples} samples: deviation {final:.2e} ({'pass' if report.passed else 'fail'})")
    return report


# ---------------------------------------------------------------------------
# Grid dumps
# ---------------------------------------------------------------------------


def _write_metadata(path: Path, payload: Dict[str, object]) -> Path:
    meta = path.with_suffix(".json")
    meta.write_text(json.dumps({"schema_version": SCHEMA_VERSION, **payload}, sort_keys=True, indent=2, default=float))
    return meta


def dump_generating_function(A: GeneratingFunction, path: Union[Path, str]) -> Tuple[Path, Path]:
    """CSV rows (theta, r, A, dA_dtheta, dA_dr) and a metadata JSON next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    T, R = A.grid.mesh()
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["theta", "r", "A", "dA_dtheta", "dA_dr"])
        for row in zip(T.ravel(), R.ravel(), A.values.ravel(), A.d_theta.ravel(), A.d_r.ravel()):
            writer.writerow([f"{v:.17g}" for v in row])
    meta = _write_metadata(path, {"label": A.label, "grid": asdict(A.grid), "diagnostics": A.diagnostics})
    logger.info(f"Wrote generating function grid to {path}")
    return path, meta


def dump_hamiltonian(S: SuspensionHamiltonian, path: Union[Path, str], times: int = 9) -> Tuple[Path, Path]:
    """CSV rows (t, theta, r, H) over the grid nodes inside the half action range."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    low, high = S.A.grid.inner()
    T, R = np.meshgrid(S.A.grid.theta, np.linspace(low, high, S.A.grid.actions // 2), indexing="ij")
    ts = np.linspace(0.0, 1.0, times, endpoint=False)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t", "theta", "r", "H"])
        for t in ts:
            H = S(T, R, float(t))
            for row in zip(np.full(T.size, t), T.ravel(), R.ravel(), H.ravel()):
                writer.writerow([f"{v:.17g}" for v in row])
    meta = _write_metadata(
        path, {"h": S.h.label, "A": S.A.label, "times": ts.tolist(), "ramp_alpha": S.eta.alpha, "grid": asdict(S.A.grid)}
    )
    logger.info(f"Wrote suspension Hamiltonian samples to {path}")
    return path, meta
