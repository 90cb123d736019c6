"""Gevrey bumps and the torus profiles built from them.

Every profile is a 1-periodic function of one angle with derivatives up to
order ``MAX_ORDER``. Plateaus and supports are exact: outside the open
transition interval of the ramp the values are the literal closed forms.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy as sp

from app.core.errors import InvalidParameterError
from app.core.geometry import angle_offset

logger = logging.getLogger(__name__)

MAX_ORDER = 6
_UNDERFLOW = 700.0

DerivativeTable = Callable[[np.ndarray, int], np.ndarray]


def _beta(alpha: float) -> float:
    if not alpha > 1.0:
        raise InvalidParameterError(f"Gevrey exponent must exceed 1 for a flat bump, got alpha={alpha}")
    beta = 1.0 / (alpha - 1.0)
    if 2.0**beta >= 600.0:
        raise InvalidParameterError(f"alpha={alpha} too close to 1: ramp exponent 2^beta overflows")
    return beta


@lru_cache(maxsize=16)
def _ramp_table(alpha: float) -> Tuple[float, Tuple[Callable, ...]]:
    """Flat cutoff and lambdified derivatives of the ramp for one alpha."""
    beta = _beta(alpha)
    x = sp.Symbol("x", positive=True)
    shift = sp.Float(2.0**beta)
    b = sp.Float(beta)
    left = sp.exp(shift - x ** (-b))
    right = sp.exp(shift - (1 - x) ** (-b))
    chi = left / (left + right)
    funcs = []
    expr = chi
    for _ in range(MAX_ORDER + 1):
        funcs.append(sp.lambdify(x, expr, modules="numpy", cse=True))
        expr = sp.diff(expr, x)
    x_min = (_UNDERFLOW + 2.0**beta) ** (-1.0 / beta)
    logger.debug(f"Built ramp table for alpha={alpha} (flat below {x_min:.3e})")
    return x_min, tuple(funcs)


def ramp(x, alpha: float, k: int = 0) -> np.ndarray:
    """k-th derivative of the Gevrey-alpha ramp chi: 0 for x <= 0, 1 for x >= 1.

    chi(x) = psi(x) / (psi(x) + psi(1 - x)), psi(x) = exp(2^beta - x^-beta),
    beta = 1/(alpha - 1). The denominator never drops below 1.
    """
    if not 0 <= k <= MAX_ORDER:
        raise InvalidParameterError(f"ramp derivative order {k} outside [0, {MAX_ORDER}]")
    x_min, funcs = _ramp_table(float(alpha))
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    if k == 0:
        out[x >= 1.0 - x_min] = 1.0
    inner = (x > x_min) & (x < 1.0 - x_min)
    if np.any(inner):
        out[inner] = funcs[k](x[inner])
    return out


@dataclass(frozen=True)
class Plateau:
    """Interval (lifted, around 0) on which the function equals ``closed_form``."""

    lo: float
    hi: float
    closed_form: Callable[[np.ndarray], np.ndarray]
    description: str = ""

    def sample(self, count: int = 1000) -> np.ndarray:
        return np.linspace(self.lo, self.hi, count)


@dataclass(frozen=True)
class SampledFunction:
    label: str
    table: DerivativeTable
    alpha: float = 2.0
    max_order: int = MAX_ORDER
    plateau: Optional[Plateau] = None
    support: Optional[Tuple[float, float]] = None
    params: Dict[str, float] = field(default_factory=dict)

    def __call__(self, theta) -> np.ndarray:
        return self.derivative(theta, 0)

    def derivative(self, theta, k: int = 1) -> np.ndarray:
        if not 0 <= k <= self.max_order:
            raise InvalidParameterError(f"{self.label}: derivative order {k} not available (max {self.max_order})")
        return self.table(np.asarray(theta, dtype=float), k)

    def numeric_derivative(self, theta, k: int, h: float = 1e-4) -> np.ndarray:
        """Central differences with two Richardson levels (error O(h^6))."""
        theta = np.asarray(theta, dtype=float)
        step = h * 10.0 ** max(0, k - 2)

        def central(s: float) -> np.ndarray:
            total = np.zeros_like(theta)
            for j in range(k + 1):
                total += (-1) ** j * math.comb(k, j) * self(theta + (k / 2.0 - j) * s)
            return total / s**k

        d1, d2, d4 = central(step), central(step / 2), central(step / 4)
        r1 = (4.0 * d2 - d1) / 3.0
        r2 = (4.0 * d4 - d2) / 3.0
        return (16.0 * r2 - r1) / 15.0

    @classmethod
    def from_expression(cls, expr: sp.Expr, symbol: sp.Symbol, label: str, alpha: float = 1.0) -> "SampledFunction":
        """Periodic profile from a sympy expression in ``symbol``."""
        funcs = []
        current = expr
        for _ in range(MAX_ORDER + 1):
            funcs.append(sp.lambdify(symbol, current, modules="numpy"))
            current = sp.diff(current, symbol)

        def table(theta: np.ndarray, k: int) -> np.ndarray:
            return np.broadcast_to(np.asarray(funcs[k](theta), dtype=float), theta.shape).copy()

        return cls(label=label, table=table, alpha=alpha)

    @classmethod
    def constant(cls, value: float, label: str = "constant") -> "SampledFunction":
        def table(theta: np.ndarray, k: int) -> np.ndarray:
            return np.full_like(theta, value if k == 0 else 0.0)

        return cls(label=label, table=table)


def _bump_table(alpha: float, p: float) -> DerivativeTable:
    def table(theta: np.ndarray, k: int) -> np.ndarray:
        x = angle_offset(theta)
        arg = 2.0 * p * np.abs(x) - 1.0
        if k == 0:
            return 1.0 - ramp(arg, alpha, 0)
        return -((2.0 * p) ** k) * np.sign(x) ** k * ramp(arg, alpha, k)

    return table


def make_eta(alpha: float, p: float) -> SampledFunction:
    """Bump eta_p: 1 on |theta| <= 1/(2p), 0 on [1/p, 1 - 1/p]."""
    _beta(alpha)
    if p < 2.0:
        raise InvalidParameterError(f"make_eta: need p >= 2, got {p}")
    return SampledFunction(
        label=f"eta_{p:g}",
        table=_bump_table(alpha, p),
        alpha=alpha,
        plateau=Plateau(-1.0 / (2 * p), 1.0 / (2 * p), lambda x: np.ones_like(x), "1"),
        support=(-1.0 / p, 1.0 / p),
        params={"p": float(p)},
    )


def _leibniz(k: int, first: Sequence[np.ndarray], second: Sequence[np.ndarray]) -> np.ndarray:
    """k-th derivative of a product from the derivative lists of both factors."""
    total = np.zeros_like(first[0])
    for j in range(k + 1):
        total = total + math.comb(k, j) * first[k - j] * second[j]
    return total


def make_W(N: int, delta: float, alpha: float = 2.0) -> SampledFunction:
    """W_N = eta_{N/delta}(theta) * theta^2 / 2: theta^2/2 on |theta| <= delta/(2N),
    0 on [delta/N, 1 - delta/N]."""
    if N < 1:
        raise InvalidParameterError(f"make_W: N must be >= 1, got {N}")
    if not 0.0 < delta < 1.0:
        raise InvalidParameterError(f"make_W: delta must lie in (0, 1), got {delta}")
    p = N / delta
    if p < 2.0:
        raise InvalidParameterError(f"make_W: need delta <= N/2 so that the support fits in T (N={N}, delta={delta})")
    bump = _bump_table(alpha, p)

    def table(theta: np.ndarray, k: int) -> np.ndarray:
        x = angle_offset(theta)
        eta = [bump(theta, j) for j in range(k + 1)]
        quad = [0.5 * x**2, x, np.ones_like(x)] + [np.zeros_like(x)] * max(0, k - 2)
        return _leibniz(k, eta, quad[: k + 1])

    return SampledFunction(
        label=f"W_{N}",
        table=table,
        alpha=alpha,
        plateau=Plateau(-delta / (2 * N), delta / (2 * N), lambda x: 0.5 * x**2, "theta^2/2"),
        support=(-delta / N, delta / N),
        params={"N": float(N), "delta": float(delta), "p": p},
    )


def make_V(L0: float, theta_star: float, rho0: float, alpha: float = 2.0) -> SampledFunction:
    """Pseudo-pendulum potential: -rho0^2/2 on |theta| <= L0, -(theta - 1/2)^4 on
    |theta - 1/2| <= theta_star, negative everywhere except theta = 1/2."""
    if not (L0 > 0.0 and theta_star > 0.0):
        raise InvalidParameterError("make_V: L0 and theta_star must be positive")
    if L0 >= 0.5 - theta_star:
        raise InvalidParameterError(f"make_V: need L0 < 1/2 - theta_star (L0={L0}, theta_star={theta_star})")
    if not rho0 > 2.0:
        raise InvalidParameterError(f"make_V: the plateau depth needs rho0 > 2, got {rho0}")
    width = 0.5 - theta_star - L0
    depth = -0.5 * rho0**2

    def table(theta: np.ndarray, k: int) -> np.ndarray:
        x = angle_offset(theta)
        u = np.abs(x)
        s = [ramp((u - L0) / width, alpha, j) / width**j for j in range(k + 1)]
        w = 0.5 - u
        quartic = [-(w**4), 4 * w**3, -12 * w**2, 24 * w, -24 * np.ones_like(u)]
        quartic += [np.zeros_like(u)] * max(0, k - 4)
        gap = [quartic[0] - depth] + quartic[1 : k + 1]
        value = _leibniz(k, gap, s)
        if k == 0:
            value = value + depth
        return np.sign(x) ** k * value

    return SampledFunction(
        label="V",
        table=table,
        alpha=alpha,
        plateau=Plateau(-L0, L0, lambda x: np.full_like(x, depth), "-rho0^2/2"),
        params={"L0": L0, "theta_star": theta_star, "rho0": rho0},
    )


def make_U(rho: float, alpha: float = 2.0) -> SampledFunction:
    """Standard-map profile U = eta_3(theta)(-x + x^2/2), so U'(x) = -1 + x on [-rho, rho]."""
    if not 0.0 < rho < 0.5:
        raise InvalidParameterError(f"make_U: rho must lie in (0, 1/2), got {rho}")
    if rho > 1.0 / 6.0:
        raise InvalidParameterError(f"make_U: rho={rho} exceeds the eta_3 plateau 1/6")
    bump = _bump_table(alpha, 3.0)

    def table(theta: np.ndarray, k: int) -> np.ndarray:
        x = angle_offset(theta)
        eta = [bump(theta, j) for j in range(k + 1)]
        poly = [-x + 0.5 * x**2, -1.0 + x, np.ones_like(x)] + [np.zeros_like(x)] * max(0, k - 2)
        return _leibniz(k, eta, poly[: k + 1])

    return SampledFunction(
        label="U",
        table=table,
        alpha=alpha,
        plateau=Plateau(-rho, rho, lambda x: -x + 0.5 * x**2, "-x + x^2/2"),
        support=(-1.0 / 3.0, 1.0 / 3.0),
        params={"rho": rho},
    )


def gevrey_norm_estimate(f: SampledFunction, alpha: float, L: float, max_order: int, grid: int = 4096) -> float:
    """Truncated Gevrey norm sum_l L^{l alpha} / (l!)^alpha sup|f^(l)| on a uniform grid."""
    if max_order > f.max_order:
        raise InvalidParameterError(f"{f.label}: norm order {max_order} exceeds available derivatives ({f.max_order})")
    theta = np.arange(grid) / grid
    total = 0.0
    for order in range(max_order + 1):
        sup = float(np.max(np.abs(f.derivative(theta, order))))
        total += L ** (order * alpha) / math.factorial(order) ** alpha * sup
    return total


@dataclass(frozen=True)
class BumpGrowthFit:
    alpha: float
    L: float
    ps: List[float]
    norms: List[float]
    c: float
    c_least_squares: float


def fit_bump_growth(alpha: float, L: float, ps: Sequence[float] = (4, 8, 16), max_order: int = MAX_ORDER) -> BumpGrowthFit:
    """Fit c in ||eta_p|| <= exp(c p^{1/(alpha-1)}) over the given p."""
    beta = _beta(alpha)
    norms = [gevrey_norm_estimate(make_eta(alpha, p), alpha, L, max_order) for p in ps]
    x = np.array([p**beta for p in ps])
    y = np.log(norms)
    c = float(np.max(y / x))
    c_ls = float(np.dot(x, y) / np.dot(x, x))
    logger.info(f"Bump growth fit alpha={alpha} L={L}: c={c:.4g} (least squares {c_ls:.4g})")
    return BumpGrowthFit(alpha, L, [float(p) for p in ps], [float(v) for v in norms], c, c_ls)


@dataclass(frozen=True)
class TensorProfile:
    """Product f_1(theta_{i_1}) ... f_k(theta_{i_k}) of one-angle profiles."""

    factors: Tuple[Tuple[int, SampledFunction], ...]

    @property
    def indices(self) -> Tuple[int, ...]:
        return tuple(i for i, _ in self.factors)

    def value(self, angles: np.ndarray) -> np.ndarray:
        angles = np.asarray(angles, dtype=float)
        out = np.ones(angles.shape[:-1])
        for i, f in self.factors:
            out = out * f(angles[..., i])
        return out

    def gradient(self, angles: np.ndarray) -> np.ndarray:
        angles = np.asarray(angles, dtype=float)
        values = [f(angles[..., i]) for i, f in self.factors]
        grad = np.zeros_like(angles)
        for pos, (i, f) in enumerate(self.factors):
            part = f.derivative(angles[..., i], 1)
            for other, v in enumerate(values):
                if other != pos:
                    part = part * v
            grad[..., i] += part
        return grad

    def norm_estimate(self, alpha: float, L: float, max_order: int) -> float:
        return float(np.prod([gevrey_norm_estimate(f, alpha, L, max_order) for _, f in self.factors]))

    def label(self) -> str:
        return " x ".join(f"{f.label}(theta_{i + 1})" for i, f in self.factors)


def dump_csv(f: SampledFunction, path: Path | str, samples: int = 1024) -> Path:
    """Write theta, f, f', f'' on a uniform grid."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    theta = np.arange(samples) / samples
    columns = [f.derivative(theta, k) for k in range(3)]
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["theta", "f", "df", "d2f"])
        for row in zip(theta, *columns):
            writer.writerow([f"{v:.17g}" for v in row])
    logger.info(f"Wrote {f.label} samples to {path}")
    return path
