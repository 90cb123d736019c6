"""Explicit near-integrable systems and their certified domains.

- G_{N,mu} = Phi^{mu W_N} o Phi^{P_{V/N^2}} with a tuned mu and its island disc;
- Lambda_{p,nu} = Phi^{nu W_p} o Phi^{r^2/2} with the p-periodic ellipse E_{p,nu};
- the standard map S = Phi^U o Phi^{r^2/2} and the wandering discs W_q;
- the coupled assemblies Psi_{j,q} (periodic polydisc) and Phi_j (wandering
  polydisc) indexed by consecutive primes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Any, Dict, Iterator, List, Literal, Optional, Tuple

import numpy as np
from sympy import nextprime

from app.core.config import settings
from app.core.errors import InvalidParameterError, RegimeError, SyncError
from app.core.geometry import (
    AnnulusPoint,
    BandRegion,
    Carrier,
    Ellipse2D,
    Intersection,
    LocalizationConstraint,
    PolygonCarrier,
    Polydisc,
    ProductRegion,
    UpperStrip,
    as_polydisc,
    capacity_measure_bound,
    polydisc_capacity,
)
from app.core.schemas import PolydiscSchema
from app.dynamics.coupling import CoupledMap, check_sync
from app.dynamics.maps import (
    AngleFunction,
    Composite,
    Kick,
    PendulumFlow,
    Shear,
    SymplecticMap,
    deviation,
    product,
    rescale_conjugate,
)
from app.dynamics.pendulum import (
    AdaptedBox,
    IslandLinearData,
    NormalForm,
    bracket_threshold,
    build_adapted_box,
    default_potential,
    island_linear_data,
)
from app.lab.models import VerificationReport
from app.lab.verification import verify_periodic
from app.numerics.gevrey import (
    SampledFunction,
    fit_bump_growth,
    gevrey_norm_estimate,
    make_eta,
    make_U,
    make_W,
)

logger = logging.getLogger(__name__)

# W_p used by Lambda_{p,nu}: plateau |theta| <= 1/(4p), support 1/(2p)
ELLIPSE_BAND = 0.5
STANDARD_RHO = 1.0 / 6.0


def _norm(f: SampledFunction) -> float:
    b = settings.bumps
    return gevrey_norm_estimate(f, b.alpha, b.L, b.max_order, b.norm_grid)


@lru_cache(maxsize=8)
def growth_constant(alpha: Optional[float] = None, L: Optional[float] = None) -> float:
    """c(alpha, L) of ||eta_p|| <= exp(c p^{1/(alpha-1)}): configured or fitted."""
    if settings.assembly.growth_constant is not None:
        return settings.assembly.growth_constant
    b = settings.bumps
    return fit_bump_growth(alpha or b.alpha, L or b.L).c


# ---------------------------------------------------------------------------
# Primes
# ---------------------------------------------------------------------------


def primes_from(p0: int, count: int) -> List[int]:
    """``count`` consecutive primes starting with the smallest prime >= p0."""
    if count < 0:
        raise InvalidParameterError(f"primes_from: count must be non-negative, got {count}")
    out: List[int] = []
    current = int(nextprime(p0 - 1))
    while len(out) < count:
        out.append(current)
        current = int(nextprime(current))
    return out


@dataclass(frozen=True)
class PrimeProduct:
    """p_{j+2} < ... < p_{j+n} and N_j = p_{j+2} ... p_{j+n}, with p_0 = ``p0``."""

    j: int
    n: int
    primes: Tuple[int, ...]

    @classmethod
    def build(cls, j: int, n: int, p0: Optional[int] = None) -> "PrimeProduct":
        if j < 0 or n < 2:
            raise InvalidParameterError(f"PrimeProduct: need j >= 0 and n >= 2 (j={j}, n={n})")
        sequence = primes_from(settings.assembly.p0 if p0 is None else p0, j + n + 1)
        product_ = cls(j, n, tuple(sequence[j + 2 : j + n + 1]))
        if not product_.gap_ok:
            logger.warning(f"Primes {product_.primes}: p_(j+n) > 2 p_(j+2), gap inequality violated for j={j}")
        return product_

    def p(self, kappa: int) -> int:
        """p_{j+kappa} for kappa = 2..n."""
        if not 2 <= kappa <= self.n:
            raise InvalidParameterError(f"PrimeProduct.p: kappa must lie in [2, {self.n}], got {kappa}")
        return self.primes[kappa - 2]

    @property
    def N(self) -> int:
        return math.prod(self.primes)

    @property
    def q(self) -> int:
        """p_{j+3} ... p_{j+n} (1 when n = 2)."""
        return math.prod(self.primes[1:])

    @property
    def gap_ok(self) -> bool:
        return self.primes[-1] <= 2 * self.primes[0]

    def as_dict(self) -> Dict[str, Any]:
        return {"j": self.j, "n": self.n, "primes": list(self.primes), "N": self.N, "q": self.q, "gap_ok": self.gap_ok}


# ---------------------------------------------------------------------------
# Certified domains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CertifiedDomain:
    """A carrier with the property it should have for ``host``."""

    carrier: Carrier | Polydisc
    kind: Literal["periodic", "wandering"]
    host: SymplecticMap
    period: int = 0
    window: int = 0
    localization: Tuple[LocalizationConstraint, ...] = ()
    exact: Optional[Tuple[bool, ...]] = None
    label: str = ""
    parameters: Dict[str, Any] = field(default_factory=dict)
    envelope: Optional[Carrier | Polydisc] = None
    containment_slack: float = 0.0

    def __post_init__(self) -> None:
        if self.containment_slack < 0:
            raise InvalidParameterError("CertifiedDomain: containment_slack must be non-negative")
        if self.kind == "periodic" and self.period < 1:
            raise InvalidParameterError("CertifiedDomain: periodic domains need a period >= 1")
        if self.kind == "wandering" and self.window < 1:
            raise InvalidParameterError("CertifiedDomain: wandering domains need a window >= 1")

    @property
    def polydisc(self) -> Polydisc:
        return as_polydisc(self.carrier)

    @property
    def capacity(self) -> float:
        return polydisc_capacity(self.polydisc)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "kind": self.kind,
            "period": self.period,
            "window": self.window,
            "carrier": PolydiscSchema.from_polydisc(self.polydisc).model_dump(),
            "capacity": self.capacity,
            "localization": [
                {"label": c.label, "mode": c.mode, "first": c.first, "last": c.last} for c in self.localization
            ],
            "exact": list(self.exact) if self.exact is not None else None,
            "containment_slack": self.containment_slack,
            "envelope": (
                PolydiscSchema.from_polydisc(as_polydisc(self.envelope)).model_dump() if self.envelope is not None else None
            ),
            "parameters": self.parameters,
            "host": self.host.describe().model_dump(),
        }


# ---------------------------------------------------------------------------
# Pseudo-pendulum system and its island
# ---------------------------------------------------------------------------


def build_G_Nmu(
    V: Optional[SampledFunction], W: Optional[SampledFunction], N: int, mu: float, delta: Optional[float] = None
) -> SymplecticMap:
    """G_{N,mu} = Phi^{mu W_N} o Phi^{P_{V/N^2}}; mu = 0 gives the pure flow."""
    if N < 1:
        raise InvalidParameterError(f"build_G_Nmu: N must be >= 1, got {N}")
    if mu < 0:
        raise InvalidParameterError(f"build_G_Nmu: mu must be non-negative, got {mu}")
    flow = PendulumFlow(V or default_potential(), float(N))
    if mu == 0:
        return flow
    W = W or make_W(N, settings.pendulum.delta if delta is None else delta, settings.bumps.alpha)
    return Composite((Kick(AngleFunction.single(1, W, coef=mu)), flow))


@dataclass(frozen=True)
class MuTuning:
    N: int
    q: int
    n: int
    mu: float
    polynomial: float
    exponential: float
    branch: str
    C1: float
    C2: float
    c: float

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)


def tune_mu(
    j: int,
    q: int,
    C2: Optional[float] = None,
    c: Optional[float] = None,
    n: int = 2,
    V: Optional[SampledFunction] = None,
) -> MuTuning:
    """mu = min{C2 N^4/(2 q^5), exponential branch} with N = p_{j+2}.

    The exponential branch is exp(-c (N/delta)^{1/(alpha-1)})/N^2 for n = 2 and
    exp(-(n-1) c (2N/delta)^{1/(alpha-1)})/(2N)^n in the coupled assemblies;
    N/delta is the bump parameter of W_N. When C2
    is not given it is fitted so that the polynomial branch puts mu alpha_{q,N}
    at the configured target.
    """
    V = V or default_potential()
    N = PrimeProduct.build(j, 2).p(2)
    C1 = bracket_threshold(V)
    if q < C1 * N:
        raise InvalidParameterError(f"tune_mu: q={q} below the threshold C1 N = {C1 * N:.4g} (N={N})")
    alpha_exp = settings.bumps.alpha
    beta = 1.0 / (alpha_exp - 1.0)
    c = growth_constant() if c is None else c
    C2 = C2 if C2 is not None else settings.assembly.C2
    if C2 is None:
        nf = NormalForm.build(q, N, V)
        twist_scale = float(nf.derivative(nf.orbit.r, 2)) * N**4 / q**5
        C2 = 2.0 * settings.assembly.mu_alpha_target / twist_scale
    polynomial = C2 * N**4 / (2.0 * q**5)
    delta = settings.pendulum.delta
    if n == 2:
        exponential = math.exp(-c * (N / delta) ** beta) / N**2
    else:
        exponential = math.exp(-(n - 1) * c * (2 * N / delta) ** beta) / (2 * N) ** n
    mu = min(polynomial, exponential)
    if not mu > 0.0:
        raise RegimeError(f"tune_mu: mu underflows for N={N}, q={q} (exponential branch {exponential:.3e})")
    branch = "polynomial" if polynomial <= exponential else "exponential"
    logger.info(f"Tuned mu for N={N}, q={q}: {mu:.6e} ({branch} branch)")
    return MuTuning(N, q, n, mu, polynomial, exponential, branch, C1, C2, c)


def island_ellipse(box: AdaptedBox, data: IslandLinearData, shrink: Optional[float] = None) -> Ellipse2D:
    """Invariant ellipse mu x^2 + mu alpha x R + alpha R^2 <= c of the linearized return
    map around a_{q,N}, scaled to fit the adapted box."""
    shrink = settings.assembly.box_shrink if shrink is None else shrink
    mu, alpha = data.mu, data.alpha
    M = np.array([[mu, 0.5 * mu * alpha], [0.5 * mu * alpha, alpha]])
    M_inv = np.linalg.inv(M)
    c = shrink**2 * min(box.ell**2 / M_inv[0, 0], box.ell_prime**2 / M_inv[1, 1])
    return Ellipse2D(AnnulusPoint([box.theta_center], [box.r_center]), M / c)


def rescale_carrier(carrier: Carrier, q: float) -> Carrier:
    """sigma^-1(carrier) for sigma(theta, r) = (theta, q r)."""
    if isinstance(carrier, PolygonCarrier):
        return carrier.rescaled(q)
    D = np.diag([1.0, q])
    center = carrier.center
    return Ellipse2D(AnnulusPoint(center.angles, center.actions / q), D @ carrier.shape @ D, carrier.boundary_samples)


def pendulum_bands(N: int, delta: float, strip: Optional[float] = None):
    """(B_{delta/2N}, optionally cut by A+_strip; B_{delta/N})."""
    inside = BandRegion(delta / (2 * N))
    if strip is not None:
        inside = Intersection((inside, UpperStrip(strip)))
    return inside, BandRegion(delta / N)


def pendulum_localization(q: int, N: int, delta: float) -> Tuple[LocalizationConstraint, ...]:
    """Inside B_{delta/2N} cut by A+_{4 delta/N} at k = 0, outside B_{delta/N} for k = 1..q-1."""
    inside, avoid = pendulum_bands(N, delta, 4.0 * delta / N)
    return (
        LocalizationConstraint(ProductRegion((inside,)), "inside", 0, 0, "D in B_delta/2N"),
        LocalizationConstraint(ProductRegion((avoid,)), "avoid", 1, q - 1, "avoid B_delta/N"),
    )


def pendulum_island(
    q: int,
    N: int,
    mu: Optional[float] = None,
    V: Optional[SampledFunction] = None,
    delta: Optional[float] = None,
    shrink: Optional[float] = None,
    samples: Optional[int] = None,
    **scan: Any,
) -> CertifiedDomain:
    """q-periodic disc D_{q,N,mu} of G_{N,mu} around a_{q,N}.

    The envelope is the detected island, the hull of its outermost bounded
    orbit. The carrier is the largest multiple of the linear island ellipse
    inside it, scaled down by ``island_shrink_factor`` until its q-th image
    lies in the envelope with no containment slack. An explicit ``shrink``
    is tried alone.
    """
    from app.lab.island import detect_island

    V = V or default_potential()
    delta = settings.pendulum.delta if delta is None else delta
    box = build_adapted_box(q, N, delta, V)
    if mu is None:
        nf = NormalForm.build(q, N, V)
        mu = settings.assembly.mu_alpha_target / float(nf.derivative(nf.orbit.r, 2))
    if not mu > 0:
        raise InvalidParameterError(f"pendulum_island: mu must be positive, got {mu}")
    data = island_linear_data(q, N, mu, V)
    found = detect_island(box, mu, V, **scan)
    if found.inscribed is None:
        raise RegimeError(f"pendulum_island: the island of G_{N},mu does not surround a_{q},{N}")
    host = build_G_Nmu(V, None, N, mu, delta)
    localization = pendulum_localization(q, N, delta)
    envelope = found.domain.carrier
    cfg = settings.assembly
    if shrink is not None:
        scales = [shrink]
    else:
        scales = [cfg.box_shrink * cfg.island_shrink_factor**k for k in range(cfg.island_shrink_tries)]
    for scale in scales:
        carrier = found.inscribed.scaled(scale)
        report = verify_periodic(host, carrier, q, localization, samples=samples, exact=(False,), envelope=envelope)
        if report.passed:
            break
        logger.info(f"Island disc q={q} N={N} at scale {scale:.3f}: {report.failed}")
    else:
        raise RegimeError(
            f"pendulum_island: no scale down to {scales[-1]:.3f} returns inside the island "
            f"for q={q}, N={N} (last failure: {report.failed})"
        )
    logger.info(f"Island disc q={q} N={N}: scale {scale:.3f}, area {carrier.area:.4e} of {found.area:.4e}")
    return CertifiedDomain(
        carrier,
        "periodic",
        host,
        period=q,
        localization=localization,
        exact=(False,),
        label=f"D_{q},{N}",
        envelope=envelope,
        parameters={
            "q": q,
            "N": N,
            "mu": mu,
            "delta": delta,
            "box_area": box.area,
            "island_area": found.area,
            "scale": scale,
            "containment_excess": report.margins["containment_excess"],
            **data.as_dict(),
        },
    )


# ---------------------------------------------------------------------------
# Periodic ellipses
# ---------------------------------------------------------------------------


def ellipse_host(p: int, nu: float) -> SymplecticMap:
    """Lambda_{p,nu} = Phi^{nu W_p} o Phi^{r^2/2}."""
    W = make_W(p, ELLIPSE_BAND, settings.bumps.alpha)
    return Composite((Kick(AngleFunction.single(1, W, coef=nu)), Shear.quadratic(1)))


def ellipse_return_matrix(p: int, nu: float) -> np.ndarray:
    return np.array([[1.0, float(p)], [-nu, 1.0 - nu * p]])


def affine_iterate(p: int, nu: float, k: int, x, y) -> Tuple[np.ndarray, np.ndarray]:
    """Offsets from O_p of Lambda_{p,nu}^k(O_p + (x, y)) on the affine box, k = 0..p."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if not 0 <= k <= p:
        raise InvalidParameterError(f"affine_iterate: k must lie in [0, {p}], got {k}")
    if k < p:
        return x + k * (y + 1.0 / p), y
    u = x + p * y
    return u, y - nu * u


def periodic_ellipse(p: int, nu: float) -> CertifiedDomain:
    """p-periodic filled ellipse E_{p,nu} of Lambda_{p,nu}, centred at O_p = (0, 1/p),
    of area pi nu / (128 p)."""
    if p < 2:
        raise InvalidParameterError(f"periodic_ellipse: p must be >= 2, got {p}")
    if not 0.0 < nu * p < 1.0:
        raise InvalidParameterError(f"periodic_ellipse: need 0 < nu p < 1 (p={p}, nu={nu})")
    gamma = math.acos(1.0 - 0.5 * nu * p)
    sin_g, cos_g = math.sin(gamma), math.cos(gamma)
    P = np.array([[p, 0.0], [cos_g - 1.0, sin_g]]) / (p * sin_g)
    # unimodular so that the image of the disc of radius r has area pi r^2
    P = P / math.sqrt(np.linalg.det(P))
    radius = math.sqrt(nu / (2.0 * p)) / 8.0
    carrier = Ellipse2D.from_disc(AnnulusPoint([0.0], [1.0 / p]), P, radius)
    inverse = np.linalg.inv(carrier.shape)
    half = np.sqrt(np.diag(inverse))
    window = half[0] + (p - 1) * half[1]
    if window >= 1.0 / (2 * p):
        raise RegimeError(
            f"periodic_ellipse: E_{p},{nu:g} leaves the affine window "
            f"(|x| + (p-1)|y| = {window:.4g} >= 1/(2p))"
        )
    # the p-th shear image must land where W_p = theta^2/2
    spread = math.sqrt(np.array([1.0, p]) @ inverse @ np.array([1.0, p]))
    if spread > 1.0 / (4 * p):
        raise RegimeError(
            f"periodic_ellipse: E_{p},{nu:g} returns outside the quadratic plateau of W_p "
            f"(|x + p y| up to {spread:.4g} > 1/(4p)); needs nu p^2 <= 8 sin(gamma)"
        )
    localization = (
        LocalizationConstraint(ProductRegion((BandRegion(1.0 / (4 * p)),)), "inside", 0, 0, "E in B_1/4p"),
        LocalizationConstraint(ProductRegion((BandRegion(1.0 / (2 * p)),)), "avoid", 1, p - 1, "avoid B_1/2p"),
    )
    return CertifiedDomain(
        carrier,
        "periodic",
        ellipse_host(p, nu),
        period=p,
        localization=localization,
        exact=(True,),
        label=f"E_{p},{nu:g}",
        parameters={"p": p, "nu": nu, "gamma": gamma, "radius": radius, "area": carrier.area},
    )


# ---------------------------------------------------------------------------
# Standard map and wandering discs
# ---------------------------------------------------------------------------


def standard_map(U: Optional[SampledFunction] = None) -> SymplecticMap:
    """S = Phi^U o Phi^{r^2/2}."""
    U = U or make_U(STANDARD_RHO, settings.bumps.alpha)
    return Composite((Kick(AngleFunction.single(1, U)), Shear.quadratic(1)))


def quotient_linear_part() -> np.ndarray:
    """Linear part at the origin of S on T x (R/Z): elliptic, eigenvalues e^{+-i pi/3}."""
    return np.array([[1.0, 1.0], [-1.0, 0.0]])


def standard_invariant_ellipse(rho: float = STANDARD_RHO) -> Ellipse2D:
    """{x^2 + x y + y^2 <= 3 rho^2 / 16}: invariant for the linear part, inside |x|, |y| <= rho/2."""
    c = 3.0 * rho**2 / 16.0
    return Ellipse2D(AnnulusPoint([0.0], [0.0]), np.array([[1.0, 0.5], [0.5, 1.0]]) / c)


def standard_wandering_disc(q: int, U: Optional[SampledFunction] = None, window: Optional[int] = None) -> CertifiedDomain:
    """W_q = sigma^-1(W) wandering for S_q = Phi^{U/q} o (Phi^{r^2/2})^q; area C_0/q."""
    if q < 1:
        raise InvalidParameterError(f"standard_wandering_disc: q must be >= 1, got {q}")
    U = U or make_U(STANDARD_RHO, settings.bumps.alpha)
    base = standard_invariant_ellipse(U.params["rho"])
    carrier = rescale_carrier(base, q)
    return CertifiedDomain(
        carrier,
        "wandering",
        rescale_conjugate(standard_map(U), q),
        window=window or settings.lab.wandering_window,
        label=f"W_{q}",
        parameters={"q": q, "rho": U.params["rho"], "C0": base.area, "area": carrier.area},
    )


# ---------------------------------------------------------------------------
# Assemblies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CapacityReport:
    """C_G of a polydisc (smallest factor area) with the branches it is the minimum of."""

    factor_areas: Tuple[float, ...]
    capacity: float
    branches: Dict[str, float]
    measure_bound: float
    bound_ok: bool

    @classmethod
    def of(cls, P: Polydisc, branches: Dict[str, float]) -> "CapacityReport":
        bound = capacity_measure_bound(P)
        areas = tuple(float(f.area) for f in P.factors)
        return cls(areas, polydisc_capacity(P), branches, bound.bound, bound.bound_ok)

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class Assembly:
    """An assembled system with its certified domain; unpacks as (map, domain)."""

    map: SymplecticMap
    domain: CertifiedDomain
    primes: PrimeProduct
    parameters: Dict[str, Any]
    capacity: CapacityReport
    sync: Optional[VerificationReport] = None

    def __iter__(self) -> Iterator[Any]:
        return iter((self.map, self.domain))

    @property
    def ledger(self):
        return deviation(self.map)

    def to_dict(self) -> Dict[str, Any]:
        ledger = self.ledger
        return {
            "primes": self.primes.as_dict(),
            "parameters": self.parameters,
            "capacity": self.capacity.as_dict(),
            "deviation": {**ledger.as_dict(), "scaled_by_N_squared": ledger.total * self.primes.N**2},
            "sync": self.sync.model_dump(exclude={"runtime_s"}) if self.sync is not None else None,
            "domain": self.domain.to_dict(),
        }


def _ellipse_factor(p: int, N: int) -> Tuple[float, CertifiedDomain]:
    """nu = 1/(N^2 ||W_p||) and E_{p,nu}."""
    nu = 1.0 / (N**2 * _norm(make_W(p, ELLIPSE_BAND, settings.bumps.alpha)))
    return nu, periodic_ellipse(p, nu)


def sync_bumps(primes: PrimeProduct, delta: float) -> List[SampledFunction]:
    """eta bumps equal to 1 on the domain factors and 0 off the avoided bands."""
    alpha = settings.bumps.alpha
    first = make_eta(alpha, primes.p(2) / delta)
    return [first] + [make_eta(alpha, 2 * primes.p(k)) for k in range(3, primes.n + 1)]


def assemble_Psi_jq(
    j: int,
    n: int,
    ell: int,
    mu: Optional[float] = None,
    V: Optional[SampledFunction] = None,
    sync_samples: Optional[int] = None,
) -> Assembly:
    """Psi on A^{n-1} with a Q-periodic polydisc D = U x V, Q = ell N_j.

    n = 2 gives G_{N_j,mu} with N_j = p_{j+2}. For n >= 3 the island of
    G_{p_{j+2},mu} is rescaled by q = p_{j+3}...p_{j+n} and coupled to the
    product of Lambda_{p_{j+k}, nu_j^k} through f (x) g.
    """
    if n < 2:
        raise InvalidParameterError(f"assemble_Psi_jq: n must be >= 2, got {n}")
    V = V or default_potential()
    delta = settings.pendulum.delta
    primes = PrimeProduct.build(j, n)
    p2, q, N_j = primes.p(2), primes.q, primes.N
    period = ell * p2
    tuning = tune_mu(j, period, n=n, V=V)
    mu = tuning.mu if mu is None else mu
    island = pendulum_island(period, p2, mu, V, delta, samples=sync_samples)
    data = island.parameters
    W_first = make_W(p2, delta, settings.bumps.alpha)
    inside, avoid = pendulum_bands(p2, delta, 4.0 * delta / N_j)
    parameters: Dict[str, Any] = {
        "ell": ell,
        "Q": ell * N_j,
        "island_period": period,
        "q": q,
        "mu": mu,
        "tuning": tuning.as_dict(),
        "delta": delta,
        "alpha_island": data["alpha"],
    }
    if n == 2:
        host = island.host
        carrier = Polydisc((island.carrier,))
        envelope = Polydisc((island.envelope,))
        inside_regions, avoid_regions = [inside], [avoid]
        exact: Tuple[bool, ...] = (False,)
        sync = None
    else:
        ellipses = []
        nus = []
        for kappa in range(3, n + 1):
            nu, E = _ellipse_factor(primes.p(kappa), N_j)
            nus.append(nu)
            ellipses.append(E)
        m_prime = n - 2
        G = product([(E.host, [i]) for i, E in enumerate(ellipses)], m_prime)
        bumps = sync_bumps(primes, delta)[1:]
        g = AngleFunction.tensor(m_prime, list(enumerate(bumps)))
        f = AngleFunction.single(1, W_first, coef=mu / q)
        host = CoupledMap(PendulumFlow(V, float(N_j)), f, G, g, q)
        V_set = Polydisc(tuple(E.carrier for E in ellipses))
        sync = check_sync(g, G, V_set.sample_points(sync_samples, settings.lab.seed), q)
        if not sync.passed:
            raise SyncError(f"assemble_Psi_jq: synchronisation fails ({sync.failed})")
        carrier = Polydisc((rescale_carrier(island.carrier, q),) + V_set.factors)
        envelope = Polydisc((rescale_carrier(island.envelope, q),) + V_set.factors)
        inside_regions = [inside] + [BandRegion(1.0 / (4 * primes.p(k))) for k in range(3, n + 1)]
        avoid_regions = [avoid] + [BandRegion(1.0 / (2 * primes.p(k))) for k in range(3, n + 1)]
        exact = (False,) + (True,) * m_prime
        parameters["nu"] = nus
    Q = ell * N_j
    localization = (
        LocalizationConstraint(ProductRegion(tuple(inside_regions)), "inside", 0, 0, "D in B x B'"),
        LocalizationConstraint(ProductRegion(tuple(avoid_regions)), "avoid", 1, Q - 1, "avoid B* x B'*"),
    )
    domain = CertifiedDomain(
        carrier,
        "periodic",
        host,
        period=Q,
        localization=localization,
        exact=exact,
        label=f"D_{j},{Q}",
        parameters={"mu": mu, "Q": Q},
        envelope=envelope,
    )
    areas = [float(fct.area) for fct in carrier.factors]
    branches = {"island": areas[0]}
    if n > 2:
        branches["ellipses"] = min(areas[1:])
    capacity = CapacityReport.of(carrier, branches)
    logger.info(f"Assembled Psi for j={j}, n={n}, ell={ell}: N_j={N_j}, Q={Q}, capacity {capacity.capacity:.4e}")
    return Assembly(host, domain, primes, parameters, capacity, sync)


def assemble_Phi_j(
    j: int,
    n: int,
    q_max: Optional[int] = None,
    allow_cap: bool = True,
    U: Optional[SampledFunction] = None,
    V: Optional[SampledFunction] = None,
    sync_samples: Optional[int] = None,
    window: Optional[int] = None,
) -> Assembly:
    """Phi_j = Phi^{(1/q_j) U (x) g_j} o (Phi^{r_1^2/2} x Psi_{j,q_j}) with the
    wandering polydisc W_{q_j} x D_{j,q_j}.

    q_j = M_j N_j with M_j = [N_j ||U|| ||g_j||] + 1 is capped to the largest
    multiple of N_j not above ``q_max``; both values are reported.
    """
    V = V or default_potential()
    U = U or make_U(STANDARD_RHO, settings.bumps.alpha)
    q_max = settings.assembly.q_max if q_max is None else q_max
    delta = settings.pendulum.delta
    primes = PrimeProduct.build(j, n)
    N_j = primes.N
    bumps = sync_bumps(primes, delta)
    g = AngleFunction.tensor(n - 1, list(enumerate(bumps)))
    norm_U = _norm(U)
    norm_g = float(np.prod([_norm(b) for b in bumps]))
    M_j = math.floor(N_j * norm_U * norm_g) + 1
    prescribed = M_j * N_j
    ell = M_j
    if prescribed > q_max:
        if not allow_cap:
            raise InvalidParameterError(f"assemble_Phi_j: q_j = {prescribed} exceeds q_max = {q_max}")
        ell = q_max // N_j
        logger.warning(f"q_j = {prescribed} capped to {ell * N_j} (q_max = {q_max})")
    if ell < math.ceil(bracket_threshold(V)):
        raise InvalidParameterError(f"assemble_Phi_j: q_max = {q_max} leaves no admissible multiple of N_j = {N_j}")
    q_j = ell * N_j
    psi = assemble_Psi_jq(j, n, ell, V=V, sync_samples=sync_samples)
    D = psi.domain.polydisc
    sync = check_sync(g, psi.map, D.sample_points(sync_samples, settings.lab.seed), q_j)
    if not sync.passed:
        raise SyncError(f"assemble_Phi_j: synchronisation fails ({sync.failed})")
    f = AngleFunction.single(1, U, coef=1.0 / q_j)
    host = CoupledMap(Shear.quadratic(1), f, psi.map, g, q_j)
    W_q = standard_wandering_disc(q_j, U)
    carrier = Polydisc((W_q.carrier,) + D.factors)
    parameters = {
        "M_j": M_j,
        "q_prescribed": prescribed,
        "q_j": q_j,
        "capped": q_j != prescribed,
        "norm_U": norm_U,
        "norm_g": norm_g,
        "C0": W_q.parameters["C0"],
        "psi": psi.parameters,
    }
    domain = CertifiedDomain(
        carrier,
        "wandering",
        host,
        window=window or 3 * q_j,
        label=f"W_{j}",
        parameters={"q_j": q_j},
    )
    capacity = CapacityReport.of(carrier, {"standard_disc": W_q.carrier.area, "periodic_polydisc": psi.capacity.capacity})
    logger.info(f"Assembled Phi_{j} (n={n}): q_j={q_j} (prescribed {prescribed}), capacity {capacity.capacity:.4e}")
    return Assembly(host, domain, primes, parameters, capacity, sync)


@dataclass(frozen=True)
class CoupledPair:
    """E_{p,nu} x E_{q,nu'} under Phi^{nu W_p (x) eta_2q} o (Phi^{r^2/(2q)} x Lambda_{q,nu'})."""

    map: CoupledMap
    domain: CertifiedDomain
    sync: VerificationReport

    def __iter__(self) -> Iterator[Any]:
        return iter((self.map, self.domain))


def coupled_ellipses(
    p: int,
    q: int,
    nu: Optional[float] = None,
    nu_prime: Optional[float] = None,
    sync_samples: Optional[int] = None,
) -> CoupledPair:
    """Smallest instance of the periodic coupling: F^q o Phi^f is Lambda_{p,nu}, so the
    product of the two periodic ellipses is pq-periodic for the coupled map."""
    nu = 0.5 / p**2 if nu is None else nu
    nu_prime = 0.5 / q**2 if nu_prime is None else nu_prime
    U_dom = periodic_ellipse(p, nu)
    V_dom = periodic_ellipse(q, nu_prime)
    g = AngleFunction.single(1, make_eta(settings.bumps.alpha, 2 * q))
    f = AngleFunction.single(1, make_W(p, ELLIPSE_BAND, settings.bumps.alpha), coef=nu)
    host = CoupledMap(Shear.quadratic(1, 1.0 / q), f, V_dom.host, g, q)
    sync = check_sync(g, V_dom.host, as_polydisc(V_dom.carrier).sample_points(sync_samples, settings.lab.seed), q)
    if not sync.passed:
        raise SyncError(f"coupled_ellipses: synchronisation fails ({sync.failed})")
    avoid = ProductRegion((BandRegion(1.0 / (2 * p)), BandRegion(1.0 / (2 * q))))
    domain = CertifiedDomain(
        Polydisc((U_dom.carrier, V_dom.carrier)),
        "periodic",
        host,
        period=p * q,
        localization=(LocalizationConstraint(avoid, "avoid", 1, p * q - 1, "avoid B* x B'*"),),
        exact=(True, True),
        label=f"E_{p} x E_{q}",
        parameters={"p": p, "q": q, "nu": nu, "nu_prime": nu_prime},
    )
    logger.info(f"Coupled E_{p} x E_{q}: period {p * q}, sync margins {sync.margins}")
    return CoupledPair(host, domain, sync)
