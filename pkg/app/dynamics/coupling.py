"""Coupling device Phi^{f (x) g} o (F x G) and its synchronisation identities."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from app.core.config import settings
from app.core.errors import InvalidParameterError, SyncError, UnsupportedCaseError
from app.core.geometry import Carrier, Polydisc, as_polydisc
from app.core.schemas import MapDescription
from app.dynamics.maps import (
    AngleFunction,
    Composite,
    Kick,
    SymplecticMap,
    product,
)
from app.lab.models import VerificationReport
from app.lab.verification import verify_periodic, verify_wandering
from app.numerics.gevrey import TensorProfile

logger = logging.getLogger(__name__)


def tensor_product(f: AngleFunction, g: AngleFunction) -> AngleFunction:
    """(f (x) g)(theta, theta') = f(theta) g(theta') on the n + n' factor annulus."""
    n = f.n + g.n
    terms = []
    for cf, pf in f.terms:
        for cg, pg in g.terms:
            shifted = tuple((f.n + i, h) for i, h in pg.factors)
            terms.append((cf * cg, TensorProfile(pf.factors + shifted)))
    return AngleFunction(n, tuple(terms))


@dataclass(frozen=True)
class CoupledMap(SymplecticMap):
    """Phi^{f (x) g} o (F x G) for angle-only f on the F factors and g on the G factors."""

    F: SymplecticMap
    f: AngleFunction
    G: SymplecticMap
    g: AngleFunction
    q: Optional[int] = None

    def __post_init__(self) -> None:
        for name, func in (("f", self.f), ("g", self.g)):
            if not isinstance(func, AngleFunction):
                raise UnsupportedCaseError(
                    f"coupling: {name} must depend on angles only; action-dependent couplings are not supported"
                )
        if self.f.n != self.F.n or self.g.n != self.G.n:
            raise InvalidParameterError("coupling: f and g must live on the factors of F and G")

    @property
    def n(self) -> int:
        return self.F.n + self.G.n

    @property
    def m(self) -> int:
        return self.F.n

    def split(self, z: np.ndarray):
        m, n = self.m, self.n
        x = np.concatenate([z[..., :m], z[..., n : n + m]], axis=-1)
        xp = np.concatenate([z[..., m:n], z[..., n + m :]], axis=-1)
        return x, xp

    def join(self, x: np.ndarray, xp: np.ndarray) -> np.ndarray:
        m = self.m
        return np.concatenate([x[..., :m], xp[..., : self.G.n], x[..., m:], xp[..., self.G.n :]], axis=-1)

    def apply_lifted(self, z: np.ndarray) -> np.ndarray:
        x, xp = self.split(np.asarray(z, dtype=float))
        X = self.F.apply_lifted(x)
        Xp = self.G.apply_lifted(xp)
        m, mp = self.m, self.G.n
        theta, theta_p = X[..., :m], Xp[..., :mp]
        # Phi^{f (x) g}(X, X') = (Phi^{g(X') f}(X), Phi^{f(X) g}(X'))
        weight_f = self.g.value(theta_p)[..., None]
        weight_g = self.f.value(theta)[..., None]
        X = X.copy()
        Xp = Xp.copy()
        X[..., m:] -= weight_f * self.f.gradient(theta)
        Xp[..., mp:] -= weight_g * self.g.gradient(theta_p)
        return self.join(X, Xp)

    def expand(self) -> SymplecticMap:
        base = product([(self.F, range(self.m)), (self.G, range(self.m, self.n))], self.n)
        return Composite((Kick(tensor_product(self.f, self.g)), base))

    def inverse(self) -> SymplecticMap:
        return self.expand().inverse()

    def describe(self) -> MapDescription:
        return MapDescription(
            kind="coupled",
            dimension=self.n,
            parameters={"f": self.f.label(), "g": self.g.label(), "q": self.q},
            parts=[self.F.describe(), self.G.describe()],
        )


def coupled_apply(C: CoupledMap, x: np.ndarray, xp: np.ndarray) -> np.ndarray:
    """F(x) and G(x') coupled by the product formula; returns the joined state."""
    return C.apply(C.join(np.asarray(x, dtype=float), np.asarray(xp, dtype=float)))


def check_sync(
    g: AngleFunction,
    G: SymplecticMap,
    samples: np.ndarray,
    q: int,
    tolerance: float = settings.coupling.sync_tolerance,
) -> VerificationReport:
    """g = 1, dg = 0 on the samples; g = 0, dg = 0 on their G-iterates 1..q-1."""
    started = time.perf_counter()
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if q < 1:
        raise InvalidParameterError(f"check_sync: q must be >= 1, got {q}")
    n = G.n
    theta = samples[..., :n]
    margins = {
        "max_abs_g_minus_1": float(np.max(np.abs(g.value(theta) - 1.0))),
        "max_grad_on_V": float(np.max(np.linalg.norm(g.gradient(theta), axis=-1))),
    }
    per_iterate = []
    z = samples
    for s in range(1, q):
        z = G.apply_lifted(z)
        theta = z[..., :n]
        per_iterate.append(
            {
                "s": s,
                "max_abs_g": float(np.max(np.abs(g.value(theta)))),
                "max_grad": float(np.max(np.linalg.norm(g.gradient(theta), axis=-1))),
            }
        )
    margins["max_abs_g_on_iterates"] = max((row["max_abs_g"] for row in per_iterate), default=0.0)
    margins["max_grad_on_iterates"] = max((row["max_grad"] for row in per_iterate), default=0.0)
    failed = next((name for name, value in margins.items() if not value < tolerance), None)
    if failed and failed.endswith("iterates"):
        key = "max_abs_g" if "abs" in failed else "max_grad"
        first = next(row["s"] for row in per_iterate if not row[key] < tolerance)
        failed = f"{failed} (first at s={first})"
    return VerificationReport(
        kind="sync",
        passed=failed is None,
        margins=margins,
        tolerances={"sync": tolerance},
        parameters={"q": q, "samples": int(samples.shape[0]), "per_iterate": per_iterate},
        failed=failed,
        runtime_s=time.perf_counter() - started,
    )


def predict_iterate(
    C: CoupledMap,
    z: np.ndarray,
    ell: int,
    s: int,
    sync: Optional[VerificationReport],
) -> np.ndarray:
    """F^{l q + s}(x, x') = (F^s o (Phi^f o F^q)^l (x), G^{l q + s}(x')) for x' in the synchronised set."""
    q = _require_sync(C, sync, "predict_iterate")
    if not 0 <= s < q:
        raise InvalidParameterError(f"predict_iterate: need 0 <= s < q, got s={s}, q={q}")
    x, xp = C.split(np.asarray(z, dtype=float))
    block = Composite((Kick(C.f), Composite((C.F,) * q) if q > 1 else C.F))
    step = block if ell >= 0 else block.inverse()
    for _ in range(abs(ell)):
        x = step.apply_lifted(x)
    for _ in range(s):
        x = C.F.apply_lifted(x)
    total = ell * q + s
    G_step = C.G if total >= 0 else C.G.inverse()
    for _ in range(abs(total)):
        xp = G_step.apply_lifted(xp)
    return C.join(x, xp)


def _require_sync(C: CoupledMap, sync: Optional[VerificationReport], who: str) -> int:
    if sync is None or sync.kind != "sync" or not sync.passed:
        raise SyncError(f"{who}: synchronisation has not been verified for this coupled map")
    if C.q is None or sync.parameters.get("q") != C.q:
        raise SyncError(f"{who}: sync report does not match the coupling period")
    return C.q


def check_prediction(
    C: CoupledMap,
    z: np.ndarray,
    sync: Optional[VerificationReport],
    ks: Sequence[int],
    tolerance: Optional[float] = None,
) -> VerificationReport:
    """Compare predict_iterate with direct iteration of C for every k in ``ks``."""
    started = time.perf_counter()
    q = _require_sync(C, sync, "check_prediction")
    tolerance = settings.coupling.prediction_tolerance if tolerance is None else tolerance
    z = np.atleast_2d(np.asarray(z, dtype=float))
    errors = {}
    for k in sorted(set(int(k) for k in ks)):
        ell, s = divmod(k, q)
        predicted = predict_iterate(C, z, ell, s, sync)
        direct = z
        step = C if k >= 0 else C.inverse()
        for _ in range(abs(k)):
            direct = step.apply_lifted(direct)
        errors[k] = float(np.max(np.abs(predicted - direct)))
    worst = max(errors.values(), default=0.0)
    failed = next((f"k={k}" for k, err in errors.items() if not err <= tolerance), None)
    return VerificationReport(
        kind="prediction",
        passed=failed is None,
        margins={"max_error": worst},
        tolerances={"prediction": tolerance},
        parameters={"q": q, "errors": {str(k): err for k, err in errors.items()}, "points": int(z.shape[0])},
        failed=failed,
        runtime_s=time.perf_counter() - started,
    )


def verify_coupled_periodic(
    C: CoupledMap,
    U: Carrier | Polydisc,
    V: Carrier | Polydisc,
    p: int,
    sync: Optional[VerificationReport],
    constraints=(),
    samples: Optional[int] = None,
    exact: Optional[Sequence[bool]] = None,
) -> VerificationReport:
    """U x V is pq-periodic for C when U is p-periodic for Phi^f o F^q and g is synchronised on V."""
    q = _require_sync(C, sync, "verify_coupled_periodic")
    P = Polydisc(as_polydisc(U).factors + as_polydisc(V).factors)
    report = verify_periodic(C, P, p * q, constraints, samples=samples, exact=exact)
    return report.model_copy(update={"kind": "coupled_periodic", "parameters": {**report.parameters, "p": p, "q": q}})


def verify_coupled_wandering(
    C: CoupledMap,
    W: Carrier | Polydisc,
    V: Carrier | Polydisc,
    sync: Optional[VerificationReport],
    window: Optional[int] = None,
    samples: Optional[int] = None,
) -> VerificationReport:
    """W x V wanders for C when W wanders for Phi^f o F^q and g is synchronised on V."""
    q = _require_sync(C, sync, "verify_coupled_wandering")
    P = Polydisc(as_polydisc(W).factors + as_polydisc(V).factors)
    report = verify_wandering(C, P, window or 3 * q, samples=samples)
    return report.model_copy(update={"kind": "coupled_wandering", "parameters": {**report.parameters, "q": q}})
