from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np

from app.core.errors import InvalidParameterError
from app.dynamics.constructions import (
    assemble_Phi_j,
    assemble_Psi_jq,
    ellipse_host,
    periodic_ellipse,
    pendulum_island,
    standard_map,
    standard_wandering_disc,
)
from app.dynamics.maps import PendulumFlow, SymplecticMap, write_orbit_csv
from app.dynamics.pendulum import default_potential
from app.lab.base import BaseExperiment
from app.lab.io import write_json, write_phase_portrait, write_report
from app.lab.models import ExperimentMetadata
from app.lab.stability import cosine_family
from app.lab.verification import certify, verify_wandering

SUITE = "constructions"
SYSTEMS = ("standard", "ellipse", "pendulum", "cosine")


class VerifyPeriodicExperiment(BaseExperiment):
    metadata = ExperimentMetadata(
        name="constructions.verify_periodic",
        description="Periodic ellipse E_{p,nu} of Lambda_{p,nu} or island disc D_{q,N,mu} of G_{N,mu}: return, localization, disjointness.",
        suite=SUITE,
        cli_command="verify-periodic",
    )

    def perform(
        self,
        out: Path,
        kind: str = "ellipse",
        p: int = 5,
        nu: float = 0.1,
        q: int = 64,
        N: int = 2,
        mu: Optional[float] = None,
        samples: Optional[int] = None,
    ) -> Dict[str, Any]:
        if kind == "ellipse":
            domain = periodic_ellipse(p, nu)
        elif kind == "island":
            domain = pendulum_island(q, N, mu)
        else:
            raise InvalidParameterError(f"verify-periodic: kind must be 'ellipse' or 'island', got '{kind}'")
        report = certify(domain, samples=samples)
        write_json(out / "domain.json", domain.to_dict())
        write_report(out / "report.json", report)
        return {"passed": report.passed, "label": domain.label, "area": domain.capacity, "report": report.model_dump()}


class VerifyWanderingExperiment(BaseExperiment):
    metadata = ExperimentMetadata(
        name="constructions.verify_wandering",
        description="Wandering disc W_q of the rescaled standard map S_q over |k| <= window.",
        suite=SUITE,
        cli_command="verify-wandering",
    )

    def perform(self, out: Path, q: int = 1, window: Optional[int] = None, samples: Optional[int] = None) -> Dict[str, Any]:
        domain = standard_wandering_disc(q, window=window)
        report = verify_wandering(domain.host, domain.carrier, domain.window, samples=samples)
        write_json(out / "domain.json", domain.to_dict())
        write_report(out / "report.json", report)
        return {
            "passed": report.passed,
            "area_times_q": domain.parameters["area"] * q,
            "C0": domain.parameters["C0"],
            "report": report.model_dump(),
        }


class AssembleExperiment(BaseExperiment):
    metadata = ExperimentMetadata(
        name="constructions.assemble",
        description="Assemble Psi_{j,q} (periodic polydisc) or Phi_j (wandering polydisc) and certify the domain.",
        suite=SUITE,
        cli_command="assemble",
        slow=True,
    )

    def perform(
        self,
        out: Path,
        system: str = "psi",
        j: int = 0,
        n: int = 3,
        ell: int = 2,
        mu: Optional[float] = None,
        q_max: Optional[int] = None,
        verify: bool = True,
        samples: Optional[int] = None,
        window: Optional[int] = None,
    ) -> Dict[str, Any]:
        if system == "psi":
            assembly = assemble_Psi_jq(j, n, ell, mu=mu)
        elif system == "phi":
            assembly = assemble_Phi_j(j, n, q_max)
        else:
            raise InvalidParameterError(f"assemble: system must be 'psi' or 'phi', got '{system}'")
        summary = assembly.to_dict()
        write_json(out / "assembly.json", summary)
        data: Dict[str, Any] = {
            "system": system,
            "N_j": assembly.primes.N,
            "capacity": assembly.capacity.capacity,
            "deviation": summary["deviation"],
        }
        if verify:
            report = certify(assembly.domain, samples=samples, window=window)
            write_report(out / "report.json", report)
            data["passed"] = report.passed
            data["report"] = report.model_dump()
        return data


def simulation_system(system: str, p: int, nu: float, N: int, eps: float) -> SymplecticMap:
    if system == "standard":
        return standard_map()
    if system == "ellipse":
        return ellipse_host(p, nu)
    if system == "pendulum":
        return PendulumFlow(default_potential(), float(N))
    if system == "cosine":
        return cosine_family(1)(eps)
    raise InvalidParameterError(f"simulate: system must be one of {', '.join(SYSTEMS)}, got '{system}'")


class SimulateExperiment(BaseExperiment):
    metadata = ExperimentMetadata(
        name="constructions.simulate",
        description="Iterate a one-factor system: orbit CSV of the first seed and a gnuplot phase portrait.",
        suite=SUITE,
        cli_command="simulate",
    )

    def perform(
        self,
        out: Path,
        system: str = "standard",
        steps: int = 500,
        orbits: int = 8,
        seeds: Optional[Sequence[Sequence[float]]] = None,
        p: int = 5,
        nu: float = 0.1,
        N: int = 2,
        eps: float = 0.05,
    ) -> Dict[str, Any]:
        m = simulation_system(system, p, nu, N, eps)
        if seeds is None:
            seeds = np.stack([np.zeros(orbits), np.linspace(-0.5, 0.5, orbits)], axis=-1)
        seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
        energy = m.energy if isinstance(m, PendulumFlow) else None
        orbit_path = write_orbit_csv(m, seeds[0], steps, out / "orbit.csv", energy)
        portrait = write_phase_portrait(m, seeds, steps, out / "portrait.dat")
        write_json(out / "map.json", m.describe().model_dump())
        return {"system": system, "steps": steps, "orbits": int(seeds.shape[0]), "files": [str(orbit_path), str(portrait)]}
