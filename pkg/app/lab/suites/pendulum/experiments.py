from __future__ import annotations

import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from app.core.errors import InvalidParameterError
from app.dynamics.pendulum import (
    bracket_threshold,
    build_adapted_box,
    beta_constants,
    default_potential,
    island_mu,
    period_sweep,
    sweep_constants,
)
from app.lab.base import BaseExperiment
from app.lab.io import write_constants, write_csv, write_json
from app.lab.island import detect_island, island_sweep
from app.lab.models import ExperimentMetadata

SUITE = "pendulum"


def sweep_values(q: int, N: int, points: int) -> List[int]:
    """Up to ``points`` integers geometrically spaced between the bracketing threshold and q."""
    q_min = max(2, math.ceil(bracket_threshold() * N))
    if q < q_min:
        raise InvalidParameterError(f"sweep: q = {q} lies below the bracketing threshold {q_min} for N={N}")
    values = np.unique(np.round(np.geomspace(q_min, q, max(points, 1))).astype(int))
    return [int(v) for v in values]


class PeriodSweepExperiment(BaseExperiment):
    metadata = ExperimentMetadata(
        name="pendulum.sweep",
        description="Periodic orbits, twist and island linear data of the pseudo-pendulum over q; fits C1, C2.",
        suite=SUITE,
        cli_command="pendulum",
    )

    def perform(
        self,
        out: Path,
        q: int = 64,
        N: int = 2,
        sweep: bool = False,
        points: int = 7,
        mu: Optional[float] = None,
    ) -> Dict[str, Any]:
        qs = sweep_values(q, N, points) if sweep else [q]
        rows = period_sweep(qs, N, [mu] * len(qs) if mu is not None else None, default_potential())
        csv_path = write_csv(out / "sweep.csv", rows)
        constants = {**sweep_constants(rows), **{f"beta{k + 1}": b for k, b in enumerate(beta_constants())}}
        write_constants(out, constants, {"sweep": str(csv_path), "qs": qs, "N": N})
        return {"rows": len(rows), "qs": qs, "constants": constants, "files": [str(csv_path)]}


class DetectIslandExperiment(BaseExperiment):
    metadata = ExperimentMetadata(
        name="pendulum.detect_island",
        description="Bounded-orbit scan of the local return map around a_{q,N}; island area and area N^2/mu.",
        suite=SUITE,
        cli_command="detect-island",
    )

    def perform(
        self,
        out: Path,
        q: int = 64,
        N: int = 2,
        mu: Optional[float] = None,
        rays: Optional[int] = None,
        radial: Optional[int] = None,
        iterations: Optional[int] = None,
    ) -> Dict[str, Any]:
        V = default_potential()
        box = build_adapted_box(q, N, V=V)
        mu = island_mu(q, N, V) if mu is None else mu
        found = detect_island(box, mu, V, rays=rays, radial=radial, iterations=iterations)
        summary = found.as_dict()
        write_json(out / "island.json", summary)
        hull = [{"theta": float(v[0]), "r": float(v[1])} for v in found.domain.carrier.vertices]
        write_csv(out / "island_hull.csv", hull, ["theta", "r"])
        write_constants(out, {"area_N2_over_mu": found.normalized_area}, {"q": q, "N": N, "mu": mu})
        summary.pop("domain")
        return {"passed": found.localized, **summary, "mu": mu}


class IslandSweepExperiment(BaseExperiment):
    metadata = ExperimentMetadata(
        name="pendulum.island_sweep",
        description="Island areas over (q, N) pairs at fixed mu alpha; fits C3, C4.",
        suite=SUITE,
        slow=True,
    )

    def perform(
        self,
        out: Path,
        pairs: Sequence[Sequence[int]] = ((32, 2), (48, 2), (64, 2)),
        rays: Optional[int] = None,
        radial: Optional[int] = None,
        iterations: Optional[int] = None,
    ) -> Dict[str, Any]:
        scan = {k: v for k, v in (("rays", rays), ("radial", radial), ("iterations", iterations)) if v is not None}
        rows, constants = island_sweep([(int(q), int(N)) for q, N in pairs], **scan)
        csv_path = write_csv(out / "island_sweep.csv", rows)
        write_constants(out, constants, {"sweep": str(csv_path), "pairs": [list(p) for p in pairs]})
        return {"rows": len(rows), "constants": constants}
