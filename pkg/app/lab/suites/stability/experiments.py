from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from app.lab.base import BaseExperiment
from app.lab.io import write_constants, write_csv, write_json
from app.lab.models import ExperimentMetadata
from app.lab.stability import cosine_family, quasi_random_ensemble, stability_sweep

SUITE = "stability"


class StabilitySweepExperiment(BaseExperiment):
    metadata = ExperimentMetadata(
        name="stability.sweep",
        description="Escape times of a quasi-random ensemble under Phi^{eps u} o Phi^{|r|^2/2} as eps decreases.",
        suite=SUITE,
        cli_command="stability-sweep",
        slow=True,
    )

    def perform(
        self,
        out: Path,
        n: int = 2,
        epsilons: Sequence[float] = (0.4, 0.2, 0.1),
        rho: float = 0.1,
        cap: Optional[int] = None,
        ensemble_size: Optional[int] = None,
        workers: int = 1,
    ) -> Dict[str, Any]:
        family = cosine_family(n)
        ensemble = quasi_random_ensemble(n, ensemble_size)
        sweep = stability_sweep(family, epsilons, rho, cap, ensemble, workers)
        write_json(out / "sweep.json", sweep.model_dump())
        write_csv(out / "escape_times.csv", [p.model_dump() for p in sweep.points])
        write_constants(
            out,
            {"growth_factor": sweep.growth_factor, "slope": sweep.slope},
            {"family": sweep.family, "epsilons": sorted(epsilons, reverse=True), "rho": rho, "cap": sweep.cap},
        )
        return {
            "passed": sweep.monotone,
            "escape_times": {str(p.epsilon): p.escape_time for p in sweep.points},
            "monotone": sweep.monotone,
            "growth_factor": sweep.growth_factor,
            "notes": sweep.notes,
        }
