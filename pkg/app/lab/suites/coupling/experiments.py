from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from app.dynamics.constructions import coupled_ellipses
from app.dynamics.coupling import check_prediction, verify_coupled_periodic
from app.lab.base import BaseExperiment
from app.lab.io import write_json, write_report
from app.lab.models import ExperimentMetadata

SUITE = "coupling"


def prediction_steps(q: int) -> Sequence[int]:
    """Iterates up to 3q on both sides of every multiple of q."""
    steps = {1, q - 1, q, q + 1, 2 * q + 1, 3 * q, -1, -(q + 1)}
    return sorted(k for k in steps if k != 0)


class VerifyCouplingExperiment(BaseExperiment):
    metadata = ExperimentMetadata(
        name="coupling.verify",
        description="E_p x E_q under the coupled map: synchronisation, iterate prediction and period pq.",
        suite=SUITE,
        cli_command="verify-coupling",
    )

    def perform(
        self,
        out: Path,
        q: int = 5,
        p: int = 3,
        nu: Optional[float] = None,
        nu_prime: Optional[float] = None,
        samples: Optional[int] = None,
        prediction_samples: int = 16,
    ) -> Dict[str, Any]:
        pair = coupled_ellipses(p, q, nu, nu_prime)
        U, V = pair.domain.polydisc.factors
        report = verify_coupled_periodic(
            pair.map, U, V, p, pair.sync, pair.domain.localization, samples=samples, exact=pair.domain.exact
        )
        points = pair.domain.polydisc.sample_points(prediction_samples, interior=8)
        prediction = check_prediction(pair.map, points, pair.sync, prediction_steps(q))
        write_report(out / "sync.json", pair.sync)
        write_report(out / "prediction.json", prediction)
        write_report(out / "report.json", report)
        write_json(out / "domain.json", pair.domain.to_dict())
        return {
            "passed": report.passed and prediction.passed,
            "period": p * q,
            "sync_margins": pair.sync.margins,
            "prediction_error": prediction.margins["max_error"],
            "report": report.model_dump(),
        }
