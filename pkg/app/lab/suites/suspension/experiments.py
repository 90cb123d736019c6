from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from app.core.config import settings
from app.dynamics.maps import Composite, Kick, Shear
from app.dynamics.suspension import (
    ActionGrid,
    dump_generating_function,
    dump_hamiltonian,
    perturbation_size,
    suspend,
    verify_suspension,
)
from app.lab.base import BaseExperiment
from app.lab.io import write_json, write_report
from app.lab.models import ExperimentMetadata
from app.lab.stability import cosine_family

SUITE = "suspension"


class SuspendExperiment(BaseExperiment):
    metadata = ExperimentMetadata(
        name="suspension.suspend",
        description="Generating function and time-periodic Hamiltonian of Phi^{r^2/2} o Phi^{eps cos}; time-one map checked against the map.",
        suite=SUITE,
        cli_command="suspend",
    )

    def perform(
        self,
        out: Path,
        eps: float = 1e-3,
        angles: Optional[int] = None,
        actions: Optional[int] = None,
        samples: int = 20,
        tolerance: float = 1e-5,
        dump: bool = True,
    ) -> Dict[str, Any]:
        s = settings.suspension
        grid = ActionGrid(angles or s.grid_angles, actions or s.grid_actions, s.action_min, s.action_max)
        u = cosine_family(1).u.scaled(eps)
        h = Shear.quadratic(1)
        psi = Composite((h, Kick(u)))
        S = suspend(psi, h, grid)
        low, high = grid.inner()
        T, R = np.meshgrid(grid.theta, np.linspace(low, high, 8), indexing="ij")
        # F_A is the kick itself: dA/dtheta = eps u'
        gradient_error = float(np.max(np.abs(S.A.grad_theta(T, R) - u.gradient(T[..., None])[..., 0])))
        report = verify_suspension(S, psi, samples=samples, tolerance=tolerance)
        diagnostics = {**S.A.diagnostics, "gradient_error": gradient_error, "perturbation_size": perturbation_size(S)}
        write_report(out / "report.json", report)
        write_json(out / "diagnostics.json", {"eps": eps, "diagnostics": diagnostics})
        files = []
        if dump:
            files.extend(str(p) for p in dump_generating_function(S.A, out / "generating_function.csv"))
            files.extend(str(p) for p in dump_hamiltonian(S, out / "hamiltonian.csv"))
        return {"passed": report.passed, "eps": eps, "diagnostics": diagnostics, "report": report.model_dump(), "files": files}
