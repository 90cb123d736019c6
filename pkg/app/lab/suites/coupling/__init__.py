from __future__ import annotations

from typing import List

from app.lab.suites.coupling.experiments import VerifyCouplingExperiment


def build_tools() -> List[object]:
    return [VerifyCouplingExperiment()]
