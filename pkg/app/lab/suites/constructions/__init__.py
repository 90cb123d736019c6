from __future__ import annotations

from typing import List

from app.lab.suites.constructions.experiments import (
    AssembleExperiment,
    SimulateExperiment,
    VerifyPeriodicExperiment,
    VerifyWanderingExperiment,
)


def build_tools() -> List[object]:
    return [
        SimulateExperiment(),
        VerifyPeriodicExperiment(),
        VerifyWanderingExperiment(),
        AssembleExperiment(),
    ]
