from __future__ import annotations

from typing import List

from app.lab.suites.pendulum.experiments import (
    DetectIslandExperiment,
    IslandSweepExperiment,
    PeriodSweepExperiment,
)


def build_tools() -> List[object]:
    return [
        PeriodSweepExperiment(),
        DetectIslandExperiment(),
        IslandSweepExperiment(),
    ]
