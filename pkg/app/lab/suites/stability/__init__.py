from __future__ import annotations

from typing import List

from app.lab.suites.stability.experiments import StabilitySweepExperiment


def build_tools() -> List[object]:
    return [StabilitySweepExperiment()]
