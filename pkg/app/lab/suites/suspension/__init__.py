from __future__ import annotations

from typing import List

from app.lab.suites.suspension.experiments import SuspendExperiment


def build_tools() -> List[object]:
    return [SuspendExperiment()]
