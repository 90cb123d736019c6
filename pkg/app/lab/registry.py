from __future__ import annotations

from typing import Dict, Iterable, List, Optional

from app.lab.base import BaseExperiment
from app.lab.models import ExperimentResponse


class ExperimentNotFoundError(KeyError):
    pass


class ExperimentRegistry:
    def __init__(self) -> None:
        self._experiments: Dict[str, BaseExperiment] = {}

    def register(self, experiment: BaseExperiment) -> None:
        self._experiments[experiment.metadata.name] = experiment

    def bulk_register(self, experiments: Iterable[BaseExperiment]) -> None:
        for experiment in experiments:
            self.register(experiment)

    def get(self, name: str) -> BaseExperiment:
        experiment = self._experiments.get(name)
        if experiment is None:
            raise ExperimentNotFoundError(f"No experiment registered with name '{name}'")
        return experiment

    def by_command(self, command: str) -> BaseExperiment:
        for experiment in self._experiments.values():
            if experiment.metadata.cli_command == command:
                return experiment
        raise ExperimentNotFoundError(f"No experiment behind command '{command}'")

    def list_experiments(self, suite: Optional[str] = None) -> List[Dict[str, object]]:
        values = self._experiments.values()
        if suite:
            values = [e for e in values if e.metadata.suite == suite]
        return [e.serialize() for e in values]

    def execute(self, name: str, params: Optional[Dict[str, object]] = None, out: Optional[str] = None) -> ExperimentResponse:
        params = dict(params or {})
        return self.get(name).run(out=out, **params)


registry = ExperimentRegistry()
