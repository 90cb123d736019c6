from __future__ import annotations

import inspect
import logging
import time
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, Optional

from app.core.errors import ConfigError, LabError
from app.lab.io import run_directory
from app.lab.models import ExperimentMetadata, ExperimentResponse

logger = logging.getLogger(__name__)


class BaseExperiment(ABC):
    """Executable unit of a suite: writes its artifacts into a fresh run directory."""

    metadata: ExperimentMetadata

    def __init__(self, **kwargs) -> None:
        if not hasattr(self, "metadata"):
            raise ValueError("Experiment subclasses must define `metadata`.")
        for key, value in kwargs.items():
            setattr(self, key, value)

    @abstractmethod
    def perform(self, out: Path, **params) -> Dict[str, Any]:
        """Run the experiment; a ``passed`` key in the result decides ok/fail."""

    def run(self, out: Optional[str] = None, **params) -> ExperimentResponse:
        started = time.perf_counter()
        name = self.metadata.name
        try:
            inspect.signature(self.perform).bind(None, **params)
        except TypeError as exc:
            return self._error(ConfigError(f"{name}: {exc}"), started)
        directory = run_directory(name.replace(".", "-"), out)
        try:
            data = self.perform(directory, **params)
        except LabError as exc:
            logger.error(f"Experiment {name} failed: {exc}", exc_info=True)
            return self._error(exc, started, directory)
        except Exception as exc:
            logger.error(f"Experiment {name} crashed: {exc}", exc_info=True)
            return self._error(exc, started, directory)
        passed = bool(data.pop("passed", True))
        runtime = time.perf_counter() - started
        logger.info(f"Experiment {name} finished in {runtime:.2f}s: {'pass' if passed else 'fail'}")
        return ExperimentResponse(
            status="ok" if passed else "fail",
            data=data,
            metadata={"experiment": name, "run_dir": str(directory), "runtime_s": runtime, "exit_code": 0 if passed else 1},
        )

    def _error(self, exc: Exception, started: float, directory: Optional[Path] = None) -> ExperimentResponse:
        exit_code = getattr(exc, "exit_code", 1)
        data: Dict[str, Any] = {"error": str(exc), "exit_code": exit_code, "type": type(exc).__name__}
        if getattr(exc, "key", None):
            data["key"] = exc.key
        return ExperimentResponse(
            status="error",
            data=data,
            metadata={
                "experiment": self.metadata.name,
                "run_dir": str(directory) if directory else None,
                "runtime_s": time.perf_counter() - started,
                "exit_code": exit_code,
            },
        )

    def serialize(self) -> Dict[str, object]:
        return self.metadata.model_dump()
