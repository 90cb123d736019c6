from __future__ import annotations

import json
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

SCHEMA_VERSION = "1"


class ExperimentMetadata(BaseModel):
    name: str
    description: str
    suite: str
    version: str = "0.1.0"
    cli_command: Optional[str] = None
    slow: bool = False
    enabled: bool = True


class ExperimentResponse(BaseModel):
    status: str
    data: Dict[str, Any] = Field(default_factory=dict)
    metadata: Dict[str, Any] = Field(default_factory=dict)


class VerificationReport(BaseModel):
    """Pass/fail result of a check, with every measured margin."""

    kind: str
    passed: bool
    margins: Dict[str, float] = Field(default_factory=dict)
    tolerances: Dict[str, float] = Field(default_factory=dict)
    parameters: Dict[str, Any] = Field(default_factory=dict)
    failed: Optional[str] = None
    notes: List[str] = Field(default_factory=list)
    runtime_s: float = 0.0
    schema_version: str = SCHEMA_VERSION

    def deterministic_json(self) -> str:
        """JSON without the wall-clock runtime, keys sorted."""
        return json.dumps(self.model_dump(exclude={"runtime_s"}), sort_keys=True, indent=2, default=float)


class StabilityPoint(BaseModel):
    epsilon: float
    escape_time: int
    capped: bool
    max_drift: float


class StabilitySweep(BaseModel):
    """Escape times T_esc(eps) of an ensemble under a family Psi_eps."""

    family: str
    n: int
    alpha: float
    rho: float
    cap: int
    ensemble_size: int
    points: List[StabilityPoint] = Field(default_factory=list)
    monotone: bool = True
    growth_factor: Optional[float] = None
    slope: Optional[float] = None
    residual: Optional[float] = None
    notes: List[str] = Field(default_factory=list)
    schema_version: str = SCHEMA_VERSION
