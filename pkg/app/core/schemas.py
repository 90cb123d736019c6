from __future__ import annotations

from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from app.core.geometry import AnnulusPoint, Ellipse2D, PolygonCarrier, Polydisc


class EllipseSchema(BaseModel):
    center: List[float] = Field(min_length=2, max_length=2)
    shape: List[List[float]]
    polygon: Optional[List[List[float]]] = None

    @classmethod
    def from_carrier(cls, carrier: Ellipse2D | PolygonCarrier) -> "EllipseSchema":
        center = carrier.center_array.tolist()
        if isinstance(carrier, PolygonCarrier):
            hull = carrier.vertices - carrier.center_array
            # second-moment matrix stands in for the shape of a polygon
            cov = np.cov(hull.T)
            return cls(center=center, shape=np.linalg.inv(2.0 * cov).tolist(), polygon=carrier.vertices.tolist())
        return cls(center=center, shape=carrier.shape.tolist())

    def to_carrier(self) -> Ellipse2D | PolygonCarrier:
        center = AnnulusPoint([self.center[0]], [self.center[1]])
        if self.polygon is not None:
            return PolygonCarrier(center, np.asarray(self.polygon))
        return Ellipse2D(center, np.asarray(self.shape))


class PolydiscSchema(BaseModel):
    factors: List[EllipseSchema]

    @classmethod
    def from_polydisc(cls, polydisc: Polydisc) -> "PolydiscSchema":
        return cls(factors=[EllipseSchema.from_carrier(f) for f in polydisc.factors])

    def to_polydisc(self) -> Polydisc:
        return Polydisc(tuple(f.to_carrier() for f in self.factors))


class MapDescription(BaseModel):
    """JSON description of a map pipeline (kind, parameters, order)."""

    kind: str
    dimension: int
    parameters: Dict[str, Any] = Field(default_factory=dict)
    parts: List["MapDescription"] = Field(default_factory=list)


MapDescription.model_rebuild()
