"""Run directories and the files an experiment leaves behind."""

from __future__ import annotations

import csv
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel

from app.core.config import settings
from app.dynamics.maps import SymplecticMap, orbit, wrap_state
from app.lab.models import SCHEMA_VERSION, VerificationReport

logger = logging.getLogger(__name__)

PathLike = Union[Path, str]


def _default(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return value.model_dump()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"not JSON serialisable: {type(value).__name__}")


def run_directory(name: str, root: Optional[PathLike] = None, stamp: Optional[str] = None) -> Path:
    """<output_dir>/<name>-<UTC stamp>, created on demand."""
    stamp = stamp or datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%f")
    path = Path(root or settings.lab.output_dir) / f"{name}-{stamp}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_json(path: PathLike, payload: Mapping[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"schema_version": SCHEMA_VERSION, **payload}
    path.write_text(json.dumps(body, sort_keys=True, indent=2, default=_default))
    logger.info(f"Wrote {path}")
    return path


def write_report(path: PathLike, report: VerificationReport) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.deterministic_json())
    logger.info(f"Wrote {report.kind} report ({'pass' if report.passed else 'fail'}) to {path}")
    return path


def write_csv(path: PathLike, rows: Sequence[Mapping[str, Any]], header: Optional[Sequence[str]] = None) -> Path:
    """Rows of dicts; the header defaults to the keys of the first row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = list(header or (rows[0].keys() if rows else []))
    with path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=header, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _cell(row.get(key)) for key in header})
    logger.info(f"Wrote {len(rows)} rows to {path}")
    return path


def _cell(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return value


def write_constants(directory: PathLike, constants: Mapping[str, Any], fitted_from: Mapping[str, Any]) -> Path:
    """constants.json: every fitted constant with the sweep it came from."""
    return write_json(Path(directory) / "constants.json", {"constants": dict(constants), "fitted_from": dict(fitted_from)})


def write_phase_portrait(
    m: SymplecticMap,
    seeds: Iterable[Sequence[float]],
    steps: int,
    path: PathLike,
    factor: int = 0,
) -> Path:
    """Gnuplot-ready blocks (theta, r) of one factor, one block per seed, blank line between."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = m.n
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    states = wrap_state(orbit(m, seeds, steps), n)
    blocks = seeds.shape[0]
    with path.open("w") as handle:
        handle.write(f"# factor {factor + 1}: theta r\n")
        for j in range(blocks):
            for z in states[:, j]:
                handle.write(f"{z[factor]:.17g} {z[n + factor]:.17g}\n")
            handle.write("\n\n")
    logger.info(f"Wrote phase portrait with {blocks} orbits to {path}")
    return path


def read_json(path: PathLike) -> Dict[str, Any]:
    return json.loads(Path(path).read_text())
