import csv
import json

import numpy as np
import pytest

from app.dynamics.constructions import periodic_ellipse
from app.lab.bootstrap import get_registry
from app.lab.io import read_json, run_directory, write_csv, write_json, write_phase_portrait, write_report
from app.lab.models import SCHEMA_VERSION
from app.lab.registry import ExperimentNotFoundError
from app.lab.verification import certify


def test_registry_lookup():
    registry = get_registry()
    assert registry.by_command("suspend").metadata.name == "suspension.suspend"
    assert registry.get("pendulum.island_sweep").metadata.slow
    with pytest.raises(ExperimentNotFoundError):
        registry.get("pendulum.nothing")
    with pytest.raises(ExperimentNotFoundError):
        registry.by_command("nothing")
    assert len(registry.list_experiments("constructions")) == 4


def test_run_directory_is_fresh(tmp_path):
    first = run_directory("demo", tmp_path, stamp="a")
    second = run_directory("demo", tmp_path, stamp="b")
    assert first.is_dir() and second.is_dir() and first != second
    assert first.name == "demo-a"


def test_json_and_csv_writers(tmp_path):
    path = write_json(tmp_path / "out.json", {"values": np.arange(3), "x": np.float64(0.5)})
    payload = read_json(path)
    assert payload["schema_version"] == SCHEMA_VERSION
    assert payload["values"] == [0, 1, 2]

    rows = [{"q": 64, "T": 0.1}, {"q": 128, "T": 0.2}]
    path = write_csv(tmp_path / "rows.csv", rows)
    with path.open() as handle:
        read = list(csv.DictReader(handle))
    assert [row["q"] for row in read] == ["64", "128"]
    assert float(read[1]["T"]) == 0.2


def test_report_and_portrait_writers(tmp_path):
    domain = periodic_ellipse(5, 0.1)
    report = certify(domain, samples=16)
    path = write_report(tmp_path / "report.json", report)
    assert json.loads(path.read_text())["passed"]

    path = write_phase_portrait(domain.host, [[0.1, 0.0], [0.3, 0.0]], 4, tmp_path / "portrait.dat")
    lines = path.read_text().splitlines()
    assert lines[0] == "# factor 1: theta r"
    assert len([line for line in lines[1:] if line]) == 2 * 5


def test_experiment_run_through_the_registry(tmp_path):
    response = get_registry().execute(
        "constructions.verify_periodic", {"kind": "ellipse", "p": 5, "samples": 16}, out=str(tmp_path)
    )
    assert response.status == "ok"
    assert "passed" not in response.data
    run_dir = tmp_path / response.metadata["run_dir"].split("/")[-1]
    assert (run_dir / "report.json").exists() and (run_dir / "domain.json").exists()


def test_precondition_failure_becomes_an_error_response(tmp_path):
    response = get_registry().execute("constructions.verify_periodic", {"kind": "hexagon"}, out=str(tmp_path))
    assert response.status == "error"
    assert response.data["type"] == "InvalidParameterError"
    assert response.metadata["exit_code"] == 2
