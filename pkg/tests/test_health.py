from fastapi.testclient import TestClient

from app.db.models import LabRun
from app.db.session import SessionLocal
from app.main import app


client = TestClient(app)


def test_health_check():
    response = client.get("/health")
    assert response.status_code == 200
    payload = response.json()
    assert payload["status"] == "ok"
    assert "version" in payload


def test_list_experiments():
    response = client.get("/lab/experiments")
    assert response.status_code == 200
    payload = response.json()
    assert payload["count"] == 10
    names = {e["name"] for e in payload["experiments"]}
    assert {"pendulum.sweep", "coupling.verify", "suspension.suspend", "stability.sweep"} <= names

    response = client.get("/lab/experiments", params={"suite": "pendulum"})
    assert all(e["suite"] == "pendulum" for e in response.json()["experiments"])


def test_unknown_experiment_is_404():
    response = client.post("/lab/run/nothing.here", json={})
    assert response.status_code == 404


def test_run_over_http_is_recorded():
    response = client.post("/lab/run/coupling.verify", json={"q": 5, "samples": 32})
    assert response.status_code == 200
    payload = response.json()
    assert payload["status"] == "ok"
    assert payload["metadata"]["exit_code"] == 0

    db = SessionLocal()
    try:
        run = db.query(LabRun).filter(LabRun.experiment == "coupling.verify", LabRun.source == "http").first()
    finally:
        db.close()
    assert run is not None
    assert run.passed
    assert run.params == {"q": 5, "samples": 32}


def test_unexpected_parameter_is_an_error_response():
    response = client.post("/lab/run/coupling.verify", json={"bogus": 1})
    assert response.status_code == 200
    payload = response.json()
    assert payload["status"] == "error"
    assert payload["metadata"]["exit_code"] == 2
