import os

import numpy as np
from fastapi.testclient import TestClient

from app.core.config import settings
from app.main import app

client = TestClient(app)


def test_root():
    response = client.get("/")
    assert response.status_code == 200
    assert response.json()["status"] == "running"
    assert "X-Process-Time" in response.headers


def test_health():
    body = client.get("/api/v1/health").json()
    assert body["status"] == "healthy"
    assert "muon_plus" in body["schedules"]
    assert body["svd_method"] in ("auto", "jacobi", "lapack")


def test_schedules():
    schedules = {s["name"]: s for s in client.get("/api/v1/schedules").json()}
    assert set(schedules) >= {"muon", "muon_plus", "polar_express"}
    assert len(schedules["muon_plus"]["triples"]) == 5


def test_orthogonalize_endpoint():
    x = np.random.default_rng(3).standard_normal((6, 4)).tolist()
    response = client.post("/api/v1/orthogonalize",
                           json={"matrix": x, "pipeline": "turbo", "iterations": 4, "precision": "double",
                                 "reference": True})
    assert response.status_code == 200
    body = response.json()
    assert body["matmul_count"] == 12
    assert body["preconditioner"] == "aol"
    assert len(body["result"]) == 6 and len(body["result"][0]) == 4
    assert len(body["per_iteration"]) == 4
    assert 0 <= body["polar_error"] < 0.5


def test_orthogonalize_with_named_schedule():
    response = client.post("/api/v1/orthogonalize",
                           json={"matrix": [[2.0, 0.0], [0.0, 1.0]], "pipeline": "muon_plus", "iterations": 3,
                                 "schedule": "polar_express"})
    assert response.status_code == 200
    assert response.json()["schedule_name"] == "polar_express[-3:]"


def test_orthogonalize_rejects_bad_input():
    ragged = client.post("/api/v1/orthogonalize", json={"matrix": [[1.0, 2.0], [3.0]]})
    assert ragged.status_code == 400
    zero = client.post("/api/v1/orthogonalize", json={"matrix": [[0.0, 0.0], [0.0, 0.0]]})
    assert zero.status_code == 422
    assert zero.json()["error"] == "PreconditionError"
    unknown = client.post("/api/v1/orthogonalize", json={"matrix": [[1.0]], "schedule": "nope"})
    assert unknown.status_code == 404
    invalid = client.post("/api/v1/orthogonalize", json={"matrix": [[1.0]], "iterations": 0})
    assert invalid.status_code == 422
    assert invalid.json()["error"] == "Validation Error"


def test_orthogonalize_rejects_schedule_paths(tmp_path):
    secret = tmp_path / "secret.txt"
    secret.write_text("API_TOKEN hunter2 xyz\n")
    relative = os.path.relpath(secret.with_suffix(""), settings.SCHEDULES_DIR)
    for name in (relative, str(secret.with_suffix("")), "../muon", "muon.txt"):
        response = client.post("/api/v1/orthogonalize", json={"matrix": [[1.0]], "schedule": name})
        assert response.status_code == 404
        assert "hunter2" not in response.text
