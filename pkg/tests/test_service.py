import json

import pytest
from fastapi.testclient import TestClient

from shadow_repair.service import create_app
from shadow_repair.shadow import append_session

from conftest import make_session


@pytest.fixture()
def client():
    return TestClient(create_app())


def test_healthz(client):
    body = client.get("/healthz").json()
    assert body["status"] == "ok"


def test_parse_log_endpoint(client):
    log = "src/foo.cpp:42:13: error: use of undeclared identifier 'dbPrefix'\n"
    body = client.post("/parse-log", json={"log": log}).json()
    assert len(body["errors"]) == 1
    error = body["errors"][0]
    assert error["file"] == "src/foo.cpp"
    assert error["line"] == 42
    assert error["category"] == "undeclared-identifier"
    assert error["dependency_related"] is True


def test_parse_log_with_bad_taxonomy_path(client):
    response = client.post("/parse-log", json={"log": "x", "taxonomy": "/nope.json"})
    assert response.status_code == 400


def test_sample_size_endpoint(client):
    assert client.post("/sample-size", json={"p1": 0.25, "p2": 0.30}).json()["n"] == 1276
    response = client.post("/sample-size", json={"p1": 0.3, "p2": 0.3})
    assert response.status_code == 400
    assert "detect" in response.json()["detail"]


def test_mine_endpoint(client, tmp_path, enum_dispatch_archive):
    out = tmp_path / "catalog.json"
    body = client.post(
        "/mine", json={"archive": str(enum_dispatch_archive), "seed": 1, "output": str(out)}
    ).json()
    assert "unhandled-enum" in body["catalog"]
    assert json.loads(out.read_text())["unhandled-enum"]["failing_build"] == "f1"


def test_mine_endpoint_rejects_malformed_archive(client, tmp_path):
    (tmp_path / "empty").mkdir()
    response = client.post("/mine", json={"archive": str(tmp_path / "empty")})
    assert response.status_code == 400
    assert "order.txt" in response.json()["detail"]


def test_repair_endpoint_rejects_missing_config(client):
    response = client.post("/repair", json={"config": "/nope.json", "builds": ["b1"]})
    assert response.status_code == 400


def test_repair_endpoint_rejects_unknown_build(client, tmp_path, enum_dispatch_archive):
    config = tmp_path / "run.json"
    config.write_text(
        json.dumps(
            {
                "archive": str(enum_dispatch_archive),
                "backend": {"kind": "stochastic", "seed": 1, "success_probability": 0.5},
                "ci": {"command": ["true"]},
            }
        )
    )
    response = client.post("/repair", json={"config": str(config), "builds": ["ghost"]})
    assert response.status_code == 400
    assert "ghost" in response.json()["detail"]


def test_report_endpoint(client, tmp_path):
    results = tmp_path / "results.jsonl"
    append_session(results, make_session(session_id="a", first_pass=1))
    append_session(results, make_session(session_id="b", first_pass=None))
    body = client.post("/report", json={"results": str(results), "max_cap": 2}).json()
    assert body["session_count"] == 2
    assert "codellama" in body["pass_rate"]
    assert body["pass_rate_csv"].splitlines()[1] == "1,50"
    assert body["histogram_csv"].startswith("bucket,pass,fail")
    assert body["classification"] is None


def test_seed_corpus_endpoint(client, tmp_path):
    body = client.post("/seed-corpus", json={"root": str(tmp_path / "c")}).json()
    assert len(body["failing_builds"]) == 10
    assert len(set(body["categories"])) >= 8


def test_report_endpoint_names_corrupt_line(client, tmp_path):
    results = tmp_path / "results.jsonl"
    append_session(results, make_session())
    with results.open("a") as fh:
        fh.write("{broken\n")
    response = client.post("/report", json={"results": str(results)})
    assert response.status_code == 400
    assert "line 2" in response.json()["detail"]
