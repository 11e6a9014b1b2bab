import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from veloreg.service.app import create_app
from veloreg.volio import read_vector, read_volume, write_volume


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


@pytest.fixture(scope="module")
def case(tmp_path_factory, client):
    out = tmp_path_factory.mktemp("synth")
    r = client.post("/synth", json={"out": str(out), "size": 16, "labels": True})
    assert r.status_code == 200
    return out


def test_health(client):
    assert client.get("/health").json()["status"] == "ok"


def test_synth_outputs(case):
    assert read_volume(case / "reference").shape == (16, 16, 16)
    assert read_vector(case / "velocity_true").shape == (3, 16, 16, 16)
    assert read_volume(case / "labels_template").dtype == np.uint16
    assert (case / "synth.json").exists()


def test_synth_rejects_odd_size(client, tmp_path):
    assert client.post("/synth", json={"out": str(tmp_path), "size": 17}).status_code == 422


def test_register(client, case, tmp_path):
    r = client.post("/register", json={
        "reference": str(case / "reference"), "template": str(case / "template"),
        "out": str(tmp_path), "labels_reference": str(case / "labels_reference"),
        "labels_template": str(case / "labels_template")})
    body = r.json()
    assert r.status_code == 200 and body["status"] == "converged" and body["exit_code"] == 0
    assert body["report"]["grad_rel"] <= 5e-2
    assert body["report"]["dice_after"] >= body["report"]["dice_before"]
    assert read_vector(tmp_path / "velocity").shape == (3, 16, 16, 16)


def test_register_grid_mismatch(client, case, tmp_path):
    write_volume(np.zeros((32, 32, 32), np.float32), tmp_path / "big")
    r = client.post("/register", json={"reference": str(case / "reference"),
                                       "template": str(tmp_path / "big"), "out": str(tmp_path)})
    assert r.status_code == 400 and "grid mismatch" in r.json()["detail"]


def test_register_missing_file(client, tmp_path):
    r = client.post("/register", json={"reference": str(tmp_path / "nope"),
                                       "template": str(tmp_path / "nope"), "out": str(tmp_path)})
    assert r.status_code == 400


def test_register_job(client, case, tmp_path):
    r = client.post("/jobs/register", json={"reference": str(case / "reference"),
                                            "template": str(case / "template"),
                                            "out": str(tmp_path)})
    assert r.status_code == 202
    job_id = r.json()["id"]
    for _ in range(600):
        status = client.get(f"/jobs/{job_id}").json()
        if status["state"] in ("done", "failed"):
            break
        time.sleep(0.1)
    assert status["state"] == "done" and status["result"]["status"] == "converged"
    assert client.get("/jobs/unknown").status_code == 404


def test_warp_zero_velocity_is_identity(client, case, tmp_path):
    write_volume(np.zeros((16, 16, 16), np.float32), tmp_path / "z_1")
    write_volume(np.zeros((16, 16, 16), np.float32), tmp_path / "z_2")
    write_volume(np.zeros((16, 16, 16), np.float32), tmp_path / "z_3")
    r = client.post("/warp", json={"image": str(case / "reference"), "velocity": str(tmp_path / "z"),
                                   "out": str(tmp_path / "w")})
    assert r.status_code == 200
    assert np.array_equal(read_volume(tmp_path / "w"), read_volume(case / "reference"))


def test_metrics_dice_identical(client, case):
    r = client.post("/metrics", json={"kind": "dice", "a": str(case / "labels_reference"),
                                      "b": str(case / "labels_reference")})
    assert r.json()["value"] == 1.0


def test_metrics_missing_inputs(client):
    assert client.post("/metrics", json={"kind": "mismatch"}).status_code == 400


def test_bench_throughput(client):
    r = client.post("/bench", json={"kind": "throughput", "size": 16, "reps": 1,
                                    "kernels": ["prefilter", "bspline"]})
    rows = r.json()["rows"]
    assert [row["kernel"] for row in rows] == ["prefilter", "bspline"]
    assert [row["intensity"] for row in rows] == [2.75, 14.7]


def test_bench_unknown_kernel(client):
    r = client.post("/bench", json={"kind": "throughput", "size": 16, "kernels": ["tex"]})
    assert r.status_code == 400
