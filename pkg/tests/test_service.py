"""HTTP endpoints: happy paths on small inputs plus the error contract."""

import warnings
from pathlib import Path

import pytest

from cpstream import __version__, read_tensor
from cpstream.service import create_app

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from fastapi.testclient import TestClient


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app()) as c:
        yield c


def _synth_cp(client, out_dir, dims=(6, 5, 8), rank=2, seed=14):
    resp = client.post(
        "/synth/cp",
        json={"config": {"dims": list(dims), "rank": rank, "seed": seed,
                         "output_dir": str(out_dir)}},
    )
    assert resp.status_code == 200, resp.text
    return resp.json()


def test_healthz(client):
    resp = client.get("/healthz")
    assert resp.status_code == 200
    assert resp.json() == {"status": "ok", "version": __version__}


def test_synth_cp_writes_tensor_and_truth(client, tmp_path):
    body = _synth_cp(client, tmp_path, dims=(5, 4, 6), rank=2, seed=3)
    assert body["dims"] == [5, 4, 6]
    assert body["rank"] == 2
    tensor = read_tensor(body["tensor_path"])
    assert tensor.dims == (5, 4, 6)
    assert len(body["factor_paths"]) == 3
    for path in body["factor_paths"]:
        assert Path(path).exists()


def test_synth_shm_writes_manifest(client, tmp_path):
    resp = client.post(
        "/synth/shm",
        json={
            "config": {"seed": 5, "output_dir": str(tmp_path)},
            "n_healthy": 6,
            "n_damage_per_class": [2],
            "locations": 4,
            "n_features": 8,
            "damage_location": 1,
        },
    )
    assert resp.status_code == 200, resp.text
    body = resp.json()
    assert body["n_events"] == 8
    assert body["label_counts"] == {"healthy": 6, "damage-1": 2}
    assert Path(body["manifest_path"]).exists()


def test_decompose_endpoint(client, tmp_path):
    synth = _synth_cp(client, tmp_path / "data", dims=(8, 7, 6), rank=2, seed=9)
    resp = client.post(
        "/decompose",
        json={"config": {"dims": [8, 7, 6], "rank": 2, "algorithm": "als",
                         "max_epochs": 60, "tol": 1e-12, "seed": 0,
                         "input_path": synth["tensor_path"],
                         "output_dir": str(tmp_path / "out")}},
    )
    assert resp.status_code == 200, resp.text
    body = resp.json()
    assert body["final_fit"] > 0.9
    assert body["steps"] >= 1
    assert len(body["factor_paths"]) == 3
    for path in body["factor_paths"] + [body["trace_path"]]:
        assert Path(path).exists()
    header = Path(body["trace_path"]).read_text(encoding="utf-8").splitlines()[0]
    assert header == "t,rmse,fit,wall_ms"


def test_stream_endpoint(client, tmp_path):
    synth = _synth_cp(client, tmp_path / "data", dims=(6, 5, 12), rank=2, seed=11)
    resp = client.post(
        "/stream",
        json={"config": {"dims": [6, 5, 12], "rank": 2, "eta0": 0.3,
                         "gamma": 0.9, "max_epochs": 10, "warmup": 6,
                         "seed": 0, "tol": 1e-15,
                         "input_path": synth["tensor_path"],
                         "output_dir": str(tmp_path / "out")}},
    )
    assert resp.status_code == 200, resp.text
    body = resp.json()
    assert Path(body["trace_path"]).exists()
    assert body["final_rmse"] >= 0.0


def test_rank_scan_endpoint(client, tmp_path):
    synth = _synth_cp(client, tmp_path / "data", dims=(8, 7, 6), rank=3, seed=11)
    resp = client.post(
        "/rank-scan",
        json={"config": {"rank": 1, "max_epochs": 60, "tol": 1e-12, "seed": 0,
                         "input_path": synth["tensor_path"],
                         "output_dir": str(tmp_path / "out")},
              "max_rank": 4},
    )
    assert resp.status_code == 200, resp.text
    body = resp.json()
    assert body["recommended"] == 3
    assert [e["rank"] for e in body["entries"]] == [1, 2, 3, 4]
    lines = Path(body["table_path"]).read_text(encoding="utf-8").splitlines()
    assert lines[0] == "rank,score,fit,rank_deficient"
    assert len(lines) == 5
    assert lines[1].endswith(("true", "false"))


def _detect_config(manifest, out_dir, **kw):
    cfg = {
        "rank": 5, "eta0": 0.4, "gamma": 0.9, "max_epochs": 30,
        "tol": 1e-15, "seed": 0, "n_freq": 8, "nu": 0.05, "k": 2,
        "warmup": 100, "trace_every": 500,
        "input_path": str(manifest), "output_dir": str(out_dir),
    }
    cfg.update(kw)
    return cfg


def test_detect_and_localize(client, tmp_path):
    shm = client.post(
        "/synth/shm",
        json={
            "config": {"seed": 0, "output_dir": str(tmp_path / "events")},
            "n_healthy": 125,
            "n_damage_per_class": [25, 12],
            "locations": 24,
            "n_features": 8,
            "damage_location": 3,
        },
    )
    assert shm.status_code == 200, shm.text
    manifest = shm.json()["manifest_path"]

    det = client.post(
        "/detect", json={"config": _detect_config(manifest, tmp_path / "det")}
    )
    assert det.status_code == 200, det.text
    body = det.json()
    assert body["n_events"] == 162
    assert body["warmup"] == 100
    # 37 streamed damage events; the frozen regime catches nearly all of
    # them with at most a couple of healthy false alarms
    assert 33 <= body["n_flagged"] <= 42
    lines = Path(body["decisions_path"]).read_text(encoding="utf-8").splitlines()
    assert lines[0] == "event,decision_value,label"
    assert len(lines) == 163

    loc = client.post(
        "/localize", json={"config": _detect_config(manifest, tmp_path / "loc")}
    )
    assert loc.status_code == 200, loc.text
    body = loc.json()
    assert body["top_location"] == 3
    assert body["n_scored"] == 62
    assert body["locations"] == 24
    assert len(body["mean_scores"]) == 24
    lines = Path(body["scores_path"]).read_text(encoding="utf-8").splitlines()
    assert lines[0] == "event," + ",".join(f"loc{j}" for j in range(24))
    assert len(lines) == 63


def test_evaluate_endpoint(client, tmp_path):
    shm = client.post(
        "/synth/shm",
        json={
            "config": {"seed": 1, "output_dir": str(tmp_path / "events")},
            "n_healthy": 40,
            "n_damage_per_class": [15],
            "locations": 24,
            "n_features": 8,
            "damage_location": 3,
            "damage_amp": 1.0,
        },
    )
    assert shm.status_code == 200, shm.text
    resp = client.post(
        "/evaluate",
        json={"config": _detect_config(
            shm.json()["manifest_path"], tmp_path / "out",
            seed=1, nu=0.01, bootstrap_fraction=0.95, trials=5, warmup=30,
        )},
    )
    assert resp.status_code == 200, resp.text
    body = resp.json()
    assert body["mean_fscore"] == 1.0
    assert body["std_fscore"] == 0.0
    assert set(body["mean_decision_by_label"]) == {"healthy", "damage-1"}
    lines = Path(body["trials_path"]).read_text(encoding="utf-8").splitlines()
    assert lines[0] == "trial,precision,recall,fscore"
    assert len(lines) == 6
    assert lines[1].startswith("1,")


def test_compare_endpoint(client, tmp_path):
    synth = _synth_cp(client, tmp_path / "data", dims=(6, 5, 8), rank=2, seed=14)
    resp = client.post(
        "/compare",
        json={"config": {"dims": [6, 5, 8], "rank": 2, "eta0": 0.3,
                         "max_epochs": 3, "trace_every": 10, "seed": 0,
                         "input_path": synth["tensor_path"],
                         "output_dir": str(tmp_path / "out")},
              "algorithms": ["momentum", "als"]},
    )
    assert resp.status_code == 200, resp.text
    body = resp.json()
    assert [s["label"] for s in body["summaries"]] == ["als", "momentum"]
    lines = Path(body["table_path"]).read_text(encoding="utf-8").splitlines()
    assert lines[0] == "t,rmse_als,rmse_momentum"
    assert len(lines) > 1


def test_missing_input_maps_to_invalid_input(client, tmp_path):
    resp = client.post(
        "/decompose", json={"config": {"output_dir": str(tmp_path)}}
    )
    assert resp.status_code == 400
    assert resp.json()["code"] == "invalid_input"

    resp = client.post(
        "/decompose",
        json={"config": {"input_path": str(tmp_path / "nope.nten"),
                         "output_dir": str(tmp_path)}},
    )
    assert resp.status_code == 400
    assert resp.json()["code"] == "invalid_input"


def test_bad_config_value_maps_to_invalid_input(client, tmp_path):
    resp = client.post(
        "/synth/cp",
        json={"config": {"rank": -1, "output_dir": str(tmp_path)}},
    )
    assert resp.status_code == 400
    assert resp.json()["code"] == "invalid_input"


def test_divergence_maps_to_400(client, tmp_path):
    synth = _synth_cp(client, tmp_path / "data", dims=(6, 5, 8), rank=2, seed=14)
    resp = client.post(
        "/decompose",
        json={"config": {"dims": [6, 5, 8], "rank": 2, "eta0": 500.0,
                         "max_epochs": 5, "seed": 0,
                         "input_path": synth["tensor_path"],
                         "output_dir": str(tmp_path / "out")}},
    )
    assert resp.status_code == 400
    body = resp.json()
    assert body["code"] == "divergence"
    assert "step size" in body["message"]


def test_unknown_config_field_is_rejected(client, tmp_path):
    resp = client.post(
        "/synth/cp",
        json={"config": {"learning_rate": 0.1, "output_dir": str(tmp_path)}},
    )
    assert resp.status_code == 422
