"""HTTP service contract: endpoints, error mapping, artifact framing."""

import json
import math

import pytest
from fastapi.testclient import TestClient

from resokit import __version__
from resokit.service.app import create_app


def _well_config(**overrides):
    cfg = {
        "base": {"lambda0": 0.0, "period": "inf", "poles": [], "genus": 0,
                 "r": []},
        "perturbation": {"R": 1.0, "contact_order": 0,
                         "pieces": [{"interval": [0.0, 1.0],
                                     "coeffs": [[-4.0, 0.0]]}]},
        "kernel": {"h": 0.01, "tol": 1e-10},
        "roots": {"rectangle": [-8.0, 8.0, -3.0, 1.0]},
        "m_samples": {"count": 6},
    }
    cfg.update(overrides)
    return cfg


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app()) as c:
        yield c


@pytest.fixture(scope="module")
def forward_payload(client):
    resp = client.post("/forward", json={"config": _well_config(),
                                         "threads": 2})
    assert resp.status_code == 200, resp.text
    return resp.json()


def test_health_and_version(client):
    assert client.get("/health").json() == {"status": "ok"}
    v = client.get("/version").json()
    assert v == {"tool": "resokit", "version": __version__}


def test_validate_is_key_order_insensitive(client):
    cfg = _well_config()
    r1 = client.post("/validate", json={"config": cfg})
    # rebuild the same document with reversed key insertion order
    shuffled = {k: cfg[k] for k in reversed(list(cfg))}
    r2 = client.post("/validate", json={"config": shuffled})
    assert r1.status_code == r2.status_code == 200
    h1, h2 = r1.json()["config_sha256"], r2.json()["config_sha256"]
    assert h1 == h2
    assert len(h1) == 64 and int(h1, 16) >= 0


def test_validate_names_offending_field(client):
    cfg = _well_config(kernel={"h": -0.5})
    resp = client.post("/validate", json={"config": cfg})
    assert resp.status_code == 422
    err = resp.json()["error"]
    assert err["kind"] == "validation"
    assert "kernel.h" in err.get("path", "") or "kernel.h" in err["message"]


def test_validate_rejects_origin_grazing_rectangle(client):
    cfg = _well_config(roots={"rectangle": [0.0, 8.0, -3.0, 1.0]})
    resp = client.post("/validate", json={"config": cfg})
    assert resp.status_code == 422
    assert "origin" in resp.json()["error"]["message"]


def test_forward_artifacts(forward_payload):
    files = forward_payload["files"]
    assert set(files) == {"kernel.csv", "kernel_diagnostics.json",
                          "m_samples.csv", "zero_set.json"}
    summary = forward_payload["summary"]
    assert summary["zero_count"] == 5
    assert summary["eigenvalues"] == 1
    cfg_hash = summary["config_sha256"]
    for name in ("kernel.csv", "m_samples.csv"):
        head = files[name].splitlines()[:2]
        assert head[0].startswith("# resokit ")
        assert head[1] == f"# config_sha256: {cfg_hash}"
    diag = json.loads(files["kernel_diagnostics.json"])
    assert diag["meta"]["config_sha256"] == cfg_hash
    assert diag["meta"]["version"] == __version__
    zs = json.loads(files["zero_set.json"])
    assert zs["metadata"]["config_sha256"] == cfg_hash
    assert len(zs["zeros"]) == 5


def test_m_samples_rows(forward_payload):
    lines = forward_payload["files"]["m_samples.csv"].splitlines()
    header = lines[2]
    assert header == "re_z,im_z,re_psi,im_psi,re_m,im_m,method"
    rows = [ln.split(",") for ln in lines[3:]]
    assert len(rows) == 6
    assert all(r[6] == "direct" for r in rows)
    assert all(math.isfinite(float(v)) for r in rows for v in r[:6])


def test_inverse_endpoint(client, forward_payload):
    zero_doc = json.loads(forward_payload["files"]["zero_set.json"])
    resp = client.post("/inverse", json={"config": _well_config(),
                                         "zero_set": zero_doc})
    assert resp.status_code == 200, resp.text
    payload = resp.json()
    assert set(payload["files"]) == {"reconstruction_report.json",
                                     "m_comparison.csv"}
    report = json.loads(payload["files"]["reconstruction_report.json"])
    assert report["meta"]["tool"] == "resokit"
    rec = report["reconstruction"]
    assert rec["genus"] == 0
    assert len(rec["zeros"]) == 5
    m0 = payload["summary"]["m_at_0"]
    assert math.isfinite(m0[0]) and math.isfinite(m0[1])


def test_roundtrip_endpoint(client):
    resp = client.post("/roundtrip", json={"config": _well_config(),
                                           "threads": 2})
    assert resp.status_code == 200, resp.text
    payload = resp.json()
    summary = payload["summary"]
    assert summary["forward"]["zero_count"] == 5
    assert "max_rel_err" in summary["inverse"]
    assert math.isfinite(summary["inverse"]["max_rel_err"])
    assert "roundtrip_summary.json" in payload["files"]
    doc = json.loads(payload["files"]["roundtrip_summary.json"])
    assert doc["roundtrip"]["forward"]["zero_count"] == 5


def test_band_endpoint(client):
    resp = client.post("/band", json={"config": _well_config(), "threads": 2})
    assert resp.status_code == 200, resp.text
    payload = resp.json()
    assert payload["summary"]["nu"] == 2
    assert "band_report.csv" in payload["files"]
    assert "band_summary.json" in payload["files"]
    for entry in payload["summary"]["safe_semicircles"]:
        assert entry["min_scaled_psi"] > 1.0 / 3.0


def test_numerical_failure_maps_to_500(client, forward_payload):
    zero_doc = json.loads(forward_payload["files"]["zero_set.json"])
    zero_doc["zeros"].append({"z": [0.0, 0.0], "mult": 1,
                              "class": "threshold"})
    resp = client.post("/inverse", json={"config": _well_config(),
                                         "zero_set": zero_doc})
    assert resp.status_code == 500
    err = resp.json()["error"]
    assert err["kind"] == "numerical"
    assert err["type"] == "ZeroAtOrigin"


def test_malformed_request_body_is_422(client):
    resp = client.post("/forward", json={"config": 42})
    assert resp.status_code == 422


def test_zero_set_without_wronskian_is_422(client, forward_payload):
    zero_doc = json.loads(forward_payload["files"]["zero_set.json"])
    zero_doc["wronskian"]["coeffs"] = []
    resp = client.post("/inverse", json={"config": _well_config(),
                                         "zero_set": zero_doc})
    assert resp.status_code == 422
    assert "wronskian" in resp.json()["error"]["path"]
