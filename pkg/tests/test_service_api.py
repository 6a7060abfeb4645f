import datetime
import io
import zipfile

import pytest
from fastapi.testclient import TestClient
from PIL import Image

from minumark.codec import decode_record
from minumark.dataset import DbSpec, scan_database
from minumark.marking import MarkingService, ServiceConfig
from minumark.marking.api import create_app

SPEC = DbSpec("LAB", "optical", 388, 374, 500, fingers=2, impressions_per_finger=8)


class Clock:
    def __init__(self):
        self.current = datetime.date(2014, 3, 3)

    def __call__(self):
        return self.current


@pytest.fixture
def client(tmp_path):
    image_dir = tmp_path / "images"
    image_dir.mkdir()
    for f in range(1, 3):
        for k in range(1, 9):
            Image.new("L", (388, 374), color=150).save(image_dir / f"{f}_{k}.png")
    service = MarkingService(
        ServiceConfig(data_root=tmp_path / "data", subjects=(1, 2, 3, 4), capacity=14, today=Clock())
    )
    service.register_database(scan_database(image_dir, SPEC))
    test_client = TestClient(create_app(service))
    test_client.data_root = tmp_path / "data"
    return test_client


PAYLOAD = {
    "minutiae": [{"kind": "ending", "x": 100, "y": 200, "angle_deg": 90.0, "quality": "good"}],
    "singular_points": [],
    "perceived_quality": "good",
    "expected_revision": 0,
}


def test_schedule_endpoint(client):
    response = client.get("/api/v1/schedule/1")
    assert response.status_code == 200
    body = response.json()
    assert body["subject"] == 1
    images = [img for day in body["days"] for img in day["images"]]
    assert len(images) == 4  # 2 fingers x 2 impressions for this subject
    assert all(img["impression"] in (1, 5) for img in images)


def test_image_endpoint_headers_and_day_rule(client):
    response = client.get("/api/v1/images/LAB/1/1.png", headers={"X-Subject-Id": "1"})
    assert response.status_code == 200
    assert response.headers["content-type"] == "image/png"
    assert response.headers["X-Px-Per-Cm"] == "197"
    assert response.headers["X-Image-Height-Px"] == "374"
    assert response.headers["X-Target-Display-Cm"] == "22.0"
    assert response.content.startswith(b"\x89PNG")

    blocked = client.get("/api/v1/images/LAB/1/5.png", headers={"X-Subject-Id": "1"})
    assert blocked.status_code == 403
    assert "another day" in blocked.json()["detail"]

    # anonymous requests are rejected outright
    assert client.get("/api/v1/images/LAB/1/1.png").status_code == 401


def test_template_put_get_round_trip(client):
    put = client.put("/api/v1/templates/LAB/1/1", json=PAYLOAD, headers={"X-Subject-Id": "1"})
    assert put.status_code == 200
    state = put.json()
    assert state["status"] == "marked"
    assert state["revision"] == 1

    got = client.get("/api/v1/templates/LAB/1/1")
    assert got.status_code == 200
    body = got.json()
    minutia = body["template"]["minutiae"][0]
    assert (minutia["x"], minutia["y"], minutia["angle_deg"], minutia["quality"]) == (100, 200, 90.0, 80)

    stored = (client.data_root / "templates" / "LAB" / "1_1" / "record.iso-fmr").read_bytes()
    decoded = decode_record(stored)
    m = decoded.views[0].minutiae[0]
    assert (m.x, m.y, m.angle_units) == (100, 200, 64)


def test_put_validation_conflict_and_authorization(client):
    bad = dict(PAYLOAD, minutiae=[{"kind": "ending", "x": 500, "y": 10, "angle_deg": 0.0, "quality": 50}])
    response = client.put("/api/v1/templates/LAB/1/1", json=bad, headers={"X-Subject-Id": "1"})
    assert response.status_code == 422
    assert any(v["code"] == "coordinate-out-of-bounds" for v in response.json()["detail"])

    assert (
        client.put("/api/v1/templates/LAB/1/1", json=PAYLOAD, headers={"X-Subject-Id": "2"}).status_code
        == 403
    )

    assert client.put("/api/v1/templates/LAB/1/1", json=PAYLOAD, headers={"X-Subject-Id": "1"}).status_code == 200
    stale = client.put("/api/v1/templates/LAB/1/1", json=PAYLOAD, headers={"X-Subject-Id": "1"})
    assert stale.status_code == 409


def test_review_flow_to_final(client):
    client.put("/api/v1/templates/LAB/1/1", json=PAYLOAD, headers={"X-Subject-Id": "1"})
    for reviewer, expected in ((2, "under_review"), (3, "under_review"), (4, "final")):
        response = client.post(
            "/api/v1/templates/LAB/1/1/reviews",
            json={"action": "approve"},
            headers={"X-Subject-Id": str(reviewer)},
        )
        assert response.status_code == 200
        assert response.json()["status"] == expected

    self_review = client.post(
        "/api/v1/templates/LAB/1/5/reviews", json={"action": "approve"}, headers={"X-Subject-Id": "1"}
    )
    assert self_review.status_code == 409  # not yet marked: invalid state


def test_review_modify_via_http(client):
    client.put("/api/v1/templates/LAB/1/1", json=PAYLOAD, headers={"X-Subject-Id": "1"})
    response = client.post(
        "/api/v1/templates/LAB/1/1/reviews",
        json={
            "action": "modify",
            "minutiae": [{"kind": "bifurcation", "x": 42, "y": 24, "angle_deg": 0.0, "quality": "fair"}],
            "expected_revision": 1,
        },
        headers={"X-Subject-Id": "3"},
    )
    assert response.status_code == 200
    body = response.json()
    assert body["revision"] == 2
    assert body["template"]["minutiae"][0]["x"] == 42


def test_export_zip(client):
    client.put("/api/v1/templates/LAB/1/1", json=PAYLOAD, headers={"X-Subject-Id": "1"})
    for reviewer in (2, 3, 4):
        client.post(
            "/api/v1/templates/LAB/1/1/reviews",
            json={"action": "approve"},
            headers={"X-Subject-Id": str(reviewer)},
        )
    response = client.get("/api/v1/export/LAB.zip")
    assert response.status_code == 200
    assert response.headers["X-Exported"] == "1"
    archive = zipfile.ZipFile(io.BytesIO(response.content))
    assert sorted(archive.namelist()) == ["LAB/1_1.iso-fmr", "LAB/manifest.json"]
    record = decode_record(archive.read("LAB/1_1.iso-fmr"))
    assert record.views[0].minutiae[0].x == 100


def test_stats_endpoint(client):
    client.put("/api/v1/templates/LAB/1/1", json=PAYLOAD, headers={"X-Subject-Id": "1"})
    response = client.get("/api/v1/stats/LAB")
    assert response.status_code == 200
    assert response.json()["status"]["marked"] == 1


def test_unknown_database_is_404(client):
    assert client.get("/api/v1/stats/NOPE").status_code == 404
    assert client.get("/api/v1/templates/NOPE/1/1").status_code == 404
