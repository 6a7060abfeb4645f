"""Exercise the marking service's HTTP surface in-process (no server
needed; the same app serves over uvicorn via ``minumark serve``).

Run:  python3 demos/04_http_service.py
"""

import tempfile
from pathlib import Path

from fastapi.testclient import TestClient
from PIL import Image

from minumark.dataset import DbSpec, scan_database
from minumark.marking import MarkingService, ServiceConfig
from minumark.marking.api import create_app

workdir = Path(tempfile.mkdtemp(prefix="service_demo_"))
spec = DbSpec("DEMO", "optical", 388, 374, 500, fingers=1, impressions_per_finger=8)
image_dir = workdir / "images"
image_dir.mkdir()
for impression in range(1, 9):
    Image.new("L", (388, 374), color=140).save(image_dir / f"1_{impression}.png")

service = MarkingService(ServiceConfig(data_root=workdir / "data", subjects=(1, 2, 3, 4)))
service.register_database(scan_database(image_dir, spec))
client = TestClient(create_app(service))

print("GET /api/v1/schedule/1")
schedule = client.get("/api/v1/schedule/1").json()
for day in schedule["days"]:
    print("  day", day["day"], [f'{i["finger"]}_{i["impression"]}' for i in day["images"]])

print("\nGET /api/v1/images/DEMO/1/1.png  (as subject 1)")
response = client.get("/api/v1/images/DEMO/1/1.png", headers={"X-Subject-Id": "1"})
print(f"  {response.status_code}, {len(response.content)} bytes, "
      f"px/cm {response.headers['X-Px-Per-Cm']}, "
      f"display height {response.headers['X-Target-Display-Cm']} cm")

print("\nGET the second impression of the same finger on the same day -> refused")
blocked = client.get("/api/v1/images/DEMO/1/5.png", headers={"X-Subject-Id": "1"})
print(f"  {blocked.status_code}: {blocked.json()['detail']}")

print("\nPUT /api/v1/templates/DEMO/1/1  (subject 1 submits marks)")
state = client.put(
    "/api/v1/templates/DEMO/1/1",
    json={
        "minutiae": [{"kind": "ending", "x": 100, "y": 200, "angle_deg": 90.0, "quality": "good"}],
        "singular_points": [],
        "perceived_quality": "good",
        "expected_revision": 0,
    },
    headers={"X-Subject-Id": "1"},
).json()
print(f"  status {state['status']}, revision {state['revision']}")

print("\na stale client (expected_revision=0 again) conflicts:")
conflict = client.put(
    "/api/v1/templates/DEMO/1/1",
    json={"minutiae": [], "singular_points": [], "perceived_quality": "fair", "expected_revision": 0},
    headers={"X-Subject-Id": "1"},
)
print(f"  {conflict.status_code}: {conflict.json()['detail']}")

print("\nthree distinct reviewers approve -> final")
for reviewer in (2, 3, 4):
    state = client.post(
        "/api/v1/templates/DEMO/1/1/reviews",
        json={"action": "approve"},
        headers={"X-Subject-Id": str(reviewer)},
    ).json()
    print(f"  after subject {reviewer}: {state['status']}")

print("\nGET /api/v1/export/DEMO.zip")
export = client.get("/api/v1/export/DEMO.zip")
print(f"  {export.status_code}, {len(export.content)} zip bytes, "
      f"{export.headers['X-Exported']}/{export.headers['X-Total']} templates final")

print("\nGET /api/v1/stats/DEMO")
print(" ", client.get("/api/v1/stats/DEMO").json()["status"])
