"""Walk one image through the full manual-marking workflow: schedule,
submission by its assigned marker, the other subjects' review round, and
the final export.

Run:  python3 demos/02_marking_workflow.py
"""

import tempfile
from pathlib import Path

from PIL import Image

from minumark.dataset import DbSpec, ImageRef, scan_database
from minumark.marking import MarkingService, ServiceConfig

workdir = Path(tempfile.mkdtemp(prefix="marking_demo_"))
print("working under", workdir)

# A miniature database: 2 fingers x 8 impressions of synthetic 388x374 scans.
spec = DbSpec("DEMO", "optical", 388, 374, 500, fingers=2, impressions_per_finger=8)
image_dir = workdir / "images"
image_dir.mkdir()
for finger in range(1, 3):
    for impression in range(1, 9):
        Image.new("L", (388, 374), color=120 + 10 * finger).save(
            image_dir / f"{finger}_{impression}.png"
        )

service = MarkingService(ServiceConfig(data_root=workdir / "data", subjects=(1, 2, 3, 4)))
service.register_database(scan_database(image_dir, spec))

print("\n-- schedule (4 subjects, impressions split {s, s+4} per finger)")
for assignment in service.schedule_for_subject("DEMO", 1):
    images = ", ".join(f"{r.finger_id}_{r.impression_id}" for r in assignment.images)
    print(f"  subject 1, day {assignment.day_index}: {images}")

ref = ImageRef("DEMO", 1, 1)
marker, day = service.slot_of(ref)
print(f"\nimage 1_1 belongs to subject {marker}, scheduled day {day}")

png, meta = service.view_image(marker, ref)
print(f"served {len(png)} PNG bytes; {meta.width_px}x{meta.height_px} px at "
      f"{meta.px_per_cm} px/cm, to be shown {meta.target_display_cm} cm tall")

print("\n-- subject 1 marks three minutiae and rates the image 'good'")
state = service.submit_template(
    marker,
    ref,
    {
        "minutiae": [
            {"kind": "ending", "x": 101, "y": 211, "angle_deg": 45.0, "quality": "good"},
            {"kind": "ending", "x": 250, "y": 190, "angle_deg": 303.8, "quality": "fair"},
            {"kind": "bifurcation", "x": 177, "y": 255, "angle_deg": 90.0, "quality": "good"},
        ],
        "singular_points": [{"kind": "core", "x": 180, "y": 190, "angle_deg": 270.0}],
    },
    perceived_quality="good",
    expected_revision=0,
)
print(f"status {state.status}, revision {state.revision}")

print("\n-- reviewer 2 fixes a coordinate; reviewers approve the fixed version")
state = service.submit_review(
    2,
    ref,
    "modify",
    modified_payload={
        "minutiae": [
            {"kind": "ending", "x": 103, "y": 212, "angle_deg": 45.0, "quality": "good"},
            {"kind": "ending", "x": 250, "y": 190, "angle_deg": 303.8, "quality": "fair"},
            {"kind": "bifurcation", "x": 177, "y": 255, "angle_deg": 90.0, "quality": "good"},
        ],
        "singular_points": [],
    },
)
print(f"after modify: status {state.status}, revision {state.revision}")
for reviewer in (2, 3, 4):
    state = service.submit_review(reviewer, ref, "approve")
    print(f"after subject {reviewer} approves: status {state.status}")

print("\n-- audit trail")
for event in service.audit_log(ref):
    actor = event.get("subject", event.get("reviewer"))
    print(f"  revision {event['revision']}: {event['event']} by subject {actor}"
          + (f" ({event['action']})" if event["event"] == "review" else ""))

report = service.export_database("DEMO", workdir / "export")
print(f"\nexported {report.exported}/{report.total} final templates "
      f"(completeness {report.completeness:.4f}) to {workdir / 'export'}")
