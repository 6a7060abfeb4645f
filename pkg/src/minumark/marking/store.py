"""File-backed marking workflow: template revisions, reviews, exports.

Layout under the data root:

    manifests/<db>.json                    registered databases
    schedules/<db>.json                    frozen work schedule
    templates/<db>/<finger>_<impression>/  one directory per image
        log.jsonl                          append-only event log, one revision per line
        state.json                         current state (derived, always rewritten)
        record.iso-fmr                     current encoded template bytes
    views/<db>.jsonl                       image-view log (same-finger-day rule)
    exports/<db>/                          final templates + completeness manifest

Every template directory is guarded by a file lock, so one writer at a
time; submissions also carry an optimistic expected-revision check so a
stale client cannot silently overwrite newer work.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Callable

from filelock import FileLock
from PIL import Image

from minumark.codec import (
    PERCEIVED_QUALITY_BYTES,
    FingerView,
    Minutia,
    MinutiaeRecord,
    SingularPoint,
    decode_record,
    dequantize_angle,
    encode_record,
    quantize_angle,
    validate_record,
)
from minumark.dataset import (
    QUALITY_LEVELS,
    DatabaseManifest,
    ImageRef,
    load_manifest,
    save_manifest,
)
from minumark.marking.schedule import MarkingAssignment, generate_marking_schedule

__all__ = [
    "MarkingError",
    "AuthorizationError",
    "ConflictError",
    "InvalidStateError",
    "ValidationFailure",
    "ReviewRecord",
    "TemplateState",
    "RenderMeta",
    "ExportReport",
    "ServiceConfig",
    "MarkingService",
    "record_from_json",
    "record_to_json",
    "render_image",
]

DRAFT = "draft"
MARKED = "marked"
UNDER_REVIEW = "under_review"
FINAL = "final"


class MarkingError(ValueError):
    pass


class AuthorizationError(MarkingError):
    pass


class ConflictError(MarkingError):
    pass


class InvalidStateError(MarkingError):
    pass


class ValidationFailure(MarkingError):
    def __init__(self, violations):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


@dataclass(frozen=True)
class ReviewRecord:
    reviewer: int
    action: str  # approve | modify
    revision: int
    timestamp: str


@dataclass
class TemplateState:
    image: ImageRef
    revision: int = 0
    marker: int | None = None
    record: MinutiaeRecord | None = None
    perceived_quality: str | None = None
    status: str = DRAFT
    reviews: list[ReviewRecord] = field(default_factory=list)
    warning: str | None = None


@dataclass(frozen=True)
class RenderMeta:
    width_px: int
    height_px: int
    px_per_cm: int
    target_display_cm: float


@dataclass
class ExportReport:
    db_id: str
    exported: int
    total: int
    files: list[str]

    @property
    def completeness(self) -> float:
        return self.exported / self.total if self.total else 0.0


# ---------------------------------------------------------------------------
# Template JSON form (the wire format of the HTTP API)


def _quality_byte(value) -> int:
    if isinstance(value, str):
        if value not in PERCEIVED_QUALITY_BYTES:
            raise MarkingError(f"quality label {value!r} not in {sorted(PERCEIVED_QUALITY_BYTES)}")
        return PERCEIVED_QUALITY_BYTES[value]
    return int(value)


def record_from_json(manifest: DatabaseManifest, payload: dict, perceived_quality: str) -> MinutiaeRecord:
    """Build a record from the JSON template form against a database's
    dimensions. Minutia quality may be numeric (0..100) or poor/fair/good."""
    if perceived_quality not in QUALITY_LEVELS:
        raise MarkingError(f"perceived_quality {perceived_quality!r} not in {QUALITY_LEVELS}")
    minutiae = tuple(
        Minutia(
            kind=m["kind"],
            x=int(m["x"]),
            y=int(m["y"]),
            angle_units=quantize_angle(float(m["angle_deg"])),
            quality=_quality_byte(m.get("quality", 60)),
        )
        for m in payload.get("minutiae", [])
    )
    singular = tuple(
        SingularPoint(
            kind=p["kind"],
            x=int(p["x"]),
            y=int(p["y"]),
            angle_units=None if p.get("angle_deg") is None else quantize_angle(float(p["angle_deg"])),
        )
        for p in payload.get("singular_points", [])
    )
    view = FingerView(
        finger_position=0,
        view_number=0,
        impression_type=0,
        finger_quality=PERCEIVED_QUALITY_BYTES[perceived_quality],
        minutiae=minutiae,
        singular_points=singular,
    )
    return MinutiaeRecord(
        image_width=manifest.image_width,
        image_height=manifest.image_height,
        resolution_x=manifest.px_per_cm,
        resolution_y=manifest.px_per_cm,
        views=(view,),
    )


def record_to_json(record: MinutiaeRecord) -> dict:
    view = record.views[0] if record.views else FingerView()
    return {
        "minutiae": [
            {
                "kind": m.kind,
                "x": m.x,
                "y": m.y,
                "angle_deg": dequantize_angle(m.angle_units),
                "quality": m.quality,
            }
            for m in view.minutiae
        ],
        "singular_points": [
            {
                "kind": p.kind,
                "x": p.x,
                "y": p.y,
                "angle_deg": None if p.angle_units is None else dequantize_angle(p.angle_units),
            }
            for p in view.singular_points
        ],
    }


# ---------------------------------------------------------------------------
# Image rendering


def render_image(path: Path | str, px_per_cm: int, display_height_cm: float = 22.0) -> tuple[bytes, RenderMeta]:
    """Lossless PNG transcode plus the metadata a client needs to show the
    image at a fixed physical height. No server-side resampling: the client
    owns the scale factor (its own screen DPI is unknown here)."""
    if display_height_cm <= 0:
        raise MarkingError("display_height_cm must be positive")
    try:
        with Image.open(path) as img:
            width, height = img.size
            buf = io.BytesIO()
            img.save(buf, format="PNG")
    except Exception as exc:
        raise MarkingError(f"cannot read image {path}: {exc}") from exc
    return buf.getvalue(), RenderMeta(
        width_px=width, height_px=height, px_per_cm=px_per_cm, target_display_cm=display_height_cm
    )


# ---------------------------------------------------------------------------
# Service


@dataclass
class ServiceConfig:
    data_root: Path
    subjects: tuple[int, ...] = (1, 2, 3, 4)
    capacity: int = 14
    port: int = 8000
    today: Callable[[], date] = date.today  # injectable clock for the day rule


class MarkingService:
    """Single-process workflow backend over the file layout above."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.root = Path(config.data_root)
        for sub in ("manifests", "schedules", "templates", "views", "exports"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        self._manifests: dict[str, DatabaseManifest] = {}
        for path in sorted((self.root / "manifests").glob("*.json")):
            manifest = load_manifest(path)
            self._manifests[manifest.db_id] = manifest

    # -- databases and schedules

    def register_database(self, manifest: DatabaseManifest) -> None:
        self._manifests[manifest.db_id] = manifest
        save_manifest(manifest, self.root / "manifests" / f"{manifest.db_id}.json")

    def databases(self) -> list[str]:
        return sorted(self._manifests)

    def manifest(self, db_id: str) -> DatabaseManifest:
        try:
            return self._manifests[db_id]
        except KeyError:
            raise KeyError(f"unknown database {db_id!r}") from None

    def schedule(self, db_id: str) -> list[MarkingAssignment]:
        """The frozen schedule for a database (generated once, then reread)."""
        path = self.root / "schedules" / f"{db_id}.json"
        manifest = self.manifest(db_id)
        if path.exists():
            doc = json.loads(path.read_text())
            return [
                MarkingAssignment(
                    subject_id=a["subject"],
                    day_index=a["day"],
                    images=tuple(ImageRef(db_id, f, k) for f, k in a["images"]),
                )
                for a in doc["assignments"]
            ]
        assignments = generate_marking_schedule(manifest, len(self.config.subjects), self.config.capacity)
        doc = {
            "db_id": db_id,
            "subjects": len(self.config.subjects),
            "capacity": self.config.capacity,
            "assignments": [
                {
                    "subject": a.subject_id,
                    "day": a.day_index,
                    "images": [[r.finger_id, r.impression_id] for r in a.images],
                }
                for a in assignments
            ],
        }
        path.write_text(json.dumps(doc) + "\n")
        return assignments

    def schedule_for_subject(self, db_id: str, subject: int) -> list[MarkingAssignment]:
        self._check_subject(subject)
        return [a for a in self.schedule(db_id) if a.subject_id == subject]

    def slot_of(self, ref: ImageRef) -> tuple[int, int]:
        """(subject, day_index) an image is scheduled for."""
        for a in self.schedule(ref.db_id):
            if ref in a.images:
                return a.subject_id, a.day_index
        raise KeyError(f"{ref} is not on the schedule")

    def _check_subject(self, subject: int) -> None:
        if subject not in self.config.subjects:
            raise AuthorizationError(f"subject {subject} is not on the roster {self.config.subjects}")

    # -- template state persistence

    def _template_dir(self, ref: ImageRef) -> Path:
        d = self.root / "templates" / ref.db_id / f"{ref.finger_id}_{ref.impression_id}"
        d.mkdir(parents=True, exist_ok=True)
        return d

    def _lock(self, ref: ImageRef) -> FileLock:
        return FileLock(str(self._template_dir(ref) / ".lock"))

    def _load_state(self, ref: ImageRef) -> TemplateState:
        path = self._template_dir(ref) / "state.json"
        if not path.exists():
            return TemplateState(image=ref)
        doc = json.loads(path.read_text())
        record = None
        iso = self._template_dir(ref) / "record.iso-fmr"
        if doc.get("has_record") and iso.exists():
            record = decode_record(iso.read_bytes())
        return TemplateState(
            image=ref,
            revision=doc["revision"],
            marker=doc.get("marker"),
            record=record,
            perceived_quality=doc.get("perceived_quality"),
            status=doc["status"],
            reviews=[ReviewRecord(**r) for r in doc.get("reviews", [])],
        )

    def _store_state(self, state: TemplateState) -> None:
        d = self._template_dir(state.image)
        doc = {
            "revision": state.revision,
            "marker": state.marker,
            "has_record": state.record is not None,
            "perceived_quality": state.perceived_quality,
            "status": state.status,
            "reviews": [vars(r) for r in state.reviews],
        }
        (d / "state.json").write_text(json.dumps(doc, indent=1) + "\n")
        if state.record is not None:
            (d / "record.iso-fmr").write_bytes(encode_record(state.record))

    def _append_log(self, ref: ImageRef, event: dict) -> None:
        event = dict(event)
        event["timestamp"] = _now()
        with open(self._template_dir(ref) / "log.jsonl", "a") as handle:
            handle.write(json.dumps(event) + "\n")

    def audit_log(self, ref: ImageRef) -> list[dict]:
        path = self._template_dir(ref) / "log.jsonl"
        if not path.exists():
            return []
        return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]

    def get_template(self, ref: ImageRef) -> TemplateState:
        self.manifest(ref.db_id)
        return self._load_state(ref)

    # -- marking

    def submit_template(
        self,
        subject: int,
        ref: ImageRef,
        payload_or_record,
        perceived_quality: str,
        expected_revision: int | None = None,
        draft: bool = False,
        day_index: int | None = None,
        fingerprint_type: str | None = None,
        completeness: str | None = None,
    ) -> TemplateState:
        """Store a new revision from the image's assigned marker.

        The record must validate against the database dimensions; a stale
        expected_revision is a conflict; submitting on a day other than the
        scheduled one only warns (catch-up work stays possible).
        fingerprint_type (arch/loop/whorl) and completeness ride along into
        the audit log but drive nothing."""
        self._check_subject(subject)
        manifest = self.manifest(ref.db_id)
        owner, scheduled_day = self.slot_of(ref)
        if owner != subject:
            raise AuthorizationError(
                f"image {ref.finger_id}_{ref.impression_id} is assigned to subject {owner}, not {subject}"
            )

        if isinstance(payload_or_record, MinutiaeRecord):
            record = payload_or_record
        else:
            record = record_from_json(manifest, payload_or_record, perceived_quality)
        violations = validate_record(record)
        if violations:
            raise ValidationFailure(violations)

        with self._lock(ref):
            state = self._load_state(ref)
            if state.status == FINAL:
                raise InvalidStateError("template is already final; finalized work is immutable")
            if expected_revision is not None and expected_revision != state.revision:
                raise ConflictError(
                    f"expected revision {expected_revision} but the template is at {state.revision}"
                )
            warning = None
            if day_index is not None and day_index != scheduled_day:
                warning = f"scheduled for day {scheduled_day}, submitted on day {day_index}"
            state = TemplateState(
                image=ref,
                revision=state.revision + 1,
                marker=subject,
                record=record,
                perceived_quality=perceived_quality,
                status=DRAFT if draft else MARKED,
                reviews=[],  # a new revision invalidates any earlier sign-off
                warning=warning,
            )
            self._append_log(
                ref,
                {
                    "event": "submit",
                    "revision": state.revision,
                    "subject": subject,
                    "draft": draft,
                    "perceived_quality": perceived_quality,
                    "fingerprint_type": fingerprint_type,
                    "completeness": completeness,
                    "record": record_to_json(record),
                    "warning": warning,
                },
            )
            self._store_state(state)
        return state

    # -- reviewing

    def submit_review(
        self,
        reviewer: int,
        ref: ImageRef,
        action: str,
        modified_payload=None,
        perceived_quality: str | None = None,
        expected_revision: int | None = None,
    ) -> TemplateState:
        """Approve or modify someone else's marked template. A modification
        bumps the revision and resets earlier approvals; the template turns
        final once every non-marker's latest action is an approval."""
        self._check_subject(reviewer)
        manifest = self.manifest(ref.db_id)
        if action not in ("approve", "modify"):
            raise MarkingError(f"unknown review action {action!r}")

        with self._lock(ref):
            state = self._load_state(ref)
            if state.status == DRAFT:
                raise InvalidStateError("cannot review a draft template")
            if state.status == FINAL:
                raise InvalidStateError("template is already final")
            if reviewer == state.marker:
                raise AuthorizationError("markers cannot review their own template")
            if expected_revision is not None and expected_revision != state.revision:
                raise ConflictError(
                    f"expected revision {expected_revision} but the template is at {state.revision}"
                )

            reviews = [r for r in state.reviews if r.reviewer != reviewer]
            if action == "modify":
                if modified_payload is None:
                    raise MarkingError("modify review requires the replacement template")
                quality = perceived_quality or state.perceived_quality
                if isinstance(modified_payload, MinutiaeRecord):
                    record = modified_payload
                else:
                    record = record_from_json(manifest, modified_payload, quality)
                violations = validate_record(record)
                if violations:
                    raise ValidationFailure(violations)
                revision = state.revision + 1
                # Earlier approvals applied to the replaced revision: drop them.
                reviews = [ReviewRecord(reviewer, "modify", revision, _now())]
                state = TemplateState(
                    image=ref,
                    revision=revision,
                    marker=state.marker,
                    record=record,
                    perceived_quality=quality,
                    status=UNDER_REVIEW,
                    reviews=reviews,
                )
            else:
                reviews.append(ReviewRecord(reviewer, "approve", state.revision, _now()))
                others = [s for s in self.config.subjects if s != state.marker]
                latest = {r.reviewer: r.action for r in reviews}
                all_approved = all(latest.get(s) == "approve" for s in others)
                state = TemplateState(
                    image=ref,
                    revision=state.revision,
                    marker=state.marker,
                    record=state.record,
                    perceived_quality=state.perceived_quality,
                    status=FINAL if all_approved else UNDER_REVIEW,
                    reviews=reviews,
                )
            self._append_log(
                ref,
                {
                    "event": "review",
                    "revision": state.revision,
                    "reviewer": reviewer,
                    "action": action,
                    "record": None if action == "approve" else record_to_json(state.record),
                },
            )
            self._store_state(state)
        return state

    # -- images

    def view_image(self, subject: int, ref: ImageRef, display_height_cm: float = 22.0) -> tuple[bytes, RenderMeta]:
        """Serve one image, enforcing the bias rule: a subject is never shown
        two impressions of the same finger on one calendar day."""
        self._check_subject(subject)
        manifest = self.manifest(ref.db_id)
        entry = manifest.entry(ref)
        if entry.image_path is None:
            raise MarkingError(f"no image file recorded for {ref.finger_id}_{ref.impression_id}")

        today = self.config.today().isoformat()
        log_path = self.root / "views" / f"{ref.db_id}.jsonl"
        if log_path.exists():
            for line in log_path.read_text().splitlines():
                if not line.strip():
                    continue
                seen = json.loads(line)
                if (
                    seen["subject"] == subject
                    and seen["date"] == today
                    and seen["finger"] == ref.finger_id
                    and seen["impression"] != ref.impression_id
                ):
                    raise AuthorizationError(
                        f"subject {subject} already viewed impression {seen['impression']} of "
                        f"finger {ref.finger_id} today; the pair must wait for another day"
                    )
        png, meta = render_image(entry.image_path, manifest.px_per_cm, display_height_cm)
        with open(log_path, "a") as handle:
            handle.write(
                json.dumps(
                    {"subject": subject, "date": today, "finger": ref.finger_id, "impression": ref.impression_id}
                )
                + "\n"
            )
        return png, meta

    # -- export and stats

    def export_database(self, db_id: str, dest: Path | str | None = None) -> ExportReport:
        """Write every final template as <finger>_<impression>.iso-fmr plus a
        completeness manifest. Partial databases export partially."""
        manifest = self.manifest(db_id)
        dest = Path(dest) if dest is not None else self.root / "exports" / db_id
        dest.mkdir(parents=True, exist_ok=True)
        files: list[str] = []
        entries = []
        for entry in manifest.entries:
            state = self._load_state(entry.ref)
            row = {
                "finger": entry.ref.finger_id,
                "impression": entry.ref.impression_id,
                "status": state.status,
                "revision": state.revision,
                "perceived_quality": state.perceived_quality,
            }
            entries.append(row)
            if state.status == FINAL and state.record is not None:
                name = f"{entry.ref.finger_id}_{entry.ref.impression_id}.iso-fmr"
                (dest / name).write_bytes(encode_record(state.record))
                files.append(name)
        report = ExportReport(db_id=db_id, exported=len(files), total=len(manifest.entries), files=sorted(files))
        (dest / "manifest.json").write_text(
            json.dumps(
                {
                    "db_id": db_id,
                    "exported": report.exported,
                    "total": report.total,
                    "completeness": report.completeness,
                    "entries": entries,
                },
                indent=1,
            )
            + "\n"
        )
        return report

    def stats(self, db_id: str) -> dict:
        manifest = self.manifest(db_id)
        by_status = {DRAFT: 0, MARKED: 0, UNDER_REVIEW: 0, FINAL: 0, "untouched": 0}
        counts = []
        quality = {level: 0 for level in QUALITY_LEVELS}
        for entry in manifest.entries:
            state = self._load_state(entry.ref)
            if state.revision == 0:
                by_status["untouched"] += 1
                continue
            by_status[state.status] += 1
            if state.record is not None:
                counts.append(sum(len(v.minutiae) for v in state.record.views))
            if state.perceived_quality:
                quality[state.perceived_quality] += 1
        out = {"db_id": db_id, "images": len(manifest.entries), "status": by_status, "perceived_quality": quality}
        if counts:
            n = len(counts)
            mean = sum(counts) / n
            var = sum((c - mean) ** 2 for c in counts) / (n - 1) if n > 1 else 0.0
            out["minutiae"] = {"mean": mean, "std": var**0.5, "min": min(counts), "max": max(counts)}
        return out


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()
