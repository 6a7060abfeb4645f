"""FVC-style database ingestion: images, templates, quality labels, NFIQ scores.

A database directory holds ``<finger>_<impression>.<ext>`` image files
(tif/bmp/png) for F fingers x K impressions. Scanning produces a manifest
that the scheduler, matcher protocol, and report code all consume; the
manifest round-trips through JSON. Pixel data is only ever opened to read
dimensions (and to transcode for display) - no image processing happens here.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

from PIL import Image

from minumark.codec import MinutiaeRecord, Violation, decode_record, validate_record

__all__ = [
    "QUALITY_LEVELS",
    "SENSOR_KINDS",
    "KNOWN_DB_SPECS",
    "DbSpec",
    "ImageRef",
    "ManifestEntry",
    "DatabaseManifest",
    "CountStats",
    "QualityHistogram",
    "TemplateLoadResult",
    "DatasetError",
    "scan_database",
    "attach_templates",
    "load_template_set",
    "ingest_nfiq_csv",
    "ingest_quality_csv",
    "minutiae_count_stats",
    "quality_histogram",
    "write_counts_csv",
    "save_manifest",
    "load_manifest",
]

QUALITY_LEVELS = ("poor", "fair", "good")
SENSOR_KINDS = ("optical", "capacitive", "thermal_sweep")
IMAGE_EXTENSIONS = (".tif", ".tiff", ".bmp", ".png")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class DbSpec:
    """Static description of one database release."""

    db_id: str
    sensor_kind: str
    image_width: int
    image_height: int
    dpi: int
    fingers: int = 100
    impressions_per_finger: int = 8

    @property
    def px_per_cm(self) -> int:
        return round(self.dpi / 2.54)


KNOWN_DB_SPECS = {
    spec.db_id: spec
    for spec in (
        DbSpec("FVC2002_DB1A", "optical", 388, 374, 500),
        DbSpec("FVC2002_DB3A", "capacitive", 300, 300, 500),
        DbSpec("FVC2004_DB1A", "optical", 640, 480, 500),
        DbSpec("FVC2004_DB3A", "thermal_sweep", 300, 480, 512),
    )
}


class ImageRef(NamedTuple):
    db_id: str
    finger_id: int
    impression_id: int


@dataclass(frozen=True)
class ManifestEntry:
    ref: ImageRef
    image_path: str | None = None
    template_path: str | None = None
    perceived_quality: str | None = None
    nfiq: int | None = None


@dataclass
class DatabaseManifest:
    db_id: str
    sensor_kind: str
    image_width: int
    image_height: int
    dpi: int
    fingers: int
    impressions_per_finger: int
    entries: list[ManifestEntry] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def px_per_cm(self) -> int:
        return round(self.dpi / 2.54)

    @property
    def complete(self) -> bool:
        return len(self.entries) == self.fingers * self.impressions_per_finger

    def refs(self) -> list[ImageRef]:
        return [e.ref for e in self.entries]

    def entry(self, ref: ImageRef) -> ManifestEntry:
        for e in self.entries:
            if e.ref == ref:
                return e
        raise KeyError(ref)

    def missing_refs(self) -> list[ImageRef]:
        present = {e.ref for e in self.entries}
        return [
            ImageRef(self.db_id, f, k)
            for f in range(1, self.fingers + 1)
            for k in range(1, self.impressions_per_finger + 1)
            if ImageRef(self.db_id, f, k) not in present
        ]


def empty_manifest(spec: DbSpec) -> DatabaseManifest:
    return DatabaseManifest(
        db_id=spec.db_id,
        sensor_kind=spec.sensor_kind,
        image_width=spec.image_width,
        image_height=spec.image_height,
        dpi=spec.dpi,
        fingers=spec.fingers,
        impressions_per_finger=spec.impressions_per_finger,
    )


def synthetic_manifest(spec: DbSpec) -> DatabaseManifest:
    """A complete manifest with no backing files (protocol-only uses)."""
    manifest = empty_manifest(spec)
    manifest.entries = [
        ManifestEntry(ref=ImageRef(spec.db_id, f, k))
        for f in range(1, spec.fingers + 1)
        for k in range(1, spec.impressions_per_finger + 1)
    ]
    return manifest


# ---------------------------------------------------------------------------
# Scanning


def _parse_image_name(path: Path, spec: DbSpec) -> ImageRef:
    parts = path.stem.split("_")
    if len(parts) != 2:
        raise DatasetError(f"{path.name}: expected <finger>_<impression>{path.suffix}")
    try:
        finger, impression = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise DatasetError(f"{path.name}: non-numeric finger/impression") from exc
    if not 1 <= finger <= spec.fingers:
        raise DatasetError(f"{path.name}: finger {finger} outside 1..{spec.fingers}")
    if not 1 <= impression <= spec.impressions_per_finger:
        raise DatasetError(
            f"{path.name}: impression {impression} outside 1..{spec.impressions_per_finger}"
        )
    return ImageRef(spec.db_id, finger, impression)


def scan_database(root: Path | str, spec: DbSpec) -> DatabaseManifest:
    """Build a manifest from a directory of ``<finger>_<impression>.<ext>`` images.

    Every discovered image must match the spec's pixel dimensions; mixed or
    wrong dimensions abort the scan. Missing impressions become manifest
    warnings rather than errors.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"database directory {root} does not exist")

    manifest = empty_manifest(spec)
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS)
    if not files:
        manifest.warnings.append(f"no image files found under {root}")
        return manifest

    found: dict[ImageRef, Path] = {}
    for path in files:
        ref = _parse_image_name(path, spec)
        if ref in found:
            raise DatasetError(f"{path.name}: duplicate of {found[ref].name}")
        with Image.open(path) as img:
            size = img.size
        if size != (spec.image_width, spec.image_height):
            raise DatasetError(
                f"{path.name}: {size[0]}x{size[1]} does not match the "
                f"{spec.db_id} spec {spec.image_width}x{spec.image_height}"
            )
        found[ref] = path

    manifest.entries = [
        ManifestEntry(ref=ref, image_path=str(found[ref]))
        for ref in sorted(found)
    ]
    for ref in manifest.missing_refs():
        manifest.warnings.append(f"missing impression {ref.finger_id}_{ref.impression_id}")
    return manifest


def attach_templates(manifest: DatabaseManifest, template_dir: Path | str) -> DatabaseManifest:
    """Fill entry template paths where ``<finger>_<impression>.iso-fmr`` exists."""
    template_dir = Path(template_dir)
    entries = []
    for e in manifest.entries:
        path = template_dir / f"{e.ref.finger_id}_{e.ref.impression_id}.iso-fmr"
        entries.append(replace(e, template_path=str(path)) if path.is_file() else e)
    return replace_entries(manifest, entries)


def replace_entries(manifest: DatabaseManifest, entries: list[ManifestEntry]) -> DatabaseManifest:
    return DatabaseManifest(
        db_id=manifest.db_id,
        sensor_kind=manifest.sensor_kind,
        image_width=manifest.image_width,
        image_height=manifest.image_height,
        dpi=manifest.dpi,
        fingers=manifest.fingers,
        impressions_per_finger=manifest.impressions_per_finger,
        entries=entries,
        warnings=list(manifest.warnings),
    )


# ---------------------------------------------------------------------------
# Template loading


@dataclass
class TemplateLoadResult:
    records: dict[ImageRef, MinutiaeRecord]
    missing: list[ImageRef]
    diagnostics: list[tuple[ImageRef, str]]
    violations: list[tuple[ImageRef, Violation]]

    @property
    def clean(self) -> bool:
        return not (self.missing or self.diagnostics or self.violations)


def load_template_set(manifest: DatabaseManifest, template_dir: Path | str) -> TemplateLoadResult:
    """Decode one template per manifest entry and validate it against the
    manifest's image dimensions.

    Decode failures become per-file diagnostics (with the codec's byte
    offset), not exceptions; absent files are reported as missing.
    """
    template_dir = Path(template_dir)
    result = TemplateLoadResult({}, [], [], [])
    for entry in manifest.entries:
        ref = entry.ref
        path = template_dir / f"{ref.finger_id}_{ref.impression_id}.iso-fmr"
        if not path.is_file():
            result.missing.append(ref)
            continue
        try:
            record = decode_record(path.read_bytes())
        except ValueError as exc:
            result.diagnostics.append((ref, f"{path.name}: {exc}"))
            continue
        if (record.image_width, record.image_height) != (manifest.image_width, manifest.image_height):
            result.violations.append(
                (ref, Violation("image_width", "dimension-mismatch",
                                f"template says {record.image_width}x{record.image_height}, "
                                f"manifest says {manifest.image_width}x{manifest.image_height}"))
            )
        for violation in validate_record(record):
            result.violations.append((ref, violation))
        result.records[ref] = record
    return result


# ---------------------------------------------------------------------------
# Label ingestion


def _ingest_labeled_csv(path: Path | str, column: str, parse):
    out: dict[ImageRef, object] = {}
    with open(path, newline="") as handle:
        for lineno, row in enumerate(csv.reader(handle), start=1):
            if not row or (lineno == 1 and row[:4] == ["db", "finger", "impression", column]):
                continue
            if len(row) != 4:
                raise DatasetError(f"line {lineno}: expected 4 columns db,finger,impression,{column}")
            db, finger, impression, value = (cell.strip() for cell in row)
            try:
                ref = ImageRef(db, int(finger), int(impression))
            except ValueError as exc:
                raise DatasetError(f"line {lineno}: bad finger/impression id") from exc
            if ref in out:
                raise DatasetError(f"line {lineno}: duplicate row for {db} {finger}_{impression}")
            out[ref] = parse(lineno, value)
    return out


def ingest_nfiq_csv(path: Path | str) -> dict[ImageRef, int]:
    """Read ``db,finger,impression,nfiq`` rows; NFIQ runs 1 (best) to 5 (worst)."""

    def parse(lineno: int, value: str) -> int:
        try:
            nfiq = int(value)
        except ValueError as exc:
            raise DatasetError(f"line {lineno}: NFIQ {value!r} is not an integer") from exc
        if not 1 <= nfiq <= 5:
            raise DatasetError(f"line {lineno}: NFIQ {nfiq} outside 1..5")
        return nfiq

    return _ingest_labeled_csv(path, "nfiq", parse)


def ingest_quality_csv(path: Path | str) -> dict[ImageRef, str]:
    """Read ``db,finger,impression,quality`` rows with poor/fair/good labels."""

    def parse(lineno: int, value: str) -> str:
        if value not in QUALITY_LEVELS:
            raise DatasetError(f"line {lineno}: quality {value!r} not in {QUALITY_LEVELS}")
        return value

    return _ingest_labeled_csv(path, "quality", parse)


# ---------------------------------------------------------------------------
# Statistics


@dataclass(frozen=True)
class CountStats:
    mean: float
    std: float
    min: int
    max: int


def minutiae_count_stats(records: Mapping[ImageRef, MinutiaeRecord] | Iterable[MinutiaeRecord]) -> CountStats:
    """Per-image minutiae count statistics (sample std, n-1 denominator)."""
    if isinstance(records, Mapping):
        records = records.values()
    counts = [sum(len(v.minutiae) for v in r.views) for r in records]
    if not counts:
        raise DatasetError("cannot compute count statistics of an empty record set")
    n = len(counts)
    mean = sum(counts) / n
    if n > 1:
        std = math.sqrt(sum((c - mean) ** 2 for c in counts) / (n - 1))
    else:
        std = 0.0
    return CountStats(mean=mean, std=std, min=min(counts), max=max(counts))


@dataclass(frozen=True)
class QualityHistogram:
    source: str
    buckets: dict
    unlabeled: int

    @property
    def labeled_total(self) -> int:
        return sum(self.buckets.values())

    def fraction(self, bucket) -> float:
        total = self.labeled_total
        return self.buckets.get(bucket, 0) / total if total else 0.0


def quality_histogram(manifest: DatabaseManifest, source: str = "perceived") -> QualityHistogram:
    """Bucket counts of perceived (poor/fair/good) or NFIQ (1..5) labels.

    Unlabeled entries are tallied separately; bucket counts always sum to
    the number of labeled entries.
    """
    if source == "perceived":
        buckets: dict = {level: 0 for level in QUALITY_LEVELS}
        key = lambda e: e.perceived_quality
    elif source == "nfiq":
        buckets = {level: 0 for level in range(1, 6)}
        key = lambda e: e.nfiq
    else:
        raise DatasetError(f"unknown histogram source {source!r}")

    unlabeled = 0
    for entry in manifest.entries:
        label = key(entry)
        if label is None:
            unlabeled += 1
        else:
            buckets[label] += 1
    return QualityHistogram(source=source, buckets=buckets, unlabeled=unlabeled)


def write_counts_csv(stats_by_label: Mapping[str, CountStats], path: Path | str) -> None:
    """Minutiae count table, one row per template set."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["scenario", "mean", "std", "min", "max"])
        for label, s in stats_by_label.items():
            writer.writerow([label, f"{s.mean:.1f}", f"{s.std:.1f}", s.min, s.max])


# ---------------------------------------------------------------------------
# JSON persistence


def save_manifest(manifest: DatabaseManifest, path: Path | str) -> None:
    doc = {
        "db_id": manifest.db_id,
        "sensor_kind": manifest.sensor_kind,
        "image_width": manifest.image_width,
        "image_height": manifest.image_height,
        "dpi": manifest.dpi,
        "fingers": manifest.fingers,
        "impressions_per_finger": manifest.impressions_per_finger,
        "warnings": manifest.warnings,
        "entries": [
            {
                "finger": e.ref.finger_id,
                "impression": e.ref.impression_id,
                "image_path": e.image_path,
                "template_path": e.template_path,
                "perceived_quality": e.perceived_quality,
                "nfiq": e.nfiq,
            }
            for e in manifest.entries
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_manifest(path: Path | str) -> DatabaseManifest:
    doc = json.loads(Path(path).read_text())
    manifest = DatabaseManifest(
        db_id=doc["db_id"],
        sensor_kind=doc["sensor_kind"],
        image_width=doc["image_width"],
        image_height=doc["image_height"],
        dpi=doc["dpi"],
        fingers=doc["fingers"],
        impressions_per_finger=doc["impressions_per_finger"],
        warnings=list(doc.get("warnings", [])),
    )
    for e in doc["entries"]:
        manifest.entries.append(
            ManifestEntry(
                ref=ImageRef(doc["db_id"], e["finger"], e["impression"]),
                image_path=e.get("image_path"),
                template_path=e.get("template_path"),
                perceived_quality=e.get("perceived_quality"),
                nfiq=e.get("nfiq"),
            )
        )
    seen = set()
    for entry in manifest.entries:
        if entry.ref in seen:
            raise DatasetError(f"manifest repeats entry {entry.ref}")
        seen.add(entry.ref)
    return manifest
