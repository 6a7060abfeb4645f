"""Work scheduling for the manual labeling campaign.

The database of F fingers x K impressions splits into disjoint per-subject
sets: subject s (1-based, S subjects total) takes impressions
{s, s+S, s+2S, ...} of every finger, so each subject marks F*K/S images and
sees K/S impressions of each finger. Within a subject, days fill finger by
finger through one impression block before the next block starts, which
keeps the two (or more) impressions of any finger on different days as
long as one day never spans a whole block - the daily fill is capped at
min(capacity, F) to guarantee that.
"""

from __future__ import annotations

from dataclasses import dataclass

from minumark.dataset import DatabaseManifest, ImageRef

__all__ = ["MarkingAssignment", "ScheduleError", "generate_marking_schedule", "validate_schedule"]


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class MarkingAssignment:
    """One subject's image list for one work day."""

    subject_id: int
    day_index: int
    images: tuple[ImageRef, ...]

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))


def generate_marking_schedule(
    manifest: DatabaseManifest, subjects: int, capacity: int = 14
) -> list[MarkingAssignment]:
    """Deterministic assignment of every image to a (subject, day) slot."""
    fingers = manifest.fingers
    impressions = manifest.impressions_per_finger
    if subjects < 1:
        raise ScheduleError("need at least one subject")
    if capacity < 1:
        raise ScheduleError("daily capacity must be at least 1")
    if impressions % subjects != 0:
        raise ScheduleError(
            f"{impressions} impressions per finger cannot be split evenly among {subjects} subjects"
        )
    missing = manifest.missing_refs()
    if missing:
        raise ScheduleError(f"manifest is missing {len(missing)} impressions; scheduling needs the full database")

    per_day = min(capacity, fingers)
    blocks = impressions // subjects
    out: list[MarkingAssignment] = []
    for subject in range(1, subjects + 1):
        ordered = [
            ImageRef(manifest.db_id, finger, subject + block * subjects)
            for block in range(blocks)
            for finger in range(1, fingers + 1)
        ]
        for day, start in enumerate(range(0, len(ordered), per_day), start=1):
            out.append(
                MarkingAssignment(
                    subject_id=subject,
                    day_index=day,
                    images=tuple(ordered[start : start + per_day]),
                )
            )
    return out


def validate_schedule(
    manifest: DatabaseManifest,
    assignments: list[MarkingAssignment],
    subjects: int,
    capacity: int,
) -> list[str]:
    """Independent invariant checker; empty list means the schedule is valid.

    Recomputes everything from the assignment list alone: disjoint cover of
    the database, per-subject share, per-finger impression share, the
    same-finger-day separation, and the daily load cap.
    """
    problems: list[str] = []
    fingers = manifest.fingers
    impressions = manifest.impressions_per_finger

    seen: dict[ImageRef, tuple[int, int]] = {}
    for a in assignments:
        if not 1 <= a.subject_id <= subjects:
            problems.append(f"subject {a.subject_id} outside the roster 1..{subjects}")
        if len(a.images) > capacity:
            problems.append(
                f"subject {a.subject_id} day {a.day_index} holds {len(a.images)} images, over capacity {capacity}"
            )
        day_fingers: set[int] = set()
        for ref in a.images:
            if ref in seen:
                problems.append(f"image {ref.finger_id}_{ref.impression_id} assigned twice")
            seen[ref] = (a.subject_id, a.day_index)
            if ref.finger_id in day_fingers:
                problems.append(
                    f"subject {a.subject_id} day {a.day_index} sees finger {ref.finger_id} twice"
                )
            day_fingers.add(ref.finger_id)

    expected = {ref for ref in manifest.refs()}
    unassigned = expected - seen.keys()
    if unassigned:
        problems.append(f"{len(unassigned)} database images never assigned")
    foreign = seen.keys() - expected
    if foreign:
        problems.append(f"{len(foreign)} assigned images are not in the manifest")

    share = fingers * impressions // subjects if subjects else 0
    per_subject: dict[int, list[ImageRef]] = {}
    for ref, (subject, _) in seen.items():
        per_subject.setdefault(subject, []).append(ref)
    for subject, refs in sorted(per_subject.items()):
        if len(refs) != share:
            problems.append(f"subject {subject} holds {len(refs)} images, expected {share}")
        by_finger: dict[int, int] = {}
        for ref in refs:
            by_finger[ref.finger_id] = by_finger.get(ref.finger_id, 0) + 1
        want = impressions // subjects if subjects else 0
        for finger in range(1, fingers + 1):
            if by_finger.get(finger, 0) != want:
                problems.append(
                    f"subject {subject} has {by_finger.get(finger, 0)} impressions of finger {finger}, expected {want}"
                )

    return problems
