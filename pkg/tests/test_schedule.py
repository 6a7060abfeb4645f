import random

import pytest

from minumark.dataset import DbSpec, synthetic_manifest
from minumark.marking import (
    MarkingAssignment,
    ScheduleError,
    generate_marking_schedule,
    validate_schedule,
)


def manifest_for(fingers, impressions, db_id="S"):
    return synthetic_manifest(DbSpec(db_id, "optical", 300, 300, 500, fingers, impressions))


def test_paper_setup_100_fingers_8_impressions_4_subjects():
    manifest = manifest_for(100, 8)
    schedule = generate_marking_schedule(manifest, subjects=4, capacity=14)
    assert validate_schedule(manifest, schedule, subjects=4, capacity=14) == []

    by_subject = {}
    for a in schedule:
        by_subject.setdefault(a.subject_id, []).append(a)
    assert sorted(by_subject) == [1, 2, 3, 4]
    for subject, days in by_subject.items():
        assert sum(len(a.images) for a in days) == 200
        assert max(a.day_index for a in days) == 15  # ceil(200 / 14) work days
        # each subject sees exactly two impressions of every finger
        impressions = {}
        for a in days:
            for ref in a.images:
                impressions.setdefault(ref.finger_id, set()).add(ref.impression_id)
        assert all(len(v) == 2 for v in impressions.values())


def test_subject_partition_uses_offset_impressions():
    schedule = generate_marking_schedule(manifest_for(3, 8), subjects=4, capacity=3)
    subject_1 = {r.impression_id for a in schedule if a.subject_id == 1 for r in a.images}
    subject_3 = {r.impression_id for a in schedule if a.subject_id == 3 for r in a.images}
    assert subject_1 == {1, 5}
    assert subject_3 == {3, 7}


def test_tiny_instance_splits_same_finger_pairs_across_days():
    manifest = manifest_for(2, 4)
    schedule = generate_marking_schedule(manifest, subjects=2, capacity=2)
    assert validate_schedule(manifest, schedule, subjects=2, capacity=2) == []
    for a in schedule:
        assert len(a.images) <= 2
        fingers = [r.finger_id for r in a.images]
        assert len(fingers) == len(set(fingers))
    per_subject = {}
    for a in schedule:
        per_subject.setdefault(a.subject_id, 0)
        per_subject[a.subject_id] += len(a.images)
    assert per_subject == {1: 4, 2: 4}


def test_indivisible_impressions_rejected():
    with pytest.raises(ScheduleError, match="split evenly"):
        generate_marking_schedule(manifest_for(10, 8), subjects=3)


def test_incomplete_manifest_rejected():
    manifest = manifest_for(2, 2)
    del manifest.entries[0]
    with pytest.raises(ScheduleError, match="missing"):
        generate_marking_schedule(manifest, subjects=2)


def test_oversized_capacity_still_separates_same_finger_pairs():
    # capacity > F exercises the daily-fill clamp
    manifest = manifest_for(2, 4)
    schedule = generate_marking_schedule(manifest, subjects=2, capacity=50)
    assert validate_schedule(manifest, schedule, subjects=2, capacity=50) == []


def test_randomized_instances_all_valid():
    rng = random.Random(99)
    for _ in range(60):
        subjects = rng.randint(1, 8)
        impressions = subjects * rng.randint(1, 8 // subjects if subjects <= 8 else 1)
        if impressions > 8:
            impressions = subjects
        fingers = rng.randint(1, 8)
        capacity = rng.randint(1, 20)
        manifest = manifest_for(fingers, impressions)
        schedule = generate_marking_schedule(manifest, subjects=subjects, capacity=capacity)
        problems = validate_schedule(manifest, schedule, subjects=subjects, capacity=capacity)
        assert problems == [], (fingers, impressions, subjects, capacity, problems)


def test_validator_rejects_same_finger_same_day_mutation():
    manifest = manifest_for(4, 4)
    schedule = generate_marking_schedule(manifest, subjects=2, capacity=3)
    # Move one image of some finger into the day holding its sibling.
    by_subject_day = {(a.subject_id, a.day_index): a for a in schedule}
    donor = schedule[0]
    sibling_ref = None
    target = None
    for a in schedule:
        if a.subject_id == donor.subject_id and a.day_index != donor.day_index:
            for ref in a.images:
                if any(r.finger_id == ref.finger_id for r in donor.images):
                    sibling_ref, target = ref, a
                    break
        if sibling_ref:
            break
    assert sibling_ref is not None

    mutated = []
    for a in schedule:
        if a is donor:
            mutated.append(
                MarkingAssignment(a.subject_id, a.day_index, a.images + (sibling_ref,))
            )
        elif a is target:
            mutated.append(
                MarkingAssignment(
                    a.subject_id, a.day_index, tuple(r for r in a.images if r != sibling_ref)
                )
            )
        else:
            mutated.append(a)
    problems = validate_schedule(manifest, mutated, subjects=2, capacity=3)
    assert any("twice" in p for p in problems)


def test_validator_rejects_double_assignment():
    manifest = manifest_for(2, 2)
    schedule = generate_marking_schedule(manifest, subjects=2, capacity=2)
    duplicated = schedule + [schedule[0]]
    problems = validate_schedule(manifest, duplicated, subjects=2, capacity=2)
    assert any("assigned twice" in p for p in problems)


def test_validator_rejects_missing_coverage():
    manifest = manifest_for(2, 2)
    schedule = generate_marking_schedule(manifest, subjects=2, capacity=2)
    problems = validate_schedule(manifest, schedule[:-1], subjects=2, capacity=2)
    assert any("never assigned" in p for p in problems)
