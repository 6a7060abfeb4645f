"""Seeded synthetic minutiae databases.

No licensed fingerprint imagery ships with this repository, so protocol
and matcher exercises run on generated data: a base template per finger,
rigid-transformed and jittered into impressions, optionally degraded with
minutia dropout and spurious insertions. Everything is driven by a
numpy Generator, so a fixed seed reproduces the database bit-for-bit.
"""

from __future__ import annotations

import math

import numpy as np

from minumark.codec import FingerView, Minutia, MinutiaeRecord, quantize_angle
from minumark.dataset import DatabaseManifest, DbSpec, ImageRef, synthetic_manifest

__all__ = [
    "synthetic_template",
    "perturbed_impression",
    "degrade_template",
    "synthetic_database",
]

MIN_SEPARATION = 12.0  # pixels between generated minutiae


def _place_points(rng: np.random.Generator, n: int, lo_x, hi_x, lo_y, hi_y) -> list[tuple[int, int]]:
    points: list[tuple[int, int]] = []
    attempts = 0
    while len(points) < n and attempts < 10000:
        attempts += 1
        x = int(rng.integers(lo_x, hi_x))
        y = int(rng.integers(lo_y, hi_y))
        if all((x - px) ** 2 + (y - py) ** 2 >= MIN_SEPARATION**2 for px, py in points):
            points.append((x, y))
    if len(points) < n:
        raise ValueError(f"could not place {n} separated minutiae in the given area")
    return points


def synthetic_template(
    rng: np.random.Generator,
    width: int = 300,
    height: int = 300,
    n_minutiae: int = 24,
    margin: int = 30,
) -> MinutiaeRecord:
    """A single-view record with well-separated random minutiae."""
    points = _place_points(rng, n_minutiae, margin, width - margin, margin, height - margin)
    minutiae = tuple(
        Minutia(
            kind="ending" if rng.random() < 0.6 else "bifurcation",
            x=x,
            y=y,
            angle_units=int(rng.integers(0, 256)),
            quality=int(rng.integers(40, 100)),
        )
        for x, y in points
    )
    return MinutiaeRecord(
        image_width=width,
        image_height=height,
        views=(FingerView(finger_position=1, finger_quality=80, minutiae=minutiae),),
    )


def _rigid(x: float, y: float, cx: float, cy: float, rot_deg: float, dx: float, dy: float):
    theta = math.radians(rot_deg)
    c, s = math.cos(theta), math.sin(theta)
    rx, ry = x - cx, y - cy
    return c * rx - s * ry + cx + dx, s * rx + c * ry + cy + dy


def perturbed_impression(
    rng: np.random.Generator,
    base: MinutiaeRecord,
    max_rotation: float = 12.0,
    max_translation: float = 15.0,
    jitter: float = 2.5,
    visibility_dropout: float = 0.08,
) -> MinutiaeRecord:
    """One capture of the base finger: a random rigid transform about the
    image center plus per-minutia positional jitter. Minutiae pushed out of
    the frame are lost, as they would be on a real sensor, and each minutia
    independently fails to show at all with the dropout probability."""
    view = base.views[0]
    w, h = base.image_width, base.image_height
    rot = float(rng.uniform(-max_rotation, max_rotation))
    dx = float(rng.uniform(-max_translation, max_translation))
    dy = float(rng.uniform(-max_translation, max_translation))

    moved = []
    for m in view.minutiae:
        visible = rng.random() >= visibility_dropout
        x, y = _rigid(m.x, m.y, w / 2.0, h / 2.0, rot, dx, dy)
        x += float(rng.normal(0.0, jitter))
        y += float(rng.normal(0.0, jitter))
        if not visible:
            continue
        xi, yi = int(round(x)), int(round(y))
        if not (0 <= xi < w and 0 <= yi < h):
            continue
        angle = (m.angle_units * 1.40625 + rot) % 360.0
        moved.append(
            Minutia(kind=m.kind, x=xi, y=yi, angle_units=quantize_angle(angle), quality=m.quality)
        )
    return MinutiaeRecord(
        image_width=w,
        image_height=h,
        resolution_x=base.resolution_x,
        resolution_y=base.resolution_y,
        views=(FingerView(finger_position=view.finger_position, finger_quality=view.finger_quality,
                          minutiae=tuple(moved)),),
    )


def degrade_template(
    rng: np.random.Generator, record: MinutiaeRecord, noise_fraction: float
) -> MinutiaeRecord:
    """Mimic a noisy automatic extractor: drop round(f*n) true minutiae and
    insert the same number of spurious ones at random in-frame positions."""
    if not 0.0 <= noise_fraction <= 1.0:
        raise ValueError("noise_fraction must be within [0, 1]")
    view = record.views[0]
    minutiae = list(view.minutiae)
    n_noise = round(noise_fraction * len(minutiae))

    if n_noise:
        keep = np.sort(rng.choice(len(minutiae), size=len(minutiae) - n_noise, replace=False))
        minutiae = [minutiae[int(k)] for k in keep]
    for _ in range(n_noise):
        minutiae.append(
            Minutia(
                kind="ending" if rng.random() < 0.5 else "bifurcation",
                x=int(rng.integers(0, record.image_width)),
                y=int(rng.integers(0, record.image_height)),
                angle_units=int(rng.integers(0, 256)),
                quality=int(rng.integers(20, 60)),
            )
        )
    return MinutiaeRecord(
        image_width=record.image_width,
        image_height=record.image_height,
        resolution_x=record.resolution_x,
        resolution_y=record.resolution_y,
        views=(FingerView(finger_position=view.finger_position, finger_quality=view.finger_quality,
                          minutiae=tuple(minutiae)),),
    )


def synthetic_database(
    seed: int,
    fingers: int = 10,
    impressions: int = 8,
    width: int = 300,
    height: int = 300,
    minutiae_range: tuple[int, int] = (18, 28),
    db_id: str = "SYNTH",
) -> tuple[DatabaseManifest, dict[ImageRef, MinutiaeRecord]]:
    """A complete manifest plus one template per impression.

    Impressions of a finger are perturbed captures of that finger's base
    template, so same-finger pairs really do overlap and cross-finger
    pairs do not.
    """
    rng = np.random.default_rng(seed)
    spec = DbSpec(db_id, "optical", width, height, dpi=500,
                  fingers=fingers, impressions_per_finger=impressions)
    manifest = synthetic_manifest(spec)
    templates: dict[ImageRef, MinutiaeRecord] = {}
    for finger in range(1, fingers + 1):
        n = int(rng.integers(minutiae_range[0], minutiae_range[1] + 1))
        base = synthetic_template(rng, width, height, n)
        for impression in range(1, impressions + 1):
            templates[ImageRef(db_id, finger, impression)] = perturbed_impression(rng, base)
    return manifest, templates
