import random

import pytest

from minumark.codec import (
    FingerView,
    Minutia,
    MinutiaeRecord,
    SingularPoint,
    validate_record,
)

KINDS = ("ending", "bifurcation", "other")


def random_record(rng: random.Random) -> MinutiaeRecord:
    """A random record satisfying every codec invariant."""
    width = rng.randint(32, 1024)
    height = rng.randint(32, 1024)
    n_views = rng.choice([1, 1, 1, 2, 3])
    views = []
    for vn in range(n_views):
        minutiae = tuple(
            Minutia(
                kind=rng.choice(KINDS),
                x=rng.randrange(width),
                y=rng.randrange(height),
                angle_units=rng.randrange(256),
                quality=rng.randint(0, 100),
            )
            for _ in range(rng.randint(0, 80))
        )
        singular = tuple(
            SingularPoint(
                kind=rng.choice(("core", "delta")),
                x=rng.randrange(width),
                y=rng.randrange(height),
                angle_units=rng.choice([None, rng.randrange(256)]),
            )
            for _ in range(rng.randint(0, 3))
        )
        if rng.random() < 0.3:
            # Opaque foreign block: any type but the singular-point one.
            block_type = rng.choice([0x0001, 0x0003, 0x00FF])
            payload = bytes(rng.randrange(256) for _ in range(rng.randint(0, 12)))
            extended = block_type.to_bytes(2, "big") + len(payload).to_bytes(2, "big") + payload
        else:
            extended = b""
        views.append(
            FingerView(
                finger_position=rng.randint(0, 10),
                view_number=vn,
                impression_type=rng.randint(0, 15),
                finger_quality=rng.randint(0, 100),
                minutiae=minutiae,
                singular_points=singular,
                extended_bytes=extended,
            )
        )
    record = MinutiaeRecord(
        image_width=width,
        image_height=height,
        resolution_x=rng.choice([197, 202, 250]),
        resolution_y=rng.choice([197, 202, 250]),
        capture_equipment=rng.randint(0, 65535),
        views=tuple(views),
    )
    assert validate_record(record) == []
    return record


@pytest.fixture
def rng():
    return random.Random(0xF1D0)
