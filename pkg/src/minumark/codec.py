"""Finger minutiae record codec (ISO/IEC 19794-2:2005 binary layout).

Byte layout, big-endian throughout:

* 24-byte header: magic ``0x464D5200`` ("FMR\\0"), version ``0x20323000``
  (" 20\\0"), record length (4), capture equipment (2), image width (2),
  image height (2), x resolution px/cm (2), y resolution px/cm (2),
  view count (1), reserved zero byte (1).
* Per view: finger position (1), view number high nibble + impression
  type low nibble (1), finger quality (1), minutiae count (1); then one
  6-byte entry per minutia: ``[kind:2 bits | x:14 bits]`` (2),
  ``[reserved:2 bits | y:14 bits]`` (2), angle units (1), quality (1);
  then extended-data length (2) followed by that many bytes.

Minutia kind codes in the top two bits of the x word: ending=01,
bifurcation=10, other=00 (the reserved code 11 decodes as "other").
Angles are stored as one byte, 1.40625 degrees per unit, counterclockwise.

The extended-data area is a sequence of blocks, each ``type (2) +
payload length (2) + payload``. Block type 0x0002 carries singular
points (cores/deltas): one count byte, then 6 bytes per point
(flags, x:2, y:2, angle units). Flag bit 0 selects core (0) or delta (1),
flag bit 1 marks the angle byte as meaningful. Unknown blocks are never
interpreted; their raw bytes survive a decode/encode round trip verbatim.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

__all__ = [
    "DEGREES_PER_UNIT",
    "MAGIC",
    "VERSION",
    "SINGULAR_BLOCK_TYPE",
    "Minutia",
    "SingularPoint",
    "FingerView",
    "MinutiaeRecord",
    "Violation",
    "CodecError",
    "EncodeError",
    "DecodeError",
    "TruncatedRecordError",
    "BadMagicError",
    "VersionMismatchError",
    "LengthMismatchError",
    "quantize_angle",
    "dequantize_angle",
    "encoded_length",
    "encode_record",
    "decode_record",
    "validate_record",
    "record_to_text",
    "record_from_text",
]

DEGREES_PER_UNIT = 1.40625  # 360 / 256, exact in binary floating point

MAGIC = b"FMR\x00"
VERSION = b" 20\x00"
SINGULAR_BLOCK_TYPE = 0x0002

HEADER_LEN = 24
VIEW_HEADER_LEN = 4
MINUTIA_LEN = 6
SINGULAR_POINT_LEN = 6

ENDING = "ending"
BIFURCATION = "bifurcation"
OTHER = "other"
CORE = "core"
DELTA = "delta"

_KIND_TO_BITS = {OTHER: 0b00, ENDING: 0b01, BIFURCATION: 0b10}
_BITS_TO_KIND = {0b00: OTHER, 0b01: ENDING, 0b10: BIFURCATION, 0b11: OTHER}


# ---------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True)
class Minutia:
    """One marked feature point: ridge ending, bifurcation, or other."""

    kind: str
    x: int
    y: int
    angle_units: int
    quality: int


@dataclass(frozen=True)
class SingularPoint:
    """Global ridge-flow landmark: core or delta, with optional direction."""

    kind: str
    x: int
    y: int
    angle_units: int | None = None


@dataclass(frozen=True)
class FingerView:
    finger_position: int = 0
    view_number: int = 0
    impression_type: int = 0
    finger_quality: int = 0
    minutiae: tuple[Minutia, ...] = ()
    singular_points: tuple[SingularPoint, ...] = ()
    extended_bytes: bytes = b""

    def __post_init__(self):
        # Normalize lists to tuples so views hash/compare by value.
        object.__setattr__(self, "minutiae", tuple(self.minutiae))
        object.__setattr__(self, "singular_points", tuple(self.singular_points))


@dataclass(frozen=True)
class MinutiaeRecord:
    image_width: int
    image_height: int
    resolution_x: int = 197
    resolution_y: int = 197
    capture_equipment: int = 0
    views: tuple[FingerView, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "views", tuple(self.views))


@dataclass(frozen=True)
class Violation:
    """One invariant breach found by :func:`validate_record`."""

    path: str
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message} [{self.code}]"


# ---------------------------------------------------------------------------
# Errors


class CodecError(ValueError):
    pass


class EncodeError(CodecError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        details = "; ".join(str(v) for v in violations)
        super().__init__(f"record fails validation: {details}")


class DecodeError(CodecError):
    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


class TruncatedRecordError(DecodeError):
    pass


class BadMagicError(DecodeError):
    pass


class VersionMismatchError(DecodeError):
    pass


class LengthMismatchError(DecodeError):
    pass


# ---------------------------------------------------------------------------
# Angle quantization


def quantize_angle(degrees: float) -> int:
    """Quantize an angle in [0, 360) degrees to one byte (1.40625 deg/unit).

    Rounds half-up; 359.9 wraps to unit 0. Raises ValueError outside the
    half-open input range.
    """
    if not 0.0 <= degrees < 360.0:
        raise ValueError(f"angle must satisfy 0 <= degrees < 360, got {degrees!r}")
    return int(degrees / DEGREES_PER_UNIT + 0.5) % 256


def dequantize_angle(angle_units: int) -> float:
    """Map a one-byte angle back to degrees (exact, no rounding)."""
    if not 0 <= angle_units <= 255:
        raise ValueError(f"angle_units must be in 0..255, got {angle_units!r}")
    return angle_units * DEGREES_PER_UNIT


# ---------------------------------------------------------------------------
# Validation


def _check_int(value, lo: int, hi: int) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and lo <= value <= hi


def _singular_block_bytes(points: tuple[SingularPoint, ...]) -> bytes:
    payload = bytearray([len(points)])
    for p in points:
        flags = 0x01 if p.kind == DELTA else 0x00
        angle = 0
        if p.angle_units is not None:
            flags |= 0x02
            angle = p.angle_units
        payload += struct.pack(">BHHB", flags, p.x, p.y, angle)
    return struct.pack(">HH", SINGULAR_BLOCK_TYPE, len(payload)) + bytes(payload)


def _parse_leading_singular_block(area: bytes) -> tuple[tuple[SingularPoint, ...], bytes] | None:
    """Split a leading well-formed 0x0002 block off an extended-data area.

    Returns None when the area does not begin with one; the caller then
    keeps the whole area opaque.
    """
    if len(area) < 4:
        return None
    block_type, block_len = struct.unpack(">HH", area[:4])
    if block_type != SINGULAR_BLOCK_TYPE or len(area) < 4 + block_len:
        return None
    payload = area[4 : 4 + block_len]
    if len(payload) < 1:
        return None
    count = payload[0]
    if len(payload) != 1 + count * SINGULAR_POINT_LEN:
        return None
    points = []
    for k in range(count):
        flags, x, y, angle = struct.unpack_from(">BHHB", payload, 1 + k * SINGULAR_POINT_LEN)
        points.append(
            SingularPoint(
                kind=DELTA if flags & 0x01 else CORE,
                x=x,
                y=y,
                angle_units=angle if flags & 0x02 else None,
            )
        )
    return tuple(points), area[4 + block_len :]


def _extended_area_bytes(view: FingerView) -> bytes:
    area = b""
    if view.singular_points:
        area += _singular_block_bytes(view.singular_points)
    area += view.extended_bytes
    return area


def validate_record(record: MinutiaeRecord, strict: bool = False) -> list[Violation]:
    """Collect every invariant breach in a record; empty list means valid.

    Strict mode additionally requires minutia quality > 0 and a known
    (nonzero) finger position. Violations are data, never exceptions.
    """
    out: list[Violation] = []

    def bad(path, code, message):
        out.append(Violation(path, code, message))

    if not _check_int(record.image_width, 1, 65535):
        bad("image_width", "image-dimensions", f"image_width {record.image_width!r} outside 1..65535")
    if not _check_int(record.image_height, 1, 65535):
        bad("image_height", "image-dimensions", f"image_height {record.image_height!r} outside 1..65535")
    for name in ("resolution_x", "resolution_y"):
        if not _check_int(getattr(record, name), 1, 65535):
            bad(name, "resolution-range", f"{name} {getattr(record, name)!r} outside 1..65535")
    if not _check_int(record.capture_equipment, 0, 65535):
        bad("capture_equipment", "field-range", f"capture_equipment {record.capture_equipment!r} outside 0..65535")
    if len(record.views) > 255:
        bad("views", "view-count", f"{len(record.views)} views exceed the one-byte count field")

    seen_view_numbers: set[int] = set()
    for vi, view in enumerate(record.views):
        vp = f"views[{vi}]"
        if not _check_int(view.finger_position, 0, 10):
            bad(f"{vp}.finger_position", "finger-position-range", f"finger_position {view.finger_position!r} outside 0..10")
        if not _check_int(view.view_number, 0, 15):
            bad(f"{vp}.view_number", "view-number-range", f"view_number {view.view_number!r} outside 0..15")
        elif view.view_number in seen_view_numbers:
            bad(f"{vp}.view_number", "view-number-duplicate", f"view_number {view.view_number} repeats within the record")
        else:
            seen_view_numbers.add(view.view_number)
        if not _check_int(view.impression_type, 0, 15):
            bad(f"{vp}.impression_type", "impression-type-range", f"impression_type {view.impression_type!r} outside 0..15")
        if not _check_int(view.finger_quality, 0, 100):
            bad(f"{vp}.finger_quality", "quality-range", f"finger_quality {view.finger_quality!r} outside 0..100")
        if len(view.minutiae) > 255:
            bad(f"{vp}.minutiae", "minutiae-count", f"{len(view.minutiae)} minutiae exceed the one-byte count field")
        if strict and view.finger_position == 0:
            bad(f"{vp}.finger_position", "finger-position-unknown", "strict mode requires a known finger position")

        for mi, m in enumerate(view.minutiae):
            mp = f"{vp}.minutiae[{mi}]"
            if m.kind not in _KIND_TO_BITS:
                bad(f"{mp}.kind", "kind-unknown", f"kind {m.kind!r} is not ending/bifurcation/other")
            for coord, bound, bound_name in (("x", record.image_width, "image_width"), ("y", record.image_height, "image_height")):
                value = getattr(m, coord)
                if not _check_int(value, 0, 16383):
                    bad(f"{mp}.{coord}", "coordinate-overflow", f"{coord} {value!r} does not fit in 14 bits (0..16383)")
                elif _check_int(bound, 1, 65535) and value >= bound:
                    bad(f"{mp}.{coord}", "coordinate-out-of-bounds", f"{coord} {value} not below {bound_name} {bound}")
            if not _check_int(m.angle_units, 0, 255):
                bad(f"{mp}.angle_units", "angle-range", f"angle_units {m.angle_units!r} outside 0..255")
            if not _check_int(m.quality, 0, 100):
                bad(f"{mp}.quality", "quality-range", f"quality {m.quality!r} outside 0..100")
            elif strict and m.quality == 0:
                bad(f"{mp}.quality", "quality-zero", "strict mode requires quality > 0")

        if len(view.singular_points) > 255:
            bad(f"{vp}.singular_points", "singular-count", f"{len(view.singular_points)} singular points exceed the one-byte count field")
        for si, p in enumerate(view.singular_points):
            sp = f"{vp}.singular_points[{si}]"
            if p.kind not in (CORE, DELTA):
                bad(f"{sp}.kind", "kind-unknown", f"kind {p.kind!r} is not core/delta")
            for coord, bound, bound_name in (("x", record.image_width, "image_width"), ("y", record.image_height, "image_height")):
                value = getattr(p, coord)
                if not _check_int(value, 0, 65535):
                    bad(f"{sp}.{coord}", "coordinate-overflow", f"{coord} {value!r} outside 0..65535")
                elif _check_int(bound, 1, 65535) and value >= bound:
                    bad(f"{sp}.{coord}", "coordinate-out-of-bounds", f"{coord} {value} not below {bound_name} {bound}")
            if p.angle_units is not None and not _check_int(p.angle_units, 0, 255):
                bad(f"{sp}.angle_units", "angle-range", f"angle_units {p.angle_units!r} outside 0..255")

        if _parse_leading_singular_block(view.extended_bytes) is not None:
            # Such a payload would be re-interpreted as singular points on
            # the next decode, breaking round-trip identity.
            bad(f"{vp}.extended_bytes", "extended-leading-singular-block",
                "opaque extension payload must not begin with a singular-point block")
        area_len = len(_extended_area_bytes(view))
        if area_len > 65535:
            bad(f"{vp}.extended_bytes", "extended-length", f"extended data area of {area_len} bytes exceeds the two-byte length field")

    return out


# ---------------------------------------------------------------------------
# Encoding


def encoded_length(record: MinutiaeRecord) -> int:
    """Byte length :func:`encode_record` will emit for this record."""
    total = HEADER_LEN
    for view in record.views:
        total += VIEW_HEADER_LEN + MINUTIA_LEN * len(view.minutiae) + 2
        total += len(_extended_area_bytes(view))
    return total


def encode_record(record: MinutiaeRecord) -> bytes:
    """Serialize a validated record to its binary form.

    Raises EncodeError carrying the field-path violation list when the
    record breaks any invariant.
    """
    violations = validate_record(record)
    if violations:
        raise EncodeError(violations)

    out = bytearray()
    out += MAGIC
    out += VERSION
    out += struct.pack(">I", encoded_length(record))
    out += struct.pack(">HHHHH", record.capture_equipment, record.image_width,
                       record.image_height, record.resolution_x, record.resolution_y)
    out += struct.pack(">BB", len(record.views), 0)

    for view in record.views:
        out += struct.pack(
            ">BBBB",
            view.finger_position,
            ((view.view_number & 0x0F) << 4) | (view.impression_type & 0x0F),
            view.finger_quality,
            len(view.minutiae),
        )
        for m in view.minutiae:
            out += struct.pack(
                ">HHBB",
                (_KIND_TO_BITS[m.kind] << 14) | m.x,
                m.y,
                m.angle_units,
                m.quality,
            )
        area = _extended_area_bytes(view)
        out += struct.pack(">H", len(area))
        out += area

    return bytes(out)


# ---------------------------------------------------------------------------
# Decoding


class _Reader:
    """Cursor over the declared record extent; refuses to read past it."""

    def __init__(self, data: bytes, limit: int):
        self.data = data
        self.limit = limit
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > self.limit:
            raise TruncatedRecordError(f"record ends before {what}", self.pos)
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_record(data: bytes) -> MinutiaeRecord:
    """Parse binary bytes into a record; never reads past the declared length.

    Each malformation raises a distinct DecodeError subclass carrying the
    byte offset where parsing stopped.
    """
    if len(data) < HEADER_LEN:
        raise TruncatedRecordError(f"{len(data)} bytes is shorter than the {HEADER_LEN}-byte header", len(data))
    if data[0:4] != MAGIC:
        raise BadMagicError(f"magic {data[0:4]!r} != {MAGIC!r}", 0)
    if data[4:8] != VERSION:
        raise VersionMismatchError(f"version {data[4:8]!r} != {VERSION!r}", 4)
    (declared_length,) = struct.unpack(">I", data[8:12])
    if declared_length > len(data):
        raise TruncatedRecordError(f"declared length {declared_length} exceeds the {len(data)} bytes supplied", 8)
    if declared_length < len(data):
        raise LengthMismatchError(f"declared length {declared_length} leaves {len(data) - declared_length} trailing bytes", 8)

    reader = _Reader(data, declared_length)
    reader.pos = 12
    capture_equipment, width, height, res_x, res_y = reader.unpack(">HHHHH", "header fields")
    view_count, _reserved = reader.unpack(">BB", "view count")

    views = []
    for vi in range(view_count):
        finger_position, packed, finger_quality, n_minutiae = reader.unpack(">BBBB", f"view {vi} header")
        minutiae = []
        for mi in range(n_minutiae):
            x_word, y_word, angle, quality = reader.unpack(">HHBB", f"view {vi} minutia {mi}")
            minutiae.append(
                Minutia(
                    kind=_BITS_TO_KIND[x_word >> 14],
                    x=x_word & 0x3FFF,
                    y=y_word & 0x3FFF,
                    angle_units=angle,
                    quality=quality,
                )
            )
        (ext_len,) = reader.unpack(">H", f"view {vi} extended-data length")
        area = reader.take(ext_len, f"view {vi} extended data")
        parsed = _parse_leading_singular_block(area)
        if parsed is not None:
            singular_points, extended_bytes = parsed
        else:
            singular_points, extended_bytes = (), area
        views.append(
            FingerView(
                finger_position=finger_position,
                view_number=packed >> 4,
                impression_type=packed & 0x0F,
                finger_quality=finger_quality,
                minutiae=tuple(minutiae),
                singular_points=singular_points,
                extended_bytes=extended_bytes,
            )
        )

    if reader.pos != declared_length:
        raise LengthMismatchError(
            f"{declared_length - reader.pos} undeclared bytes between the last view and the record end", reader.pos
        )

    return MinutiaeRecord(
        image_width=width,
        image_height=height,
        resolution_x=res_x,
        resolution_y=res_y,
        capture_equipment=capture_equipment,
        views=tuple(views),
    )


# ---------------------------------------------------------------------------
# Text form (for diffs and fixtures)


def record_to_text(record: MinutiaeRecord) -> str:
    """Render a record in the line-oriented lossless text form.

    Minutia lines are ``kind,x,y,angle_deg,quality`` with the angle in
    exact dequantized degrees, so the byte-identical record parses back.
    """
    lines = ["[record]"]
    for name in ("capture_equipment", "image_width", "image_height", "resolution_x", "resolution_y"):
        lines.append(f"{name}={getattr(record, name)}")
    for view in record.views:
        lines.append("")
        lines.append("[view]")
        for name in ("finger_position", "view_number", "impression_type", "finger_quality"):
            lines.append(f"{name}={getattr(view, name)}")
        lines.append("[minutiae]")
        for m in view.minutiae:
            lines.append(f"{m.kind},{m.x},{m.y},{dequantize_angle(m.angle_units)!r},{m.quality}")
        if view.singular_points:
            lines.append("[singular_points]")
            for p in view.singular_points:
                angle = "" if p.angle_units is None else repr(dequantize_angle(p.angle_units))
                lines.append(f"{p.kind},{p.x},{p.y},{angle}")
        if view.extended_bytes:
            lines.append("[extended]")
            lines.append(f"hex:{view.extended_bytes.hex()}")
    return "\n".join(lines) + "\n"


def record_from_text(text: str) -> MinutiaeRecord:
    """Parse the text form back into a record."""
    record_fields: dict[str, int] = {}
    views: list[FingerView] = []
    current: dict | None = None
    section = None

    def flush():
        if current is not None:
            views.append(
                FingerView(
                    finger_position=current["finger_position"],
                    view_number=current["view_number"],
                    impression_type=current["impression_type"],
                    finger_quality=current["finger_quality"],
                    minutiae=tuple(current["minutiae"]),
                    singular_points=tuple(current["singular_points"]),
                    extended_bytes=current["extended"],
                )
            )

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if line == "[view]":
                flush()
                current = {"finger_position": 0, "view_number": 0, "impression_type": 0,
                           "finger_quality": 0, "minutiae": [], "singular_points": [], "extended": b""}
            elif line not in ("[record]", "[minutiae]", "[singular_points]", "[extended]"):
                raise CodecError(f"line {lineno}: unknown section {line}")
            section = line
            continue
        if section == "[record]":
            key, _, value = line.partition("=")
            record_fields[key.strip()] = int(value)
        elif current is None:
            raise CodecError(f"line {lineno}: {section} content before any [view] header")
        elif section == "[view]":
            key, _, value = line.partition("=")
            current[key.strip()] = int(value)
        elif section == "[minutiae]":
            kind, x, y, angle_deg, quality = line.split(",")
            current["minutiae"].append(
                Minutia(kind=kind, x=int(x), y=int(y),
                        angle_units=quantize_angle(float(angle_deg)), quality=int(quality))
            )
        elif section == "[singular_points]":
            kind, x, y, angle_deg = line.split(",")
            current["singular_points"].append(
                SingularPoint(kind=kind, x=int(x), y=int(y),
                              angle_units=None if angle_deg == "" else quantize_angle(float(angle_deg)))
            )
        elif section == "[extended]":
            if not line.startswith("hex:"):
                raise CodecError(f"line {lineno}: extended payload must be 'hex:...'")
            current["extended"] = bytes.fromhex(line[4:])
        else:
            raise CodecError(f"line {lineno}: content before any section header")
    flush()

    try:
        return MinutiaeRecord(
            image_width=record_fields["image_width"],
            image_height=record_fields["image_height"],
            resolution_x=record_fields.get("resolution_x", 197),
            resolution_y=record_fields.get("resolution_y", 197),
            capture_equipment=record_fields.get("capture_equipment", 0),
            views=tuple(views),
        )
    except KeyError as exc:
        raise CodecError(f"text form is missing record field {exc}") from exc


def with_quality_mapping(view: FingerView, perceived: str) -> FingerView:
    """Stamp a view's finger quality from a poor/fair/good label (20/50/80)."""
    return replace(view, finger_quality=PERCEIVED_QUALITY_BYTES[perceived])


PERCEIVED_QUALITY_BYTES = {"poor": 20, "fair": 50, "good": 80}
