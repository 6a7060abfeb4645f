"""Build a minutiae template, serialize it, and look inside the bytes.

Run:  python3 demos/01_template_codec.py
"""

from minumark.codec import (
    FingerView,
    Minutia,
    MinutiaeRecord,
    SingularPoint,
    decode_record,
    encode_record,
    quantize_angle,
    record_to_text,
    validate_record,
)

# A small template for a 388x374 image at 500 DPI (197 px/cm): two ridge
# endings, one bifurcation, and the core of the ridge flow.
record = MinutiaeRecord(
    image_width=388,
    image_height=374,
    resolution_x=197,
    resolution_y=197,
    views=(
        FingerView(
            finger_position=1,
            finger_quality=80,
            minutiae=(
                Minutia("ending", 101, 211, quantize_angle(45.0), 80),
                Minutia("ending", 250, 190, quantize_angle(303.8), 50),
                Minutia("bifurcation", 177, 255, quantize_angle(90.0), 80),
            ),
            singular_points=(SingularPoint("core", 180, 190, quantize_angle(270.0)),),
        ),
    ),
)

print("validation violations:", validate_record(record) or "none")

data = encode_record(record)
print(f"\nencoded record: {len(data)} bytes "
      f"(24 header + 4 view + 6 per minutia + 2 ext length + singular block)")
for offset in range(0, len(data), 16):
    chunk = data[offset : offset + 16]
    print(f"  {offset:04x}  {chunk.hex(' ')}")

round_tripped = decode_record(data)
print("\ndecode(encode(record)) == record:", round_tripped == record)

print("\ntext form (lossless, diff-friendly):\n")
print(record_to_text(record))

# Angles are stored in 1.40625-degree units; quantization error is at most
# half a unit.
for degrees in (0.0, 45.0, 90.0, 303.8, 359.9):
    units = quantize_angle(degrees)
    print(f"{degrees:7.2f} deg -> unit {units:3d} -> {units * 1.40625:9.5f} deg")
