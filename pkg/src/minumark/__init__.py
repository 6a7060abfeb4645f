"""Minutiae template toolkit: ISO-format codec, manual-marking workflow
service, reference matcher, and verification evaluation harness for
FVC-style fingerprint databases."""

from minumark.codec import (
    FingerView,
    Minutia,
    MinutiaeRecord,
    SingularPoint,
    decode_record,
    dequantize_angle,
    encode_record,
    quantize_angle,
    record_from_text,
    record_to_text,
    validate_record,
)
from minumark.dataset import (
    KNOWN_DB_SPECS,
    CountStats,
    DatabaseManifest,
    DbSpec,
    ImageRef,
    load_template_set,
    minutiae_count_stats,
    quality_histogram,
    scan_database,
)
from minumark.evaluation import (
    MatchPair,
    OperatingPoint,
    RocCurve,
    ScoreSet,
    binomial_ci,
    compute_roc,
    execute_protocol,
    filter_by_quality,
    gar_at_far,
    generate_match_pairs,
)
from minumark.matcher import (
    Alignment,
    MatcherParams,
    MatchScore,
    estimate_alignment,
    match_templates,
    pair_minutiae,
)

__version__ = "0.1.0"
