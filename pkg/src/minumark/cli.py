"""Command-line front end tying the pipeline together for batch use and CI.

Exit codes: 0 success, 1 data error (bad templates, missing files,
protocol violations), 2 usage error. Every subcommand is a thin adapter
over the library modules; running the same inputs through the API yields
byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from minumark.codec import (
    CodecError,
    decode_record,
    encode_record,
    record_from_text,
    record_to_text,
    validate_record,
)
from minumark.dataset import (
    DatasetError,
    DbSpec,
    KNOWN_DB_SPECS,
    ingest_quality_csv,
    minutiae_count_stats,
    synthetic_manifest,
    write_counts_csv,
)
from minumark.evaluation import (
    BuiltinMatcher,
    EvalError,
    ExternalMatcher,
    ScenarioResult,
    emit_report,
    execute_protocol,
    filter_by_quality,
    generate_match_pairs,
    load_pairs_csv,
    load_scores_csv,
    restrict_scores,
    save_pairs_csv,
    save_scores_csv,
)
from minumark.marking import (
    MarkingError,
    MarkingService,
    ScheduleError,
    ServiceConfig,
    generate_marking_schedule,
    validate_schedule,
)
from minumark.matcher import MatcherError, MatcherParams

DATA_ERRORS = (CodecError, DatasetError, EvalError, MarkingError, MatcherError, ScheduleError, OSError)


# ---------------------------------------------------------------------------
# Subcommand implementations


def cmd_validate(args) -> int:
    valid = 0
    invalid = 0
    for name in args.files:
        path = Path(name)
        try:
            record = decode_record(path.read_bytes())
        except (CodecError, OSError) as exc:
            print(f"{path}: {exc}", file=sys.stderr)
            invalid += 1
            continue
        violations = validate_record(record, strict=args.strict)
        if violations:
            invalid += 1
            for violation in violations:
                print(f"{path}: {violation}", file=sys.stderr)
        else:
            valid += 1
    print(f"{valid} valid" + (f", {invalid} invalid" if invalid else ""))
    return 1 if invalid else 0


def cmd_convert(args) -> int:
    src, dst = Path(args.input), Path(args.output)
    if src.suffix == ".iso-fmr" and dst.suffix in (".txt", ".text"):
        dst.write_text(record_to_text(decode_record(src.read_bytes())))
    elif src.suffix in (".txt", ".text") and dst.suffix == ".iso-fmr":
        dst.write_bytes(encode_record(record_from_text(src.read_text())))
    else:
        print(f"error: cannot infer conversion {src.suffix} -> {dst.suffix}", file=sys.stderr)
        return 2
    return 0


def _load_template_dir(directory: Path):
    records = {}
    for path in sorted(directory.glob("*.iso-fmr")):
        records[path.stem] = decode_record(path.read_bytes())
    if not records:
        raise DatasetError(f"no .iso-fmr templates under {directory}")
    return records


def cmd_stats(args) -> int:
    stats = {}
    for item in args.templates:
        label, _, directory = item.partition("=")
        if not directory:
            label, directory = Path(item).name, item
        stats[label] = minutiae_count_stats(_load_template_dir(Path(directory)).values())
    write_counts_csv(stats, args.output)
    return 0


def _manifest_from_args(args):
    spec = KNOWN_DB_SPECS.get(args.db_id)
    if spec is None:
        spec = DbSpec(args.db_id, "optical", 10_000, 10_000, 500, args.fingers, args.impressions)
    else:
        spec = DbSpec(spec.db_id, spec.sensor_kind, spec.image_width, spec.image_height,
                      spec.dpi, args.fingers, args.impressions)
    return synthetic_manifest(spec)


def cmd_pairs(args) -> int:
    pairs = generate_match_pairs(_manifest_from_args(args))
    save_pairs_csv(pairs, args.output)
    genuine = sum(p.kind == "genuine" for p in pairs)
    print(f"{genuine} genuine + {len(pairs) - genuine} imposter = {len(pairs)} pairs")
    return 0


def _refs_to_templates(directory: Path, db_id: str):
    from minumark.dataset import ImageRef

    by_name = _load_template_dir(directory)
    templates = {}
    for name, record in by_name.items():
        finger, _, impression = name.partition("_")
        templates[ImageRef(db_id, int(finger), int(impression))] = record
    return templates


def cmd_eval(args) -> int:
    pairs = load_pairs_csv(args.pairs, db_id=args.db_id)
    if args.external_matcher:
        matcher = ExternalMatcher(tuple(args.external_matcher.split()))
    else:
        matcher = BuiltinMatcher(
            MatcherParams(
                distance_tolerance=args.distance_tolerance,
                angle_tolerance=args.angle_tolerance,
                min_overlap=args.min_overlap,
            )
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scenarios = [(args.label_a, Path(args.templates_a))]
    if args.templates_b:
        scenarios.append((args.label_b, Path(args.templates_b)))
    for label, directory in scenarios:
        templates = _refs_to_templates(directory, args.db_id)
        scores = execute_protocol(
            pairs, templates, matcher, workers=args.workers,
            provenance=(args.db_id, label, "external" if args.external_matcher else "builtin"),
        )
        save_scores_csv(scores, out / f"scores_{label}.csv")
        print(f"{label}: {len(scores.genuine_scores)} genuine / {len(scores.imposter_scores)} imposter scores")
    return 0


def cmd_report(args) -> int:
    results = []
    for item in args.scores:
        label, _, path = item.partition("=")
        if not path:
            label, path = Path(item).stem, item
        scores = load_scores_csv(path, db_id=args.db_id)
        results.append(ScenarioResult(label, scores))
        if args.quality_csv:
            labels = ingest_quality_csv(args.quality_csv)
            kept, fraction = filter_by_quality(scores.pairs, labels)
            results.append(ScenarioResult(f"{label} fair+good", restrict_scores(scores, kept)))
            print(f"{label}: {100 * fraction:.1f}% of images rejected as poor")
    far_targets = [float(t) for t in args.far.split(",")]
    written = emit_report(results, args.out, far_targets)
    for path in written:
        print(path)
    return 0


def cmd_schedule(args) -> int:
    manifest = _manifest_from_args(args)
    assignments = generate_marking_schedule(manifest, subjects=args.subjects, capacity=args.capacity)
    problems = validate_schedule(manifest, assignments, subjects=args.subjects, capacity=args.capacity)
    if problems:
        for problem in problems:
            print(f"error: {problem}", file=sys.stderr)
        return 1
    import csv as csv_module

    with open(args.output, "w", newline="") as handle:
        writer = csv_module.writer(handle)
        writer.writerow(["subject", "day", "finger", "impression"])
        for a in assignments:
            for ref in a.images:
                writer.writerow([a.subject_id, a.day_index, ref.finger_id, ref.impression_id])
    days = max(a.day_index for a in assignments)
    print(f"{args.subjects} subjects x {len(assignments) // args.subjects} assignments, {days} days")
    return 0


def _service_config(args) -> ServiceConfig:
    defaults = {
        "data_root": os.environ.get("MINUMARK_DATA_ROOT"),
        "port": int(os.environ.get("MINUMARK_PORT", 8000)),
        "capacity": int(os.environ.get("MINUMARK_CAPACITY", 14)),
        "subjects": os.environ.get("MINUMARK_SUBJECTS", "1,2,3,4"),
    }
    if getattr(args, "config", None):
        defaults.update(json.loads(Path(args.config).read_text()))
    data_root = args.data_root or defaults["data_root"]
    if not data_root:
        raise DatasetError("no data root: pass --data-root or set MINUMARK_DATA_ROOT")
    subjects = args.subjects or defaults["subjects"]
    if isinstance(subjects, str):
        subjects = tuple(int(s) for s in subjects.split(","))
    return ServiceConfig(
        data_root=Path(data_root),
        subjects=tuple(subjects),
        capacity=args.capacity or defaults["capacity"],
        port=args.port or defaults["port"],
    )


def cmd_serve(args) -> int:
    import uvicorn

    from minumark.marking.api import create_app

    config = _service_config(args)
    app = create_app(MarkingService(config))
    uvicorn.run(app, host=args.host, port=config.port)
    return 0


def cmd_export(args) -> int:
    config = _service_config(args)
    service = MarkingService(config)
    report = service.export_database(args.db, args.out)
    print(f"{report.exported}/{report.total} final templates exported (completeness {report.completeness:.5g})")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="minumark", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="decode and validate template files")
    p.add_argument("files", nargs="+")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("convert", help="convert between binary and text template forms")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("stats", help="minutiae count statistics of template sets")
    p.add_argument("--templates", action="append", required=True, metavar="LABEL=DIR")
    p.add_argument("-o", "--output", default="/dev/stdout")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("pairs", help="generate the ordered match-pair protocol")
    p.add_argument("--fingers", type=int, required=True)
    p.add_argument("--impressions", type=int, required=True)
    p.add_argument("--db-id", default="DB")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("eval", help="run the matching protocol over template sets")
    p.add_argument("--pairs", required=True)
    p.add_argument("--templates-a", required=True)
    p.add_argument("--label-a", default="a")
    p.add_argument("--templates-b")
    p.add_argument("--label-b", default="b")
    p.add_argument("--out", required=True)
    p.add_argument("--db-id", default="DB")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--external-matcher", help="command reading two template paths, printing one score")
    p.add_argument("--distance-tolerance", type=float, default=15.0)
    p.add_argument("--angle-tolerance", type=float, default=22.5)
    p.add_argument("--min-overlap", type=int, default=4)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="ROC/GAR report bundle from score CSVs")
    p.add_argument("--scores", action="append", required=True, metavar="LABEL=CSV")
    p.add_argument("--quality-csv", help="db,finger,impression,quality labels for rejection analysis")
    p.add_argument("--far", default="0.001,0.01,0.1")
    p.add_argument("--out", required=True)
    p.add_argument("--db-id", default="DB")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("schedule", help="generate and validate a marking schedule")
    p.add_argument("--fingers", type=int, required=True)
    p.add_argument("--impressions", type=int, required=True)
    p.add_argument("--subjects", type=int, default=4)
    p.add_argument("--capacity", type=int, default=14)
    p.add_argument("--db-id", default="DB")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("serve", help="run the marking service over HTTP")
    p.add_argument("--data-root")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int)
    p.add_argument("--capacity", type=int)
    p.add_argument("--subjects", help="comma-separated roster, e.g. 1,2,3,4")
    p.add_argument("--config", help="JSON config file")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("export", help="export final templates of a database")
    p.add_argument("--data-root")
    p.add_argument("--db", required=True)
    p.add_argument("--out")
    p.add_argument("--config")
    p.add_argument("--capacity", type=int)
    p.add_argument("--port", type=int)
    p.add_argument("--subjects")
    p.set_defaults(func=cmd_export)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
