import csv
import os
import stat

import pytest
from PIL import Image

from minumark.cli import main
from minumark.codec import decode_record, encode_record
from minumark.dataset import scan_database, DbSpec, write_counts_csv, minutiae_count_stats
from minumark.evaluation import (
    execute_protocol,
    generate_match_pairs,
    load_pairs_csv,
    save_scores_csv,
)
from minumark.marking import MarkingService, ServiceConfig
from minumark.synthetic import synthetic_database


@pytest.fixture(scope="module")
def synth(tmp_path_factory):
    """Synthetic 3x2 database written out as template files."""
    root = tmp_path_factory.mktemp("synth")
    manifest, templates = synthetic_database(seed=13, fingers=3, impressions=2, minutiae_range=(10, 14))
    template_dir = root / "templates"
    template_dir.mkdir()
    for ref, record in templates.items():
        (template_dir / f"{ref.finger_id}_{ref.impression_id}.iso-fmr").write_bytes(encode_record(record))
    return manifest, templates, template_dir


def test_validate_ok_corpus(synth, capsys):
    _, _, template_dir = synth
    files = sorted(str(p) for p in template_dir.glob("*.iso-fmr"))
    assert main(["validate", *files]) == 0
    assert capsys.readouterr().out.strip() == "6 valid"


def test_validate_corrupt_file(synth, tmp_path, capsys):
    bad = tmp_path / "bad.iso-fmr"
    bad.write_bytes(b"junk")
    assert main(["validate", str(bad)]) == 1
    captured = capsys.readouterr()
    assert "0 valid, 1 invalid" in captured.out
    assert "shorter than the 24-byte header" in captured.err


def test_convert_round_trip(synth, tmp_path):
    _, _, template_dir = synth
    source = next(iter(sorted(template_dir.glob("*.iso-fmr"))))
    text_path = tmp_path / "t.txt"
    back_path = tmp_path / "back.iso-fmr"
    assert main(["convert", str(source), str(text_path)]) == 0
    assert main(["convert", str(text_path), str(back_path)]) == 0
    assert back_path.read_bytes() == source.read_bytes()


def test_convert_unknown_suffixes_is_usage_error(tmp_path, capsys):
    (tmp_path / "a.bin").write_bytes(b"")
    assert main(["convert", str(tmp_path / "a.bin"), str(tmp_path / "b.bin")]) == 2


def test_stats_matches_direct_module_call(synth, tmp_path):
    _, templates, template_dir = synth
    out_cli = tmp_path / "cli.csv"
    assert main(["stats", "--templates", f"synth={template_dir}", "-o", str(out_cli)]) == 0

    out_direct = tmp_path / "direct.csv"
    write_counts_csv({"synth": minutiae_count_stats(templates)}, out_direct)
    assert out_cli.read_bytes() == out_direct.read_bytes()


def test_pairs_row_count_at_paper_scale(tmp_path, capsys):
    out = tmp_path / "pairs.csv"
    assert main(["pairs", "--fingers", "100", "--impressions", "8", "-o", str(out)]) == 0
    assert "5600 genuine + 633600 imposter" in capsys.readouterr().out
    with open(out) as handle:
        rows = sum(1 for _ in handle)
    assert rows == 639_200 + 1  # header + data


def test_eval_two_scenarios_and_report(synth, tmp_path, capsys):
    manifest, templates, template_dir = synth
    pairs_csv = tmp_path / "pairs.csv"
    assert main(["pairs", "--fingers", "3", "--impressions", "2", "--db-id", "SYNTH", "-o", str(pairs_csv)]) == 0

    out = tmp_path / "scores"
    assert (
        main(
            [
                "eval",
                "--pairs", str(pairs_csv),
                "--templates-a", str(template_dir),
                "--label-a", "manual",
                "--templates-b", str(template_dir),
                "--label-b", "again",
                "--out", str(out),
                "--db-id", "SYNTH",
            ]
        )
        == 0
    )
    manual = (out / "scores_manual.csv").read_bytes()
    again = (out / "scores_again.csv").read_bytes()
    assert manual == again  # identical templates over identical pairs

    # thin-adapter check: CLI output == direct module calls, byte for byte
    pairs = load_pairs_csv(pairs_csv, db_id="SYNTH")
    direct = execute_protocol(pairs, templates, provenance=("SYNTH", "manual", "builtin"))
    direct_path = tmp_path / "direct.csv"
    save_scores_csv(direct, direct_path)
    assert direct_path.read_bytes() == manual

    # report over the scores, with a quality file driving the rejection rerun
    quality_csv = tmp_path / "quality.csv"
    with open(quality_csv, "w", newline="") as handle:
        writer = csv.writer(handle)
        for ref in manifest.refs():
            label = "poor" if (ref.finger_id, ref.impression_id) == (1, 1) else "good"
            writer.writerow(["SYNTH", ref.finger_id, ref.impression_id, label])

    report_dir = tmp_path / "report"
    assert (
        main(
            [
                "report",
                "--scores", f"manual={out / 'scores_manual.csv'}",
                "--quality-csv", str(quality_csv),
                "--out", str(report_dir),
                "--db-id", "SYNTH",
            ]
        )
        == 0
    )
    lines = (report_dir / "gar_table.csv").read_text().splitlines()
    assert lines[1].startswith("manual,")
    assert lines[2].startswith("manual fair+good,")
    assert (report_dir / "roc_manual.csv").exists()
    assert (report_dir / "roc_manual_fair_good.csv").exists()
    assert "16.7% of images rejected" in capsys.readouterr().out


def test_eval_external_matcher(synth, tmp_path):
    _, _, template_dir = synth
    pairs_csv = tmp_path / "pairs.csv"
    main(["pairs", "--fingers", "3", "--impressions", "2", "--db-id", "SYNTH", "-o", str(pairs_csv)])

    stub = tmp_path / "stub_matcher.sh"
    stub.write_text("#!/bin/sh\necho 0.25\n")
    stub.chmod(stub.stat().st_mode | stat.S_IEXEC)

    out = tmp_path / "ext"
    assert (
        main(
            [
                "eval",
                "--pairs", str(pairs_csv),
                "--templates-a", str(template_dir),
                "--label-a", "ext",
                "--out", str(out),
                "--db-id", "SYNTH",
                "--external-matcher", str(stub),
            ]
        )
        == 0
    )
    rows = (out / "scores_ext.csv").read_text().splitlines()[1:]
    assert len(rows) == 30
    assert all(row.endswith("0.25") for row in rows)


def test_schedule_csv(tmp_path, capsys):
    out = tmp_path / "schedule.csv"
    assert main(["schedule", "--fingers", "100", "--impressions", "8", "--subjects", "4",
                 "--capacity", "14", "-o", str(out)]) == 0
    assert "15 days" in capsys.readouterr().out
    with open(out) as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 800
    assert max(int(r["day"]) for r in rows) == 15


def test_schedule_indivisible_is_data_error(tmp_path, capsys):
    assert main(["schedule", "--fingers", "10", "--impressions", "8", "--subjects", "3",
                 "-o", str(tmp_path / "x.csv")]) == 1
    assert "split evenly" in capsys.readouterr().err


def test_export_cli(tmp_path, capsys):
    image_dir = tmp_path / "images"
    image_dir.mkdir()
    spec = DbSpec("LAB", "optical", 64, 64, 500, fingers=2, impressions_per_finger=4)
    for f in (1, 2):
        for k in (1, 2, 3, 4):
            Image.new("L", (64, 64)).save(image_dir / f"{f}_{k}.png")
    service = MarkingService(ServiceConfig(data_root=tmp_path / "data", subjects=(1, 2), capacity=14))
    service.register_database(scan_database(image_dir, spec))
    payload = {"minutiae": [{"kind": "ending", "x": 5, "y": 6, "angle_deg": 0.0, "quality": 50}],
               "singular_points": []}
    service.submit_template(1, list(service.manifest("LAB").refs())[0], payload, "good")
    service.submit_review(2, list(service.manifest("LAB").refs())[0], "approve")

    out = tmp_path / "exported"
    assert main(["export", "--data-root", str(tmp_path / "data"), "--db", "LAB", "--out", str(out)]) == 0
    assert "1/8 final templates exported" in capsys.readouterr().out
    assert (out / "1_1.iso-fmr").exists()
    record = decode_record((out / "1_1.iso-fmr").read_bytes())
    assert record.views[0].minutiae[0].x == 5


def test_usage_errors_exit_2(capsys):
    assert main(["no-such-command"]) == 2
    assert main(["pairs", "--fingers", "3"]) == 2  # missing required flags
    assert main([]) == 2
