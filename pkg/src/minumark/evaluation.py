"""Verification evaluation: pair protocol, ROC, GAR@FAR with 95% CIs.

The protocol is fully ordered: every same-finger (probe, gallery) pair with
probe != gallery is genuine, every cross-finger ordered pair is imposter,
so a complete F x K database yields F*K*(K-1) genuine and (F*K)*((F-1)*K)
imposter comparisons. Scores feed a threshold sweep over the distinct
observed values; operating points are conservative (largest threshold set
satisfying the FAR budget, no interpolation) and carry Wald 95% intervals.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from minumark.codec import MinutiaeRecord
from minumark.dataset import CountStats, DatabaseManifest, ImageRef
from minumark.matcher import MatcherParams, match_templates

__all__ = [
    "GENUINE",
    "IMPOSTER",
    "MatchPair",
    "ScoreSet",
    "RocCurve",
    "OperatingPoint",
    "ScenarioResult",
    "EvalError",
    "BuiltinMatcher",
    "ExternalMatcher",
    "generate_match_pairs",
    "execute_protocol",
    "compute_roc",
    "gar_at_far",
    "binomial_ci",
    "wald_half_width",
    "filter_by_quality",
    "restrict_scores",
    "save_scores_csv",
    "load_scores_csv",
    "save_pairs_csv",
    "load_pairs_csv",
    "emit_report",
]

GENUINE = "genuine"
IMPOSTER = "imposter"
Z_95 = 1.96


class EvalError(ValueError):
    pass


class MatchPair(NamedTuple):
    probe: ImageRef
    gallery: ImageRef
    kind: str


@dataclass(eq=False)
class ScoreSet:
    """Scores split by pair kind, plus the per-pair audit trail.

    ``pairs`` and ``scores`` stay aligned with the protocol's pair order so
    the run can be persisted, re-filtered, and re-thresholded without
    re-matching anything.
    """

    genuine_scores: np.ndarray
    imposter_scores: np.ndarray
    provenance: tuple[str, str, str] = ("", "", "")
    pairs: list[MatchPair] | None = None
    scores: np.ndarray | None = None

    def same_scores(self, other: "ScoreSet") -> bool:
        return np.array_equal(self.genuine_scores, other.genuine_scores) and np.array_equal(
            self.imposter_scores, other.imposter_scores
        )


@dataclass(frozen=True)
class RocCurve:
    """(threshold, far, gar) triples, thresholds descending from a sentinel
    above the maximum observed score (where far = gar = 0)."""

    points: tuple[tuple[float, float, float], ...]


@dataclass(frozen=True)
class OperatingPoint:
    target_far: float
    achieved_far: float
    gar: float
    ci_low: float
    ci_high: float
    threshold: float


@dataclass
class ScenarioResult:
    label: str
    scores: ScoreSet
    count_stats: CountStats | None = None


# ---------------------------------------------------------------------------
# Pair generation


def generate_match_pairs(manifest: DatabaseManifest) -> list[MatchPair]:
    """All ordered probe/gallery pairs of a complete manifest, probe-major
    lexicographic, identical-template pairs excluded."""
    missing = manifest.missing_refs()
    if missing:
        listing = ", ".join(f"{r.finger_id}_{r.impression_id}" for r in missing[:10])
        more = "" if len(missing) <= 10 else f" (+{len(missing) - 10} more)"
        raise EvalError(f"manifest is missing {len(missing)} impressions: {listing}{more}")

    refs = sorted(manifest.refs())
    pairs = []
    for probe in refs:
        for gallery in refs:
            if probe == gallery:
                continue
            kind = GENUINE if probe.finger_id == gallery.finger_id else IMPOSTER
            pairs.append(MatchPair(probe, gallery, kind))
    return pairs


# ---------------------------------------------------------------------------
# Matchers usable by the protocol


@dataclass(frozen=True)
class BuiltinMatcher:
    """The reference matcher wrapped as a pair-scoring callable."""

    params: MatcherParams = MatcherParams()

    def __call__(self, ref: MinutiaeRecord, probe: MinutiaeRecord) -> float:
        return match_templates(ref, probe, self.params).score


@dataclass(frozen=True)
class ExternalMatcher:
    """Adapter for third-party matchers: run ``command ref.iso-fmr
    probe.iso-fmr`` and read one decimal score from stdout."""

    command: tuple[str, ...]

    def __call__(self, ref: MinutiaeRecord, probe: MinutiaeRecord) -> float:
        import subprocess
        import tempfile

        from minumark.codec import encode_record

        with tempfile.TemporaryDirectory() as tmp:
            ref_path = Path(tmp) / "ref.iso-fmr"
            probe_path = Path(tmp) / "probe.iso-fmr"
            ref_path.write_bytes(encode_record(ref))
            probe_path.write_bytes(encode_record(probe))
            proc = subprocess.run(
                [*self.command, str(ref_path), str(probe_path)],
                capture_output=True,
                text=True,
                check=True,
            )
        return float(proc.stdout.strip().splitlines()[-1])


_WORKER_TEMPLATES: Mapping[ImageRef, MinutiaeRecord] = {}
_WORKER_MATCHER: Callable | None = None


def _init_worker(templates, matcher):
    global _WORKER_TEMPLATES, _WORKER_MATCHER
    _WORKER_TEMPLATES = templates
    _WORKER_MATCHER = matcher


def _score_chunk(chunk: list[tuple[ImageRef, ImageRef]]) -> list[float]:
    return [_WORKER_MATCHER(_WORKER_TEMPLATES[g], _WORKER_TEMPLATES[p]) for p, g in chunk]


def execute_protocol(
    pairs: Sequence[MatchPair],
    templates: Mapping[ImageRef, MinutiaeRecord],
    matcher: Callable[[MinutiaeRecord, MinutiaeRecord], float] | None = None,
    workers: int = 1,
    provenance: tuple[str, str, str] = ("", "", ""),
) -> ScoreSet:
    """Score every pair (gallery template as reference). The pair list must
    be fully covered by templates before anything runs, and the output is
    identical for any worker count."""
    matcher = matcher or BuiltinMatcher()
    needed = {p.probe for p in pairs} | {p.gallery for p in pairs}
    missing = sorted(ref for ref in needed if ref not in templates)
    if missing:
        listing = ", ".join(f"{r.finger_id}_{r.impression_id}" for r in missing[:10])
        raise EvalError(f"{len(missing)} templates missing before matching starts: {listing}")

    keys = [(p.probe, p.gallery) for p in pairs]
    if workers <= 1 or len(pairs) < 2 * workers:
        _init_worker(templates, matcher)
        scores = _score_chunk(keys)
    else:
        chunk_size = max(1, math.ceil(len(keys) / (workers * 4)))
        chunks = [keys[k : k + chunk_size] for k in range(0, len(keys), chunk_size)]
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(dict(templates), matcher)
        ) as pool:
            scores = [s for chunk_scores in pool.map(_score_chunk, chunks) for s in chunk_scores]

    score_array = np.asarray(scores, dtype=np.float64)
    kinds = np.asarray([p.kind == GENUINE for p in pairs], dtype=bool)
    return ScoreSet(
        genuine_scores=score_array[kinds],
        imposter_scores=score_array[~kinds],
        provenance=provenance,
        pairs=list(pairs),
        scores=score_array,
    )


# ---------------------------------------------------------------------------
# ROC and operating points


def compute_roc(scores: ScoreSet) -> RocCurve:
    """Threshold sweep over the distinct observed scores, descending, with a
    sentinel threshold above the maximum where nothing is accepted."""
    genuine = np.asarray(scores.genuine_scores, dtype=np.float64)
    imposter = np.asarray(scores.imposter_scores, dtype=np.float64)
    if genuine.size == 0 or imposter.size == 0:
        raise EvalError("ROC needs at least one genuine and one imposter score")

    observed = np.unique(np.concatenate([genuine, imposter]))  # ascending
    thresholds = np.concatenate([[observed[-1] + 1.0], observed[::-1]])
    genuine_sorted = np.sort(genuine)
    imposter_sorted = np.sort(imposter)
    gar = 1.0 - np.searchsorted(genuine_sorted, thresholds, side="left") / genuine.size
    far = 1.0 - np.searchsorted(imposter_sorted, thresholds, side="left") / imposter.size
    return RocCurve(points=tuple(zip(thresholds.tolist(), far.tolist(), gar.tolist())))


def wald_half_width(p: float, n: int) -> float:
    """Half-width 1.96*sqrt(p(1-p)/n) of the 95% Wald interval, unclamped.

    Halves exactly when n quadruples (the whole computation commutes with
    powers of two)."""
    if n < 1:
        raise EvalError("binomial CI needs n >= 1")
    if not 0.0 <= p <= 1.0:
        raise EvalError(f"rate {p!r} outside [0, 1]")
    return Z_95 * math.sqrt(p * (1.0 - p) / n)


def binomial_ci(p: float, n: int) -> tuple[float, float]:
    """Wald 95% interval p +- 1.96*sqrt(p(1-p)/n), clamped to [0, 1]."""
    half = wald_half_width(p, n)
    return max(0.0, p - half), min(1.0, p + half)


def gar_at_far(roc: RocCurve, scores: ScoreSet, target_far: float) -> OperatingPoint:
    """Conservative operating point: the smallest threshold whose FAR stays
    within the target (never interpolated), with a Wald CI on the GAR."""
    if not 0.0 < target_far < 1.0:
        raise EvalError("target FAR must be strictly between 0 and 1")
    chosen = None
    for threshold, far, gar in roc.points:  # thresholds descending
        if far <= target_far:
            chosen = (threshold, far, gar)
        else:
            break  # far is non-decreasing from here on
    if chosen is None:  # unreachable: the sentinel threshold has far == 0
        raise EvalError("no threshold satisfies the FAR target")
    threshold, far, gar = chosen
    low, high = binomial_ci(gar, len(scores.genuine_scores))
    return OperatingPoint(
        target_far=target_far,
        achieved_far=far,
        gar=gar,
        ci_low=low,
        ci_high=high,
        threshold=threshold,
    )


# ---------------------------------------------------------------------------
# Quality-based rejection


def filter_by_quality(
    pairs: Sequence[MatchPair], labels: Mapping[ImageRef, str]
) -> tuple[list[MatchPair], float]:
    """Drop every pair touching a poor-quality image.

    Returns the surviving pairs and the fraction of distinct images
    rejected (not the fraction of pairs)."""
    images = {p.probe for p in pairs} | {p.gallery for p in pairs}
    unlabeled = sorted(ref for ref in images if ref not in labels)
    if unlabeled:
        r = unlabeled[0]
        raise EvalError(
            f"{len(unlabeled)} images lack quality labels, e.g. {r.db_id} {r.finger_id}_{r.impression_id}"
        )
    rejected = {ref for ref in images if labels[ref] == "poor"}
    kept = [p for p in pairs if p.probe not in rejected and p.gallery not in rejected]
    return kept, len(rejected) / len(images) if images else 0.0


def restrict_scores(scores: ScoreSet, pairs: Iterable[MatchPair]) -> ScoreSet:
    """Re-derive a ScoreSet for a pair subset from the per-pair audit trail."""
    if scores.pairs is None or scores.scores is None:
        raise EvalError("score set carries no per-pair trail to restrict")
    wanted = set(pairs)
    index = [k for k, pair in enumerate(scores.pairs) if pair in wanted]
    sub_pairs = [scores.pairs[k] for k in index]
    sub_scores = scores.scores[index]
    kinds = np.asarray([p.kind == GENUINE for p in sub_pairs], dtype=bool)
    return ScoreSet(
        genuine_scores=sub_scores[kinds],
        imposter_scores=sub_scores[~kinds],
        provenance=scores.provenance,
        pairs=sub_pairs,
        scores=sub_scores,
    )


# ---------------------------------------------------------------------------
# Persistence and reporting


def save_scores_csv(scores: ScoreSet, path: Path | str) -> None:
    if scores.pairs is None or scores.scores is None:
        raise EvalError("score set carries no per-pair trail to persist")
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["probe", "gallery", "kind", "score"])
        for pair, score in zip(scores.pairs, scores.scores):
            writer.writerow(
                [
                    f"{pair.probe.finger_id}_{pair.probe.impression_id}",
                    f"{pair.gallery.finger_id}_{pair.gallery.impression_id}",
                    pair.kind,
                    repr(float(score)),
                ]
            )


def load_scores_csv(path: Path | str, db_id: str = "") -> ScoreSet:
    pairs: list[MatchPair] = []
    values: list[float] = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1 and row[:4] == ["probe", "gallery", "kind", "score"]:
                continue
            if len(row) != 4:
                raise EvalError(f"{path}: line {lineno}: expected probe,gallery,kind,score")
            probe_f, probe_k = row[0].split("_")
            gallery_f, gallery_k = row[1].split("_")
            if row[2] not in (GENUINE, IMPOSTER):
                raise EvalError(f"{path}: line {lineno}: unknown pair kind {row[2]!r}")
            pairs.append(
                MatchPair(
                    ImageRef(db_id, int(probe_f), int(probe_k)),
                    ImageRef(db_id, int(gallery_f), int(gallery_k)),
                    row[2],
                )
            )
            values.append(float(row[3]))
    scores = np.asarray(values, dtype=np.float64)
    kinds = np.asarray([p.kind == GENUINE for p in pairs], dtype=bool)
    return ScoreSet(
        genuine_scores=scores[kinds],
        imposter_scores=scores[~kinds],
        provenance=(db_id, "", ""),
        pairs=pairs,
        scores=scores,
    )


def save_pairs_csv(pairs: Sequence[MatchPair], path: Path | str) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["probe", "gallery", "kind"])
        for pair in pairs:
            writer.writerow(
                [
                    f"{pair.probe.finger_id}_{pair.probe.impression_id}",
                    f"{pair.gallery.finger_id}_{pair.gallery.impression_id}",
                    pair.kind,
                ]
            )


def load_pairs_csv(path: Path | str, db_id: str = "") -> list[MatchPair]:
    pairs: list[MatchPair] = []
    with open(path, newline="") as handle:
        for lineno, row in enumerate(csv.reader(handle), start=1):
            if lineno == 1 and row[:3] == ["probe", "gallery", "kind"]:
                continue
            if len(row) != 3:
                raise EvalError(f"{path}: line {lineno}: expected probe,gallery,kind")
            probe_f, probe_k = row[0].split("_")
            gallery_f, gallery_k = row[1].split("_")
            if row[2] not in (GENUINE, IMPOSTER):
                raise EvalError(f"{path}: line {lineno}: unknown pair kind {row[2]!r}")
            pairs.append(
                MatchPair(
                    ImageRef(db_id, int(probe_f), int(probe_k)),
                    ImageRef(db_id, int(gallery_f), int(gallery_k)),
                    row[2],
                )
            )
    return pairs


def _file_label(label: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in label).strip("_").lower()


def _interval_cell(point: OperatingPoint) -> str:
    return f"{100 * point.ci_low:.1f} - {100 * point.gar:.1f} - {100 * point.ci_high:.1f}"


def emit_report(
    results: Sequence[ScenarioResult],
    out_dir: Path | str,
    far_targets: Sequence[float] = (0.001, 0.01, 0.1),
) -> list[Path]:
    """Write the report bundle: minutiae count table, GAR-at-FAR grid with
    confidence intervals (percent, one decimal), and one ROC point file per
    scenario. Deterministic for identical inputs."""
    if not results:
        raise EvalError("nothing to report: no scenario results")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    counts_path = out_dir / "counts.csv"
    with open(counts_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["scenario", "mean", "std", "min", "max"])
        for result in results:
            if result.count_stats is not None:
                s = result.count_stats
                writer.writerow([result.label, f"{s.mean:.1f}", f"{s.std:.1f}", s.min, s.max])
    written.append(counts_path)

    gar_path = out_dir / "gar_table.csv"
    with open(gar_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["scenario"] + [f"far={100 * t:g}%" for t in far_targets])
        for result in results:
            roc = compute_roc(result.scores)
            row = [result.label]
            for target in far_targets:
                row.append(_interval_cell(gar_at_far(roc, result.scores, target)))
            writer.writerow(row)
    written.append(gar_path)

    for result in results:
        roc = compute_roc(result.scores)
        roc_path = out_dir / f"roc_{_file_label(result.label)}.csv"
        with open(roc_path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["threshold", "far", "gar"])
            for threshold, far, gar in roc.points:
                writer.writerow([repr(threshold), repr(far), repr(gar)])
        written.append(roc_path)

    return written
