"""Reference minutiae matcher over coordinates and angles only.

Alignment search is an exhaustive hypothesis scan: every (ref, probe)
minutia pair is tried as an anchor; the probe set is rotated by the
anchors' angle difference, translated so the anchors coincide, and greedily
paired one-to-one under distance/angle tolerances. The winning hypothesis
maximizes paired count, then minimal summed pair distance, then lowest
(ref index, probe index). Minutia kind is deliberately ignored.

The scan is accelerated by a rigid-motion invariant: a probe minutia at
intra-set distance d from its anchor can only pair with a ref minutia
whose distance from its own anchor is within the tolerance of d (and
likewise for angles relative to the anchor). Counting such candidates
gives a cheap upper bound per hypothesis, so hypotheses that cannot beat
the best-so-far are skipped without being evaluated. The bound is padded
by epsilon so pruning can never alter the result of the full scan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from minumark.codec import Minutia, MinutiaeRecord, dequantize_angle

__all__ = [
    "MatcherParams",
    "Alignment",
    "MatchScore",
    "MatcherError",
    "estimate_alignment",
    "pair_minutiae",
    "match_templates",
]

REFERENCE_PX_PER_CM = 197  # 500 dpi; distance tolerance is calibrated here

_BOUND_EPS = 1e-6


class MatcherError(ValueError):
    pass


@dataclass(frozen=True)
class MatcherParams:
    distance_tolerance: float = 15.0  # pixels at 197 px/cm
    angle_tolerance: float = 22.5  # degrees, circular difference
    min_overlap: int = 4  # fewer paired minutiae score zero

    def __post_init__(self):
        if self.distance_tolerance <= 0 or self.angle_tolerance <= 0 or self.min_overlap <= 0:
            raise MatcherError("matcher parameters must be strictly positive")
        if self.angle_tolerance >= 180:
            raise MatcherError("angle_tolerance must be below 180 degrees")


@dataclass(frozen=True)
class Alignment:
    rotation: float  # degrees applied to the probe, normalized to [-180, 180)
    translation: tuple[float, float]
    anchor: tuple[int, int]  # (ref index, probe index) of the hypothesis pair


@dataclass(frozen=True)
class MatchScore:
    score: float
    paired_count: int
    alignment: Alignment | None
    diagnostic: str | None = None


def _normalize_rotation(degrees: float) -> float:
    return (degrees + 180.0) % 360.0 - 180.0


def _as_arrays(minutiae: Sequence[Minutia]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xy = np.array([(m.x, m.y) for m in minutiae], dtype=np.float64)
    ang = np.array([dequantize_angle(m.angle_units) for m in minutiae], dtype=np.float64)
    units = np.array([m.angle_units for m in minutiae], dtype=np.uint8)
    return xy, ang, units


def _circular_diff(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = np.abs(a - b) % 360.0
    return np.minimum(d, 360.0 - d)


def _transform(probe_xy: np.ndarray, rotation_deg: float, translation: tuple[float, float]) -> np.ndarray:
    # Component-wise on purpose: the same float expression shape is used to
    # derive anchor translations, so an anchor lands exactly on its mate.
    theta = math.radians(rotation_deg)
    c, s = math.cos(theta), math.sin(theta)
    x, y = probe_xy[:, 0], probe_xy[:, 1]
    return np.stack([c * x - s * y + translation[0], s * x + c * y + translation[1]], axis=1)


def _anchor_translation(
    ref_xy: np.ndarray, probe_xy: np.ndarray, i: int, j: int, rotation_deg: float
) -> tuple[float, float]:
    theta = math.radians(rotation_deg)
    c, s = math.cos(theta), math.sin(theta)
    px, py = probe_xy[j]
    return float(ref_xy[i][0] - (c * px - s * py)), float(ref_xy[i][1] - (s * px + c * py))


def _greedy_pairs(
    ref_xy: np.ndarray,
    ref_ang: np.ndarray,
    probe_xy: np.ndarray,
    probe_ang: np.ndarray,
    rotation_deg: float,
    translation: tuple[float, float],
    dist_tol: float,
    ang_tol: float,
) -> tuple[list[tuple[int, int]], float]:
    """One-to-one pairing, consuming candidates in ascending
    (distance, ref index, probe index) order."""
    moved = _transform(probe_xy, rotation_deg, translation)
    delta = ref_xy[:, None, :] - moved[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", delta, delta))
    ang_diff = _circular_diff(ref_ang[:, None], probe_ang[None, :] + rotation_deg)
    ok = (dist <= dist_tol) & (ang_diff <= ang_tol)

    rows, cols = np.nonzero(ok)
    if rows.size == 0:
        return [], 0.0
    dvals = dist[rows, cols]
    order = np.lexsort((cols, rows, dvals))

    used_ref = np.zeros(len(ref_xy), dtype=bool)
    used_probe = np.zeros(len(probe_xy), dtype=bool)
    pairs: list[tuple[int, int]] = []
    total = 0.0
    for k in order:
        r, p = int(rows[k]), int(cols[k])
        if used_ref[r] or used_probe[p]:
            continue
        used_ref[r] = True
        used_probe[p] = True
        pairs.append((r, p))
        total += float(dvals[k])
    return pairs, total


def _hypothesis_bounds(
    ref_xy: np.ndarray,
    ref_ang: np.ndarray,
    ref_units: np.ndarray,
    probe_xy: np.ndarray,
    probe_ang: np.ndarray,
    probe_units: np.ndarray,
    dist_tol: float,
    ang_tol: float,
) -> np.ndarray:
    """Upper bound on the paired count of every anchor hypothesis (i, j).

    Builds the candidate tensor for all hypotheses at once and takes
    min(ref minutiae with a candidate, probe minutiae with a candidate),
    which dominates any one-to-one pairing. The angle test runs exactly in
    wrapped byte units; the distance test runs in float32 with a padded
    threshold, so float noise can only loosen the bound, never tighten it.
    """
    n_ref, n_probe = len(ref_xy), len(probe_xy)
    rx, ry = ref_xy[:, 0], ref_xy[:, 1]
    px, py = probe_xy[:, 0], probe_xy[:, 1]

    rel = ref_ang[:, None] - probe_ang[None, :]  # rotation of hypothesis (i, j)
    theta = np.radians(rel)
    c, s = np.cos(theta), np.sin(theta)
    tx = rx[:, None] - (c * px[None, :] - s * py[None, :])  # (i, j)
    ty = ry[:, None] - (s * px[None, :] + c * py[None, :])

    # Angle criterion in units: du * 1.40625 <= ang_tol with integer du.
    unit_tol = int((ang_tol + _BOUND_EPS) / 1.40625)
    rel_units = (ref_units[:, None] - probe_units[None, :]).astype(np.uint8)
    # float32 absolute error on 14-bit coordinates stays far below this pad.
    d2_tol = np.float32((dist_tol + _BOUND_EPS) ** 2 + 1.0)

    bounds = np.empty((n_ref, n_probe), dtype=np.int64)
    # Chunk over i to cap the 4-D tensor size.
    chunk = max(1, int(16_000_000 // max(1, n_probe * n_ref * n_probe)))
    for start in range(0, n_ref, chunk):
        stop = min(start + chunk, n_ref)
        ci = slice(start, stop)
        # Transformed probe points per hypothesis: axes (i, j, p).
        mx = (c[ci, :, None] * px[None, None, :] - s[ci, :, None] * py[None, None, :] + tx[ci, :, None]).astype(np.float32)
        my = (s[ci, :, None] * px[None, None, :] + c[ci, :, None] * py[None, None, :] + ty[ci, :, None]).astype(np.float32)
        dx = rx.astype(np.float32)[None, None, :, None] - mx[:, :, None, :]  # axes (i, j, r, p)
        dy = ry.astype(np.float32)[None, None, :, None] - my[:, :, None, :]
        ok = dx * dx + dy * dy <= d2_tol
        du = rel_units[None, None, :, :] - rel_units[ci, :, None, None]  # wraps mod 256
        ok &= (du <= unit_tol) | (du >= 256 - unit_tol)
        ref_cov = ok.any(axis=3).sum(axis=2)
        probe_cov = ok.any(axis=2).sum(axis=2)
        bounds[ci] = np.minimum(ref_cov, probe_cov)
    return bounds


def _search_alignment(
    ref_xy: np.ndarray,
    ref_ang: np.ndarray,
    ref_units: np.ndarray,
    probe_xy: np.ndarray,
    probe_ang: np.ndarray,
    probe_units: np.ndarray,
    dist_tol: float,
    ang_tol: float,
) -> tuple[int, float, int, int]:
    """Best hypothesis as (paired count, summed distance, ref anchor, probe anchor)."""
    n_probe = len(probe_xy)
    bounds = _hypothesis_bounds(ref_xy, ref_ang, ref_units, probe_xy, probe_ang, probe_units, dist_tol, ang_tol)
    flat = bounds.ravel()
    ii, jj = np.divmod(np.arange(flat.size), n_probe)
    order = np.lexsort((jj, ii, -flat))

    best_count = -1
    best_sum = math.inf
    best_i = best_j = 0
    for idx in order:
        k = int(idx)
        if flat[k] < best_count:
            break  # sorted by bound: nothing later can reach best_count
        i, j = int(ii[k]), int(jj[k])
        rotation = _normalize_rotation(float(ref_ang[i] - probe_ang[j]))
        translation = _anchor_translation(ref_xy, probe_xy, i, j, rotation)
        pairs, total = _greedy_pairs(
            ref_xy, ref_ang, probe_xy, probe_ang, rotation, translation, dist_tol, ang_tol
        )
        count = len(pairs)
        if count > best_count or (
            count == best_count
            and (total < best_sum or (total == best_sum and (i, j) < (best_i, best_j)))
        ):
            best_count, best_sum, best_i, best_j = count, total, i, j
    return best_count, best_sum, best_i, best_j


def _alignment_for_anchor(
    ref_xy: np.ndarray, ref_ang: np.ndarray, probe_xy: np.ndarray, probe_ang: np.ndarray, i: int, j: int
) -> Alignment:
    rotation = _normalize_rotation(float(ref_ang[i] - probe_ang[j]))
    return Alignment(
        rotation=rotation,
        translation=_anchor_translation(ref_xy, probe_xy, i, j, rotation),
        anchor=(i, j),
    )


# ---------------------------------------------------------------------------
# Public operations


def estimate_alignment(
    ref: Sequence[Minutia], probe: Sequence[Minutia], params: MatcherParams = MatcherParams()
) -> Alignment:
    """Exhaustively scan all anchor pairs and return the winning alignment.

    Deterministic: ties on paired count break on summed pair distance,
    then on the lowest (ref index, probe index) anchor.
    """
    if not ref or not probe:
        raise MatcherError("alignment needs at least one minutia on each side")
    ref_xy, ref_ang, ref_units = _as_arrays(ref)
    probe_xy, probe_ang, probe_units = _as_arrays(probe)
    _, _, i, j = _search_alignment(
        ref_xy, ref_ang, ref_units, probe_xy, probe_ang, probe_units,
        params.distance_tolerance, params.angle_tolerance,
    )
    return _alignment_for_anchor(ref_xy, ref_ang, probe_xy, probe_ang, i, j)


def pair_minutiae(
    ref: Sequence[Minutia],
    probe: Sequence[Minutia],
    alignment: Alignment,
    params: MatcherParams = MatcherParams(),
) -> list[tuple[int, int]]:
    """Greedy one-to-one pairing under a given alignment.

    Candidates within both tolerances are consumed in ascending
    (transformed distance, ref index, probe index) order, so equidistant
    conflicts resolve toward lower indices.
    """
    if not ref or not probe:
        return []
    ref_xy, ref_ang, _ = _as_arrays(ref)
    probe_xy, probe_ang, _ = _as_arrays(probe)
    pairs, _ = _greedy_pairs(
        ref_xy,
        ref_ang,
        probe_xy,
        probe_ang,
        alignment.rotation,
        alignment.translation,
        params.distance_tolerance,
        params.angle_tolerance,
    )
    return pairs


def scaled_params(params: MatcherParams, record: MinutiaeRecord) -> MatcherParams:
    """Distance tolerance rescaled to the record's capture resolution."""
    scale = record.resolution_x / REFERENCE_PX_PER_CM
    if scale == 1.0:
        return params
    return replace(params, distance_tolerance=params.distance_tolerance * scale)


def match_templates(
    ref: MinutiaeRecord, probe: MinutiaeRecord, params: MatcherParams = MatcherParams()
) -> MatchScore:
    """Score two records on their first views.

    score = paired_count^2 / (n_ref * n_probe) once the overlap reaches
    min_overlap, else 0. Spurious minutiae on either side therefore drag
    the score down. Not symmetric in general; the evaluation protocol runs
    ordered pairs anyway.
    """
    if not ref.views or not probe.views:
        raise MatcherError("both records need at least one finger view")
    ref_minutiae = ref.views[0].minutiae
    probe_minutiae = probe.views[0].minutiae
    if not ref_minutiae or not probe_minutiae:
        return MatchScore(0.0, 0, None, diagnostic="empty minutiae list")

    effective = scaled_params(params, ref)
    ref_xy, ref_ang, ref_units = _as_arrays(ref_minutiae)
    probe_xy, probe_ang, probe_units = _as_arrays(probe_minutiae)
    count, _, i, j = _search_alignment(
        ref_xy, ref_ang, ref_units, probe_xy, probe_ang, probe_units,
        effective.distance_tolerance, effective.angle_tolerance,
    )
    alignment = _alignment_for_anchor(ref_xy, ref_ang, probe_xy, probe_ang, i, j)
    if count < effective.min_overlap:
        return MatchScore(0.0, count, alignment)
    score = count * count / (len(ref_minutiae) * len(probe_minutiae))
    return MatchScore(score, count, alignment)
