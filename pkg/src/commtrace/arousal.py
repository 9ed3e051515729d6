"""Rule-based vocal arousal: personalized empirical models, per-recording
scores, rank-correlation fusion, and shift-half percentile features.

Each participant gets one empirical distribution per feature kind (log-pitch,
intensity, high/low-frequency energy ratio), built from per-recording medians
over that participant's foreground frames. A recording's score is

    p = 2 * E[x > N] - 1

where E counts strictly smaller samples plus half credit for ties, so the
score is 0 exactly at the model median and spans [-1, 1]. Per-feature score
vectors are fused with weights proportional to each vector's Spearman
correlation against the mean score vector, scaled to unit Euclidean norm.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .behavior import minute_half
from .errors import (
    DegenerateScoresWarning,
    EmptyHalf,
    InsufficientData,
    LengthMismatch,
    NoData,
)
from .records import FG, Participant, Recording, Shift

FEATURE_KINDS = ("log_pitch", "intensity", "hf_lf_ratio")
DEFAULT_MIN_MODEL_SIZE = 20
DEFAULT_QUANTILE = 0.9


@dataclass(frozen=True)
class EmpiricalModel:
    feature_kind: str
    samples: np.ndarray  # sorted ascending

    def __post_init__(self):
        if self.feature_kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.feature_kind!r}")
        if np.any(np.diff(self.samples) < 0):
            raise ValueError("empirical model samples must be sorted")


@dataclass(frozen=True)
class ArousalProfile:
    """Per-participant scores over the recordings that had all three medians."""

    recording_ids: tuple[str, ...]
    shift_ids: tuple[str, ...]
    minute_indices: tuple[int, ...]
    per_feature_scores: np.ndarray  # [3, m] in FEATURE_KINDS order
    mean_vector: np.ndarray         # [m]
    weights: np.ndarray             # [3], unit 2-norm
    correlations: np.ndarray        # [3]
    fused_scores: np.ndarray        # [m]


def recording_feature_median(recording: Recording, feature_kind: str,
                             labels: Optional[np.ndarray] = None) -> Optional[float]:
    """Median of one feature over the recording's FG frames.

    Unvoiced log-pitch sentinels are excluded; returns None when no valid
    FG frame exists for the feature.
    """
    lab = labels if labels is not None else recording.labels
    if lab is None:
        raise NoData(f"recording {recording.recording_id!r} has no labels")
    values = getattr(recording, feature_kind)[np.asarray(lab) == FG]
    values = values[np.isfinite(values)]
    if len(values) == 0:
        return None
    return float(np.median(values))


def build_empirical_model(recordings: Sequence[Recording], feature_kind: str,
                          labels: Optional[Mapping[str, np.ndarray]] = None,
                          min_model_size: int = DEFAULT_MIN_MODEL_SIZE) -> EmpiricalModel:
    """One sample per recording = median of the feature over FG frames."""
    samples = []
    for recording in recordings:
        lab = labels.get(recording.recording_id) if labels is not None else None
        med = recording_feature_median(recording, feature_kind, lab)
        if med is not None:
            samples.append(med)
    if len(samples) < min_model_size:
        raise InsufficientData(
            f"{len(samples)} usable recordings for {feature_kind!r}, "
            f"need {min_model_size}")
    return EmpiricalModel(feature_kind=feature_kind,
                          samples=np.sort(np.asarray(samples, dtype=float)))


def score_recording(x: float, model: EmpiricalModel) -> float:
    """Arousal intensity score 2*E[x > N] - 1 with half credit for ties."""
    samples = model.samples
    below = int(np.searchsorted(samples, x, side="left"))
    ties = int(np.searchsorted(samples, x, side="right")) - below
    e = (below + 0.5 * ties) / len(samples)
    return 2.0 * e - 1.0


# ---------------------------------------------------------------------------
# rank-correlation fusion
# ---------------------------------------------------------------------------

def average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks with tied values sharing their average rank."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="mergesort")
    sv = v[order]
    ranks = np.empty(len(v), dtype=float)
    start = 0
    for i in range(1, len(v) + 1):
        if i == len(v) or sv[i] != sv[start]:
            ranks[order[start:i]] = 0.5 * (start + 1 + i)
            start = i
    return ranks


def _pearson_r(x: np.ndarray, y: np.ndarray) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return 0.0
    return float(dx @ dy) / float(np.sqrt(sxx * syy))


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation with average-rank ties.

    Returns 0 when either input is constant (the degenerate case the fusion
    design decision assigns zero weight).
    """
    xv = np.asarray(x, dtype=float)
    yv = np.asarray(y, dtype=float)
    if len(xv) != len(yv):
        raise LengthMismatch(f"{len(xv)} vs {len(yv)} values")
    return _pearson_r(average_ranks(xv), average_ranks(yv))


def fuse(per_feature_scores: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fusion weights and fused score vector from a [3, m] score matrix.

    Returns (weights, correlations, fused). When every correlation vanishes
    the weights fall back to 1/sqrt(3) each and a DegenerateScoresWarning is
    emitted.
    """
    scores = np.asarray(per_feature_scores, dtype=float)
    if scores.ndim != 2 or scores.shape[0] != len(FEATURE_KINDS):
        raise LengthMismatch(f"expected [3, m] score matrix, got {scores.shape}")
    if scores.shape[1] < 3:
        raise InsufficientData(f"need >= 3 recordings to fuse, got {scores.shape[1]}")
    p_mu = scores.mean(axis=0)
    r = np.array([spearman(scores[i], p_mu) for i in range(len(FEATURE_KINDS))])
    norm = float(np.linalg.norm(r))
    if norm == 0.0:
        warnings.warn("all fusion correlations are zero; using equal weights",
                      DegenerateScoresWarning)
        weights = np.full(len(FEATURE_KINDS), 1.0 / np.sqrt(3.0))
    else:
        weights = r / norm
    fused = weights @ scores
    return weights, r, fused


def participant_profile(participant: Participant,
                        labels: Optional[Mapping[str, np.ndarray]] = None,
                        min_model_size: int = DEFAULT_MIN_MODEL_SIZE,
                        min_fg_frames: Optional[int] = None) -> ArousalProfile:
    """Scores, fusion weights, and fused vector for one participant.

    Recordings enter when they have a valid FG median for all three features
    (so the per-feature score vectors stay aligned). ``min_fg_frames``
    restricts the pool to qualifying recordings when set.
    """
    entries = []  # (shift_id, minute, recording_id, medians[3])
    for shift in participant.shifts:
        for recording in shift.recordings:
            lab = labels.get(recording.recording_id) if labels is not None else None
            if lab is None:
                lab = recording.labels
            if lab is None:
                raise NoData(f"recording {recording.recording_id!r} has no labels")
            if min_fg_frames is not None:
                if int(np.count_nonzero(np.asarray(lab) == FG)) < min_fg_frames:
                    continue
            meds = [recording_feature_median(recording, kind, lab)
                    for kind in FEATURE_KINDS]
            if any(m is None for m in meds):
                continue
            entries.append((shift.shift_id, recording.minute_index,
                            recording.recording_id, meds))
    if len(entries) < min_model_size:
        raise InsufficientData(
            f"participant {participant.participant_id!r}: {len(entries)} scoreable "
            f"recordings, need {min_model_size}")

    medians = np.array([e[3] for e in entries], dtype=float)  # [m, 3]
    models = [EmpiricalModel(kind, np.sort(medians[:, i]))
              for i, kind in enumerate(FEATURE_KINDS)]
    scores = np.empty((len(FEATURE_KINDS), len(entries)))
    for i, model in enumerate(models):
        scores[i] = [score_recording(x, model) for x in medians[:, i]]
    weights, corr, fused = fuse(scores)
    return ArousalProfile(
        recording_ids=tuple(e[2] for e in entries),
        shift_ids=tuple(e[0] for e in entries),
        minute_indices=tuple(e[1] for e in entries),
        per_feature_scores=scores,
        mean_vector=scores.mean(axis=0),
        weights=weights,
        correlations=corr,
        fused_scores=fused)


# ---------------------------------------------------------------------------
# shift-half percentile features
# ---------------------------------------------------------------------------

def shift_half_percentile(shift: Shift, minute_indices: Sequence[int],
                          fused_scores: Sequence[float], half: str,
                          q: float = DEFAULT_QUANTILE) -> float:
    """Linear-interpolation quantile of the fused scores of recordings whose
    minute falls in the requested half of the shift."""
    if half not in ("first", "second"):
        raise ValueError(f"half must be 'first' or 'second', got {half!r}")
    minutes = np.asarray(minute_indices)
    scores = np.asarray(fused_scores, dtype=float)
    if minutes.shape != scores.shape:
        raise LengthMismatch("minute stamps and scores must parallel")
    mask = np.array([minute_half(int(m), shift.duration_hours) == half
                     for m in minutes])
    if not np.any(mask):
        raise EmptyHalf(f"no qualifying recording in the {half} half of "
                        f"{shift.shift_id!r}")
    return float(np.quantile(scores[mask], q))


def participant_half_features(per_shift_halves: Sequence[tuple[Optional[float],
                                                               Optional[float]]]
                              ) -> tuple[Optional[float], Optional[float]]:
    """Mean of (first, second)-half percentiles across shifts, skipping empty
    halves; raises NoData when no shift contributed either half."""
    firsts = [f for f, _ in per_shift_halves if f is not None]
    seconds = [s for _, s in per_shift_halves if s is not None]
    if not firsts and not seconds:
        raise NoData("no shift has a populated half")
    return (float(np.mean(firsts)) if firsts else None,
            float(np.mean(seconds)) if seconds else None)
