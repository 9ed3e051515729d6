"""Seeded synthetic data: labeled feature streams and cohorts with planted effects.

Streams drive diarizer training and scoring; labels follow a 3-state
semi-Markov chain with geometric segment lengths, features are per-class MFCC
mean shifts plus Gaussian noise, and teacher posteriors are one-hots corrupted
to a target frame accuracy.

Cohorts drive the behavior/arousal/stats pipeline end to end. Session
schedules are planted so that population parameters equal the configured
effects: per-shift session counts use stochastic rounding (exact expectation),
session lengths hit the target mean the same way, and survey scores are drawn
with an exact target correlation against each participant's session-rate
trait. Everything is deterministic per (config, seed); entities derive child
seeds from the parent generator in a fixed order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
import numpy as np

from .errors import BadConfig
from .records import (
    AGE_GROUPS,
    BG,
    FG,
    S,
    SEXES,
    Cohort,
    Participant,
    Recording,
    Shift,
    SurveyRecord,
    TeacherPosteriors,
)

TEACHER_JITTER = 0.05  # mass moved from the peaked one-hot onto Dirichlet noise


def default_class_offsets(separation: float = 2.0) -> np.ndarray:
    """Per-class 12-dim MFCC mean shifts: FG and BG occupy disjoint low cepstra."""
    offsets = np.zeros((3, 12))
    offsets[FG, 0:4] = separation
    offsets[BG, 4:8] = separation
    return offsets


@dataclass(frozen=True)
class StreamConfig:
    fg_rate: float = 0.35
    bg_rate: float = 0.25
    mean_segment_frames: int = 50
    class_feature_offsets: np.ndarray = field(
        default_factory=lambda: default_class_offsets())
    noise_sd: float = 1.0
    teacher_accuracy: float = 0.95

    def __post_init__(self):
        if not (0 <= self.fg_rate <= 1 and 0 <= self.bg_rate <= 1):
            raise BadConfig("class rates must lie in [0, 1]")
        if self.fg_rate + self.bg_rate > 1:
            raise BadConfig("fg_rate + bg_rate cannot exceed 1")
        if self.mean_segment_frames < 1:
            raise BadConfig("mean_segment_frames must be >= 1")
        if not self.noise_sd > 0:
            raise BadConfig("noise_sd must be positive")
        if not (1 / 3 < self.teacher_accuracy <= 1):
            raise BadConfig("teacher_accuracy must lie in (1/3, 1]")
        if np.asarray(self.class_feature_offsets).shape != (3, 12):
            raise BadConfig("class_feature_offsets must be [3, 12]")


def _semi_markov_labels(rng: np.random.Generator, config: StreamConfig,
                        n_frames: int) -> np.ndarray:
    probs = [config.fg_rate, config.bg_rate,
             1.0 - config.fg_rate - config.bg_rate]
    labels = np.empty(n_frames, dtype=np.int8)
    pos = 0
    while pos < n_frames:
        length = int(rng.geometric(1.0 / config.mean_segment_frames))
        state = int(rng.choice(3, p=probs))
        labels[pos:pos + length] = state
        pos += length
    return labels


def _prosody_columns(rng: np.random.Generator, labels: np.ndarray
                     ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Plausible log-pitch / intensity / HF-LF columns for a label stream."""
    n = len(labels)
    log_pitch = rng.normal(4.9, 0.15, n)
    log_pitch[labels == FG] += 0.15
    voiced_prob = np.where(labels == S, 0.05, 0.9)
    log_pitch[rng.random(n) >= voiced_prob] = np.nan
    base_intensity = np.choose(labels, [0.7, 0.4, 0.05])
    intensity = np.abs(base_intensity + rng.normal(0, 0.1, n))
    hf_lf = np.abs(rng.normal(1.0, 0.25, n) + 0.2 * (labels == FG))
    return log_pitch, intensity, hf_lf


def corrupt_teacher(rng: np.random.Generator, labels: np.ndarray,
                    accuracy: float) -> np.ndarray:
    """One-hot rows re-peaked onto a wrong class with probability 1-accuracy,
    then smoothed with fixed Dirichlet jitter; exact one-hots at accuracy 1."""
    n = len(labels)
    if accuracy >= 1.0:
        return np.eye(3)[labels.astype(int)]
    peak = labels.astype(int).copy()
    wrong = rng.random(n) >= accuracy
    shift = rng.integers(1, 3, size=n)  # pick one of the two wrong classes
    peak[wrong] = (peak[wrong] + shift[wrong]) % 3
    rows = (1.0 - TEACHER_JITTER) * np.eye(3)[peak]
    rows += TEACHER_JITTER * rng.dirichlet((1.0, 1.0, 1.0), size=n)
    return rows


def gen_stream(config: StreamConfig, n_frames: int, seed: int
               ) -> tuple[Recording, TeacherPosteriors]:
    """Labeled synthetic feature stream plus matching teacher posteriors.

    The returned Recording may exceed the 2000-frame ingestion cap; writers
    chop long streams into capped per-file recordings.
    """
    if n_frames < 1:
        raise BadConfig("n_frames must be >= 1")
    rng = np.random.default_rng(seed)
    labels = _semi_markov_labels(rng, config, n_frames)
    offsets = np.asarray(config.class_feature_offsets, dtype=float)
    mfcc = offsets[labels.astype(int)] + rng.normal(0, config.noise_sd, (n_frames, 12))
    log_pitch, intensity, hf_lf = _prosody_columns(rng, labels)
    teacher = corrupt_teacher(rng, labels, config.teacher_accuracy)
    rid = f"stream-{seed}"
    recording = Recording(
        recording_id=rid, minute_index=0,
        frame_index=np.arange(n_frames, dtype=np.int64),
        mfcc=mfcc, log_pitch=log_pitch, intensity=intensity,
        hf_lf_ratio=hf_lf, labels=labels)
    return recording, TeacherPosteriors(recording_id=rid, rows=teacher)


# ---------------------------------------------------------------------------
# cohorts with planted effects
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CohortConfig:
    # participants per (work_unit, shift_type) cell
    cells: dict = field(default_factory=lambda: {("nonICU", "day"): 4,
                                                 ("nonICU", "night"): 4})
    shifts_per_participant: int = 5
    shift_duration_hours: float = 4.0
    base_rate: float = 3.8            # speaking sessions per hour
    base_duration_min: float = 1.5    # mean session length in minutes
    day_night_rate_delta: float = 0.0
    unit_duration_deltas: dict = field(default_factory=dict)
    arousal_halflife_slope: float = 0.0
    freq_irb_corr: dict = field(default_factory=dict)    # per work unit
    freq_stai_corr: dict = field(default_factory=dict)   # per shift type
    participant_rate_sd: float = 0.1
    frames_per_recording: int = 300
    fg_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if any(n < 0 for n in self.cells.values()):
            raise BadConfig("cell counts must be nonnegative")
        if self.shifts_per_participant < 1 or self.shift_duration_hours <= 0:
            raise BadConfig("shift layout must be positive")
        if not (0 < self.fg_fraction < 1):
            raise BadConfig("fg_fraction must lie in (0, 1)")
        if self.frames_per_recording < 4:
            raise BadConfig("frames_per_recording too small")
        for corr in list(self.freq_irb_corr.values()) + list(self.freq_stai_corr.values()):
            if not -1.0 <= corr <= 1.0:
                raise BadConfig("survey couplings are correlations in [-1, 1]")
        for (unit, shift_type) in self.cells:
            if shift_type not in ("day", "night"):
                raise BadConfig(f"bad shift type {shift_type!r} in cells")


@dataclass(frozen=True)
class GroundTruth:
    """Planted population parameters, for recovery checks."""

    rate_by_participant: dict
    target_rate_by_participant: dict
    day_night_rate_delta: float
    duration_by_unit: dict
    arousal_halflife_slope: float
    freq_irb_corr: dict
    freq_stai_corr: dict


def _stochastic_round(rng: np.random.Generator, value: float) -> int:
    base = math.floor(value)
    return base + (1 if rng.random() < value - base else 0)


def _plan_shift_sessions(rng: np.random.Generator, rate: float, duration_min: float,
                         total_minutes: int) -> list[tuple[int, int]]:
    """(start_minute, length) session placements with >= 1 idle minute between
    sessions; expected count and mean length equal the targets exactly."""
    hours = total_minutes / 60.0
    count = _stochastic_round(rng, max(rate, 0.0) * hours)
    if count == 0:
        return []
    lengths = [max(1, _stochastic_round(rng, duration_min)) for _ in range(count)]
    occupied = sum(lengths) + (count - 1)
    slack = total_minutes - occupied
    if slack < 0:
        raise BadConfig(
            f"planted sessions do not fit: rate={rate}/h x {duration_min} min "
            f"in {total_minutes} min")
    extra = rng.multinomial(slack, np.full(count + 1, 1.0 / (count + 1)))
    sessions = []
    cursor = int(extra[0])
    for i, length in enumerate(lengths):
        sessions.append((cursor, length))
        cursor += length + 1 + int(extra[i + 1])
    return sessions


def _synth_recording(rng: np.random.Generator, rid: str, minute: int,
                     arousal_level: float, config: CohortConfig) -> Recording:
    n = config.frames_per_recording
    fg_count = int(rng.binomial(n, config.fg_fraction))
    fg_count = min(max(fg_count, 1), n)
    labels = np.full(n, S, dtype=np.int8)
    labels[:fg_count] = FG
    bg_count = (n - fg_count) // 2
    labels[fg_count:fg_count + bg_count] = BG

    offsets = default_class_offsets()
    mfcc = offsets[labels.astype(int)] + rng.normal(0, 1.0, (n, 12))
    log_pitch = rng.normal(4.8 + 0.3 * arousal_level, 0.08, n)
    log_pitch[rng.random(n) < 0.05] = np.nan
    intensity = np.abs(rng.normal(0.5 + 0.2 * arousal_level, 0.05, n))
    hf_lf = np.abs(rng.normal(1.0 + 0.25 * arousal_level, 0.08, n))
    return Recording(
        recording_id=rid, minute_index=minute,
        frame_index=np.arange(n, dtype=np.int64),
        mfcc=mfcc, log_pitch=log_pitch, intensity=intensity,
        hf_lf_ratio=hf_lf, labels=labels)


def _survey_score(rng: np.random.Generator, corr: float, z_trait: float,
                  center: float, spread: float, lo: int, hi: int) -> int:
    latent = corr * z_trait + math.sqrt(max(1.0 - corr * corr, 0.0)) * rng.normal()
    return int(np.clip(round(center + spread * latent), lo, hi))


def gen_cohort(config: CohortConfig) -> tuple[Cohort, GroundTruth]:
    """Cohort with planted shift/unit/survey effects plus its ground truth.

    Only speechy minutes produce recordings (the sensing grid's silent
    probes carry no behavioral signal and are omitted from synthetic
    corpora); every emitted recording satisfies the ingestion invariants.
    """
    rng = np.random.default_rng(config.seed)
    total_minutes = int(round(config.shift_duration_hours * 60))
    participants = []
    truth_rates: dict[str, float] = {}
    target_rates: dict[str, float] = {}
    pid_counter = 0

    for (unit, shift_type) in sorted(config.cells):
        n_cell = config.cells[(unit, shift_type)]
        half_delta = config.day_night_rate_delta / 2.0
        shift_effect = half_delta if shift_type == "day" else -half_delta
        duration_target = config.base_duration_min + config.unit_duration_deltas.get(unit, 0.0)
        for _ in range(n_cell):
            pid = f"p{pid_counter:04d}"
            pid_counter += 1
            trait = float(rng.normal(0.0, config.participant_rate_sd))
            rate_target = config.base_rate + shift_effect + trait
            z_trait = trait / config.participant_rate_sd if config.participant_rate_sd > 0 else 0.0

            shifts = []
            realized_rates = []
            for s in range(config.shifts_per_participant):
                sessions = _plan_shift_sessions(
                    rng, rate_target, duration_target, total_minutes)
                recordings = []
                for start, length in sessions:
                    for minute in range(start, start + length):
                        frac = minute / total_minutes
                        level = config.arousal_halflife_slope * (frac - 0.5) \
                            + float(rng.normal(0, 0.1))
                        recordings.append(_synth_recording(
                            rng, f"{pid}-s{s}-m{minute:04d}", minute, level, config))
                shifts.append(Shift(
                    shift_id=f"{pid}-s{s}", shift_type=shift_type,
                    start_time=datetime(2018, 3, 5) + timedelta(days=s, hours=7),
                    duration_hours=config.shift_duration_hours,
                    recordings=tuple(recordings)))
                realized_rates.append(len(sessions) / config.shift_duration_hours)

            irb_corr = config.freq_irb_corr.get(unit, 0.0)
            stai_corr = config.freq_stai_corr.get(shift_type, 0.0)
            surveys = SurveyRecord(
                stai_total=_survey_score(rng, stai_corr, z_trait, 80.0, 12.0, 40, 160),
                irb_total=_survey_score(rng, irb_corr, z_trait, 30.0, 5.0, 7, 49))
            participants.append(Participant(
                participant_id=pid,
                sex=str(rng.choice(SEXES, p=[0.3, 0.7])),
                age_group=str(rng.choice(AGE_GROUPS, p=[0.51, 0.30, 0.19])),
                work_unit=unit, primary_shift=shift_type,
                shifts=tuple(shifts), surveys=surveys))
            truth_rates[pid] = float(np.mean(realized_rates))
            target_rates[pid] = rate_target

    truth = GroundTruth(
        rate_by_participant=truth_rates,
        target_rate_by_participant=target_rates,
        day_night_rate_delta=config.day_night_rate_delta,
        duration_by_unit={
            unit: config.base_duration_min + config.unit_duration_deltas.get(unit, 0.0)
            for unit, _ in config.cells},
        arousal_halflife_slope=config.arousal_halflife_slope,
        freq_irb_corr=dict(config.freq_irb_corr),
        freq_stai_corr=dict(config.freq_stai_corr))
    return Cohort(participants=tuple(participants)), truth
