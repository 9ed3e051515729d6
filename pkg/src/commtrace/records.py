"""In-memory cohort model: recordings, shifts, participants, surveys.

Frames are stored column-wise as numpy arrays (one recording may hold up to
2000 frames at the 10 ms hop, i.e. a 20 s capture window). Unvoiced frames
carry NaN in ``log_pitch``; every other feature is finite. All containers are
frozen dataclasses and safe to share between threads after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Iterable, NamedTuple, Optional

import numpy as np

from .errors import DataError, LengthMismatch

# Frame-label codes, fixed order (ties in argmax resolve FG < BG < S).
FG, BG, S = 0, 1, 2
CLASS_NAMES = ("FG", "BG", "S")
CLASS_CODES = {name: code for code, name in enumerate(CLASS_NAMES)}

N_MFCC = 12
MAX_FRAMES = 2000  # 20 s window at the 10 ms hop
FRAME_HOP_SECONDS = 0.010

SEXES = ("male", "female")
AGE_GROUPS = ("under40", "40to49", "50plus")
WORK_UNITS = ("ICU", "nonICU", "float", "lab", "office", "other")
SHIFT_TYPES = ("day", "night")

STAI_RANGE = (40, 160)
IRB_RANGE = (7, 49)


class FrameFeatures(NamedTuple):
    """Single-frame view, mainly for tests and debugging."""

    frame_index: int
    mfcc: np.ndarray
    log_pitch: float
    intensity: float
    hf_lf_ratio: float


def labels_from_names(names: Iterable[str]) -> np.ndarray:
    """Map FG/BG/S strings to the int8 codes used throughout."""
    try:
        return np.array([CLASS_CODES[n] for n in names], dtype=np.int8)
    except KeyError as exc:
        raise DataError(f"unknown frame label {exc.args[0]!r}") from None


def labels_to_names(labels: np.ndarray) -> list[str]:
    return [CLASS_NAMES[int(c)] for c in labels]


@dataclass(frozen=True)
class Recording:
    """One feature-extraction window: frames of MFCC 1-12 plus prosody columns."""

    recording_id: str
    minute_index: int
    frame_index: np.ndarray          # int64 [n], strictly increasing
    mfcc: np.ndarray                 # float64 [n, 12]
    log_pitch: np.ndarray            # float64 [n], NaN = unvoiced
    intensity: np.ndarray            # float64 [n], >= 0
    hf_lf_ratio: np.ndarray          # float64 [n], >= 0
    labels: Optional[np.ndarray] = None  # int8 [n] in {FG, BG, S}, or None

    def __post_init__(self):
        n = len(self.frame_index)
        if n == 0:
            raise DataError(f"recording {self.recording_id!r} has no frames")
        if self.mfcc.shape != (n, N_MFCC):
            raise DataError(
                f"recording {self.recording_id!r}: mfcc shape {self.mfcc.shape}, "
                f"expected ({n}, {N_MFCC})")
        for name in ("log_pitch", "intensity", "hf_lf_ratio"):
            if getattr(self, name).shape != (n,):
                raise DataError(f"recording {self.recording_id!r}: bad {name} length")
        if self.labels is not None and self.labels.shape != (n,):
            raise LengthMismatch(
                f"recording {self.recording_id!r}: {len(self.labels)} labels for {n} frames")

    @property
    def n_frames(self) -> int:
        return len(self.frame_index)

    def frame(self, i: int) -> FrameFeatures:
        return FrameFeatures(
            int(self.frame_index[i]), self.mfcc[i],
            float(self.log_pitch[i]), float(self.intensity[i]),
            float(self.hf_lf_ratio[i]))

    def fg_frame_count(self, labels: Optional[np.ndarray] = None) -> int:
        lab = self.labels if labels is None else labels
        if lab is None:
            raise DataError(f"recording {self.recording_id!r} has no labels")
        return int(np.count_nonzero(lab == FG))


@dataclass(frozen=True)
class TeacherPosteriors:
    """Frame-wise class probabilities produced by an external teacher model."""

    recording_id: str
    rows: np.ndarray  # float64 [n, 3], each row on the probability simplex

    def __post_init__(self):
        if self.rows.ndim != 2 or self.rows.shape[1] != 3:
            raise DataError(f"teacher posteriors for {self.recording_id!r}: bad shape")
        if np.any(self.rows < 0):
            raise DataError(f"teacher posteriors for {self.recording_id!r}: negative entry")
        sums = self.rows.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-6):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise DataError(
                f"teacher posteriors for {self.recording_id!r}: row {bad} sums to {sums[bad]!r}")


@dataclass(frozen=True)
class SurveyRecord:
    stai_total: Optional[int] = None
    irb_total: Optional[int] = None

    def __post_init__(self):
        if self.stai_total is not None and not (STAI_RANGE[0] <= self.stai_total <= STAI_RANGE[1]):
            raise DataError(f"stai_total {self.stai_total} outside {STAI_RANGE}")
        if self.irb_total is not None and not (IRB_RANGE[0] <= self.irb_total <= IRB_RANGE[1]):
            raise DataError(f"irb_total {self.irb_total} outside {IRB_RANGE}")


@dataclass(frozen=True)
class Shift:
    shift_id: str
    shift_type: str
    start_time: datetime
    duration_hours: float
    recordings: tuple[Recording, ...] = ()

    def __post_init__(self):
        if self.shift_type not in SHIFT_TYPES:
            raise DataError(f"shift {self.shift_id!r}: bad shift_type {self.shift_type!r}")
        if not self.duration_hours > 0:
            raise DataError(f"shift {self.shift_id!r}: duration_hours must be > 0")
        minutes = [rec.minute_index for rec in self.recordings]
        limit = self.duration_hours * 60
        for m in minutes:
            if not (0 <= m < limit):
                raise DataError(
                    f"shift {self.shift_id!r}: minute_index {m} outside 0..{limit}")
        if len(set(minutes)) != len(minutes):
            raise DataError(f"shift {self.shift_id!r}: duplicate minute_index")


@dataclass(frozen=True)
class Participant:
    participant_id: str
    sex: str
    age_group: str
    work_unit: str
    primary_shift: str
    shifts: tuple[Shift, ...] = ()
    surveys: SurveyRecord = field(default_factory=SurveyRecord)

    def __post_init__(self):
        for value, levels, name in (
                (self.sex, SEXES, "sex"),
                (self.age_group, AGE_GROUPS, "age_group"),
                (self.work_unit, WORK_UNITS, "work_unit"),
                (self.primary_shift, SHIFT_TYPES, "primary_shift")):
            if value not in levels:
                raise DataError(
                    f"participant {self.participant_id!r}: {name}={value!r} "
                    f"not one of {levels}")

    def recorded_shift_count(self) -> int:
        """Shifts that actually contain at least one recording."""
        return sum(1 for sh in self.shifts if sh.recordings)


@dataclass(frozen=True)
class Cohort:
    participants: tuple[Participant, ...] = ()

    def __iter__(self):
        return iter(self.participants)

    def __len__(self):
        return len(self.participants)

    def get(self, participant_id: str) -> Participant:
        for p in self.participants:
            if p.participant_id == participant_id:
                return p
        raise KeyError(participant_id)

    def all_recordings(self) -> list[tuple[Participant, Shift, Recording]]:
        out = []
        for p in self.participants:
            for sh in p.shifts:
                for rec in sh.recordings:
                    out.append((p, sh, rec))
        return out


def filter_compliant(cohort: Cohort, min_shifts: int) -> Cohort:
    """Keep participants with at least ``min_shifts`` shifts that hold >= 1 recording.

    Participant order is preserved; the operation is idempotent and monotone
    in ``min_shifts``.
    """
    if min_shifts < 1:
        raise DataError(f"min_shifts must be >= 1, got {min_shifts}")
    kept = tuple(p for p in cohort.participants
                 if p.recorded_shift_count() >= min_shifts)
    return Cohort(participants=kept)


def attach_surveys(cohort: Cohort, surveys: dict[str, SurveyRecord]) -> Cohort:
    """Return a cohort with survey records merged onto matching participants."""
    updated = tuple(
        replace(p, surveys=surveys[p.participant_id]) if p.participant_id in surveys else p
        for p in cohort.participants)
    return Cohort(participants=updated)


def recordings_equal(a: Recording, b: Recording) -> bool:
    """Structural equality, treating NaN log-pitch sentinels as equal."""
    if (a.recording_id, a.minute_index) != (b.recording_id, b.minute_index):
        return False
    if a.n_frames != b.n_frames:
        return False
    if not np.array_equal(a.frame_index, b.frame_index):
        return False
    if not np.array_equal(a.mfcc, b.mfcc):
        return False
    if not np.array_equal(a.log_pitch, b.log_pitch, equal_nan=True):
        return False
    if not np.array_equal(a.intensity, b.intensity):
        return False
    if not np.array_equal(a.hf_lf_ratio, b.hf_lf_ratio):
        return False
    if (a.labels is None) != (b.labels is None):
        return False
    if a.labels is not None and not np.array_equal(a.labels, b.labels):
        return False
    return True
