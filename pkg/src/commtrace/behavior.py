"""Speech sessions and per-shift / per-participant speaking features.

A speech session is a maximal run of one-minute-spaced qualifying recordings
(each holding at least ``min_fg_frames`` foreground frames). Session duration
counts one minute per member recording, since each recording is the 20 s
probe of its minute on the sensing grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import MissingLabels, NoShifts, UnsortedInput, ZeroDuration
from .records import FG, Shift

DEFAULT_MIN_FG_FRAMES = 200


@dataclass(frozen=True)
class Session:
    minute_indices: tuple[int, ...]
    recording_ids: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.minute_indices:
            raise ValueError("a session cannot be empty")
        for a, b in zip(self.minute_indices, self.minute_indices[1:]):
            if b != a + 1:
                raise ValueError(f"session minutes not consecutive: {a} -> {b}")
        if self.recording_ids and len(self.recording_ids) != len(self.minute_indices):
            raise ValueError("recording_ids must parallel minute_indices")

    @property
    def duration_minutes(self) -> float:
        return float(len(self.minute_indices))

    @property
    def first_minute(self) -> int:
        return self.minute_indices[0]


@dataclass(frozen=True)
class BehaviorFeatures:
    sessions_per_hour: float
    avg_session_duration_min: Optional[float]
    n_sessions: int


def qualify_recordings(shift: Shift,
                       labels: Optional[Mapping[str, np.ndarray]] = None,
                       min_fg_frames: int = DEFAULT_MIN_FG_FRAMES
                       ) -> list[tuple[int, str]]:
    """Minute indices (with recording ids) of recordings whose FG frame count
    meets the threshold, sorted by minute.

    ``labels`` maps recording_id to an inferred label array; recordings fall
    back to their own stored labels when absent from the mapping.
    """
    qualified = []
    for recording in shift.recordings:
        lab = labels.get(recording.recording_id) if labels is not None else None
        if lab is None:
            lab = recording.labels
        if lab is None:
            raise MissingLabels(
                f"recording {recording.recording_id!r} has no labels, inferred or given")
        if len(lab) != recording.n_frames:
            raise MissingLabels(
                f"recording {recording.recording_id!r}: {len(lab)} labels for "
                f"{recording.n_frames} frames")
        if int(np.count_nonzero(np.asarray(lab) == FG)) >= min_fg_frames:
            qualified.append((recording.minute_index, recording.recording_id))
    qualified.sort()
    return qualified


def segment_sessions(minute_indices: Sequence[int],
                     recording_ids: Optional[Sequence[str]] = None) -> list[Session]:
    """Group sorted unique minute indices into maximal consecutive runs."""
    minutes = list(minute_indices)
    for a, b in zip(minutes, minutes[1:]):
        if b <= a:
            raise UnsortedInput(f"minute indices not strictly increasing: {a}, {b}")
    ids = list(recording_ids) if recording_ids is not None else [""] * len(minutes)
    if len(ids) != len(minutes):
        raise UnsortedInput("recording_ids must parallel minute_indices")

    sessions: list[Session] = []
    run_start = 0
    for i in range(1, len(minutes) + 1):
        if i == len(minutes) or minutes[i] != minutes[i - 1] + 1:
            sessions.append(Session(
                minute_indices=tuple(minutes[run_start:i]),
                recording_ids=tuple(ids[run_start:i]) if recording_ids is not None else ()))
            run_start = i
    return sessions


def shift_features(shift: Shift, sessions: Sequence[Session]) -> BehaviorFeatures:
    """Sessions per hour and mean session duration (minutes) for one shift."""
    if shift.duration_hours <= 0:
        raise ZeroDuration(f"shift {shift.shift_id!r} has nonpositive duration")
    n = len(sessions)
    avg = float(np.mean([s.duration_minutes for s in sessions])) if n else None
    return BehaviorFeatures(
        sessions_per_hour=n / shift.duration_hours,
        avg_session_duration_min=avg,
        n_sessions=n)


def participant_features(per_shift: Sequence[BehaviorFeatures]) -> BehaviorFeatures:
    """Unweighted mean across shifts.

    The duration mean is taken only over shifts that actually had sessions;
    shifts without speech still contribute to the rate mean.
    """
    if not per_shift:
        raise NoShifts("participant has no shifts with features")
    rate = float(np.mean([f.sessions_per_hour for f in per_shift]))
    durations = [f.avg_session_duration_min for f in per_shift
                 if f.avg_session_duration_min is not None]
    avg = float(np.mean(durations)) if durations else None
    return BehaviorFeatures(
        sessions_per_hour=rate,
        avg_session_duration_min=avg,
        n_sessions=sum(f.n_sessions for f in per_shift))


def shift_sessions(shift: Shift,
                   labels: Optional[Mapping[str, np.ndarray]] = None,
                   min_fg_frames: int = DEFAULT_MIN_FG_FRAMES) -> list[Session]:
    """qualify + segment in one step."""
    qualified = qualify_recordings(shift, labels, min_fg_frames)
    return segment_sessions([m for m, _ in qualified], [r for _, r in qualified])


def minute_half(minute_index: int, duration_hours: float) -> str:
    """Which half of a shift a minute falls in, split on the minute grid."""
    return "first" if minute_index < duration_hours * 60.0 / 2.0 else "second"


def session_half(session: Session, duration_hours: float) -> str:
    """A session straddling the midpoint is assigned by its first minute."""
    return minute_half(session.first_minute, duration_hours)
