"""Parsers and serializers for the on-disk research-data formats.

Formats (all plain text, diff-able):

* feature file   - CSV with header ``frame_index,mfcc1..mfcc12,log_pitch,
                   intensity,hf_lf_ratio[,label]``; one file per recording;
                   an empty ``log_pitch`` field marks an unvoiced frame.
* manifest       - one JSON object per line describing participants, shifts,
                   and recordings (with file paths relative to a data root).
* teacher file   - CSV ``frame_index,p_fg,p_bg,p_s``; rows must lie on the
                   probability simplex within 1e-6.
* survey file    - CSV ``participant_id,stai_total,irb_total`` with empty
                   fields for missing scores.

Parsing is pure per file; serialization uses ``repr`` for floats so that
every value round-trips bit-exactly.
"""

from __future__ import annotations

import json
import math
from datetime import datetime
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import records as rec
from .errors import (
    DanglingRecordingRef,
    DataError,
    DuplicateParticipantId,
    MalformedRow,
    NonMonotoneFrameIndex,
    TooManyFrames,
    UnknownEnumLevel,
)

FEATURE_HEADER = (
    ["frame_index"] + [f"mfcc{i}" for i in range(1, 13)]
    + ["log_pitch", "intensity", "hf_lf_ratio"])
TEACHER_HEADER = ["frame_index", "p_fg", "p_bg", "p_s"]
SURVEY_HEADER = ["participant_id", "stai_total", "irb_total"]

_LOG_PITCH_COL = 13  # within FEATURE_HEADER


def _as_text(data: Union[bytes, str]) -> str:
    return data.decode("utf-8") if isinstance(data, bytes) else data


def _fmt(x: float) -> str:
    """Shortest decimal form that round-trips; empty marks an unvoiced pitch."""
    if isinstance(x, float) and math.isnan(x):
        return ""
    return repr(float(x))


# ---------------------------------------------------------------------------
# feature files
# ---------------------------------------------------------------------------

def parse_recording(data: Union[bytes, str], *, recording_id: str = "",
                    minute_index: int = 0) -> rec.Recording:
    """Parse one per-recording feature file into a Recording.

    Raises MalformedRow for schema violations, NonMonotoneFrameIndex when
    frame indices do not strictly increase, and TooManyFrames past the
    2000-frame (20 s) cap.
    """
    lines = [ln for ln in _as_text(data).splitlines() if ln.strip()]
    if not lines:
        raise MalformedRow(f"{recording_id!r}: empty feature file")
    header = lines[0].split(",")
    has_label = header == FEATURE_HEADER + ["label"]
    if not has_label and header != FEATURE_HEADER:
        raise MalformedRow(f"{recording_id!r}: unexpected header {lines[0]!r}")
    ncols = len(FEATURE_HEADER) + (1 if has_label else 0)

    body = lines[1:]
    if not body:
        raise MalformedRow(f"{recording_id!r}: no frame rows")
    if len(body) > rec.MAX_FRAMES:
        raise TooManyFrames(f"{recording_id!r}: {len(body)} frames > {rec.MAX_FRAMES}")

    numeric_rows: list[list[str]] = []
    label_names: list[str] = []
    for lineno, line in enumerate(body, start=2):
        fields = line.split(",")
        if len(fields) != ncols:
            raise MalformedRow(
                f"{recording_id!r} line {lineno}: {len(fields)} columns, expected {ncols}")
        if has_label:
            label_names.append(fields[-1])
            fields = fields[:-1]
        if fields[_LOG_PITCH_COL] == "":
            fields[_LOG_PITCH_COL] = "nan"
        numeric_rows.append(fields)

    try:
        arr = np.array(numeric_rows, dtype=np.float64)
    except ValueError:
        for lineno, fields in enumerate(numeric_rows, start=2):
            for name, field in zip(FEATURE_HEADER, fields):
                try:
                    float(field)
                except ValueError:
                    raise MalformedRow(
                        f"{recording_id!r} line {lineno}: non-numeric {name}={field!r}"
                    ) from None
        raise  # pragma: no cover - located above

    frame_index = arr[:, 0]
    if np.any(frame_index != np.floor(frame_index)):
        raise MalformedRow(f"{recording_id!r}: non-integer frame_index")
    fi = frame_index.astype(np.int64)
    if len(fi) > 1 and np.any(np.diff(fi) <= 0):
        pos = int(np.argmax(np.diff(fi) <= 0))
        raise NonMonotoneFrameIndex(
            f"{recording_id!r}: frame_index not strictly increasing at row {pos + 1}")

    mfcc = arr[:, 1:13]
    log_pitch = arr[:, 13]
    intensity = arr[:, 14]
    hf_lf = arr[:, 15]
    finite_cols = np.concatenate([mfcc, intensity[:, None], hf_lf[:, None]], axis=1)
    if not np.all(np.isfinite(finite_cols)):
        raise MalformedRow(f"{recording_id!r}: non-finite feature value")
    if np.any(intensity < 0):
        raise MalformedRow(f"{recording_id!r}: negative intensity")
    if np.any(hf_lf < 0):
        raise MalformedRow(f"{recording_id!r}: negative hf_lf_ratio")

    labels = None
    if has_label:
        try:
            labels = rec.labels_from_names(label_names)
        except DataError as exc:
            raise MalformedRow(f"{recording_id!r}: {exc}") from None

    return rec.Recording(
        recording_id=recording_id, minute_index=minute_index,
        frame_index=fi, mfcc=mfcc, log_pitch=log_pitch,
        intensity=intensity, hf_lf_ratio=hf_lf, labels=labels)


def serialize_recording(recording: rec.Recording) -> str:
    header = FEATURE_HEADER + (["label"] if recording.labels is not None else [])
    out = [",".join(header)]
    for i in range(recording.n_frames):
        fields = [str(int(recording.frame_index[i]))]
        fields += [_fmt(v) for v in recording.mfcc[i]]
        fields.append(_fmt(recording.log_pitch[i]))
        fields.append(_fmt(recording.intensity[i]))
        fields.append(_fmt(recording.hf_lf_ratio[i]))
        if recording.labels is not None:
            fields.append(rec.CLASS_NAMES[int(recording.labels[i])])
        out.append(",".join(fields))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# teacher posteriors
# ---------------------------------------------------------------------------

def parse_teacher_posteriors(data: Union[bytes, str],
                             recording_id: str = "") -> rec.TeacherPosteriors:
    lines = [ln for ln in _as_text(data).splitlines() if ln.strip()]
    if not lines or lines[0].split(",") != TEACHER_HEADER:
        raise MalformedRow(f"teacher file {recording_id!r}: bad or missing header")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != 4:
            raise MalformedRow(f"teacher file {recording_id!r} line {lineno}: bad column count")
        rows.append(fields)
    if not rows:
        raise MalformedRow(f"teacher file {recording_id!r}: no rows")
    try:
        arr = np.array(rows, dtype=np.float64)
    except ValueError:
        raise MalformedRow(f"teacher file {recording_id!r}: non-numeric field") from None
    fi = arr[:, 0]
    if len(fi) > 1 and np.any(np.diff(fi) <= 0):
        raise NonMonotoneFrameIndex(f"teacher file {recording_id!r}: frame_index not increasing")
    try:
        return rec.TeacherPosteriors(recording_id=recording_id, rows=arr[:, 1:4])
    except DataError as exc:
        raise MalformedRow(str(exc)) from None


def serialize_teacher_posteriors(post: rec.TeacherPosteriors) -> str:
    out = [",".join(TEACHER_HEADER)]
    for i, row in enumerate(post.rows):
        out.append(",".join([str(i)] + [_fmt(v) for v in row]))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# surveys
# ---------------------------------------------------------------------------

def parse_surveys(data: Union[bytes, str]) -> dict[str, rec.SurveyRecord]:
    lines = [ln for ln in _as_text(data).splitlines() if ln.strip()]
    if not lines or lines[0].split(",") != SURVEY_HEADER:
        raise MalformedRow("survey file: bad or missing header")
    out: dict[str, rec.SurveyRecord] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != 3:
            raise MalformedRow(f"survey file line {lineno}: bad column count")
        pid, stai, irb = fields
        if pid in out:
            raise DuplicateParticipantId(f"survey file: duplicate {pid!r}")
        try:
            out[pid] = rec.SurveyRecord(
                stai_total=int(stai) if stai else None,
                irb_total=int(irb) if irb else None)
        except ValueError:
            raise MalformedRow(f"survey file line {lineno}: non-integer score") from None
    return out


def serialize_surveys(surveys: dict[str, rec.SurveyRecord]) -> str:
    out = [",".join(SURVEY_HEADER)]
    for pid in sorted(surveys):
        sv = surveys[pid]
        out.append(",".join([
            pid,
            "" if sv.stai_total is None else str(sv.stai_total),
            "" if sv.irb_total is None else str(sv.irb_total)]))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def recording_relpath(recording_id: str) -> str:
    return f"recordings/{recording_id}.csv"


def parse_manifest(data: Union[bytes, str],
                   root: Optional[Union[str, Path]] = None) -> rec.Cohort:
    """Assemble a fully linked Cohort from a line-delimited manifest.

    ``root`` anchors the relative feature-file paths; a missing file or a
    record referencing an unknown parent raises DanglingRecordingRef.
    """
    root_path = Path(root) if root is not None else None
    participants: dict[str, dict] = {}
    order: list[str] = []

    for lineno, line in enumerate(_as_text(data).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRow(f"manifest line {lineno}: {exc}") from None
        kind = obj.get("kind")
        try:
            if kind == "participant":
                pid = obj["participant_id"]
                if pid in participants:
                    raise DuplicateParticipantId(f"manifest line {lineno}: {pid!r}")
                _check_enum(obj, "sex", rec.SEXES, lineno)
                _check_enum(obj, "age_group", rec.AGE_GROUPS, lineno)
                _check_enum(obj, "work_unit", rec.WORK_UNITS, lineno)
                _check_enum(obj, "primary_shift", rec.SHIFT_TYPES, lineno)
                participants[pid] = {"obj": obj, "shifts": {}, "shift_order": []}
                order.append(pid)
            elif kind == "shift":
                pid = obj["participant_id"]
                if pid not in participants:
                    raise DanglingRecordingRef(
                        f"manifest line {lineno}: shift for unknown participant {pid!r}")
                _check_enum(obj, "shift_type", rec.SHIFT_TYPES, lineno)
                entry = participants[pid]
                sid = obj["shift_id"]
                if sid in entry["shifts"]:
                    raise DataError(f"manifest line {lineno}: duplicate shift {sid!r}")
                entry["shifts"][sid] = {"obj": obj, "recordings": []}
                entry["shift_order"].append(sid)
            elif kind == "recording":
                pid = obj["participant_id"]
                sid = obj["shift_id"]
                if pid not in participants or sid not in participants[pid]["shifts"]:
                    raise DanglingRecordingRef(
                        f"manifest line {lineno}: recording for unknown shift "
                        f"{pid!r}/{sid!r}")
                participants[pid]["shifts"][sid]["recordings"].append((lineno, obj))
            else:
                raise MalformedRow(f"manifest line {lineno}: unknown kind {kind!r}")
        except KeyError as exc:
            raise MalformedRow(
                f"manifest line {lineno}: missing field {exc.args[0]!r}") from None

    seen_recording_ids: set[str] = set()
    built: list[rec.Participant] = []
    for pid in order:
        entry = participants[pid]
        shifts = []
        for sid in entry["shift_order"]:
            sobj = entry["shifts"][sid]["obj"]
            recordings = []
            for lineno, robj in entry["shifts"][sid]["recordings"]:
                rid = robj["recording_id"]
                if rid in seen_recording_ids:
                    raise DataError(f"manifest line {lineno}: duplicate recording {rid!r}")
                seen_recording_ids.add(rid)
                if root_path is None:
                    raise DanglingRecordingRef(
                        f"manifest line {lineno}: recording {rid!r} listed but no "
                        "data root was given")
                path = root_path / robj["path"]
                if not path.is_file():
                    raise DanglingRecordingRef(
                        f"manifest line {lineno}: missing feature file {path}")
                recordings.append(parse_recording(
                    path.read_text(), recording_id=rid,
                    minute_index=int(robj["minute_index"])))
            recordings.sort(key=lambda r: r.minute_index)
            shifts.append(rec.Shift(
                shift_id=sid, shift_type=sobj["shift_type"],
                start_time=datetime.fromisoformat(sobj["start_time"]),
                duration_hours=float(sobj["duration_hours"]),
                recordings=tuple(recordings)))
        pobj = entry["obj"]
        built.append(rec.Participant(
            participant_id=pid, sex=pobj["sex"], age_group=pobj["age_group"],
            work_unit=pobj["work_unit"], primary_shift=pobj["primary_shift"],
            shifts=tuple(shifts)))
    return rec.Cohort(participants=tuple(built))


def _check_enum(obj: dict, key: str, levels: tuple, lineno: int) -> None:
    if obj[key] not in levels:
        raise UnknownEnumLevel(
            f"manifest line {lineno}: {key}={obj[key]!r} not one of {levels}")


def serialize_manifest(cohort: rec.Cohort) -> str:
    """Manifest text for a cohort, with the conventional recording paths."""
    lines = []
    for p in cohort.participants:
        lines.append(json.dumps({
            "kind": "participant", "participant_id": p.participant_id,
            "sex": p.sex, "age_group": p.age_group, "work_unit": p.work_unit,
            "primary_shift": p.primary_shift}, sort_keys=True))
        for sh in p.shifts:
            lines.append(json.dumps({
                "kind": "shift", "participant_id": p.participant_id,
                "shift_id": sh.shift_id, "shift_type": sh.shift_type,
                "start_time": sh.start_time.isoformat(),
                "duration_hours": sh.duration_hours}, sort_keys=True))
            for r in sh.recordings:
                lines.append(json.dumps({
                    "kind": "recording", "participant_id": p.participant_id,
                    "shift_id": sh.shift_id, "recording_id": r.recording_id,
                    "minute_index": r.minute_index,
                    "path": recording_relpath(r.recording_id)}, sort_keys=True))
    return "\n".join(lines) + "\n"


def write_cohort(cohort: rec.Cohort, root: Union[str, Path],
                 surveys: Optional[dict[str, rec.SurveyRecord]] = None) -> Path:
    """Write manifest + feature files (+ surveys) under ``root``; returns the
    manifest path."""
    root = Path(root)
    (root / "recordings").mkdir(parents=True, exist_ok=True)
    for p in cohort.participants:
        for sh in p.shifts:
            for r in sh.recordings:
                out = root / recording_relpath(r.recording_id)
                out.write_text(serialize_recording(r))
    manifest_path = root / "manifest.jsonl"
    manifest_path.write_text(serialize_manifest(cohort))
    if surveys is None:
        surveys = {p.participant_id: p.surveys for p in cohort.participants
                   if p.surveys != rec.SurveyRecord()}
    (root / "surveys.csv").write_text(serialize_surveys(surveys))
    return manifest_path


def load_cohort(root: Union[str, Path]) -> rec.Cohort:
    """Read manifest + recordings + surveys from a cohort directory."""
    root = Path(root)
    manifest = root / "manifest.jsonl"
    if not manifest.is_file():
        raise DanglingRecordingRef(f"no manifest at {manifest}")
    cohort = parse_manifest(manifest.read_text(), root=root)
    surveys_path = root / "surveys.csv"
    if surveys_path.is_file():
        cohort = rec.attach_surveys(cohort, parse_surveys(surveys_path.read_text()))
    return cohort
