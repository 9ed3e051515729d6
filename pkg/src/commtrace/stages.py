"""Pipeline stages: gen, train, infer, score, segment, arousal, analyze, report.

Each stage reads its prerequisites from the data/output roots, writes its
artifacts under ``<output_root>/<stage>/`` (overridable), and finishes with a
``manifest.json`` recording sha256 hashes of its direct inputs and every
output. All file iteration is sorted and floats are serialized with ``repr``,
so a stage rerun with unchanged inputs and seed is byte-identical.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import arousal as ar
from . import behavior as bh
from . import dermetrics as dm
from . import featureio as fio
from . import stats as st
from . import synth
from . import training as tr
from .config import PipelineConfig
from .errors import (
    CommtraceError,
    EmptyHalf,
    InsufficientData,
    MissingPrerequisite,
    NoData,
    NoReferenceSpeech,
)
from .records import (
    CLASS_NAMES,
    MAX_FRAMES,
    Cohort,
    TeacherPosteriors,
    filter_compliant,
    labels_from_names,
)

STAGES = ("gen", "train", "infer", "score", "segment", "arousal", "analyze", "report")


# ---------------------------------------------------------------------------
# small helpers
# ---------------------------------------------------------------------------

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _label_for(path: Path, config: PipelineConfig) -> str:
    for prefix, root in (("data", config.data_root), ("out", config.output_root)):
        try:
            return f"{prefix}:{path.relative_to(root).as_posix()}"
        except ValueError:
            continue
    return path.name


def _write_manifest(stage: str, stage_dir: Path, config: PipelineConfig,
                    inputs: list[Path], outputs: list[Path]) -> Path:
    manifest = {
        "stage": stage,
        "seed": config.seed,
        "inputs": {_label_for(p, config): _sha256(p) for p in sorted(inputs)},
        "outputs": {_label_for(p, config): _sha256(p) for p in sorted(outputs)},
    }
    path = stage_dir / "manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return path


def _require(path: Path, needed_by: str, hint: str) -> Path:
    if not path.exists():
        raise MissingPrerequisite(
            f"stage {needed_by!r} needs {path}; run the {hint!r} stage first")
    return path


def _stage_dir(config: PipelineConfig, stage: str,
               override: Optional[Path]) -> Path:
    d = Path(override) if override is not None else config.output_root / stage
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_csv(path: Path, header: list[str], rows: list[list]) -> Path:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _load_labels_csv(path: Path) -> dict[str, np.ndarray]:
    by_recording: dict[str, list[str]] = {}
    for row in _read_csv(path):
        by_recording.setdefault(row["recording_id"], []).append(row["label"])
    return {rid: labels_from_names(names) for rid, names in by_recording.items()}


def _load_cohort(config: PipelineConfig) -> Cohort:
    root = config.data_root / "cohort"
    _require(root / "manifest.jsonl", "downstream", "gen")
    return fio.load_cohort(root)


def _labels_for_cohort(config: PipelineConfig, stage: str
                       ) -> tuple[Optional[dict[str, np.ndarray]], list[Path]]:
    """Label source per config: inferred labels.csv or stored reference labels."""
    if config.behavior.labels == "reference":
        return None, []
    path = _require(config.output_root / "infer" / "labels.csv", stage, "infer")
    return _load_labels_csv(path), [path]


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

def run_gen(config: PipelineConfig, stage_dir: Optional[Path] = None) -> list[Path]:
    out_dir = _stage_dir(config, "gen", stage_dir)
    outputs: list[Path] = []

    stream_dir = config.data_root / "stream" / "train"
    stream_dir.mkdir(parents=True, exist_ok=True)
    recording, teacher = synth.gen_stream(
        config.synth.stream, config.synth.stream_frames, seed=config.seed)
    # chop the long stream into ingestion-legal files
    for i, start in enumerate(range(0, recording.n_frames, MAX_FRAMES)):
        stop = min(start + MAX_FRAMES, recording.n_frames)
        part = dataclasses.replace(
            recording,
            recording_id=f"{recording.recording_id}-part{i:03d}",
            frame_index=np.arange(stop - start, dtype=np.int64),
            mfcc=recording.mfcc[start:stop],
            log_pitch=recording.log_pitch[start:stop],
            intensity=recording.intensity[start:stop],
            hf_lf_ratio=recording.hf_lf_ratio[start:stop],
            labels=recording.labels[start:stop])
        rec_path = stream_dir / f"rec_{i:03d}.csv"
        rec_path.write_text(fio.serialize_recording(part))
        teach_path = stream_dir / f"teacher_{i:03d}.csv"
        teach_path.write_text(fio.serialize_teacher_posteriors(
            TeacherPosteriors(recording_id=part.recording_id,
                              rows=teacher.rows[start:stop])))
        outputs += [rec_path, teach_path]

    cohort, truth = synth.gen_cohort(config.synth.cohort)
    cohort_dir = config.data_root / "cohort"
    fio.write_cohort(cohort, cohort_dir)
    outputs.append(cohort_dir / "manifest.jsonl")
    outputs.append(cohort_dir / "surveys.csv")
    outputs += sorted((cohort_dir / "recordings").glob("*.csv"))

    truth_path = out_dir / "ground_truth.json"
    truth_path.write_text(json.dumps({
        "day_night_rate_delta": truth.day_night_rate_delta,
        "duration_by_unit": truth.duration_by_unit,
        "arousal_halflife_slope": truth.arousal_halflife_slope,
        "freq_irb_corr": truth.freq_irb_corr,
        "freq_stai_corr": truth.freq_stai_corr,
        "rate_by_participant": truth.rate_by_participant,
    }, sort_keys=True, indent=1) + "\n")
    outputs.append(truth_path)

    outputs.append(_write_manifest("gen", out_dir, config, [], outputs))
    return outputs


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def run_train(config: PipelineConfig, stage_dir: Optional[Path] = None) -> list[Path]:
    out_dir = _stage_dir(config, "train", stage_dir)
    stream_dir = config.data_root / "stream" / "train"
    _require(stream_dir, "train", "gen")
    rec_paths = sorted(stream_dir.glob("rec_*.csv"))
    if not rec_paths:
        raise MissingPrerequisite(f"no stream recordings under {stream_dir}")

    windows = []
    inputs = []
    for rec_path in rec_paths:
        teach_path = stream_dir / rec_path.name.replace("rec_", "teacher_")
        _require(teach_path, "train", "gen")
        recording = fio.parse_recording(rec_path.read_text(),
                                        recording_id=rec_path.stem)
        teacher = fio.parse_teacher_posteriors(teach_path.read_text(),
                                               recording_id=rec_path.stem)
        windows += tr.make_windows(recording, teacher, config.train.window_frames)
        inputs += [rec_path, teach_path]

    model, history = tr.train(windows, config.train, config.student)
    model_path = out_dir / "model.json"
    tr.save_model(model, model_path)
    log_path = out_dir / "training_log.csv"
    log_path.write_text(tr.training_log_csv(history))
    outputs = [model_path, log_path]
    outputs.append(_write_manifest("train", out_dir, config, inputs, outputs))
    return outputs


# ---------------------------------------------------------------------------
# infer
# ---------------------------------------------------------------------------

def run_infer(config: PipelineConfig, stage_dir: Optional[Path] = None) -> list[Path]:
    out_dir = _stage_dir(config, "infer", stage_dir)
    model_path = _require(config.output_root / "train" / "model.json", "infer", "train")
    model = tr.load_model(model_path)
    cohort = _load_cohort(config)

    items = sorted(((rec.recording_id, rec)
                    for _, _, rec in cohort.all_recordings()), key=lambda kv: kv[0])

    def infer_one(item):
        rid, recording = item
        return rid, tr.infer_labels(model, recording, config.train.window_frames)

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = dict(pool.map(infer_one, items))
    else:
        results = dict(infer_one(item) for item in items)

    rows = []
    for rid, _ in items:
        labels = results[rid]
        for i, code in enumerate(labels):
            rows.append([rid, i, CLASS_NAMES[int(code)]])
    labels_path = _write_csv(out_dir / "labels.csv",
                             ["recording_id", "frame_index", "label"], rows)
    inputs = [model_path, config.data_root / "cohort" / "manifest.jsonl"]
    outputs = [labels_path]
    outputs.append(_write_manifest("infer", out_dir, config, inputs, outputs))
    return outputs


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------

def run_score(config: PipelineConfig, stage_dir: Optional[Path] = None) -> list[Path]:
    out_dir = _stage_dir(config, "score", stage_dir)
    labels_path = _require(config.output_root / "infer" / "labels.csv", "score", "infer")
    inferred = _load_labels_csv(labels_path)
    cohort = _load_cohort(config)

    scored = []
    skipped = 0
    for _, _, recording in sorted(cohort.all_recordings(),
                                  key=lambda t: t[2].recording_id):
        if recording.labels is None or recording.recording_id not in inferred:
            skipped += 1
            continue
        try:
            scored.append((recording.recording_id,
                           dm.score(recording.labels, inferred[recording.recording_id])))
        except NoReferenceSpeech:
            skipped += 1
    if skipped:
        warnings.warn(f"score: skipped {skipped} recordings without reference speech")

    scores_path = out_dir / "scores.csv"
    scores_path.write_text(dm.score_report_csv(scored))
    inputs = [labels_path, config.data_root / "cohort" / "manifest.jsonl"]
    outputs = [scores_path]
    outputs.append(_write_manifest("score", out_dir, config, inputs, outputs))
    return outputs


# ---------------------------------------------------------------------------
# segment
# ---------------------------------------------------------------------------

def run_segment(config: PipelineConfig, stage_dir: Optional[Path] = None) -> list[Path]:
    out_dir = _stage_dir(config, "segment", stage_dir)
    cohort = _load_cohort(config)
    labels, label_inputs = _labels_for_cohort(config, "segment")

    session_rows = []
    shift_rows = []
    participant_rows = []
    for participant in cohort:
        per_shift = []
        for shift in participant.shifts:
            sessions = bh.shift_sessions(shift, labels, config.behavior.min_fg_frames)
            feats = bh.shift_features(shift, sessions)
            per_shift.append(feats)
            for k, session in enumerate(sessions):
                session_rows.append([
                    participant.participant_id, shift.shift_id, k,
                    session.first_minute, len(session.minute_indices)])
            shift_rows.append([
                participant.participant_id, shift.shift_id,
                feats.sessions_per_hour, feats.avg_session_duration_min,
                feats.n_sessions])
        pf = bh.participant_features(per_shift)
        participant_rows.append([
            participant.participant_id, "ALL", pf.sessions_per_hour,
            pf.avg_session_duration_min, pf.n_sessions])

    outputs = [
        _write_csv(out_dir / "sessions.csv",
                   ["participant_id", "shift_id", "session_index",
                    "start_minute", "n_minutes"], session_rows),
        _write_csv(out_dir / "shift_features.csv",
                   ["participant_id", "shift_id", "sessions_per_hour",
                    "avg_session_duration_min", "n_sessions"], shift_rows),
        _write_csv(out_dir / "participant_features.csv",
                   ["participant_id", "shift_id", "sessions_per_hour",
                    "avg_session_duration_min", "n_sessions"], participant_rows),
    ]
    inputs = [config.data_root / "cohort" / "manifest.jsonl"] + label_inputs
    outputs.append(_write_manifest("segment", out_dir, config, inputs, outputs))
    return outputs


# ---------------------------------------------------------------------------
# arousal
# ---------------------------------------------------------------------------

def run_arousal(config: PipelineConfig, stage_dir: Optional[Path] = None) -> list[Path]:
    out_dir = _stage_dir(config, "arousal", stage_dir)
    cohort = _load_cohort(config)
    labels, label_inputs = _labels_for_cohort(config, "arousal")
    q = config.arousal.quantile
    min_fg = config.behavior.min_fg_frames if config.arousal.qualified_only else None

    fusion_rows, half_rows, score_rows, participant_rows = [], [], [], []
    skipped = 0
    for participant in cohort:
        try:
            profile = ar.participant_profile(
                participant, labels,
                min_model_size=config.arousal.min_model_size,
                min_fg_frames=min_fg)
        except (InsufficientData, NoData):
            skipped += 1
            continue
        fusion_rows.append([participant.participant_id,
                            *[float(w) for w in profile.weights],
                            *[float(r) for r in profile.correlations]])
        shifts_by_id = {s.shift_id: s for s in participant.shifts}
        for rid, sid, minute, fused in zip(
                profile.recording_ids, profile.shift_ids,
                profile.minute_indices, profile.fused_scores):
            shift = shifts_by_id[sid]
            score_rows.append([
                participant.participant_id, sid, rid, minute,
                shift.duration_hours, participant.primary_shift,
                participant.work_unit, float(fused)])
        per_shift_halves = []
        for shift in participant.shifts:
            mask = [i for i, sid in enumerate(profile.shift_ids)
                    if sid == shift.shift_id]
            minutes = [profile.minute_indices[i] for i in mask]
            fused = [float(profile.fused_scores[i]) for i in mask]
            halves = []
            for half in ("first", "second"):
                try:
                    value = ar.shift_half_percentile(shift, minutes, fused, half, q)
                except EmptyHalf:
                    value = None
                halves.append(value)
                half_rows.append([
                    participant.participant_id, shift.shift_id, half, value,
                    sum(1 for m in minutes
                        if bh.minute_half(m, shift.duration_hours) == half)])
            per_shift_halves.append((halves[0], halves[1]))
        try:
            first, second = ar.participant_half_features(per_shift_halves)
        except NoData:
            first = second = None
        participant_rows.append([participant.participant_id, first, second])

    if skipped:
        warnings.warn(f"arousal: skipped {skipped} participants with too few "
                      "scoreable recordings")

    outputs = [
        _write_csv(out_dir / "fusion.csv",
                   ["participant_id", "w_log_pitch", "w_intensity", "w_hf_lf_ratio",
                    "r_log_pitch", "r_intensity", "r_hf_lf_ratio"], fusion_rows),
        _write_csv(out_dir / "scores.csv",
                   ["participant_id", "shift_id", "recording_id", "minute_index",
                    "duration_hours", "primary_shift", "work_unit", "fused_score"],
                   score_rows),
        _write_csv(out_dir / "half_features.csv",
                   ["participant_id", "shift_id", "half", "p90_arousal",
                    "n_recordings"], half_rows),
        _write_csv(out_dir / "participant_features.csv",
                   ["participant_id", "first_half_p90", "second_half_p90"],
                   participant_rows),
    ]
    inputs = [config.data_root / "cohort" / "manifest.jsonl"] + label_inputs
    outputs.append(_write_manifest("arousal", out_dir, config, inputs, outputs))
    return outputs


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def _participant_table(config: PipelineConfig) -> tuple[list[dict], list[Path]]:
    cohort = _load_cohort(config)
    cohort = filter_compliant(cohort, config.behavior.min_shifts)
    seg_path = _require(config.output_root / "segment" / "participant_features.csv",
                        "analyze", "segment")
    aro_path = _require(config.output_root / "arousal" / "participant_features.csv",
                        "analyze", "arousal")
    seg = {r["participant_id"]: r for r in _read_csv(seg_path)}
    aro = {r["participant_id"]: r for r in _read_csv(aro_path)}

    def fnum(raw):
        return float(raw) if raw not in (None, "") else None

    table = []
    for p in cohort:
        srow = seg.get(p.participant_id)
        if srow is None:
            continue
        arow = aro.get(p.participant_id, {})
        table.append({
            "participant_id": p.participant_id,
            "sex": p.sex, "age_group": p.age_group,
            "work_unit": p.work_unit, "primary_shift": p.primary_shift,
            "sessions_per_hour": fnum(srow["sessions_per_hour"]),
            "avg_session_duration_min": fnum(srow["avg_session_duration_min"]),
            "n_sessions": int(srow["n_sessions"]),
            "arousal_first": fnum(arow.get("first_half_p90")),
            "arousal_second": fnum(arow.get("second_half_p90")),
            "stai_total": p.surveys.stai_total,
            "irb_total": p.surveys.irb_total,
        })
    return table, [seg_path, aro_path, config.data_root / "cohort" / "manifest.jsonl"]


RESPONSES = {
    "rate": "sessions_per_hour",
    "duration": "avg_session_duration_min",
    "arousal_first": "arousal_first",
    "arousal_second": "arousal_second",
}


def _group_analysis(name, rows, response_key, factor_key, config):
    usable = [r for r in rows if r[response_key] is not None]
    result = {"name": name, "response": response_key, "factor": factor_key,
              "n": len(usable)}
    levels = sorted({r[factor_key] for r in usable})
    groups = []
    for level in levels:
        values = [r[response_key] for r in usable if r[factor_key] == level]
        if len(values) >= 2:
            mean, lo, hi = st.mean_ci(values, config.stats.ci_level)
        else:
            mean = values[0] if values else None
            lo = hi = None
        groups.append({"level": level, "mean": mean, "ci_lo": lo, "ci_hi": hi,
                       "n": len(values)})
    result["groups"] = groups
    try:
        anova = st.three_way_anova(
            [r[response_key] for r in usable],
            [r[factor_key] for r in usable],
            [r["sex"] for r in usable],
            [r["age_group"] for r in usable],
            ss_type=config.stats.ss_type)
        result["tests"] = [
            {"factor": fname if fname != "factor" else factor_key,
             "F": ft.F, "p": ft.p, "df_num": ft.df_num, "df_den": ft.df_den}
            for fname, ft in anova.factors.items()]
    except CommtraceError as exc:  # small cohorts legitimately fail preconditions
        result["tests"] = []
        result["skipped"] = f"{type(exc).__name__}: {exc}"
    return result


def _correlation_analysis(name, rows, x_key, y_key):
    usable = [r for r in rows if r[x_key] is not None and r[y_key] is not None]
    result = {"name": name, "x": x_key, "y": y_key, "n": len(usable)}
    try:
        corr = st.pearson([r[x_key] for r in usable], [r[y_key] for r in usable])
    except CommtraceError as exc:
        result["skipped"] = f"{type(exc).__name__}: {exc}"
        return result
    xs = np.array([r[x_key] for r in usable], dtype=float)
    ys = np.array([r[y_key] for r in usable], dtype=float)
    slope = corr.r * ys.std(ddof=1) / xs.std(ddof=1)
    result.update(r=corr.r, p=corr.p, n=corr.n,
                  slope=float(slope), intercept=float(ys.mean() - slope * xs.mean()))
    return result


def run_analyze(config: PipelineConfig, stage_dir: Optional[Path] = None) -> list[Path]:
    out_dir = _stage_dir(config, "analyze", stage_dir)
    table, inputs = _participant_table(config)

    analyses = []
    for key in ("rate", "duration", "arousal_first", "arousal_second"):
        response_key = RESPONSES[key]
        analyses.append(_group_analysis(
            f"{key}_by_shift", table, response_key, "primary_shift", config))
        day_rows = [r for r in table if r["primary_shift"] == "day"]
        analyses.append(_group_analysis(
            f"{key}_by_unit_day", day_rows, response_key, "work_unit", config))

    correlations = []
    units = sorted({r["work_unit"] for r in table})
    for unit in units:
        for shift in ("day", "night"):
            cell = [r for r in table
                    if r["work_unit"] == unit and r["primary_shift"] == shift]
            if len(cell) < 3:
                continue
            correlations.append(_correlation_analysis(
                f"rate_irb_{unit}_{shift}", cell, "sessions_per_hour", "irb_total"))
            correlations.append(_correlation_analysis(
                f"rate_stai_{unit}_{shift}", cell, "sessions_per_hour", "stai_total"))

    stats_payload = {"analyses": analyses, "correlations": correlations}
    stats_path = out_dir / "stats.json"
    stats_path.write_text(json.dumps(stats_payload, sort_keys=True, indent=1) + "\n")

    participants_path = _write_csv(
        out_dir / "participants.csv",
        ["participant_id", "sex", "age_group", "work_unit", "primary_shift",
         "sessions_per_hour", "avg_session_duration_min", "n_sessions",
         "arousal_first", "arousal_second", "stai_total", "irb_total"],
        [[r["participant_id"], r["sex"], r["age_group"], r["work_unit"],
          r["primary_shift"], r["sessions_per_hour"], r["avg_session_duration_min"],
          r["n_sessions"], r["arousal_first"], r["arousal_second"],
          r["stai_total"], r["irb_total"]] for r in table])

    group_rows, test_rows = [], []
    for a in analyses:
        for g in a["groups"]:
            group_rows.append([a["name"], g["level"], g["mean"], g["ci_lo"],
                               g["ci_hi"], g["n"]])
        for t in a.get("tests", []):
            test_rows.append([a["name"], t["factor"], t["F"], t["p"],
                              t["df_num"], t["df_den"]])
    corr_rows = [[c["name"], c.get("r"), c.get("p"), c.get("n"),
                  c.get("slope"), c.get("intercept")]
                 for c in correlations if "skipped" not in c]

    outputs = [
        stats_path, participants_path,
        _write_csv(out_dir / "stats_groups.csv",
                   ["analysis", "level", "mean", "ci_lo", "ci_hi", "n"], group_rows),
        _write_csv(out_dir / "stats_tests.csv",
                   ["analysis", "factor", "F", "p", "df_num", "df_den"], test_rows),
        _write_csv(out_dir / "stats_correlations.csv",
                   ["name", "r", "p", "n", "slope", "intercept"], corr_rows),
    ]
    outputs.append(_write_manifest("analyze", out_dir, config, inputs, outputs))
    return outputs


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def run_report(config: PipelineConfig, stage_dir: Optional[Path] = None) -> list[Path]:
    from . import report as rp  # defers the matplotlib import to this stage
    out_dir = _stage_dir(config, "report", stage_dir)
    stats_path = _require(config.output_root / "analyze" / "stats.json",
                          "report", "analyze")
    participants_path = _require(config.output_root / "analyze" / "participants.csv",
                                 "report", "analyze")
    arousal_scores_path = _require(config.output_root / "arousal" / "scores.csv",
                                   "report", "arousal")
    payload = json.loads(stats_path.read_text())
    participants = _read_csv(participants_path)
    arousal_scores = _read_csv(arousal_scores_path)

    outputs = rp.emit_report(payload, participants, arousal_scores, out_dir)
    inputs = [stats_path, participants_path, arousal_scores_path]
    outputs.append(_write_manifest("report", out_dir, config, inputs, outputs))
    return outputs


# ---------------------------------------------------------------------------
# dispatcher
# ---------------------------------------------------------------------------

_RUNNERS = {
    "gen": run_gen,
    "train": run_train,
    "infer": run_infer,
    "score": run_score,
    "segment": run_segment,
    "arousal": run_arousal,
    "analyze": run_analyze,
    "report": run_report,
}


def run_stage(name: str, config: PipelineConfig,
              stage_dir: Optional[Path] = None) -> list[Path]:
    if name not in _RUNNERS:
        raise ValueError(f"unknown stage {name!r}; choose from {STAGES}")
    config.output_root.mkdir(parents=True, exist_ok=True)
    return _RUNNERS[name](config, stage_dir)
