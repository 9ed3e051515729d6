"""End-to-end pipeline behaviour through the CLI and stage runners."""

import json
from pathlib import Path

import numpy as np
import pytest

from commtrace import cli
from commtrace.config import load_config
from commtrace.errors import MissingPrerequisite
from commtrace.stages import run_stage

CONFIG_TEXT = """\
[paths]
data_root = data
output_root = out

[pipeline]
seed = 42

[diarizer]
learning_rate = 1e-3
epochs = 6
alpha = 5.0
window_frames = 500
batch_size = 8
blocks = 1
channels = 16
kernel_width = 5

[behavior]
min_fg_frames = 200
min_shifts = 5
labels = inferred

[arousal]
min_model_size = 20
quantile = 0.9

[stats]
ss_type = II
ci_level = 0.95

[synth]
stream_frames = 12000
stream_noise_sd = 1.0
teacher_accuracy = 0.95
cohort_cells = nonICU:day:3,nonICU:night:3,lab:day:3
shifts_per_participant = 5
shift_duration_hours = 2.0
day_night_rate_delta = 0.35
freq_irb_corr = lab:-0.6
freq_stai_corr = night:0.4
participant_rate_sd = 0.3
"""

ALL_STAGES = ("gen", "train", "infer", "score", "segment", "arousal",
              "analyze", "report")


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    config_path = root / "config.ini"
    config_path.write_text(CONFIG_TEXT)
    config = load_config(config_path)
    for stage in ALL_STAGES:
        run_stage(stage, config)
    return root, config


def read_pooled_der(scores_path: Path) -> float:
    for line in scores_path.read_text().splitlines():
        if line.startswith("POOLED_MICRO"):
            return float(line.split(",")[4])
    raise AssertionError("no pooled row in score report")


class TestSmoke:
    def test_gen_train_infer_score_der(self, pipeline_run):
        root, config = pipeline_run
        der = read_pooled_der(config.output_root / "score" / "scores.csv")
        assert der < 0.10

    def test_stage_outputs_exist(self, pipeline_run):
        root, config = pipeline_run
        out = config.output_root
        for rel in ("train/model.json", "train/training_log.csv",
                    "infer/labels.csv", "score/scores.csv",
                    "segment/sessions.csv", "segment/shift_features.csv",
                    "segment/participant_features.csv",
                    "arousal/half_features.csv", "arousal/fusion.csv",
                    "arousal/scores.csv", "analyze/stats.json",
                    "analyze/participants.csv",
                    "report/line_arousal_by_position.csv"):
            assert (out / rel).is_file(), rel
        for stage in ALL_STAGES:
            assert (out / stage / "manifest.json").is_file()

    def test_manifest_structure(self, pipeline_run):
        root, config = pipeline_run
        manifest = json.loads(
            (config.output_root / "train" / "manifest.json").read_text())
        assert manifest["stage"] == "train"
        assert manifest["seed"] == 42
        assert all(len(h) == 64 for h in manifest["inputs"].values())
        assert any(label.endswith("model.json") for label in manifest["outputs"])

    def test_stage_rerun_is_byte_identical(self, pipeline_run):
        root, config = pipeline_run
        manifest_path = config.output_root / "segment" / "manifest.json"
        before = manifest_path.read_bytes()
        run_stage("segment", config)
        assert manifest_path.read_bytes() == before

    def test_report_table_shape(self, pipeline_run):
        root, config = pipeline_run
        table = (config.output_root / "report" / "table_rate_by_shift.csv")
        lines = table.read_text().strip().splitlines()
        level_rows = [l for l in lines if l.startswith("level,")]
        test_rows = [l for l in lines if l.startswith("test,")]
        assert len(level_rows) == 2  # day and night
        assert len(test_rows) >= 1

    def test_scatter_rows_match_subgroup(self, pipeline_run):
        root, config = pipeline_run
        participants = (config.output_root / "analyze" / "participants.csv") \
            .read_text().strip().splitlines()[1:]
        lab_day = [l for l in participants if ",lab,day," in l]
        scatter = (config.output_root / "report" / "scatter_rate_irb_lab_day.csv") \
            .read_text().strip().splitlines()[1:]
        assert len(scatter) == len(lab_day)

    def test_figures_rendered(self, pipeline_run):
        root, config = pipeline_run
        figures = sorted((config.output_root / "report" / "figures").glob("*.png"))
        assert any(f.name.startswith("violin_") for f in figures)
        assert any(f.name.startswith("scatter_") for f in figures)
        for f in figures:
            assert f.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_infer_jobs_deterministic(self, pipeline_run, tmp_path):
        root, config = pipeline_run
        base = (config.output_root / "infer" / "labels.csv").read_bytes()
        config_path = root / "config.ini"
        jobs_config = load_config(config_path, jobs=4)
        alt_dir = tmp_path / "infer_jobs"
        run_stage("infer", jobs_config, stage_dir=alt_dir)
        assert (alt_dir / "labels.csv").read_bytes() == base


class TestEmitReport:
    def test_five_unit_table_shape(self, tmp_path):
        from commtrace.report import emit_report
        units = ["ICU", "nonICU", "float", "lab", "office"]
        groups = [{"level": u, "mean": 0.4 + i * 0.01, "ci_lo": 0.35,
                   "ci_hi": 0.45, "n": 6} for i, u in enumerate(units)]
        payload = {
            "analyses": [
                {"name": f"arousal_{half}_by_unit_day", "response": f"arousal_{half}",
                 "factor": "work_unit", "groups": groups,
                 "tests": [{"factor": "work_unit", "F": 4.4, "p": 0.002,
                            "df_num": 4, "df_den": 25}]}
                for half in ("first", "second")],
            "correlations": [],
        }
        participants = [
            {"participant_id": f"p{i}{u}", "work_unit": u, "primary_shift": "day",
             "sex": "female", "age_group": "under40",
             "arousal_first": repr(0.3 + 0.02 * i), "arousal_second": repr(0.4),
             "sessions_per_hour": "4.0", "stai_total": "", "irb_total": ""}
            for u in units for i in range(3)]
        outputs = emit_report(payload, participants, [], tmp_path)
        for half in ("first", "second"):
            table = tmp_path / f"table_arousal_{half}_by_unit_day.csv"
            assert table in outputs
            lines = table.read_text().strip().splitlines()
            level_rows = [l for l in lines if l.startswith("level,")]
            test_rows = [l for l in lines if l.startswith("test,")]
            assert len(level_rows) == 5
            assert len(test_rows) == 1
            assert "4.4" in test_rows[0] and "0.002" in test_rows[0]


class TestPrerequisites:
    def test_report_without_prior_stages(self, tmp_path):
        config_path = tmp_path / "config.ini"
        config_path.write_text(CONFIG_TEXT)
        config = load_config(config_path)
        with pytest.raises(MissingPrerequisite):
            run_stage("report", config)

    def test_train_without_gen(self, tmp_path):
        config_path = tmp_path / "config.ini"
        config_path.write_text(CONFIG_TEXT)
        with pytest.raises(MissingPrerequisite):
            run_stage("train", load_config(config_path))


class TestCli:
    def test_missing_prerequisite_exit_code(self, tmp_path):
        config_path = tmp_path / "config.ini"
        config_path.write_text(CONFIG_TEXT)
        assert cli.main(["report", "--config", str(config_path)]) == cli.EXIT_DATA

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.ini"
        bad.write_text("[paths]\noutput_root = out\n")  # no data root anywhere
        import os
        old = os.environ.pop("COMMTRACE_DATA_ROOT", None)
        try:
            assert cli.main(["gen", "--config", str(bad)]) == cli.EXIT_CONFIG
        finally:
            if old is not None:
                os.environ["COMMTRACE_DATA_ROOT"] = old

    def test_env_var_data_root(self, tmp_path, monkeypatch):
        config_path = tmp_path / "env.ini"
        config_path.write_text("[paths]\noutput_root = out\n")
        monkeypatch.setenv("COMMTRACE_DATA_ROOT", str(tmp_path / "envdata"))
        config = load_config(config_path)
        assert config.data_root == tmp_path / "envdata"

    def test_seed_override(self, tmp_path):
        config_path = tmp_path / "config.ini"
        config_path.write_text(CONFIG_TEXT)
        assert load_config(config_path).seed == 42
        assert load_config(config_path, seed=7).seed == 7

    def test_sample_config_parses(self, tmp_path, capsys):
        assert cli.main(["--print-sample-config"]) == 0
        text = capsys.readouterr().out
        sample = tmp_path / "sample.ini"
        sample.write_text(text)
        config = load_config(sample)
        assert config.train.learning_rate == 5e-5
        assert config.train.epochs == 15
        assert config.train.alpha == 5.0
        assert config.behavior.min_fg_frames == 200
        assert config.behavior.min_shifts == 5
        assert config.arousal.quantile == 0.9
