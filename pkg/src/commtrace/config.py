"""Pipeline configuration: one INI file with nested sections.

Every default matches the reported analysis constants where one exists
(learning rate 5e-5, 15 epochs, alpha 5, 200 FG frames per qualifying
recording, 5-shift compliance, 0.9 arousal quantile). The data root falls
back to the COMMTRACE_DATA_ROOT environment variable when the config omits
it.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .errors import ConfigError
from .model import StudentConfig
from .synth import CohortConfig, StreamConfig, default_class_offsets
from .training import TrainConfig

DATA_ROOT_ENV = "COMMTRACE_DATA_ROOT"


@dataclass(frozen=True)
class BehaviorSettings:
    min_fg_frames: int = 200
    min_shifts: int = 5
    labels: str = "inferred"  # or "reference"


@dataclass(frozen=True)
class ArousalSettings:
    min_model_size: int = 20
    quantile: float = 0.9
    qualified_only: bool = False


@dataclass(frozen=True)
class StatsSettings:
    ss_type: str = "II"
    ci_level: float = 0.95


@dataclass(frozen=True)
class SynthSettings:
    stream_frames: int = 12_000
    stream: StreamConfig = field(default_factory=StreamConfig)
    cohort: CohortConfig = field(default_factory=CohortConfig)


@dataclass(frozen=True)
class PipelineConfig:
    data_root: Path
    output_root: Path
    seed: int = 42
    jobs: int = 1
    train: TrainConfig = field(default_factory=TrainConfig)
    student: StudentConfig = field(default_factory=StudentConfig)
    behavior: BehaviorSettings = field(default_factory=BehaviorSettings)
    arousal: ArousalSettings = field(default_factory=ArousalSettings)
    stats: StatsSettings = field(default_factory=StatsSettings)
    synth: SynthSettings = field(default_factory=SynthSettings)


def _get(parser, section, option, cast, default):
    if not parser.has_option(section, option):
        return default
    raw = parser.get(section, option)
    try:
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {option} = {raw!r}: expected {cast.__name__}") from None


def _parse_cells(raw: str) -> dict:
    """``unit:shift:count`` triples, comma separated."""
    cells = {}
    for chunk in raw.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(":")
        if len(parts) != 3:
            raise ConfigError(f"bad cohort cell {chunk!r}, expected unit:shift:count")
        cells[(parts[0], parts[1])] = int(parts[2])
    return cells


def _parse_mapping(raw: str, cast=float) -> dict:
    """``key:value`` pairs, comma separated."""
    out = {}
    for chunk in raw.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        key, _, value = chunk.partition(":")
        if not value:
            raise ConfigError(f"bad mapping entry {chunk!r}, expected key:value")
        out[key.strip()] = cast(value)
    return out


def load_config(path: Union[str, Path], *, seed: Optional[int] = None,
                jobs: Optional[int] = None) -> PipelineConfig:
    """Read an INI pipeline config; ``seed``/``jobs`` override the file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read_string(path.read_text())
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None

    data_root_raw = parser.get("paths", "data_root", fallback=None) \
        or os.environ.get(DATA_ROOT_ENV)
    if not data_root_raw:
        raise ConfigError(
            f"no data root: set [paths] data_root or the {DATA_ROOT_ENV} env var")
    output_root_raw = parser.get("paths", "output_root", fallback=None)
    if not output_root_raw:
        raise ConfigError("no [paths] output_root in config")

    base = path.parent
    data_root = (base / data_root_raw).resolve() if not Path(data_root_raw).is_absolute() \
        else Path(data_root_raw)
    output_root = (base / output_root_raw).resolve() if not Path(output_root_raw).is_absolute() \
        else Path(output_root_raw)

    file_seed = _get(parser, "pipeline", "seed", int, 42)
    effective_seed = seed if seed is not None else file_seed

    try:
        train = TrainConfig(
            learning_rate=_get(parser, "diarizer", "learning_rate", float, 5e-5),
            epochs=_get(parser, "diarizer", "epochs", int, 15),
            alpha=_get(parser, "diarizer", "alpha", float, 5.0),
            window_frames=_get(parser, "diarizer", "window_frames", int, 1000),
            batch_size=_get(parser, "diarizer", "batch_size", int, 8),
            seed=effective_seed)
        student = StudentConfig(
            blocks=_get(parser, "diarizer", "blocks", int, 2),
            channels=_get(parser, "diarizer", "channels", int, 32),
            kernel_width=_get(parser, "diarizer", "kernel_width", int, 5))
        behavior = BehaviorSettings(
            min_fg_frames=_get(parser, "behavior", "min_fg_frames", int, 200),
            min_shifts=_get(parser, "behavior", "min_shifts", int, 5),
            labels=_get(parser, "behavior", "labels", str, "inferred"))
        arousal = ArousalSettings(
            min_model_size=_get(parser, "arousal", "min_model_size", int, 20),
            quantile=_get(parser, "arousal", "quantile", float, 0.9),
            qualified_only=_get(parser, "arousal", "qualified_only", bool, False))
        stats = StatsSettings(
            ss_type=_get(parser, "stats", "ss_type", str, "II"),
            ci_level=_get(parser, "stats", "ci_level", float, 0.95))
        stream = StreamConfig(
            fg_rate=_get(parser, "synth", "stream_fg_rate", float, 0.35),
            bg_rate=_get(parser, "synth", "stream_bg_rate", float, 0.25),
            mean_segment_frames=_get(parser, "synth", "stream_segment_frames", int, 50),
            class_feature_offsets=default_class_offsets(
                _get(parser, "synth", "class_separation", float, 2.0)),
            noise_sd=_get(parser, "synth", "stream_noise_sd", float, 1.0),
            teacher_accuracy=_get(parser, "synth", "teacher_accuracy", float, 0.95))
        cells_raw = parser.get("synth", "cohort_cells", fallback=None)
        cohort = CohortConfig(
            cells=_parse_cells(cells_raw) if cells_raw else
            {("nonICU", "day"): 4, ("nonICU", "night"): 4},
            shifts_per_participant=_get(parser, "synth", "shifts_per_participant", int, 5),
            shift_duration_hours=_get(parser, "synth", "shift_duration_hours", float, 2.0),
            base_rate=_get(parser, "synth", "base_rate", float, 3.8),
            base_duration_min=_get(parser, "synth", "base_duration_min", float, 1.5),
            day_night_rate_delta=_get(parser, "synth", "day_night_rate_delta", float, 0.0),
            unit_duration_deltas=_parse_mapping(
                parser.get("synth", "unit_duration_deltas", fallback="")),
            arousal_halflife_slope=_get(parser, "synth", "arousal_halflife_slope",
                                        float, 0.0),
            freq_irb_corr=_parse_mapping(
                parser.get("synth", "freq_irb_corr", fallback="")),
            freq_stai_corr=_parse_mapping(
                parser.get("synth", "freq_stai_corr", fallback="")),
            participant_rate_sd=_get(parser, "synth", "participant_rate_sd", float, 0.1),
            frames_per_recording=_get(parser, "synth", "frames_per_recording", int, 300),
            fg_fraction=_get(parser, "synth", "fg_fraction", float, 0.8),
            seed=effective_seed)
        synth_settings = SynthSettings(
            stream_frames=_get(parser, "synth", "stream_frames", int, 12_000),
            stream=stream, cohort=cohort)
    except (ValueError, ConfigError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None

    if behavior.labels not in ("inferred", "reference"):
        raise ConfigError(f"[behavior] labels must be inferred|reference, "
                          f"got {behavior.labels!r}")
    if stats.ss_type not in ("I", "II"):
        raise ConfigError(f"[stats] ss_type must be I or II, got {stats.ss_type!r}")
    if not (0 < stats.ci_level < 1):
        raise ConfigError("[stats] ci_level must lie in (0, 1)")
    if not (0 <= arousal.quantile <= 1):
        raise ConfigError("[arousal] quantile must lie in [0, 1]")

    return PipelineConfig(
        data_root=data_root, output_root=output_root,
        seed=effective_seed, jobs=jobs if jobs is not None else 1,
        train=train, student=student, behavior=behavior, arousal=arousal,
        stats=stats, synth=synth_settings)


SAMPLE_CONFIG = """\
[paths]
data_root = data
output_root = out

[pipeline]
seed = 42

[diarizer]
learning_rate = 5e-5
epochs = 15
alpha = 5.0
window_frames = 1000
batch_size = 8
blocks = 2
channels = 32
kernel_width = 5

[behavior]
min_fg_frames = 200
min_shifts = 5
labels = inferred

[arousal]
min_model_size = 20
quantile = 0.9
qualified_only = false

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
