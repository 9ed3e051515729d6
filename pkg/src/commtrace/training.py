"""Distillation training of the frame classifier.

The objective combines frame-wise cross-entropy against hard labels with a
KL-divergence pull toward frozen teacher posteriors,

    total = ce + alpha * kld,      kld = KL(teacher || student),

both mean-reduced over frames. Optimization is plain Adam (beta1=0.9,
beta2=0.999, eps=1e-8) at the configured learning rate; runs are
bit-reproducible for a fixed seed since initialization and batch order come
from the same seeded generator and all math is deterministic numpy.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import EmptyDataset, LengthMismatch, NonFiniteLoss, ShapeMismatch, TooShort
from .model import (
    POSTERIOR_FLOOR,
    StudentConfig,
    StudentModel,
    backward_batch,
    forward_batch,
    init_model,
    param_registry,
    posteriors,
    softmax_rows,
)
from .records import Recording, TeacherPosteriors

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-5
    epochs: int = 15
    alpha: float = 5.0
    window_frames: int = 1000  # 10 s at the 10 ms hop
    batch_size: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.window_frames < 1:
            raise ValueError("learning_rate, batch_size, window_frames must be positive")
        if self.epochs < 0 or self.alpha < 0:
            raise ValueError("epochs and alpha must be nonnegative")
        if self.window_frames > 2000:
            raise ValueError("window_frames cannot exceed a 2000-frame recording")


@dataclass(frozen=True)
class LossBreakdown:
    ce: float
    kld: float
    total: float

    @classmethod
    def from_parts(cls, ce: float, kld: float, alpha: float) -> "LossBreakdown":
        return cls(ce=ce, kld=kld, total=ce + alpha * kld)


@dataclass(frozen=True)
class TrainWindow:
    features: np.ndarray  # [W, 12]
    labels: np.ndarray    # [W] int8
    teacher: np.ndarray   # [W, 3]


def make_windows(recording: Recording, teacher: TeacherPosteriors,
                 window_frames: int) -> list[TrainWindow]:
    """Chop a labeled stream into full non-overlapping training windows.

    Windows missing any label are dropped; the trailing partial window is
    dropped too (training batches need a uniform shape).
    """
    if recording.labels is None:
        return []
    if len(teacher.rows) != recording.n_frames:
        raise LengthMismatch(
            f"{recording.recording_id!r}: {len(teacher.rows)} teacher rows for "
            f"{recording.n_frames} frames")
    out = []
    for start in range(0, recording.n_frames - window_frames + 1, window_frames):
        stop = start + window_frames
        out.append(TrainWindow(
            features=recording.mfcc[start:stop],
            labels=recording.labels[start:stop],
            teacher=teacher.rows[start:stop]))
    return out


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def distill_loss(student_post: np.ndarray, teacher_post: np.ndarray,
                 labels: np.ndarray, alpha: float) -> LossBreakdown:
    """Frame-mean cross-entropy plus frame-mean KL(teacher || student)."""
    sp = np.asarray(student_post, dtype=float)
    tp = np.asarray(teacher_post, dtype=float)
    lab = np.asarray(labels)
    if sp.shape != tp.shape or sp.shape[:-1] != lab.shape or sp.shape[-1] != 3:
        raise ShapeMismatch(
            f"student {sp.shape}, teacher {tp.shape}, labels {lab.shape}")
    sp = np.maximum(sp, POSTERIOR_FLOOR)
    log_sp = np.log(sp)
    ce = float(-np.mean(np.take_along_axis(log_sp, lab[..., None].astype(int), axis=-1)))
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(tp > 0, tp * (np.log(np.maximum(tp, POSTERIOR_FLOOR)) - log_sp), 0.0)
    kld = float(terms.sum(axis=-1).mean())
    breakdown = LossBreakdown.from_parts(ce, kld, alpha)
    if not np.isfinite(breakdown.total):
        raise NonFiniteLoss(f"loss is not finite: ce={ce}, kld={kld}")
    return breakdown


def _loss_and_dlogits(logits: np.ndarray, teacher: np.ndarray, labels: np.ndarray,
                      alpha: float) -> tuple[LossBreakdown, np.ndarray]:
    probs = softmax_rows(logits)
    breakdown = distill_loss(np.maximum(probs, POSTERIOR_FLOOR), teacher, labels, alpha)
    n_frames = labels.size
    onehot = np.eye(3)[np.asarray(labels).astype(int)]
    dlogits = ((probs - onehot) + alpha * (probs - teacher)) / n_frames
    return breakdown, dlogits


def loss_and_grad(model: StudentModel, features: np.ndarray, teacher: np.ndarray,
                  labels: np.ndarray, alpha: float
                  ) -> tuple[LossBreakdown, np.ndarray]:
    """Loss breakdown plus the exact gradient of ``total`` w.r.t. every parameter.

    ``features`` may be one window [T, 12] or a batch [B, T, 12]; the loss is
    mean-reduced over all frames either way.
    """
    x = np.asarray(features, dtype=float)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
        teacher = np.asarray(teacher)[None]
        labels = np.asarray(labels)[None]
    logits, cache = forward_batch(model, x)
    breakdown, dlogits = _loss_and_dlogits(logits, np.asarray(teacher, dtype=float),
                                           np.asarray(labels), alpha)
    return breakdown, backward_batch(model, cache, dlogits)


def backward(model: StudentModel, window: np.ndarray, teacher_post: np.ndarray,
             labels: np.ndarray, alpha: float) -> np.ndarray:
    """Gradient of the distillation loss for one window (same shape as params)."""
    _, grad = loss_and_grad(model, window, teacher_post, labels, alpha)
    return grad


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def train(dataset: Sequence[TrainWindow], config: TrainConfig,
          model_config: Optional[StudentConfig] = None
          ) -> tuple[StudentModel, list[LossBreakdown]]:
    """Adam-train a fresh model; returns the model and one LossBreakdown per epoch.

    Deterministic for a fixed (dataset order, config): the seed drives both
    initialization and epoch shuffling.
    """
    windows = list(dataset)
    if not windows:
        raise EmptyDataset("no training windows")
    shapes = {w.features.shape for w in windows}
    if len(shapes) != 1:
        raise ShapeMismatch(f"training windows must share one shape, got {shapes}")

    model_config = model_config or StudentConfig()
    rng = np.random.default_rng(config.seed)
    model = init_model(model_config, seed=config.seed)
    params = model.params.copy()

    x_all = np.stack([w.features for w in windows]).astype(float)
    t_all = np.stack([w.teacher for w in windows]).astype(float)
    y_all = np.stack([w.labels for w in windows])

    m = np.zeros_like(params)
    v = np.zeros_like(params)
    step = 0
    history: list[LossBreakdown] = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(windows))
        ce_sum = kld_sum = frames = 0.0
        for start in range(0, len(windows), config.batch_size):
            idx = order[start:start + config.batch_size]
            batch_model = StudentModel(config=model_config, params=params)
            try:
                breakdown, grad = loss_and_grad(
                    batch_model, x_all[idx], t_all[idx], y_all[idx], config.alpha)
            except NonFiniteLoss as exc:
                raise NonFiniteLoss(f"epoch {epoch}: {exc}") from None
            n_frames = y_all[idx].size
            ce_sum += breakdown.ce * n_frames
            kld_sum += breakdown.kld * n_frames
            frames += n_frames
            step += 1
            m = ADAM_BETA1 * m + (1 - ADAM_BETA1) * grad
            v = ADAM_BETA2 * v + (1 - ADAM_BETA2) * grad * grad
            m_hat = m / (1 - ADAM_BETA1 ** step)
            v_hat = v / (1 - ADAM_BETA2 ** step)
            params = params - config.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        epoch_loss = LossBreakdown.from_parts(ce_sum / frames, kld_sum / frames,
                                              config.alpha)
        if not np.isfinite(epoch_loss.total):
            raise NonFiniteLoss(f"epoch {epoch}: loss diverged")
        history.append(epoch_loss)
    return StudentModel(config=model_config, params=params), history


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------

def infer_labels(model: StudentModel, recording: Recording,
                 window_frames: int = 1000) -> np.ndarray:
    """Argmax labels per frame, tiling non-overlapping windows.

    The final partial window is processed whole; if it is shorter than the
    kernel it is merged into the preceding window. Ties resolve in the fixed
    class order FG < BG < S.
    """
    k = model.config.kernel_width
    n = recording.n_frames
    if n < k:
        raise TooShort(f"recording {recording.recording_id!r} has {n} frames, "
                       f"needs >= {k}")
    bounds = list(range(0, n, window_frames)) + [n]
    if len(bounds) >= 3 and bounds[-1] - bounds[-2] < k:
        del bounds[-2]  # fold the too-short tail into the previous window
    out = np.empty(n, dtype=np.int8)
    x = recording.mfcc.astype(float)
    for start, stop in zip(bounds, bounds[1:]):
        logits, _ = forward_batch(model, x[None, start:stop])
        out[start:stop] = np.argmax(posteriors(logits[0]), axis=1).astype(np.int8)
    return out


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def model_to_json(model: StudentModel) -> str:
    """Versioned text checkpoint; parameters round-trip bit-exactly."""
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "param_shapes": [[name, list(shape)]
                         for name, shape in param_registry(model.config)],
        "params_b64": base64.b64encode(
            model.params.astype("<f8").tobytes()).decode("ascii"),
    }
    return json.dumps(payload, sort_keys=True, indent=1) + "\n"


def model_from_json(text: str) -> StudentModel:
    payload = json.loads(text)
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise ShapeMismatch(
            f"unsupported checkpoint version {payload.get('format_version')!r}")
    config = StudentConfig(**payload["config"])
    params = np.frombuffer(
        base64.b64decode(payload["params_b64"]), dtype="<f8").astype(np.float64)
    return StudentModel(config=config, params=params)


def save_model(model: StudentModel, path: Union[str, Path]) -> None:
    Path(path).write_text(model_to_json(model))


def load_model(path: Union[str, Path]) -> StudentModel:
    return model_from_json(Path(path).read_text())


def training_log_csv(history: Sequence[LossBreakdown]) -> str:
    out = ["epoch,ce,kld,total"]
    for i, h in enumerate(history):
        out.append(f"{i},{h.ce!r},{h.kld!r},{h.total!r}")
    return "\n".join(out) + "\n"
