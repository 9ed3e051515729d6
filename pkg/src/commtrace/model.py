"""Lightweight residual frame classifier over MFCC 1-12, in plain numpy.

Architecture: a 1-D convolution stem lifting the 12 feature channels, R
residual blocks (two same-padding 1-D convolutions with an identity skip),
and a per-frame linear head to 3 logits (FG, BG, S). Forward and backward
passes are written out by hand; ``backward`` in ``training`` checks against
central finite differences.

Parameters live in one flat float64 vector with a shape registry, so
optimizers and checkpoints treat the model as a single array.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .records import N_MFCC

POSTERIOR_FLOOR = 1e-12
N_CLASSES = 3


@dataclass(frozen=True)
class StudentConfig:
    blocks: int = 2
    channels: int = 32
    kernel_width: int = 5
    in_features: int = N_MFCC

    def __post_init__(self):
        if self.blocks < 1:
            raise ValueError("need at least one residual block")
        if self.channels < 4:
            raise ValueError("need at least 4 channels")
        if self.kernel_width % 2 != 1 or self.kernel_width < 1:
            raise ValueError("kernel_width must be a positive odd integer")


def param_registry(config: StudentConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) pairs defining the flat parameter layout."""
    c, k = config.channels, config.kernel_width
    reg: list[tuple[str, tuple[int, ...]]] = [
        ("stem.weight", (c, config.in_features, k)),
        ("stem.bias", (c,)),
    ]
    for r in range(config.blocks):
        reg.append((f"block{r}.conv1.weight", (c, c, k)))
        reg.append((f"block{r}.conv1.bias", (c,)))
        reg.append((f"block{r}.conv2.weight", (c, c, k)))
        reg.append((f"block{r}.conv2.bias", (c,)))
    reg.append(("head.weight", (N_CLASSES, c)))
    reg.append(("head.bias", (N_CLASSES,)))
    return reg


@dataclass(frozen=True)
class StudentModel:
    config: StudentConfig
    params: np.ndarray  # flat float64

    def __post_init__(self):
        expected = sum(int(np.prod(shape)) for _, shape in param_registry(self.config))
        if self.params.shape != (expected,):
            raise ShapeMismatch(
                f"parameter vector has {self.params.shape}, registry expects ({expected},)")

    def views(self) -> dict[str, np.ndarray]:
        """Named reshaped views into the flat vector (no copies)."""
        out = {}
        offset = 0
        for name, shape in param_registry(self.config):
            size = int(np.prod(shape))
            out[name] = self.params[offset:offset + size].reshape(shape)
            offset += size
        return out


def init_model(config: StudentConfig, seed: int) -> StudentModel:
    """Uniform fan-in initialization for weights, zeros for biases."""
    rng = np.random.default_rng(seed)
    chunks = []
    for name, shape in param_registry(config):
        if name.endswith(".bias"):
            chunks.append(np.zeros(int(np.prod(shape))))
        else:
            fan_in = int(np.prod(shape[1:]))  # in_channels (* kernel) per output
            bound = 1.0 / np.sqrt(fan_in)
            chunks.append(rng.uniform(-bound, bound, int(np.prod(shape))))
    return StudentModel(config=config, params=np.concatenate(chunks))


# ---------------------------------------------------------------------------
# convolution primitives (same padding, batch-first layout [B, T, C])
# ---------------------------------------------------------------------------

def conv1d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    b, t, c_in = x.shape
    c_out, _, k = weight.shape
    pad = (k - 1) // 2
    xp = np.zeros((b, t + 2 * pad, c_in))
    xp[:, pad:pad + t, :] = x
    y = np.broadcast_to(bias, (b, t, c_out)).copy()
    for j in range(k):
        y += xp[:, j:j + t, :] @ weight[:, :, j].T
    return y


def conv1d_backward(dy: np.ndarray, x: np.ndarray, weight: np.ndarray
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dx, dweight, dbias) for conv1d."""
    b, t, c_in = x.shape
    _, _, k = weight.shape
    pad = (k - 1) // 2
    xp = np.zeros((b, t + 2 * pad, c_in))
    xp[:, pad:pad + t, :] = x
    dw = np.empty_like(weight)
    dxp = np.zeros_like(xp)
    for j in range(k):
        dw[:, :, j] = np.tensordot(dy, xp[:, j:j + t, :], axes=([0, 1], [0, 1]))
        dxp[:, j:j + t, :] += dy @ weight[:, :, j]
    return dxp[:, pad:pad + t, :], dw, dy.sum(axis=(0, 1))


# ---------------------------------------------------------------------------
# network forward / backward
# ---------------------------------------------------------------------------

def forward_batch(model: StudentModel, x: np.ndarray) -> tuple[np.ndarray, dict]:
    """Logits [B, T, 3] plus the activation cache needed for backward."""
    if x.ndim != 3 or x.shape[2] != model.config.in_features:
        raise ShapeMismatch(
            f"expected input [B, T, {model.config.in_features}], got {x.shape}")
    if x.shape[1] < model.config.kernel_width:
        raise ShapeMismatch(
            f"window of {x.shape[1]} frames is shorter than the "
            f"{model.config.kernel_width}-frame kernel")
    v = model.views()
    a0 = conv1d(x, v["stem.weight"], v["stem.bias"])
    h = np.maximum(a0, 0.0)
    cache = {"x": x, "a0": a0, "blocks": []}
    for r in range(model.config.blocks):
        h_in = h
        a1 = conv1d(h_in, v[f"block{r}.conv1.weight"], v[f"block{r}.conv1.bias"])
        z1 = np.maximum(a1, 0.0)
        a2 = conv1d(z1, v[f"block{r}.conv2.weight"], v[f"block{r}.conv2.bias"])
        s = a2 + h_in
        h = np.maximum(s, 0.0)
        cache["blocks"].append({"h_in": h_in, "a1": a1, "z1": z1, "s": s})
    cache["h_top"] = h
    logits = h @ v["head.weight"].T + v["head.bias"]
    return logits, cache


def backward_batch(model: StudentModel, cache: dict, dlogits: np.ndarray) -> np.ndarray:
    """Flat parameter gradient given d(loss)/d(logits)."""
    v = model.views()
    grads: dict[str, np.ndarray] = {}
    h = cache["h_top"]
    grads["head.weight"] = np.tensordot(dlogits, h, axes=([0, 1], [0, 1]))
    grads["head.bias"] = dlogits.sum(axis=(0, 1))
    dh = dlogits @ v["head.weight"]
    for r in reversed(range(model.config.blocks)):
        blk = cache["blocks"][r]
        ds = dh * (blk["s"] > 0)
        da2 = ds
        dz1, dw2, db2 = conv1d_backward(da2, blk["z1"], v[f"block{r}.conv2.weight"])
        grads[f"block{r}.conv2.weight"] = dw2
        grads[f"block{r}.conv2.bias"] = db2
        da1 = dz1 * (blk["a1"] > 0)
        dh_in, dw1, db1 = conv1d_backward(da1, blk["h_in"], v[f"block{r}.conv1.weight"])
        grads[f"block{r}.conv1.weight"] = dw1
        grads[f"block{r}.conv1.bias"] = db1
        dh = dh_in + ds  # conv path + identity skip
    da0 = dh * (cache["a0"] > 0)
    _, dw0, db0 = conv1d_backward(da0, cache["x"], v["stem.weight"])
    grads["stem.weight"] = dw0
    grads["stem.bias"] = db0
    return np.concatenate([
        grads[name].ravel() for name, _ in param_registry(model.config)])


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def posteriors(logits: np.ndarray) -> np.ndarray:
    """Softmax with a floor clamp so downstream logs stay finite."""
    return np.maximum(softmax_rows(logits), POSTERIOR_FLOOR)


def forward(model: StudentModel, window: np.ndarray) -> np.ndarray:
    """Per-frame FG/BG/S posteriors for one [T, 12] feature window."""
    w = np.asarray(window, dtype=float)
    if w.ndim != 2:
        raise ShapeMismatch(f"expected a [T, {model.config.in_features}] window, got {w.shape}")
    logits, _ = forward_batch(model, w[None])
    return posteriors(logits[0])
