"""Inferential tools: three-way ANOVA with confounders, Pearson correlation,
and t-based confidence intervals.

The ANOVA fits a main-effects-only fixed-effects linear model with dummy
coding and reports per-factor F statistics from Type II sums of squares
(full model vs. the model with that factor's columns dropped). Least squares
goes through an orthogonal (QR) factorization; tail probabilities come from
``special``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import special
from .errors import (
    ConstantInput,
    LengthMismatch,
    RankDeficientDesign,
    TooFewObservations,
)


@dataclass(frozen=True)
class FactorTest:
    F: float
    p: float
    df_num: int
    df_den: int


@dataclass(frozen=True)
class AnovaResult:
    factors: dict[str, FactorTest]
    residual_df: int


@dataclass(frozen=True)
class CorrelationResult:
    r: float
    p: float
    n: int


def _dummy_columns(values: Sequence) -> tuple[np.ndarray, int]:
    """Treatment-coded dummies (first of the sorted levels dropped)."""
    levels = sorted(set(values))
    cols = np.column_stack([
        np.asarray([v == lev for v in values], dtype=float)
        for lev in levels[1:]]) if len(levels) > 1 else np.empty((len(values), 0))
    return cols, len(levels)


def _rss(design: np.ndarray, y: np.ndarray) -> float:
    """Residual sum of squares of the least-squares fit via QR."""
    q, _ = np.linalg.qr(design, mode="reduced")
    proj = q.T @ y
    return float(max(y @ y - proj @ proj, 0.0))


def three_way_anova(response: Sequence[float], factor: Sequence, sex: Sequence,
                    age: Sequence, ss_type: str = "II") -> AnovaResult:
    """Main-effects ANOVA of ``response`` on ``factor`` controlling for sex and age.

    Factors with a single observed level carry no information and are omitted
    from the per-factor tests (the model then degrades gracefully, e.g. to a
    one-way ANOVA when both confounders are constant).
    """
    y = np.asarray(response, dtype=float)
    n = len(y)
    named = [("factor", list(factor)), ("sex", list(sex)), ("age", list(age))]
    for name, vals in named:
        if len(vals) != n:
            raise LengthMismatch(f"{name} has {len(vals)} entries for {n} responses")
    if ss_type not in ("I", "II"):
        raise ValueError(f"ss_type must be 'I' or 'II', got {ss_type!r}")

    blocks: dict[str, np.ndarray] = {}
    for name, vals in named:
        cols, n_levels = _dummy_columns(vals)
        if n_levels >= 2:
            blocks[name] = cols

    intercept = np.ones((n, 1))
    full = np.concatenate([intercept] + [blocks[k] for k in blocks], axis=1)
    p_full = full.shape[1]
    if n <= p_full:
        raise TooFewObservations(f"{n} observations for {p_full} model columns")
    if np.linalg.matrix_rank(full) < p_full:
        raise RankDeficientDesign("dummy design matrix is rank deficient")

    df_den = n - p_full
    rss_full = _rss(full, y)
    tss = float(np.sum((y - y.mean()) ** 2))
    # scale under which sums of squares are numerically zero
    zero = 1e-12 * max(tss, 1.0)

    factors: dict[str, FactorTest] = {}
    block_names = list(blocks)
    for i, name in enumerate(block_names):
        if ss_type == "II":
            reduced_blocks = [blocks[k] for k in block_names if k != name]
        else:  # Type I: sequential in (factor, sex, age) order
            with_this = [blocks[k] for k in block_names[:i + 1]]
            reduced_blocks = [blocks[k] for k in block_names[:i]]
        reduced = np.concatenate([intercept] + reduced_blocks, axis=1)
        rss_reduced = _rss(reduced, y)
        if ss_type == "I":
            rss_with = _rss(np.concatenate([intercept] + with_this, axis=1), y)
            delta_ss = max(rss_reduced - rss_with, 0.0)
        else:
            delta_ss = max(rss_reduced - rss_full, 0.0)
        df_num = blocks[name].shape[1]
        if delta_ss <= zero:
            f_stat, p = 0.0, 1.0
        elif rss_full <= zero:
            f_stat, p = math.inf, 0.0
        else:
            f_stat = (delta_ss / df_num) / (rss_full / df_den)
            p = special.f_sf(f_stat, df_num, df_den)
        factors[name] = FactorTest(F=f_stat, p=p, df_num=df_num, df_den=df_den)

    return AnovaResult(factors=factors, residual_df=df_den)


def pearson(x: Sequence[float], y: Sequence[float]) -> CorrelationResult:
    """Product-moment correlation with a two-sided t test on n-2 df."""
    xv = np.asarray(x, dtype=float)
    yv = np.asarray(y, dtype=float)
    if len(xv) != len(yv):
        raise LengthMismatch(f"{len(xv)} vs {len(yv)} values")
    n = len(xv)
    if n < 3:
        raise TooFewObservations(f"need n >= 3, got {n}")
    dx = xv - xv.mean()
    dy = yv - yv.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ConstantInput("correlation undefined for a constant input")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        p = 0.0
    else:
        t = r * math.sqrt((n - 2) / (1.0 - r * r))
        p = special.student_t_two_sided_p(t, n - 2)
    return CorrelationResult(r=r, p=p, n=n)


def mean_ci(values: Sequence[float], level: float = 0.95) -> tuple[float, float, float]:
    """Mean with a two-sided t confidence interval (sample sd, n-1 df)."""
    v = np.asarray(values, dtype=float)
    n = len(v)
    if n < 2:
        raise TooFewObservations(f"need n >= 2, got {n}")
    if not (0.0 < level < 1.0):
        raise ValueError(f"level must be in (0, 1), got {level}")
    mean = float(v.mean())
    sd = float(v.std(ddof=1))
    half = special.student_t_quantile((1.0 + level) / 2.0, n - 1) * sd / math.sqrt(n)
    return mean, mean - half, mean + half
