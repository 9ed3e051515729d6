"""Frame-level diarization scoring: miss / false alarm / confusion / DER.

Labels live on a fixed 10 ms grid so scoring is exact per frame (no
forgiveness collar). All components are durations divided by the reference
speech duration (FG + BG frames), so DER can legitimately exceed 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyList, LengthMismatch, NoReferenceSpeech
from .records import BG, FG, S


@dataclass(frozen=True)
class DiarizationScore:
    miss: float
    false_alarm: float
    confusion: float
    der: float
    ref_speech_frames: int
    total_frames: int


def error_counts(reference: Sequence[int], hypothesis: Sequence[int]
                 ) -> tuple[int, int, int, int, int]:
    """Raw frame counts (miss, false_alarm, confusion, ref_speech, total)."""
    ref = np.asarray(reference)
    hyp = np.asarray(hypothesis)
    if ref.shape != hyp.shape:
        raise LengthMismatch(f"reference {ref.shape} vs hypothesis {hyp.shape}")
    ref_speech = ref != S
    hyp_speech = hyp != S
    miss = int(np.count_nonzero(ref_speech & ~hyp_speech))
    false_alarm = int(np.count_nonzero(~ref_speech & hyp_speech))
    confusion = int(np.count_nonzero(
        ((ref == FG) & (hyp == BG)) | ((ref == BG) & (hyp == FG))))
    return miss, false_alarm, confusion, int(np.count_nonzero(ref_speech)), len(ref)


def score(reference: Sequence[int], hypothesis: Sequence[int]) -> DiarizationScore:
    """Score a hypothesis label sequence against the reference sequence."""
    miss, fa, conf, n_speech, total = error_counts(reference, hypothesis)
    if n_speech == 0:
        raise NoReferenceSpeech("reference contains no FG/BG frames")
    # der built from the normalized components so the decomposition identity
    # der == miss + false_alarm + confusion holds bit-exactly
    m, f, c = miss / n_speech, fa / n_speech, conf / n_speech
    return DiarizationScore(
        miss=m, false_alarm=f, confusion=c, der=m + f + c,
        ref_speech_frames=n_speech,
        total_frames=total)


def aggregate(scores: Iterable[DiarizationScore]) -> DiarizationScore:
    """Micro-average: pool the underlying frame counts, then re-normalize.

    Counts are recovered from each score's rates (rate * ref_speech_frames is
    an integer up to float rounding, so nearest-int is exact).
    """
    miss = fa = conf = speech = total = 0
    n = 0
    for s in scores:
        miss += round(s.miss * s.ref_speech_frames)
        fa += round(s.false_alarm * s.ref_speech_frames)
        conf += round(s.confusion * s.ref_speech_frames)
        speech += s.ref_speech_frames
        total += s.total_frames
        n += 1
    if n == 0:
        raise EmptyList("no scores to aggregate")
    m, f, c = miss / speech, fa / speech, conf / speech
    return DiarizationScore(
        miss=m, false_alarm=f, confusion=c, der=m + f + c,
        ref_speech_frames=speech,
        total_frames=total)


def macro_average(scores: Sequence[DiarizationScore]) -> DiarizationScore:
    """Unweighted mean of per-recording rates (secondary, for comparison)."""
    if not scores:
        raise EmptyList("no scores to average")
    miss = float(np.mean([s.miss for s in scores]))
    fa = float(np.mean([s.false_alarm for s in scores]))
    conf = float(np.mean([s.confusion for s in scores]))
    return DiarizationScore(
        miss=miss, false_alarm=fa, confusion=conf, der=miss + fa + conf,
        ref_speech_frames=sum(s.ref_speech_frames for s in scores),
        total_frames=sum(s.total_frames for s in scores))


def score_report_csv(rows: Sequence[tuple[str, DiarizationScore]]) -> str:
    """CSV with one row per recording plus pooled micro/macro rows."""
    out = ["recording_id,miss,fa,conf,der,ref_speech_frames"]
    for rid, s in rows:
        out.append(f"{rid},{s.miss!r},{s.false_alarm!r},{s.confusion!r},"
                   f"{s.der!r},{s.ref_speech_frames}")
    if rows:
        pooled = aggregate(s for _, s in rows)
        out.append(f"POOLED_MICRO,{pooled.miss!r},{pooled.false_alarm!r},"
                   f"{pooled.confusion!r},{pooled.der!r},{pooled.ref_speech_frames}")
        macro = macro_average([s for _, s in rows])
        out.append(f"POOLED_MACRO,{macro.miss!r},{macro.false_alarm!r},"
                   f"{macro.confusion!r},{macro.der!r},{macro.ref_speech_frames}")
    return "\n".join(out) + "\n"
