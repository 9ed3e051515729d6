"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest -s tests/test_acceptance.py`` to see the per-criterion
lines; every tolerance and time budget is asserted in-line.
"""

import json
import math
import time
from datetime import datetime
from fractions import Fraction

import numpy as np
import pytest

from commtrace import arousal as ar
from commtrace import behavior as bh
from commtrace import dermetrics as dm
from commtrace import model as md
from commtrace import special
from commtrace import stats as st
from commtrace import synth
from commtrace import training as tr
from commtrace.config import load_config
from commtrace.records import BG, FG, S, Recording, Shift
from commtrace.stages import run_stage

from gradcheck import central_difference, checkable_indices


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"\n[criterion {criterion:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {criterion}: {detail}"


# -- 1: session grouping replication ------------------------------------------

def make_recording(rid, minute, fg_frames, total=400):
    labels = np.full(total, S, dtype=np.int8)
    labels[:fg_frames] = FG
    return Recording(
        recording_id=rid, minute_index=minute,
        frame_index=np.arange(total, dtype=np.int64),
        mfcc=np.zeros((total, 12)), log_pitch=np.full(total, 4.8),
        intensity=np.full(total, 0.5), hf_lf_ratio=np.full(total, 1.0),
        labels=labels)


def test_criterion_1_session_grouping():
    shift = Shift(
        shift_id="s", shift_type="day", start_time=datetime(2018, 3, 1, 7),
        duration_hours=1.0,
        recordings=tuple(make_recording(f"m{m}", m, 250) for m in (0, 1, 4)))
    qualified = bh.qualify_recordings(shift, min_fg_frames=200)
    minutes = [m for m, _ in qualified]
    bh.segment_sessions(minutes)  # warm-up
    t0 = time.perf_counter()
    sessions = bh.segment_sessions(minutes)
    elapsed = time.perf_counter() - t0
    ok = ([s.minute_indices for s in sessions] == [(0, 1), (4,)]
          and elapsed < 1e-3)
    report(1, ok, f"minutes {{0,1,4}} -> sessions {{0,1}},{{4}} in {elapsed*1e6:.0f} us")


# -- 2: arousal score vs counting oracle --------------------------------------

def test_criterion_2_arousal_score_oracle():
    rng = np.random.default_rng(2025)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        # coarse rounding forces plenty of exact ties
        samples = np.sort(np.round(rng.normal(0, 1, n), 1))
        model = ar.EmpiricalModel("intensity", samples)
        x = float(np.round(rng.normal(0, 1), 1))
        got = ar.score_recording(x, model)
        expected = 2.0 * (sum(1.0 for s in samples if s < x)
                          + 0.5 * sum(1.0 for s in samples if s == x)) / n - 1.0
        worst = max(worst, abs(got - expected))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 1.0
    report(2, ok, f"1000 (model, x) pairs, max |diff| = {worst:.2e}, {elapsed:.2f}s")


# -- 3: fusion contract --------------------------------------------------------

def exact_rank_oracle(v):
    return np.array([sum(1 for y in v if y < x) + (1 + sum(1 for y in v if y == x)) / 2
                     for x in v])


def exact_pearson_on_ranks(rx, ry):
    fx = [Fraction(r).limit_denominator(2) for r in rx]
    fy = [Fraction(r).limit_denominator(2) for r in ry]
    n = len(fx)
    mx = sum(fx, Fraction(0)) / n
    my = sum(fy, Fraction(0)) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(fx, fy))
    vx = sum((a - mx) ** 2 for a in fx)
    vy = sum((b - my) ** 2 for b in fy)
    if vx == 0 or vy == 0:
        return 0.0
    return float(cov) / math.sqrt(float(vx) * float(vy))


def test_criterion_3_fusion_contract():
    rng = np.random.default_rng(33)
    worst_norm = 0.0
    for _ in range(100):
        m = int(rng.integers(3, 40))
        scores = rng.uniform(-1, 1, (3, m))
        weights, _, _ = ar.fuse(scores)
        worst_norm = max(worst_norm, abs(np.linalg.norm(weights) - 1.0))
    worst_rank = 0
    worst_r = 0.0
    for _ in range(200):
        n = int(rng.integers(4, 30))
        x = rng.integers(0, 5, n).astype(float)  # heavy ties
        y = rng.integers(0, 5, n).astype(float)
        rx, ry = ar.average_ranks(x), ar.average_ranks(y)
        ox, oy = exact_rank_oracle(x), exact_rank_oracle(y)
        worst_rank = max(worst_rank, int(np.sum(rx != ox) + np.sum(ry != oy)))
        worst_r = max(worst_r, abs(ar.spearman(x, y) - exact_pearson_on_ranks(ox, oy)))
    ok = worst_norm <= 1e-9 and worst_rank == 0 and worst_r <= 1e-14
    report(3, ok, f"||w||-1 max {worst_norm:.2e}; rank mismatches {worst_rank}; "
                  f"r vs exact-rational oracle max |diff| {worst_r:.2e}")


# -- 4: DER identity and confusion-matrix oracle -------------------------------

def test_criterion_4_der_oracle():
    rng = np.random.default_rng(44)
    t0 = time.perf_counter()
    ok = True
    for _ in range(500):
        n = int(rng.integers(2, 10_001))
        ref = rng.integers(0, 3, n).astype(np.int8)
        if not np.any(ref != S):
            ref[0] = BG
        hyp = rng.integers(0, 3, n).astype(np.int8)
        s = dm.score(ref, hyp)
        counts = np.zeros((3, 3), dtype=int)
        np.add.at(counts, (ref.astype(int), hyp.astype(int)), 1)
        speech = counts[FG].sum() + counts[BG].sum()
        ok &= s.der == s.miss + s.false_alarm + s.confusion
        ok &= s.miss == (counts[FG, S] + counts[BG, S]) / speech
        ok &= s.false_alarm == (counts[S, FG] + counts[S, BG]) / speech
        ok &= s.confusion == (counts[FG, BG] + counts[BG, FG]) / speech
        if not ok:
            break
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 5.0
    report(4, ok, f"500 random label pairs up to T=1e4 in {elapsed:.2f}s")


# -- 5: gradient check ---------------------------------------------------------

def test_criterion_5_gradient_check():
    t0 = time.perf_counter()
    configs = [md.StudentConfig(blocks=1, channels=4, kernel_width=3),
               md.StudentConfig(blocks=2, channels=8, kernel_width=5),
               md.StudentConfig(blocks=1, channels=8, kernel_width=7)]
    worst = 0.0
    for k, config in enumerate(configs):
        rng = np.random.default_rng(500 + k)
        model = md.init_model(config, seed=900 + k)
        x = rng.normal(0, 1, (20, 12))
        teacher = rng.dirichlet((2, 2, 2), 20)
        labels = rng.integers(0, 3, 20).astype(np.int8)
        grad = tr.backward(model, x, teacher, labels, alpha=5.0)
        for idx in checkable_indices(model, x, rng, count=20):
            fd = central_difference(model, x, teacher, labels, 5.0, idx)
            denom = max(abs(fd), abs(grad[idx]), 1e-8)
            worst = max(worst, abs(grad[idx] - fd) / denom)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 30.0
    report(5, ok, f"3 models x 20 params, max rel err {worst:.2e}, {elapsed:.1f}s")


# -- 6: distillation improves held-out DER -------------------------------------

def _train_and_score(seed, alpha):
    stream_cfg = synth.StreamConfig(noise_sd=2.0, teacher_accuracy=0.95)
    rec_train, teach = synth.gen_stream(stream_cfg, 12_000, seed=1000 + seed)
    rec_held, _ = synth.gen_stream(stream_cfg, 20_000, seed=2000 + seed)
    windows = tr.make_windows(rec_train, teach, 500)
    config = tr.TrainConfig(learning_rate=1e-3, epochs=12, alpha=alpha,
                            window_frames=500, batch_size=8, seed=seed)
    model, _ = tr.train(windows, config,
                        md.StudentConfig(blocks=1, channels=16, kernel_width=5))
    hyp = tr.infer_labels(model, rec_held, window_frames=500)
    return dm.score(rec_held.labels, hyp).der


def test_criterion_6_distillation_direction():
    t0 = time.perf_counter()
    wins = []
    for seed in (0, 1, 2):
        der_plain = _train_and_score(seed, alpha=0.0)
        der_distilled = _train_and_score(seed, alpha=5.0)
        wins.append((seed, der_plain, der_distilled, der_distilled <= der_plain))
    elapsed = time.perf_counter() - t0
    n_wins = sum(1 for *_, w in wins if w)
    detail = "; ".join(f"seed{s}: {a:.3f} -> {b:.3f}" for s, a, b, _ in wins)
    ok = n_wins >= 2 and elapsed < 300.0
    report(6, ok, f"alpha=5 beats alpha=0 in {n_wins}/3 seeds ({detail}), {elapsed:.0f}s")


# -- 7: ANOVA oracle + null calibration ----------------------------------------

def _participant_rates(cohort, min_fg):
    rows = []
    for p in cohort:
        feats = [bh.shift_features(sh, bh.shift_sessions(sh, min_fg_frames=min_fg))
                 for sh in p.shifts]
        rows.append((p, bh.participant_features(feats).sessions_per_hour))
    return rows


def test_criterion_7_anova_oracle_and_calibration():
    t0 = time.perf_counter()
    # hand-computed one-way F on 2 groups x 5 values
    a = [3.1, 2.9, 3.4, 3.0, 3.2]
    b = [4.0, 4.3, 3.9, 4.1, 4.2]
    ma, mb = sum(a) / 5, sum(b) / 5
    grand = (sum(a) + sum(b)) / 10
    ssb = 5 * (ma - grand) ** 2 + 5 * (mb - grand) ** 2
    ssw = sum((x - ma) ** 2 for x in a) + sum((x - mb) ** 2 for x in b)
    f_oracle = ssb / (ssw / 8)
    res = st.three_way_anova(a + b, ["g1"] * 5 + ["g2"] * 5,
                             ["female"] * 10, ["under40"] * 10)
    f_diff = abs(res.factors["factor"].F - f_oracle)

    rejections = 0
    n_reps = 200
    seeds = np.random.SeedSequence(12345).generate_state(n_reps)
    for s in seeds:
        config = synth.CohortConfig(
            cells={("nonICU", "day"): 12, ("nonICU", "night"): 12},
            shifts_per_participant=5, shift_duration_hours=2.0,
            day_night_rate_delta=0.0, participant_rate_sd=0.3,
            frames_per_recording=24, fg_fraction=0.75, seed=int(s))
        cohort, _ = synth.gen_cohort(config)
        rows = _participant_rates(cohort, min_fg=12)
        anova = st.three_way_anova(
            [r for _, r in rows], [p.primary_shift for p, _ in rows],
            [p.sex for p, _ in rows], [p.age_group for p, _ in rows])
        if anova.factors["factor"].p < 0.05:
            rejections += 1
    rate = rejections / n_reps
    elapsed = time.perf_counter() - t0
    ok = f_diff <= 1e-9 and 0.02 <= rate <= 0.08 and elapsed < 120.0
    report(7, ok, f"|F - oracle| = {f_diff:.2e}; null rejection rate "
                  f"{rate:.1%} of {n_reps}, {elapsed:.0f}s")


# -- 8: special functions -------------------------------------------------------

def test_criterion_8_special_functions():
    from scipy import integrate

    def quad_oracle(a, b, x):
        ln_beta = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
        val, _ = integrate.quad(
            lambda t: math.exp((a - 1) * math.log(t)
                               + (b - 1) * math.log1p(-t) - ln_beta),
            0.0, x, limit=400)
        return val

    rng = np.random.default_rng(88)
    worst_identity = max(
        abs(special.reg_incomplete_beta(1.0, 1.0, x) - x)
        for x in np.linspace(0, 1, 33))
    worst_mid = max(abs(special.reg_incomplete_beta(a, a, 0.5) - 0.5)
                    for a in (0.7, 1.5, 4.0, 25.0))
    worst_sym = 0.0
    for _ in range(100):
        a, b = rng.uniform(0.4, 15.0, 2)
        x = float(rng.uniform(0, 1))
        worst_sym = max(worst_sym, abs(
            special.reg_incomplete_beta(a, b, x)
            - (1.0 - special.reg_incomplete_beta(b, a, 1.0 - x))))
    worst_quad = 0.0
    for _ in range(50):
        a, b = rng.uniform(0.6, 12.0, 2)
        x = float(rng.uniform(0.02, 0.98))
        worst_quad = max(worst_quad, abs(
            special.reg_incomplete_beta(a, b, x) - quad_oracle(a, b, x)))
    ok = (worst_identity <= 1e-12 and worst_mid <= 1e-12
          and worst_sym <= 1e-10 and worst_quad <= 1e-9)
    report(8, ok, f"I_x(1,1) err {worst_identity:.1e}; I_.5(a,a) err {worst_mid:.1e}; "
                  f"symmetry {worst_sym:.1e}; quadrature {worst_quad:.1e}")


# -- 9: planted-effect recovery --------------------------------------------------

def test_criterion_9_planted_effect_recovery():
    t0 = time.perf_counter()
    config = synth.CohortConfig(
        cells={("nonICU", "day"): 60, ("nonICU", "night"): 60},
        shifts_per_participant=5, shift_duration_hours=4.0,
        day_night_rate_delta=0.35, participant_rate_sd=0.05,
        frames_per_recording=80, fg_fraction=0.75, seed=424242)
    cohort, _ = synth.gen_cohort(config)
    rows = _participant_rates(cohort, min_fg=40)
    day = [r for p, r in rows if p.primary_shift == "day"]
    night = [r for p, r in rows if p.primary_shift == "night"]
    delta_hat = float(np.mean(day) - np.mean(night))
    anova = st.three_way_anova(
        [r for _, r in rows], [p.primary_shift for p, _ in rows],
        [p.sex for p, _ in rows], [p.age_group for p, _ in rows])
    delta_ok = abs(delta_hat - 0.35) <= 0.035
    p_shift = anova.factors["factor"].p

    corr_config = synth.CohortConfig(
        cells={("lab", "day"): 25}, shifts_per_participant=5,
        shift_duration_hours=4.0, participant_rate_sd=0.3,
        freq_irb_corr={"lab": -0.6},
        frames_per_recording=80, fg_fraction=0.75, seed=777)
    corr_cohort, _ = synth.gen_cohort(corr_config)
    crows = _participant_rates(corr_cohort, min_fg=40)
    corr = st.pearson([r for _, r in crows],
                      [p.surveys.irb_total for p, _ in crows])
    elapsed = time.perf_counter() - t0
    ok = (delta_ok and p_shift < 0.01 and corr.r < 0 and corr.p < 0.05
          and corr.n == 25 and elapsed < 180.0)
    report(9, ok, f"delta {delta_hat:.3f} (target 0.35), shift p {p_shift:.1e}; "
                  f"planted r=-0.6 recovered r={corr.r:.3f} p={corr.p:.4f} n=25; "
                  f"{elapsed:.0f}s")


# -- 10: full-pipeline determinism ------------------------------------------------

PIPELINE_CONFIG = """\
[paths]
data_root = data
output_root = out

[pipeline]
seed = 77

[diarizer]
learning_rate = 1e-3
epochs = 4
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

[synth]
stream_frames = 8000
stream_noise_sd = 1.0
teacher_accuracy = 0.95
cohort_cells = nonICU:day:3,nonICU:night:3
shifts_per_participant = 5
shift_duration_hours = 2.0
day_night_rate_delta = 0.35
participant_rate_sd = 0.3
"""

ALL_STAGES = ("gen", "train", "infer", "score", "segment", "arousal",
              "analyze", "report")


def test_criterion_10_pipeline_determinism(tmp_path):
    manifests = []
    for run in ("first", "second"):
        root = tmp_path / run
        root.mkdir()
        config_path = root / "config.ini"
        config_path.write_text(PIPELINE_CONFIG)
        config = load_config(config_path)
        for stage in ALL_STAGES:
            run_stage(stage, config)
        manifests.append({
            stage: (config.output_root / stage / "manifest.json").read_bytes()
            for stage in ALL_STAGES})
    same = [stage for stage in ALL_STAGES if manifests[0][stage] == manifests[1][stage]]
    ok = len(same) == len(ALL_STAGES)
    report(10, ok, f"{len(same)}/{len(ALL_STAGES)} stage manifests byte-identical "
                   "across two runs")
