"""Report bundle: group-statistics tables, plot-ready data files, and rendered
figures.

Every figure has a delimited twin holding exactly the plotted values, so
downstream tooling never needs to re-derive numbers from pixels:

* ``table_<analysis>.csv``   - level rows (mean, CI, n) plus F/p test rows
* ``violin_<analysis>.csv``  - one (group, value) row per participant
* ``scatter_<name>.csv``     - (participant_id, x, y) plus a fitted-line file
* ``line_arousal_by_position.csv`` - mean fused-arousal curve over the shift

Figures are rendered with the Agg backend into ``figures/``.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

N_POSITION_BINS = 10
NURSING_UNITS = ("ICU", "nonICU")

RESPONSE_LABELS = {
    "sessions_per_hour": "speaking sessions per hour",
    "avg_session_duration_min": "average session duration (min)",
    "arousal_first": "90th-percentile arousal, first half",
    "arousal_second": "90th-percentile arousal, second half",
}


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_rows(path: Path, header: list[str], rows: list[list]) -> Path:
    lines = [",".join(header)] + [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def _fnum(raw):
    return float(raw) if raw not in (None, "") else None


def _save_figure(fig, path: Path) -> Path:
    fig.savefig(path, dpi=150, metadata={"Software": "commtrace"})
    plt.close(fig)
    return path


def _violin_figure(groups: dict[str, list[float]], ylabel: str, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.4))
    levels = sorted(groups)
    data = [groups[level] for level in levels]
    ax.violinplot(data, showmeans=True)
    ax.set_xticks(range(1, len(levels) + 1))
    ax.set_xticklabels(levels)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    return _save_figure(fig, path)


def _scatter_figure(xs, ys, slope, intercept, xlabel, ylabel, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(4.4, 3.4))
    ax.scatter(xs, ys, s=18, alpha=0.8)
    if slope is not None:
        grid = np.linspace(min(xs), max(xs), 50)
        ax.plot(grid, intercept + slope * grid, color="tab:red", linewidth=1.2)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    return _save_figure(fig, path)


def _line_figure(series: dict[str, tuple[list[float], list[float]]], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.4))
    for label in sorted(series):
        xs, ys = series[label]
        ax.plot(xs, ys, marker="o", markersize=3, label=label)
    ax.set_xlabel("position in shift (fraction)")
    ax.set_ylabel("mean 90th-percentile arousal")
    ax.legend()
    fig.tight_layout()
    return _save_figure(fig, path)


def emit_report(stats_payload: dict, participants: list[dict],
                arousal_scores: list[dict], out_dir: Path) -> list[Path]:
    """Write the full report bundle; returns every file written."""
    out_dir = Path(out_dir)
    figures_dir = out_dir / "figures"
    figures_dir.mkdir(parents=True, exist_ok=True)
    outputs: list[Path] = []

    # --- group tables + violin data -------------------------------------
    for analysis in stats_payload["analyses"]:
        name = analysis["name"]
        rows = [["level", a["level"], a["mean"], a["ci_lo"], a["ci_hi"], a["n"]]
                for a in analysis["groups"]]
        for t in analysis.get("tests", []):
            rows.append(["test", t["factor"], t["F"], t["p"],
                         t["df_num"], t["df_den"]])
        outputs.append(_write_rows(
            out_dir / f"table_{name}.csv",
            ["row", "level_or_factor", "mean_or_F", "ci_lo_or_p",
             "ci_hi_or_df_num", "n_or_df_den"], rows))

        response = analysis["response"]
        factor = analysis["factor"]
        day_only = name.endswith("_by_unit_day")
        groups: dict[str, list[float]] = {}
        violin_rows = []
        for p in participants:
            if day_only and p["primary_shift"] != "day":
                continue
            value = _fnum(p.get(response))
            if value is None:
                continue
            groups.setdefault(p[factor], []).append(value)
            violin_rows.append([p[factor], value])
        outputs.append(_write_rows(out_dir / f"violin_{name}.csv",
                                   ["group", "value"], violin_rows))
        if groups and all(len(v) >= 2 for v in groups.values()):
            outputs.append(_violin_figure(
                groups, RESPONSE_LABELS.get(response, response),
                figures_dir / f"violin_{name}.png"))

    # --- correlation scatters -------------------------------------------
    for corr in stats_payload["correlations"]:
        if "skipped" in corr:
            continue
        name = corr["name"]
        unit, shift = name.split("_")[-2:]
        survey_key = "irb_total" if "_irb_" in name else "stai_total"
        cell = [p for p in participants
                if p["work_unit"] == unit and p["primary_shift"] == shift]
        rows, xs, ys = [], [], []
        for p in cell:
            x = _fnum(p.get("sessions_per_hour"))
            y = _fnum(p.get(survey_key))
            if x is None or y is None:
                continue
            rows.append([p["participant_id"], x, y])
            xs.append(x)
            ys.append(y)
        outputs.append(_write_rows(out_dir / f"scatter_{name}.csv",
                                   ["participant_id", "x", "y"], rows))
        outputs.append(_write_rows(
            out_dir / f"scatter_{name}_fit.csv",
            ["slope", "intercept", "r", "p", "n"],
            [[corr["slope"], corr["intercept"], corr["r"], corr["p"], corr["n"]]]))
        if xs:
            outputs.append(_scatter_figure(
                xs, ys, corr["slope"], corr["intercept"],
                "speaking sessions per hour", survey_key.replace("_", " "),
                figures_dir / f"scatter_{name}.png"))

    # --- arousal-over-shift line series (nursing units) -------------------
    per_cell: dict[tuple[str, int], list[float]] = {}
    by_shift_bin: dict[tuple[str, str, int], list[float]] = {}
    for row in arousal_scores:
        if row["work_unit"] not in NURSING_UNITS:
            continue
        frac = float(row["minute_index"]) / (float(row["duration_hours"]) * 60.0)
        bin_index = min(int(frac * N_POSITION_BINS), N_POSITION_BINS - 1)
        key = (row["primary_shift"], row["shift_id"], bin_index)
        by_shift_bin.setdefault(key, []).append(float(row["fused_score"]))
    for (shift_type, _, bin_index), values in by_shift_bin.items():
        per_cell.setdefault((shift_type, bin_index), []).append(
            float(np.quantile(values, 0.9)))

    line_rows = []
    series: dict[str, tuple[list[float], list[float]]] = {}
    for shift_type in ("day", "night"):
        xs, ys = [], []
        for bin_index in range(N_POSITION_BINS):
            cell = per_cell.get((shift_type, bin_index))
            if not cell:
                continue
            center = (bin_index + 0.5) / N_POSITION_BINS
            mean = float(np.mean(cell))
            line_rows.append([shift_type, center, mean, len(cell)])
            xs.append(center)
            ys.append(mean)
        if xs:
            series[shift_type] = (xs, ys)
    outputs.append(_write_rows(
        out_dir / "line_arousal_by_position.csv",
        ["primary_shift", "bin_center_frac", "mean_p90_arousal", "n_shifts"],
        line_rows))
    if series:
        outputs.append(_line_figure(series, figures_dir / "line_arousal_by_position.png"))

    return outputs
