"""Result tables and figures.

Everything is written to files: delimited CSV for the table shapes, JSON for
the machine-readable report, and self-contained SVG for the two figure
shapes (replaced-vs-substitution frequency histograms, TPR-vs-FPR-budget
sweep curves). SVG output is made reproducible by pinning matplotlib's hash
salt and stripping the creation date, so reruns hash identically.
"""

from __future__ import annotations

import csv
import json
import math

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "fgws"

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "write_csv",
    "write_freq_stats_csv",
    "write_detection_csv",
    "write_sweep_csv",
    "frequency_histogram",
    "sweep_figure",
    "write_json_report",
]

_FREQ_COLUMNS = (
    "attack", "num_pairs", "replaced_mean", "replaced_sd", "subst_mean",
    "subst_sd", "d", "log10_bf10", "nonoov_num", "nonoov_mean", "nonoov_sd",
    "nonoov_d", "nonoov_log10_bf10",
)

_DETECTION_COLUMNS = (
    "attack", "method", "tpr", "fpr", "precision", "f1",
    "restored_accuracy", "after_attack_accuracy",
)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".6g")
    return str(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def write_freq_stats_csv(rows, path) -> None:
    """Replaced-vs-substitution frequency table, one attack per row."""
    write_csv(path, _FREQ_COLUMNS,
              [[getattr(r, c) for c in _FREQ_COLUMNS] for r in rows])


def write_detection_csv(rows, path) -> None:
    """Detection scores, one (attack, method) per row. rows: dicts."""
    write_csv(path, _DETECTION_COLUMNS,
              [[row.get(c) for c in _DETECTION_COLUMNS] for row in rows])


def write_sweep_csv(curves, path) -> None:
    """TPR-at-budget curves; curves maps attack tag to sweep rows."""
    flat = []
    for attack in sorted(curves):
        for row in curves[attack]:
            flat.append([attack, row["budget"], row["gamma"], row["tpr"]])
    write_csv(path, ("attack", "budget", "gamma", "tpr"), flat)


def _save_svg(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def frequency_histogram(replaced_phis, subst_phis, title, csv_path, svg_path,
                        bin_width: float = 0.5) -> None:
    """Overlaid histograms of log frequencies on both sides of the
    substitutions, written as binned counts plus a figure."""
    replaced = np.asarray(list(replaced_phis), dtype=np.float64)
    subst = np.asarray(list(subst_phis), dtype=np.float64)
    top = float(max(replaced.max(), subst.max(), bin_width))
    edges = np.arange(0.0, top + bin_width, bin_width)
    if edges[-1] <= top:
        edges = np.append(edges, edges[-1] + bin_width)
    r_counts, _ = np.histogram(replaced, bins=edges)
    s_counts, _ = np.histogram(subst, bins=edges)
    write_csv(
        csv_path,
        ("bin_lo", "bin_hi", "replaced_count", "substitution_count"),
        [
            [float(edges[i]), float(edges[i + 1]), int(r_counts[i]), int(s_counts[i])]
            for i in range(len(r_counts))
        ],
    )
    fig, ax = plt.subplots(figsize=(6, 4))
    centers = (edges[:-1] + edges[1:]) / 2
    width = bin_width * 0.42
    ax.bar(centers - width / 2, r_counts, width=width, label="replaced", color="#4878a8")
    ax.bar(centers + width / 2, s_counts, width=width, label="substitutions", color="#c44e52")
    ax.set_xlabel("log frequency")
    ax.set_ylabel("words")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    _save_svg(fig, svg_path)


def sweep_figure(curves, svg_path) -> None:
    """TPR against the allowed false-positive budget, one line per attack."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for attack in sorted(curves):
        rows = curves[attack]
        ax.plot([r["budget"] for r in rows], [r["tpr"] for r in rows],
                marker="o", label=attack)
    ax.set_xlabel("false positive budget")
    ax.set_ylabel("TPR (%)")
    ax.set_ylim(0, 105)
    ax.set_title("detection rate at fixed false-positive budgets")
    ax.legend()
    fig.tight_layout()
    _save_svg(fig, svg_path)


def _sanitize(obj):
    """JSON with NaN/inf is not portable; map them to null/strings."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return _sanitize(float(obj))
    return obj


def write_json_report(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_sanitize(report), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
