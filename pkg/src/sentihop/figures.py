"""Figure rendering for the report path: error-breakdown bars, training
loss curves, and ambiguity counts, written as PNG files next to the
delimited tables."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .corpus import POLARITIES

_COLORS = {"explicit": "#4878cf", "implicit": "#d65f5f"}


def error_breakdown_figure(report_obj: dict, path: str | Path) -> Path:
    """Grouped bars: error ratio per gold polarity, explicit vs implicit."""
    cells = {
        (c["slice"], c["gold_polarity"]): c["ratio"]
        for c in report_obj["error_breakdown"]["cells"]
    }
    x = range(len(POLARITIES))
    width = 0.38
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, slice_name in enumerate(("explicit", "implicit")):
        ratios = [cells[(slice_name, g)] for g in POLARITIES]
        offset = (i - 0.5) * width
        ax.bar(
            [xi + offset for xi in x],
            ratios,
            width=width,
            label=slice_name,
            color=_COLORS[slice_name],
        )
    ax.set_xticks(list(x))
    ax.set_xticklabels(POLARITIES)
    ax.set_ylabel("share of all errors")
    ax.set_title(
        f"Error breakdown ({report_obj['dataset']}, "
        f"{report_obj['error_breakdown']['total_errors']} errors)"
    )
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def loss_curves_figure(trainlog_csv: str | Path, path: str | Path) -> Path:
    """Per-step component and combined losses from a training log CSV."""
    steps: list[int] = []
    series: dict[str, list[tuple[int, float]]] = {
        "l_exp": [],
        "l_ver": [],
        "l_pre": [],
        "l_combined": [],
    }
    with Path(trainlog_csv).open("r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            step = int(row["step"])
            steps.append(step)
            for key in series:
                if row[key] != "":
                    series[key].append((step, float(row[key])))

    fig, ax = plt.subplots(figsize=(6, 4))
    styles = {
        "l_pre": ("prediction", "-"),
        "l_exp": ("explanation", "--"),
        "l_ver": ("verification", ":"),
        "l_combined": ("combined", "-"),
    }
    for key, (label, style) in styles.items():
        if not series[key]:
            continue
        xs, ys = zip(*series[key])
        lw = 2.0 if key == "l_combined" else 1.2
        ax.plot(xs, ys, style, label=label, linewidth=lw)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title("Training losses")
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def ambiguity_figure(report_obj: dict, path: str | Path) -> Path:
    amb = report_obj["ambiguity"]
    fig, ax = plt.subplots(figsize=(4.5, 4))
    labels = ["wrong", "ambiguous"]
    values = [amb["wrong_count"], amb["ambiguous_count"]]
    ax.bar(labels, values, color=["#d65f5f", "#ee854a"])
    ax.set_ylabel("count")
    ax.set_title(f"Rationale quality (n={amb['total']})")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_report_figures(
    report_obj: dict, out_dir: str | Path, trainlog_csv: str | Path | None = None
) -> list[Path]:
    out_dir = Path(out_dir)
    produced = [
        error_breakdown_figure(report_obj, out_dir / "error_breakdown.png"),
        ambiguity_figure(report_obj, out_dir / "ambiguity.png"),
    ]
    if trainlog_csv is not None and Path(trainlog_csv).exists():
        produced.append(loss_curves_figure(trainlog_csv, out_dir / "loss_curves.png"))
    return produced
