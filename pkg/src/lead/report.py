"""Report files: delimited metrics plus rendered figures.

Every command that produces metrics writes a CSV next to a JSON report and a
couple of PNG figures into its output directory.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import MetricsReport
from .train_eval import TrainHistory

REPORT_COLUMNS = (
    "dataset_id",
    "split",
    "n_samples",
    "n_subjects",
    "sample_accuracy",
    "sample_macro_f1",
    "subject_accuracy",
    "subject_macro_f1",
)


def write_history_csv(history: TrainHistory, path: str | Path) -> None:
    keys: list[str] = []
    for record in history.records:
        for k in record.values:
            if k not in keys:
                keys.append(k)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "lr", *keys])
        for record in history.records:
            writer.writerow(
                [record.epoch, f"{record.lr:.10g}"]
                + [f"{record.values[k]:.10g}" if k in record.values else "" for k in keys]
            )


def write_reports_csv(reports: Sequence[MetricsReport], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for r in reports:
            row = r.to_dict()
            writer.writerow([row[c] for c in REPORT_COLUMNS])


def write_reports_json(reports: Sequence[MetricsReport], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True), encoding="utf-8"
    )


def plot_history(history: TrainHistory, path: str | Path) -> None:
    """Loss/score curves over epochs for a training run."""
    keys = sorted({k for record in history.records for k in record.values if "/" not in k})
    epochs = [r.epoch for r in history.records]
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for key in keys:
        axes[0].plot(epochs, history.series(key), marker="o", markersize=3, label=key)
    axes[0].set_xlabel("epoch")
    axes[0].legend(fontsize=8)
    axes[0].set_title(f"{history.phase} progress")
    axes[1].plot(epochs, [r.lr for r in history.records], color="tab:gray")
    axes[1].set_xlabel("epoch")
    axes[1].set_ylabel("learning rate")
    axes[1].set_title("schedule")
    if history.best_epoch is not None:
        axes[0].axvline(history.best_epoch, color="tab:green", linestyle="--", linewidth=1)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_report_bars(reports: Sequence[MetricsReport], path: str | Path) -> None:
    """Grouped bars of the four headline metrics per dataset."""
    metrics = ("sample_accuracy", "sample_macro_f1", "subject_accuracy", "subject_macro_f1")
    labels = [r.dataset_id for r in reports]
    x = range(len(reports))
    width = 0.2
    fig, ax = plt.subplots(figsize=(max(6, 1.6 * len(reports)), 4))
    for mi, metric in enumerate(metrics):
        vals = [getattr(r, metric) for r in reports]
        ax.bar([xi + (mi - 1.5) * width for xi in x], vals, width=width, label=metric)
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    ax.set_title("evaluation metrics")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_vote_tallies(report: MetricsReport, path: str | Path) -> None:
    """Per-subject stacked vote counts, colored by correctness of the vote."""
    votes = report.votes
    if not votes:
        return
    sids = [v.subject_id for v in votes]
    classes = sorted({cls for v in votes for cls in v.tally})
    fig, ax = plt.subplots(figsize=(max(6, 0.25 * len(votes)), 4))
    bottom = [0.0] * len(votes)
    for cls in classes:
        heights = [v.tally.get(cls, 0) for v in votes]
        ax.bar(range(len(votes)), heights, bottom=bottom, label=f"class {cls}")
        bottom = [b + h for b, h in zip(bottom, heights)]
    for i, v in enumerate(votes):
        color = "tab:green" if v.voted_label == v.true_label else "tab:red"
        ax.plot(i, bottom[i] + 0.5, marker="v", color=color, markersize=5)
    ax.set_xticks(range(len(votes)))
    ax.set_xticklabels(sids, fontsize=6, rotation=90)
    ax.set_xlabel("subject")
    ax.set_ylabel("sample votes")
    ax.legend(fontsize=8)
    ax.set_title(f"{report.dataset_id} {report.split}: majority votes")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def emit_evaluation(reports: Sequence[MetricsReport], out_dir: str | Path, stem: str = "report") -> list[Path]:
    """Write the CSV/JSON pair and figures for a set of evaluation reports."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    csv_path = out / f"{stem}.csv"
    json_path = out / f"{stem}.json"
    write_reports_csv(reports, csv_path)
    write_reports_json(reports, json_path)
    written += [csv_path, json_path]
    bars = out / f"{stem}_metrics.png"
    plot_report_bars(reports, bars)
    written.append(bars)
    for r in reports:
        safe = r.dataset_id.replace("/", "_").replace("[", "_").replace("]", "").replace("=", "-")
        fig_path = out / f"{stem}_votes_{safe}.png"
        plot_vote_tallies(r, fig_path)
        written.append(fig_path)
    return written


def emit_training(history: TrainHistory, out_dir: str | Path, stem: str) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{stem}_epochs.csv"
    fig_path = out / f"{stem}_curves.png"
    write_history_csv(history, csv_path)
    plot_history(history, fig_path)
    return [csv_path, fig_path]
