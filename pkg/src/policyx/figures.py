"""Matplotlib figures rendered next to the report files."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import FOOD_TABLE_ORDER, EvalReport, sort_reports
from .taxonomy import CATEGORY_ORDER

_PNG_METADATA = {"Software": "policyx"}


def _grouped_bars(ax, group_labels: Sequence[str], series: dict[str, Sequence[float]]):
    n_groups = len(group_labels)
    n_series = len(series)
    width = 0.8 / max(n_series, 1)
    for j, (name, values) in enumerate(series.items()):
        xs = [i + j * width for i in range(n_groups)]
        ax.bar(xs, values, width=width, label=name)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(n_groups)])
    ax.set_xticklabels(group_labels)
    ax.set_ylim(0, 100)
    ax.legend(fontsize=8)


def strategy_accuracy_figure(reports: Sequence[EvalReport], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    group_labels = ["Exact", "Partial", "Type A", "Type B"]
    series = {
        r.method.value: [
            r.strategies.exact_acc * 100,
            r.strategies.partial_acc * 100,
            r.strategies.group_a_acc * 100,
            r.strategies.group_b_acc * 100,
        ]
        for r in reports
    }
    _grouped_bars(ax, group_labels, series)
    ax.set_ylabel("Accuracy (%)")
    ax.set_title("Legal strategy accuracy by method")
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_PNG_METADATA)
    plt.close(fig)


def food_accuracy_figure(reports: Sequence[EvalReport], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(8, 4))
    group_labels = [c.display for c in FOOD_TABLE_ORDER]
    series = {
        r.method.value: [r.food.per_category_acc[c] * 100 for c in FOOD_TABLE_ORDER]
        for r in reports
    }
    _grouped_bars(ax, group_labels, series)
    ax.set_ylabel("Accuracy (%)")
    ax.set_title("Food system category accuracy by method")
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_PNG_METADATA)
    plt.close(fig)


def k_distribution_figure(reports: Sequence[EvalReport], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(8, 4))
    ks = list(range(len(CATEGORY_ORDER), -1, -1))
    group_labels = [str(k) for k in ks]
    series = {r.method.value: [r.food.k_histogram[k] for k in ks] for r in reports}
    _grouped_bars(ax, group_labels, series)
    ax.set_xlabel("Correctly predicted food categories per policy")
    ax.set_ylabel("Policies (%)")
    ax.set_title("Distribution of correct food categories by method")
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_PNG_METADATA)
    plt.close(fig)


def save_report_figures(reports: Iterable[EvalReport], out_dir: str | Path) -> list[Path]:
    """Render all report figures into a directory; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ordered = sort_reports(reports)
    targets = {
        "strategy_accuracy.png": strategy_accuracy_figure,
        "food_accuracy.png": food_accuracy_figure,
        "k_distribution.png": k_distribution_figure,
    }
    written = []
    for name, render in targets.items():
        path = out_dir / name
        render(ordered, path)
        written.append(path)
    return written
