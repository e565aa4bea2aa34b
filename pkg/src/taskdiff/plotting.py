"""Figure rendering for evaluation reports.

The CLI report path writes these PNGs next to the CSV/JSONL artifacts;
nothing here feeds back into the metrics. matplotlib is imported lazily
so library users without a display stack pay nothing.
"""
from __future__ import annotations

from pathlib import Path

from .evaluate import EvalReport


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_cluster_figure(report: EvalReport, path: str | Path) -> None:
    """Scatter of the 2D MDS coordinates, colored by cluster assignment."""
    plt = _pyplot()
    items = report.per_item or []
    fig, ax = plt.subplots(figsize=(7, 6))
    clusters = sorted({item["cluster"] for item in items})
    cmap = plt.get_cmap("tab20")
    for c in clusters:
        xs = [i["x"] for i in items if i["cluster"] == c]
        ys = [i["y"] for i in items if i["cluster"] == c]
        ax.scatter(xs, ys, s=18, color=cmap(c % 20), label=f"cluster {c}")
    ax.set_xlabel("mds-1")
    ax.set_ylabel("mds-2")
    purity = report.numbers.get("purity", float("nan"))
    ax.set_title(f"{report.metric_name or 'distance'} clusters (purity {purity:.3f})")
    if len(clusters) <= 10:
        ax.legend(fontsize=8, loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_bar_figure(
    numbers: dict[str, float], path: str | Path, title: str, ylabel: str
) -> None:
    """Horizontal bar chart of named measures (accuracies, distances)."""
    plt = _pyplot()
    names = list(numbers)
    values = [numbers[n] for n in names]
    fig, ax = plt.subplots(figsize=(7, 0.6 * len(names) + 1.8))
    ax.barh(range(len(names)), values, color="#4878a8")
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names, fontsize=9)
    ax.invert_yaxis()
    ax.set_xlabel(ylabel)
    ax.set_title(title)
    for i, v in enumerate(values):
        ax.text(v, i, f" {v:.3f}", va="center", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
