"""Figure rendering for evaluation reports and sweep grids.

Figures are written next to the delimited outputs so a report directory is
self-contained: metrics bar chart beside metrics.json, fraction-vs-metric
lines beside sweep.csv.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import MetricReport

_METRIC_LABELS = {
    "mat": "entity match",
    "succ_f1": "success F1",
    "bleu": "BLEU",
    "nlu_acc": "NLU acc",
    "dst_acc": "DST acc",
    "dpl_acc": "DPL acc",
    "succ_acc": "success acc",
}


def render_metric_figure(report: MetricReport, path):
    """Bar chart of the applicable metrics in a report."""
    items = [(k, getattr(report, k)) for k in _METRIC_LABELS
             if getattr(report, k) is not None]
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    names = [_METRIC_LABELS[k] for k, _ in items]
    values = [v for _, v in items]
    bars = ax.bar(names, values, color="#4878a8")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("score")
    ax.set_title(f"{report.n_dialogs} dialogs, {report.n_turns} turns")
    ax.bar_label(bars, fmt="%.3f", fontsize=8)
    plt.setp(ax.get_xticklabels(), rotation=20, ha="right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_sweep_figure(rows: list[dict], path):
    """Fraction-vs-score lines per framework instance, one panel per metric.

    ``rows`` are sweep records with instance, fraction and metric columns;
    metrics that are not-applicable everywhere are skipped.
    """
    metrics = [m for m in _METRIC_LABELS
               if any(row.get(m) is not None for row in rows)]
    if not metrics:
        raise ValueError("no plottable metric columns in sweep rows")
    ncols = min(3, len(metrics))
    nrows = (len(metrics) + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols,
                             figsize=(4.2 * ncols, 3.2 * nrows),
                             squeeze=False)
    instances = sorted({row["instance"] for row in rows})
    for i, metric in enumerate(metrics):
        ax = axes[i // ncols][i % ncols]
        for inst in instances:
            pts = sorted((row["fraction"], row[metric]) for row in rows
                         if row["instance"] == inst
                         and row.get(metric) is not None)
            if pts:
                ax.plot([p[0] for p in pts], [p[1] for p in pts],
                        marker="o", label=inst)
        ax.set_xlabel("training data fraction")
        ax.set_ylabel(_METRIC_LABELS[metric])
        ax.set_ylim(0.0, 1.05)
        ax.grid(alpha=0.3)
    for j in range(len(metrics), nrows * ncols):
        axes[j // ncols][j % ncols].axis("off")
    axes[0][0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
