"""PNG figures for the report subcommand.

Figures are built on the Agg canvas directly, so importing this module
never touches the global pyplot state or needs a display.
"""

from pathlib import Path
from typing import List, Sequence, Union

from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from exprkit.curation import CorpusStats
from exprkit.metrics import TierReport

# no timestamps or version strings in the PNG, so output is byte-stable
_PNG_METADATA = {"Software": None}

_STYLE = {"edgecolor": "black", "linewidth": 0.6}


def _save(fig: Figure, path: Union[str, Path]) -> Path:
    path = Path(path)
    FigureCanvasAgg(fig)
    fig.savefig(path, format="png", dpi=100, metadata=_PNG_METADATA)
    return path


def tier_metric_figure(reports: Sequence[TierReport], path: Union[str, Path]) -> Path:
    """Grouped bars of similarity metrics per tier (edit distance excluded, it is unbounded)."""
    names = ["BLEU", "ROUGE-1 F", "ROUGE-2 F", "ROUGE-L F", "cdm_lite F (approx.)"]
    fig = Figure(figsize=(7.0, 3.6))
    ax = fig.add_subplot(1, 1, 1)
    width = 0.8 / max(len(reports), 1)
    for k, rep in enumerate(reports):
        values = [rep.bleu, rep.rouge1["f1"], rep.rouge2["f1"], rep.rougeL["f1"], rep.cdm_lite["f1"]]
        xs = [i + (k - (len(reports) - 1) / 2) * width for i in range(len(names))]
        ax.bar(xs, values, width, label="%s (n=%d)" % (rep.tier, rep.count), **_STYLE)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("mean score")
    if reports:
        ax.legend(fontsize=8, frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def bucket_figure(stats: CorpusStats, path: Union[str, Path]) -> Path:
    """Sample counts per length bucket and per line bucket, side by side."""
    fig = Figure(figsize=(8.0, 3.2))
    panels: List = [
        ("tokens", stats.length_labels, stats.length_counts),
        ("lines", stats.line_labels, stats.line_counts),
    ]
    for i, (xlabel, labels, counts) in enumerate(panels, 1):
        ax = fig.add_subplot(1, 2, i)
        ax.bar(range(len(labels)), counts, 0.7, color="0.6", **_STYLE)
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, fontsize=8)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("samples")
    fig.tight_layout()
    return _save(fig, path)
