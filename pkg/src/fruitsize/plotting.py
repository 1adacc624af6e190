"""Static SVG box-plot grid: one panel per estimator, one box per retention range.

Boxes are drawn from precomputed :class:`~fruitsize.stats.QuartileSummary`
values, so the picture shows exactly the numbers in the summary document.
"""
from __future__ import annotations

import json
from pathlib import Path


def load_summary(path):
    """Summary JSON written by ``size-sweep`` -> ``{estimator: [(label, stats), ...]}``."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    groups = {}
    for row in doc["summaries"]:
        label = f"{round(row['retention_lo'] * 100)}-{round(row['retention_hi'] * 100)}"
        groups.setdefault(row["estimator"], []).append((label, row))
    return groups


def boxplot_svg(groups, path, title=None):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "fruitsize"

    names = list(groups)
    fig, axes = plt.subplots(1, max(1, len(names)), figsize=(3.2 * max(1, len(names)), 4.2),
                             sharey=True, squeeze=False)
    for ax, name in zip(axes[0], names):
        stats = [{
            "label": label, "med": s["q2"], "q1": s["q1"], "q3": s["q3"],
            "whislo": s["whisker_low"], "whishi": s["whisker_high"], "fliers": [],
        } for label, s in groups[name]]
        ax.bxp(stats, showfliers=False)
        ax.axhline(0.0, color="0.6", lw=0.8, ls="--")
        ax.set_title(name)
        ax.tick_params(axis="x", labelrotation=90, labelsize=7)
    axes[0][0].set_ylabel("d_est - d_gt (mm)")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    # fixed metadata keeps the file byte-stable across runs
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return Path(path)
