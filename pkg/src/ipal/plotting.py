"""Figure rendering for comparison reports.

The timeline figure mirrors the side-by-side comparison layout: one track
per detector, interval alarms drawn as bars, point alerts as x marks, and
attack scenarios as shaded bands behind everything.  The score figure
plots a departure-score series against its threshold.  Files are rendered
headless (Agg); the delimited table and timeline export stay the primary
machine-readable outputs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_BAND = "#f4c7c3"
_BAR = "#3b6fb6"


def render_timeline(timeline: dict, path: str, title: str = "Detector comparison") -> None:
    """Render a timeline export (see evaluate.timeline_export) to a file."""
    detectors = list(timeline.get("detectors", {}))
    scenarios = timeline.get("scenarios", [])
    height = max(2.0, 0.6 * len(detectors) + 1.2)
    fig, ax = plt.subplots(figsize=(10, height))

    for band in scenarios:
        ax.axvspan(band["start"], band["end"], color=_BAND, alpha=0.6, zorder=0)
        ax.text(band["start"], len(detectors) - 0.35, band["name"],
                fontsize=7, rotation=90, va="top", color="#7a2e2e")

    for row, name in enumerate(detectors):
        entry = timeline["detectors"][name]
        for start, end in entry.get("alarms", []):
            ax.plot([start, end], [row, row], linewidth=6,
                    color=_BAR, solid_capstyle="butt", zorder=2)
        points = entry.get("points", [])
        if points:
            ax.plot(points, [row] * len(points), "x", markersize=4,
                    color="black", zorder=3)

    ax.set_yticks(range(len(detectors)))
    ax.set_yticklabels(detectors)
    ax.set_ylim(-0.7, len(detectors) - 0.3 if detectors else 0.7)
    ax.set_xlabel("time [s]")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_scores(scores: list[tuple[float, float]], threshold: float | None,
                  path: str, title: str = "Departure score") -> None:
    """Render a detector score series (e.g. the subspace departure)."""
    fig, ax = plt.subplots(figsize=(10, 3))
    if scores:
        ax.plot([t for t, _ in scores], [s for _, s in scores],
                linewidth=0.8, color=_BAR)
    if threshold is not None:
        ax.axhline(threshold, color="#b03030", linestyle="--", linewidth=1,
                   label=f"threshold {threshold:.4g}")
        ax.legend(loc="upper left", fontsize=8)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("score")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
