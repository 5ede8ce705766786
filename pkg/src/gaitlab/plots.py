"""Report figures, rendered off-screen straight to PNG files.

Uses ``matplotlib.figure.Figure`` with the Agg canvas rather than pyplot, so
nothing touches global figure state and repeated runs give identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .learn.model import KIND_TITLES
from .selection import RankedFeatures

DPI = 100
_SELECTED = "#1f77b4"
_OTHER = "#b0b0b0"


def _save(fig: Figure, path, header: str | None) -> Path:
    """Write PNG; ``header`` goes into the Description text chunk for provenance."""
    path = Path(path)
    FigureCanvasAgg(fig)
    meta = {"Software": None}
    if header:
        meta["Description"] = header
    fig.savefig(path, dpi=DPI, metadata=meta)
    return path


def feature_ranking(ranked: RankedFeatures, path, top: int | None = None,
                    header: str | None = None) -> Path:
    entries = list(ranked.entries[:top] if top else ranked.entries)
    names = [n for n, _ in entries][::-1]
    vals = [v for _, v in entries][::-1]
    colors = [_SELECTED if i >= len(entries) - ranked.k_selected else _OTHER
              for i in range(len(entries))]
    fig = Figure(figsize=(7, 0.28 * len(entries) + 1.2))
    ax = fig.add_subplot()
    ax.barh(np.arange(len(names)), vals, color=colors)
    ax.set_yticks(np.arange(len(names)), names, fontsize=8)
    ax.set_xlabel("mutual information (bits)")
    ax.set_title(f"Feature ranking, top {ranked.k_selected} selected")
    fig.tight_layout()
    return _save(fig, path, header)


def classifier_comparison(reports, path, header: str | None = None) -> Path:
    names = [KIND_TITLES[r.spec.kind] for r in reports]
    means = [r.mean_accuracy for r in reports]
    spread = [np.std(r.fold_accuracies) for r in reports]
    fig = Figure(figsize=(7, 4))
    ax = fig.add_subplot()
    bars = ax.bar(np.arange(len(names)), means, yerr=spread, capsize=4, color=_SELECTED)
    for bar, m in zip(bars, means):
        ax.text(bar.get_x() + bar.get_width() / 2, 2, f"{m:.1f}", ha="center", color="white",
                fontsize=9)
    ax.set_xticks(np.arange(len(names)), names, rotation=20, ha="right", fontsize=8)
    ax.set_ylim(0, 105)
    ax.set_ylabel("cross-validated accuracy (%)")
    ax.set_title("Classifier comparison")
    fig.tight_layout()
    return _save(fig, path, header)


def tuning_curves(tune, path, header: str | None = None) -> Path:
    """Mean CV accuracy against k, one line per metric/weighting pair."""
    series: dict[str, list[tuple[int, float]]] = {}
    for r in tune.results:
        if r.spec.kind != "knn":
            continue
        p = r.spec.params
        series.setdefault(f"{p['metric']}/{p['weighting']}", []).append((p["k"], r.mean_accuracy))
    fig = Figure(figsize=(7, 4))
    ax = fig.add_subplot()
    for name, pts in series.items():
        pts.sort()
        ax.plot([k for k, _ in pts], [a for _, a in pts], marker="o", ms=3, label=name)
    if tune.best.spec.kind == "knn":
        ax.axvline(tune.best.spec.params["k"], color="k", lw=0.8, ls="--")
    ax.set_xlabel("k")
    ax.set_ylabel("mean CV accuracy (%)")
    ax.set_title("KNN hyperparameter grid")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path, header)


def knn_scatter(train, test, features: tuple[str, str], path, predicted=None,
                header: str | None = None) -> Path:
    """Training rows and held-out rows on two features, coloured by class."""
    fx, fy = features
    fig = Figure(figsize=(6, 5))
    ax = fig.add_subplot()
    for c, color in ((0, "#2ca02c"), (1, "#d62728")):
        m = train.y == c
        ax.scatter(train.column(fx)[m], train.column(fy)[m], s=18, c=color, alpha=0.5,
                   label=f"train {'PD' if c else 'control'}")
    labels = test.y if predicted is None else predicted
    for c, color in ((0, "#2ca02c"), (1, "#d62728")):
        m = labels == c
        ax.scatter(test.column(fx)[m], test.column(fy)[m], s=40, facecolors="none",
                   edgecolors=color, linewidths=1.2, label=f"test {'PD' if c else 'control'}")
    ax.set_xlabel(fx)
    ax.set_ylabel(fy)
    ax.set_title("Training and test data")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path, header)


def session_trace(session, path, steps=None, seconds: float = 10.0,
                  header: str | None = None) -> Path:
    """First few seconds of accel magnitude and the two gyro pitch traces."""
    t = (session.t_ms - session.t_ms[0]) / 1000.0
    m = t <= seconds
    fig = Figure(figsize=(8, 5))
    ax1, ax2 = fig.subplots(2, 1, sharex=True)
    for side in ("left", "right"):
        ax1.plot(t[m], np.linalg.norm(session.accel(side)[m], axis=1), lw=0.8, label=side)
        ax2.plot(t[m], session.gyro(side)[m, 1], lw=0.8, label=side)
    if steps is not None:
        for s in np.asarray(steps):
            rel = s - session.t_ms[0] / 1000.0
            if rel <= seconds:
                ax1.axvline(rel, color="k", lw=0.5, alpha=0.4)
    ax1.set_ylabel("|accel| (g)")
    ax2.set_ylabel("gyro y (deg/s)")
    ax2.set_xlabel("time (s)")
    ax1.legend(fontsize=8)
    ax1.set_title(f"{session.subject_id} / {session.task.value}")
    fig.tight_layout()
    return _save(fig, path, header)
