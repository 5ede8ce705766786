"""Mutual-information feature ranking with equal-frequency binning."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .errors import InputError

DEFAULT_BINS = 10
DEFAULT_K = 6


def discretize(column, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Equal-frequency codes in ``[0, bins)``.

    A value's code is ``rank * bins // n`` where rank is the position of its
    first occurrence in sorted order, so tied values share the lower bin and
    the codes depend only on the ordering of the column.
    """
    x = np.asarray(column, dtype=float)
    if bins < 2:
        raise InputError("need at least two bins")
    n = len(x)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    rank = np.searchsorted(np.sort(x), x, side="left")
    return (rank * bins // n).astype(np.int64)


def _contingency(a, b) -> np.ndarray:
    _, ai = np.unique(np.asarray(a), return_inverse=True)
    _, bi = np.unique(np.asarray(b), return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai.ravel(), bi.ravel()), 1)
    return table


def mi_from_table(table) -> float:
    """Plug-in mutual information of a contingency table, in bits."""
    t = np.asarray(table, dtype=float)
    n = t.sum()
    if n <= 0:
        return 0.0
    pxy = t / n
    px = pxy.sum(axis=1, keepdims=True)
    py = pxy.sum(axis=0, keepdims=True)
    nz = pxy > 0
    mi = float(np.sum(pxy[nz] * np.log2(pxy[nz] / (px @ py)[nz])))
    return max(mi, 0.0)


def mutual_information(codes, y) -> float:
    codes = np.asarray(codes)
    y = np.asarray(y)
    if codes.shape != y.shape:
        raise InputError("codes and labels must have equal length")
    if len(codes) < 2:
        raise InputError("need at least two samples")
    return mi_from_table(_contingency(codes, y))


def entropy_bits(codes) -> float:
    _, counts = np.unique(np.asarray(codes), return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum())


@dataclass(frozen=True)
class RankedFeatures:
    entries: tuple[tuple[str, float], ...]
    k_selected: int
    bin_count: int
    fitted_on: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @property
    def selected(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.entries[: self.k_selected])

    def score(self, name: str) -> float:
        return dict(self.entries)[name]


def rank_features(ds: Dataset, k: int = DEFAULT_K, bins: int = DEFAULT_BINS) -> RankedFeatures:
    """Score every column against the label; ties keep the dataset's column order."""
    if ds.y is None:
        raise InputError("feature ranking needs a labeled dataset")
    if k < 1:
        raise InputError("k must be at least 1")
    scores = [mutual_information(discretize(ds.X[:, j], bins), ds.y) for j in range(ds.d)]
    order = sorted(range(ds.d), key=lambda j: -scores[j])  # stable: catalog order on ties
    entries = tuple((ds.feature_names[j], scores[j]) for j in order)
    return RankedFeatures(entries, min(k, ds.d), bins, ds.source_rows.copy())


def ranking_csv(ranked: RankedFeatures, comment: str | None = None) -> str:
    out = io.StringIO()
    if comment:
        for line in comment.splitlines():
            out.write(f"# {line}\n")
    out.write("rank,feature,mi_bits,selected\n")
    for i, (name, mi) in enumerate(ranked.entries, 1):
        out.write(f"{i},{name},{mi:.6f},{int(i <= ranked.k_selected)}\n")
    return out.getvalue()


def ranking_text(ranked: RankedFeatures, width: int = 40) -> str:
    """Horizontal bar chart, selected features marked with ``*``."""
    if not ranked.entries:
        return ""
    top = max(mi for _, mi in ranked.entries) or 1.0
    label_w = max(len(name) for name, _ in ranked.entries)
    lines = [f"Mutual information with label (bits, {ranked.bin_count} bins)"]
    for i, (name, mi) in enumerate(ranked.entries, 1):
        bar = "#" * int(round(width * mi / top))
        mark = "*" if i <= ranked.k_selected else " "
        lines.append(f"{mark} {name:<{label_w}} |{bar:<{width}}| {mi:.4f}")
    return "\n".join(lines) + "\n"

