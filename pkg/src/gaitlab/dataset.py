"""Labeled feature tables, z-scoring and stratified splits.

A table on disk is either *long* (one row per subject and task, as written by
the features module) or *wide* (one row per subject). Loading a long table
pivots it to wide with task-prefixed columns, e.g. ``walk_cadence_spm``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import EmptyAfterCleaning, InputError, SchemaMismatch
from .features import FEATURE_CATALOG


@dataclass(frozen=True)
class Scaler:
    """Per-column training mean and population std.

    ``fitted_on`` records which source rows produced the statistics so
    callers can prove no held-out row leaked into them.
    """

    feature_names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    fitted_on: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        safe = np.where(self.std > 0, self.std, 1.0)
        Z = (X - self.mean) / safe
        Z[:, self.std <= 0] = 0.0
        return Z


@dataclass(frozen=True)
class Dataset:
    feature_names: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray | None = None
    row_ids: tuple[str, ...] = ()
    source_rows: np.ndarray | None = None
    dropped: int = 0
    scaler: Scaler | None = None

    def __post_init__(self) -> None:
        X = np.array(self.X, dtype=float, ndmin=2)
        if X.size == 0:
            X = X.reshape(0, len(self.feature_names))
        names = tuple(self.feature_names)
        if X.shape[1] != len(names):
            raise InputError(f"X has {X.shape[1]} columns but {len(names)} feature names")
        if len(set(names)) != len(names):
            raise InputError("duplicate feature names")
        if not np.isfinite(X).all():
            raise InputError("X contains NaN or inf")
        X.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "feature_names", names)
        n = X.shape[0]
        if self.y is not None:
            y = np.asarray(self.y).astype(np.int64)
            if y.shape != (n,):
                raise InputError("y length must match the number of rows")
            if not np.isin(y, (0, 1)).all():
                raise InputError("labels must be 0 or 1")
            y.flags.writeable = False
            object.__setattr__(self, "y", y)
        ids = tuple(self.row_ids) if self.row_ids else tuple(str(i) for i in range(n))
        if len(ids) != n:
            raise InputError("row_ids length must match the number of rows")
        object.__setattr__(self, "row_ids", ids)
        src = np.arange(n) if self.source_rows is None else np.asarray(self.source_rows, dtype=np.int64)
        if src.shape != (n,):
            raise InputError("source_rows length must match the number of rows")
        src.flags.writeable = False
        object.__setattr__(self, "source_rows", src)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def labeled(self) -> bool:
        return self.y is not None

    def class_counts(self) -> tuple[int, int]:
        if self.y is None:
            return (0, 0)
        return int((self.y == 0).sum()), int((self.y == 1).sum())

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            self.feature_names,
            self.X[idx],
            None if self.y is None else self.y[idx],
            tuple(self.row_ids[i] for i in idx),
            self.source_rows[idx],
            0,
            self.scaler,
        )

    def select(self, names) -> "Dataset":
        names = tuple(names)
        missing = [n for n in names if n not in self.feature_names]
        if missing:
            raise SchemaMismatch(missing[0], "feature not present in dataset")
        cols = [self.feature_names.index(n) for n in names]
        return replace(self, feature_names=names, X=self.X[:, cols], scaler=None)

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.feature_names.index(name)]

    def without_labels(self) -> "Dataset":
        return replace(self, y=None)


# --- scaling ----------------------------------------------------------------

def fit_scaler(train: Dataset) -> Scaler:
    if train.n < 2:
        raise InputError("standardization needs at least two rows")
    mean = train.X.mean(axis=0)
    std = train.X.std(axis=0)  # population std
    # columns that are constant up to rounding count as zero-variance
    tiny = std <= 1e-12 * np.maximum(np.abs(mean), 1.0)
    std = np.where(tiny, 0.0, std)
    return Scaler(train.feature_names, mean, std, train.source_rows.copy())


def apply_scaler(scaler: Scaler, ds: Dataset) -> Dataset:
    if tuple(scaler.feature_names) != ds.feature_names:
        raise SchemaMismatch(_first_diff(scaler.feature_names, ds.feature_names),
                             "dataset columns differ from the scaler's")
    return replace(ds, X=scaler.transform(ds.X), scaler=scaler)


def standardize(train: Dataset) -> tuple[Dataset, Scaler]:
    scaler = fit_scaler(train)
    return apply_scaler(scaler, train), scaler


def _first_diff(a, b) -> str:
    for x, y in zip(a, b):
        if x != y:
            return y
    return (list(b) + list(a))[min(len(a), len(b))] if len(a) != len(b) else ""


# --- splitting --------------------------------------------------------------

def stratified_split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Hold out ``round(test_fraction * n_c)`` rows of each class c."""
    if ds.y is None:
        raise InputError("stratified split needs labels")
    if not 0.0 < test_fraction < 1.0:
        raise InputError("test_fraction must lie in (0, 1)")
    if len(np.unique(ds.y)) < 2:
        raise InputError("stratified split needs both classes present")
    rng = np.random.default_rng(seed)
    test_idx = []
    for c in (0, 1):
        members = np.flatnonzero(ds.y == c)
        rng.shuffle(members)
        k = int(math.floor(test_fraction * len(members) + 0.5))
        test_idx.extend(members[:k].tolist())
    test_idx = np.sort(np.asarray(test_idx, dtype=np.int64))
    train_idx = np.setdiff1d(np.arange(ds.n), test_idx)
    return ds.take(train_idx), ds.take(test_idx)


# --- CSV --------------------------------------------------------------------

def _parse_label(raw: str) -> int | None:
    raw = raw.strip()
    if raw in ("", "?"):
        return None
    if raw in ("0", "1"):
        return int(raw)
    raise SchemaMismatch("label", f"labels must be 0, 1 or '?', got {raw!r}")


def _parse_values(cells: list[str]) -> list[float] | None:
    try:
        vals = [float(c) for c in cells]
    except ValueError:
        return None
    if not all(math.isfinite(v) for v in vals):
        return None
    return vals


def _read_rows(text: str) -> tuple[list[str], list[list[str]]]:
    lines = [l for l in text.splitlines() if l.strip() and not l.lstrip().startswith("#")]
    if not lines:
        raise SchemaMismatch("subject_id", "table has no header line")
    header = [c.strip() for c in lines[0].split(",")]
    rows = [l.split(",") for l in lines[1:]]
    return header, rows


def parse_table(text: str) -> Dataset:
    header, rows = _read_rows(text)
    if header[0] != "subject_id":
        raise SchemaMismatch("subject_id", f"first column is {header[0]!r}")
    if len(header) > 1 and header[1] == "task":
        return _parse_long(header, rows)
    return _parse_wide(header, rows)


def load_table(source: str | Path) -> Dataset:
    """Load a feature table from a path, or from CSV text if ``source`` contains a newline."""
    if isinstance(source, str) and "\n" in source:
        return parse_table(source)
    return parse_table(Path(source).read_text())


def _parse_wide(header: list[str], rows: list[list[str]]) -> Dataset:
    has_label = len(header) > 1 and header[1] == "label"
    names = header[2:] if has_label else header[1:]
    if not names:
        raise SchemaMismatch("features", "table has no feature columns")
    if len(set(names)) != len(names):
        dup = next(n for n in names if names.count(n) > 1)
        raise SchemaMismatch(dup, "duplicate column")
    start = 2 if has_label else 1
    ids, X, labels, dropped = [], [], [], 0
    for row in rows:
        if len(row) != len(header):
            dropped += 1
            continue
        vals = _parse_values(row[start:])
        label = _parse_label(row[1]) if has_label else None
        if vals is None:
            dropped += 1
            continue
        ids.append(row[0].strip())
        X.append(vals)
        labels.append(label)
    return _finish(names, ids, X, labels, dropped, has_label)


def _parse_long(header: list[str], rows: list[list[str]]) -> Dataset:
    has_label = len(header) > 2 and header[2] == "label"
    names = header[3:] if has_label else header[2:]
    expected = list(FEATURE_CATALOG)
    for i, col in enumerate(expected):
        if i >= len(names) or names[i] != col:
            raise SchemaMismatch(col)
    if len(names) > len(expected):
        raise SchemaMismatch(names[len(expected)], "unexpected extra column")
    start = 3 if has_label else 2
    tasks: list[str] = []
    order: list[str] = []
    per_subject: dict[str, dict] = {}
    bad: set[str] = set()
    for row in rows:
        sid = row[0].strip()
        if sid not in per_subject:
            per_subject[sid] = {}
            order.append(sid)
        if len(row) != len(header):
            bad.add(sid)
            continue
        task = row[1].strip()
        if task not in tasks:
            tasks.append(task)
        label = _parse_label(row[2]) if has_label else None
        vals = _parse_values(row[start:])
        if vals is None:
            bad.add(sid)
            continue
        per_subject[sid][task] = (vals, label)
    tasks.sort(key=lambda t: (t != "walk", t != "dual", t))
    wide_names = [f"{t}_{n}" for t in tasks for n in names]
    ids, X, labels, dropped = [], [], [], 0
    for sid in order:
        entry = per_subject[sid]
        if sid in bad or any(t not in entry for t in tasks):
            dropped += 1
            continue
        task_labels = {entry[t][1] for t in tasks}
        if len(task_labels) > 1:
            raise SchemaMismatch("label", f"subject {sid} has conflicting labels across tasks")
        ids.append(sid)
        X.append([v for t in tasks for v in entry[t][0]])
        labels.append(task_labels.pop())
    return _finish(wide_names, ids, X, labels, dropped, has_label)


def _finish(names, ids, X, labels, dropped, has_label) -> Dataset:
    y = None
    if has_label and any(l is not None for l in labels):
        keep = [i for i, l in enumerate(labels) if l is not None]
        dropped += len(ids) - len(keep)
        ids = [ids[i] for i in keep]
        X = [X[i] for i in keep]
        y = np.array([labels[i] for i in keep], dtype=np.int64)
    if not ids:
        raise EmptyAfterCleaning(f"no usable rows left ({dropped} dropped)")
    return Dataset(tuple(names), np.array(X, dtype=float), y, tuple(ids), None, dropped)


def table_csv(ds: Dataset, comment: str | None = None) -> str:
    """Wide CSV: ``subject_id[,label],<features>``; floats written with full precision."""
    out = io.StringIO()
    if comment:
        for line in comment.splitlines():
            out.write(f"# {line}\n")
    head = ["subject_id"] + (["label"] if ds.y is not None else []) + list(ds.feature_names)
    out.write(",".join(head) + "\n")
    for i in range(ds.n):
        row = [ds.row_ids[i]]
        if ds.y is not None:
            row.append(str(int(ds.y[i])))
        row += [repr(float(v)) for v in ds.X[i]]
        out.write(",".join(row) + "\n")
    return out.getvalue()


def write_table(path, ds: Dataset, comment: str | None = None) -> None:
    Path(path).write_text(table_csv(ds, comment))
