"""Stratified k-fold cross-validation, grid search and holdout evaluation.

In ``honest`` selection mode the MI ranking and the scaler are refitted on
each training fold. ``global`` mode ranks features once on the full table
before splitting, which leaks held-out rows into the selection step; it is
kept to show how much that optimism is worth.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .errors import InputError, LeakageError
from .learn.knn import METRICS, WEIGHTINGS
from .learn.model import KIND_TITLES, KINDS, Model, ModelSpec, fit, predict
from .selection import DEFAULT_BINS, rank_features

SELECTION_MODES = ("honest", "global")


def stratified_folds(y: np.ndarray, folds: int, seed: int) -> list[np.ndarray]:
    """Test indices per fold.

    Each class is shuffled, the classes are concatenated and positions are
    dealt round-robin, so fold sizes differ by at most one and every class
    is spread evenly.
    """
    y = np.asarray(y)
    if folds < 2:
        raise InputError("need at least two folds")
    if len(np.unique(y)) < 2:
        raise InputError("cross-validation needs both classes")
    order = []
    rng = np.random.default_rng(seed)
    for c in np.unique(y):
        members = np.flatnonzero(y == c)
        if len(members) < folds:
            raise InputError(f"class {c} has {len(members)} rows, fewer than {folds} folds")
        rng.shuffle(members)
        order.extend(members.tolist())
    order = np.asarray(order)
    assign = np.arange(len(order)) % folds
    return [np.sort(order[assign == f]) for f in range(folds)]


@dataclass
class LeakageAudit:
    """Records which source rows each fitted statistic saw, per fold."""

    records: list[tuple[int, str, int]] = field(default_factory=list)
    violations: list[tuple[int, str, int]] = field(default_factory=list)

    def check(self, fold: int, what: str, fitted_on: np.ndarray, test_rows: np.ndarray) -> None:
        leaked = np.intersect1d(np.asarray(fitted_on), np.asarray(test_rows))
        self.records.append((fold, what, len(fitted_on)))
        if len(leaked):
            self.violations.append((fold, what, len(leaked)))

    def covered(self, what: str) -> set[int]:
        return {fold for fold, w, _ in self.records if w == what}


@dataclass
class EvalReport:
    spec: ModelSpec
    fold_accuracies: list[float]
    confusion: tuple[int, int, int, int]
    seed: int | None = None
    mode: str = "honest"
    selected: list[tuple[str, ...]] = field(default_factory=list)
    wall_time_s: float = 0.0

    @property
    def mean_accuracy(self) -> float:
        """Mean of the per-fold accuracies, in percent."""
        return float(np.mean(self.fold_accuracies))

    @property
    def n(self) -> int:
        return int(sum(self.confusion))

    @property
    def recall(self) -> tuple[float, float]:
        tn, fp, fn, tp = self.confusion
        r0 = tn / (tn + fp) if tn + fp else float("nan")
        r1 = tp / (tp + fn) if tp + fn else float("nan")
        return r0, r1

    def same_result(self, other: "EvalReport") -> bool:
        return (self.spec == other.spec and self.fold_accuracies == other.fold_accuracies
                and self.confusion == other.confusion and self.selected == other.selected)


@dataclass
class TuneReport:
    results: list[EvalReport]
    best: EvalReport
    skipped: list[ModelSpec] = field(default_factory=list)

    @property
    def best_spec(self) -> ModelSpec:
        return self.best.spec


@dataclass
class Predictions:
    row_ids: tuple[str, ...]
    labels: np.ndarray
    scores: np.ndarray

    def to_csv(self, comment: str | None = None) -> str:
        out = io.StringIO()
        _comment(out, comment)
        out.write("row_id,label,score\n")
        for rid, lab, sc in zip(self.row_ids, self.labels, self.scores):
            out.write(f"{rid},{int(lab)},{sc:.6f}\n")
        return out.getvalue()


@dataclass
class _Fold:
    train: Dataset
    test: Dataset
    features: tuple[str, ...] | None


def _prepare(ds: Dataset, folds: int, seed: int, select_k: int | None, bins: int,
             selection: str, audit: LeakageAudit | None) -> list[_Fold]:
    if ds.y is None:
        raise InputError("cross-validation needs a labeled dataset")
    if selection not in SELECTION_MODES:
        raise InputError(f"selection must be one of {SELECTION_MODES}")
    global_rank = None
    if select_k and selection == "global":
        global_rank = rank_features(ds, select_k, bins)
    prepared = []
    for f, test_idx in enumerate(stratified_folds(ds.y, folds, seed)):
        train_idx = np.setdiff1d(np.arange(ds.n), test_idx)
        train, test = ds.take(train_idx), ds.take(test_idx)
        features = None
        if select_k:
            ranked = global_rank if global_rank is not None else rank_features(train, select_k, bins)
            features = ranked.selected
            if audit is not None:
                audit.check(f, "mi", ranked.fitted_on, test.source_rows)
        prepared.append(_Fold(train, test, features))
    return prepared


def _confusion(y: np.ndarray, pred: np.ndarray) -> np.ndarray:
    return np.array([
        np.sum((y == 0) & (pred == 0)), np.sum((y == 0) & (pred == 1)),
        np.sum((y == 1) & (pred == 0)), np.sum((y == 1) & (pred == 1)),
    ])


def _evaluate(spec: ModelSpec, prepared: list[_Fold], seed: int, mode: str,
              audit: LeakageAudit | None) -> EvalReport:
    t0 = time.perf_counter()
    accs, conf, selected = [], np.zeros(4, dtype=np.int64), []
    for f, fold in enumerate(prepared):
        model = fit(spec, fold.train, fold.features)
        if audit is not None:
            audit.check(f, "scaler", model.scaler.fitted_on, fold.test.source_rows)
        pred, _ = predict(model, fold.test)
        accs.append(100.0 * float(np.mean(pred == fold.test.y)))
        conf += _confusion(fold.test.y, pred)
        selected.append(model.feature_names)
    return EvalReport(spec, accs, tuple(int(c) for c in conf), seed, mode, selected,
                      time.perf_counter() - t0)


def _guard(audit: LeakageAudit, selection: str) -> None:
    bad = [v for v in audit.violations if selection == "honest" or v[1] != "mi"]
    if bad:
        fold, what, count = bad[0]
        raise LeakageError(f"fold {fold}: {count} held-out rows reached the {what} fit")


def cross_validate(spec: ModelSpec, ds: Dataset, folds: int = 5, seed: int = 0,
                   select_k: int | None = None, bins: int = DEFAULT_BINS,
                   selection: str = "honest", audit: LeakageAudit | None = None) -> EvalReport:
    """Stratified k-fold CV of ``spec``.

    With ``select_k`` the top-k MI features are chosen per training fold
    (``honest``) or once on all rows (``global``). Any held-out row that
    reaches a scaler fit, or an MI fit in honest mode, raises LeakageError.
    """
    audit = LeakageAudit() if audit is None else audit
    prepared = _prepare(ds, folds, seed, select_k, bins, selection, audit)
    report = _evaluate(spec, prepared, seed, selection, audit)
    _guard(audit, selection)
    return report


def _tie_key(spec: ModelSpec, position: int) -> tuple:
    if spec.kind == "knn":
        p = spec.params
        return (p["k"], METRICS.index(p["metric"]), WEIGHTINGS.index(p["weighting"]), position)
    return (float("inf"), 0, 0, position)


def grid_search(grid: list[ModelSpec], ds: Dataset, folds: int = 5, seed: int = 0,
                select_k: int | None = None, bins: int = DEFAULT_BINS,
                selection: str = "honest", audit: LeakageAudit | None = None) -> TuneReport:
    """Evaluate every spec on the same folds; best mean wins, then smaller k,
    euclidean before manhattan, uniform before inverse-distance, grid order.

    KNN candidates whose k exceeds the smallest training fold are skipped.
    """
    if not grid:
        raise InputError("empty grid")
    audit = LeakageAudit() if audit is None else audit
    prepared = _prepare(ds, folds, seed, select_k, bins, selection, audit)
    min_train = min(f.train.n for f in prepared)
    feasible = [s for s in grid if s.kind != "knn" or s.params["k"] <= min_train]
    skipped = [s for s in grid if s not in feasible]
    if not feasible:
        raise InputError(f"every grid candidate needs more than {min_train} training rows")
    results = [_evaluate(spec, prepared, seed, selection, audit) for spec in feasible]
    _guard(audit, selection)
    best_i = min(range(len(results)),
                 key=lambda i: (-round(results[i].mean_accuracy, 9), _tie_key(feasible[i], i)))
    return TuneReport(results, results[best_i], skipped)


def predict_table(model: Model, ds: Dataset) -> Predictions:
    labels, scores = predict(model, ds)
    return Predictions(ds.row_ids, labels, scores)


def evaluate_holdout(model: Model, test: Dataset) -> EvalReport | Predictions:
    """Score a frozen model; an unlabeled table yields predictions only."""
    if test.y is None:
        return predict_table(model, test)
    t0 = time.perf_counter()
    pred, _ = predict(model, test)
    acc = 100.0 * float(np.mean(pred == test.y))
    conf = _confusion(test.y, pred)
    return EvalReport(model.spec, [acc], tuple(int(c) for c in conf), None, "holdout",
                      [model.feature_names], time.perf_counter() - t0)


def compare_classifiers(ds: Dataset, folds: int = 5, seed: int = 0, select_k: int | None = None,
                        bins: int = DEFAULT_BINS, selection: str = "honest",
                        specs: list[ModelSpec] | None = None) -> list[EvalReport]:
    """Default-hyperparameter CV of all five classifier kinds on identical folds."""
    specs = specs or [ModelSpec(kind) for kind in KINDS]
    audit = LeakageAudit()
    prepared = _prepare(ds, folds, seed, select_k, bins, selection, audit)
    reports = [_evaluate(s, prepared, seed, selection, audit) for s in specs]
    _guard(audit, selection)
    return reports


# --- rendering --------------------------------------------------------------

def _comment(out: io.StringIO, comment: str | None) -> None:
    if comment:
        for line in comment.splitlines():
            out.write(f"# {line}\n")


def reports_csv(reports: list[EvalReport], comment: str | None = None) -> str:
    out = io.StringIO()
    _comment(out, comment)
    out.write("spec,mode,folds,mean_accuracy_pct,fold_accuracies_pct,tn,fp,fn,tp,"
              "recall_control,recall_pd\n")
    for r in reports:
        folds = ";".join(f"{a:.4f}" for a in r.fold_accuracies)
        r0, r1 = r.recall
        tn, fp, fn, tp = r.confusion
        out.write(f"\"{r.spec.label()}\",{r.mode},{len(r.fold_accuracies)},{r.mean_accuracy:.4f},"
                  f"{folds},{tn},{fp},{fn},{tp},{r0:.4f},{r1:.4f}\n")
    return out.getvalue()


def reports_text(reports: list[EvalReport], title: str = "Accuracy") -> str:
    rows = [("Classifier", "Spec", "Accuracy %", "Recall ctl", "Recall PD", "n")]
    for r in reports:
        r0, r1 = r.recall
        rows.append((KIND_TITLES[r.spec.kind], r.spec.label(), f"{r.mean_accuracy:.4f}",
                     f"{r0:.3f}", f"{r1:.3f}", str(r.n)))
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = [title]
    for j, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(w) if i < 2 else cell.rjust(w)
                               for i, (cell, w) in enumerate(zip(row, widths))))
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def tune_csv(tune: TuneReport, comment: str | None = None) -> str:
    out = io.StringIO()
    _comment(out, comment)
    out.write("spec,mean_accuracy_pct,best\n")
    for r in tune.results:
        out.write(f"\"{r.spec.label()}\",{r.mean_accuracy:.4f},{int(r is tune.best)}\n")
    return out.getvalue()
