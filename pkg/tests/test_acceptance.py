"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``python3 -m pytest tests/test_acceptance.py -v`` (or
execute this file directly).
"""

from __future__ import annotations

import math
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from gaitlab.cli import run
from gaitlab.dataset import parse_table
from gaitlab.errors import BadCrc, BadDeviceId, BadMagic
from gaitlab.evaluation import LeakageAudit, cross_validate, grid_search
from gaitlab.features import ARM_SWING_FEATURES, extract_all, extract_features, feature_table_csv
from gaitlab.gaitsim import CohortSpec, GaitParams, generate_cohort, generate_session, pd_preset
from gaitlab.learn import KnnClassifier, default_knn_grid, logistic_loss_grad
from gaitlab.selection import mutual_information, rank_features
from gaitlab.telemetry import (
    FRAME_DTYPE, FRAME_LEN, LEFT, MAGIC, RIGHT, SensorFrame, decode_frame, decode_stream,
    encode_frame, encode_records,
)

STRONG_SEED = 0
NULL_SEED = 1
SELECT_K = 6


@pytest.fixture
def verdict(capsys):
    def report(number: int, title: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nCRITERION {number} {'PASS' if ok else 'FAIL'}: {title} | {detail}")
        assert ok, detail
    return report


def crc8_bitwise(data: bytes) -> int:
    crc = 0
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = ((crc << 1) ^ 0x07) & 0xFF if crc & 0x80 else (crc << 1) & 0xFF
    return crc


def mi_exhaustive(table) -> float:
    n = sum(map(sum, table))
    cols = len(table[0])
    total = 0.0
    for row in table:
        pi = sum(row) / n
        for j in range(cols):
            pj = sum(r[j] for r in table) / n
            pij = row[j] / n
            if pij > 0:
                total += pij * math.log2(pij / (pi * pj))
    return max(total, 0.0)


def neighbor_order(X, q, metric):
    dists = []
    for i, row in enumerate(X):
        if metric == "euclidean":
            d = math.sqrt(sum((a - b) ** 2 for a, b in zip(row, q)))
        else:
            d = sum(abs(a - b) for a, b in zip(row, q))
        dists.append((d, i))
    return [i for _, i in sorted(dists)]


def majority(y, order, k) -> int:
    ones = sum(int(y[i]) for i in order[:k])
    if 2 * ones == k:
        return int(y[order[0]])
    return int(2 * ones > k)


def test_criterion_1_codec_fuzz(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    recs = np.zeros(10_000, dtype=FRAME_DTYPE)
    recs["magic"] = MAGIC
    recs["device"] = rng.choice([LEFT, RIGHT], 10_000)
    recs["seq"] = rng.integers(0, 1 << 16, 10_000)
    recs["ts"] = rng.integers(0, 1 << 32, 10_000, dtype=np.uint64)
    recs["imu"] = rng.integers(-32768, 32768, (10_000, 9))
    wire = encode_records(recs)
    decoded, stats = decode_stream(wire)
    exact = (len(wire) == 10_000 * FRAME_LEN and stats.errors == 0
             and all(np.array_equal(decoded[f], recs[f]) for f in ("magic", "device", "seq", "ts",
                                                                   "imu"))
             and encode_records(decoded) == wire)
    per_frame = all(encode_frame(decode_frame(wire[i:i + FRAME_LEN])) == wire[i:i + FRAME_LEN]
                    for i in range(0, len(wire), FRAME_LEN))

    raw = encode_frame(SensorFrame(RIGHT, 513, 123456, (1, -2, 3), (-400, 500, -600), (7, 8, 9)))
    collisions, accepted = set(), set()
    for pos in range(FRAME_LEN):
        for val in range(256):
            if val == raw[pos]:
                continue
            bad = bytearray(raw)
            bad[pos] = val
            bad = bytes(bad)
            if bad[0] == MAGIC and bad[1] in (LEFT, RIGHT) and crc8_bitwise(bad[:-1]) == bad[-1]:
                collisions.add((pos, val))
            try:
                decode_frame(bad)
                accepted.add((pos, val))
            except (BadMagic, BadCrc, BadDeviceId):
                pass
    elapsed = time.perf_counter() - t0
    ok = exact and per_frame and accepted == collisions and elapsed < 5.0
    verdict(1, "codec fuzz", ok,
            f"10000 frames round-trip={exact and per_frame}, corruptions accepted={len(accepted)}, "
            f"enumerated CRC collisions={len(collisions)}, {elapsed:.2f}s")


def test_criterion_2_mi_oracle(verdict):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        rows = int(rng.integers(1, 11))
        table = rng.integers(0, 13, (rows, 2)).tolist()
        if sum(map(sum, table)) < 2:
            table[0][0] += 2
        codes, y = [], []
        for i, row in enumerate(table):
            for j, count in enumerate(row):
                codes += [i] * count
                y += [j] * count
        worst = max(worst, abs(mutual_information(np.array(codes), np.array(y))
                               - mi_exhaustive(table)))
    perfect = np.array([0, 1] * 50)
    one_bit = mutual_information(perfect.copy(), perfect)
    ok = worst <= 1e-12 and one_bit == 1.0
    verdict(2, "MI oracle", ok, f"max |error| over 1000 tables={worst:.2e} bits, "
                                f"balanced perfect predictor={one_bit!r} bits")


def test_criterion_3_knn_oracle(verdict):
    rng = np.random.default_rng(3)
    mismatches, checked, t_impl = 0, 0, 0.0
    for i in range(50):
        n, d = int(rng.integers(5, 201)), int(rng.integers(1, 11))
        metric = ("euclidean", "manhattan")[i % 2]
        X, y, Q = rng.normal(size=(n, d)), rng.integers(0, 2, n), rng.normal(size=(25, d))
        orders = [neighbor_order(X.tolist(), q, metric) for q in Q.tolist()]
        for k in (1, 3, 5):
            t0 = time.perf_counter()
            got, _ = KnnClassifier(k, metric).fit(X, y).predict_with_score(Q)
            t_impl += time.perf_counter() - t0
            want = [majority(y, order, k) for order in orders]
            mismatches += int(np.sum(got != np.array(want)))
            checked += len(Q)
    ok = mismatches == 0 and t_impl < 10.0
    verdict(3, "KNN oracle", ok,
            f"{checked} predictions, {mismatches} mismatches, classifier time {t_impl:.2f}s")


def test_criterion_4_gradient_check(verdict):
    rng = np.random.default_rng(4)
    X, y = rng.normal(size=(80, 6)), rng.integers(0, 2, 80).astype(float)
    h, worst = 1e-6, 0.0
    for _ in range(20):
        w, b = rng.normal(size=6), float(rng.normal())
        _, gw, gb = logistic_loss_grad(w, b, X, y, 0.01)
        num = []
        for j in range(7):
            e = np.zeros(7)
            e[j] = h
            lp = logistic_loss_grad(w + e[:6], b + e[6], X, y, 0.01)[0]
            lm = logistic_loss_grad(w - e[:6], b - e[6], X, y, 0.01)[0]
            num.append((lp - lm) / (2 * h))
        num = np.array(num)
        worst = max(worst, float(np.linalg.norm(np.append(gw, gb) - num) / np.linalg.norm(num)))
    verdict(4, "gradient check", worst <= 1e-5, f"max relative error at 20 points={worst:.2e}")


def test_criterion_5_feature_fidelity(verdict):
    base = GaitParams(seed=21)
    cad_err, asym_err = [], []
    for cad in (90.0, 100.0, 110.0, 120.0, 130.0):
        fv = extract_features(generate_session(replace(base, cadence_spm=cad), "c"))
        cad_err.append(abs(fv.values["cadence_spm"] - cad) / cad)
    for asym in (0.0, 0.1, 0.2, 0.3, 0.4):
        fv = extract_features(generate_session(replace(base, swing_asym=asym), "a"))
        asym_err.append(abs(fv.values["swing_asym"] - asym))
    ok = max(cad_err) <= 0.02 and max(asym_err) <= 0.05
    verdict(5, "feature fidelity", ok, f"worst cadence error={100 * max(cad_err):.2f}%, "
                                       f"worst swing_asym error={max(asym_err):.4f}")


def _table(spec: CohortSpec):
    vectors, failures = extract_all(generate_cohort(spec))
    return parse_table(feature_table_csv(vectors)), len(failures)


def test_criterion_6_cohort_experiment(verdict):
    t0 = time.perf_counter()
    ds, failed = _table(CohortSpec(40, 40, seed=STRONG_SEED))
    ranked = rank_features(ds, SELECT_K)
    arm = [f for f in ranked.selected if f.split("_", 1)[1] in ARM_SWING_FEATURES]
    grid = default_knn_grid()
    honest = grid_search(grid, ds, 5, seed=STRONG_SEED, select_k=SELECT_K)
    global_ = grid_search(grid, ds, 5, seed=STRONG_SEED, select_k=SELECT_K, selection="global")

    # null cohort: both groups drawn from the control preset
    null, null_failed = _table(CohortSpec(80, 80, pd=pd_preset("null"), seed=NULL_SEED))
    null_tune = grid_search(grid, null, 5, seed=NULL_SEED, select_k=SELECT_K)
    # score the chosen spec on fresh folds so the grid maximum does not bias the estimate
    null_cv = cross_validate(null_tune.best_spec, null, 5, seed=NULL_SEED + 1000,
                             select_k=SELECT_K)
    elapsed = time.perf_counter() - t0

    a = len(arm) >= 2
    b = honest.best.mean_accuracy >= 90.0 and \
        abs(honest.best.mean_accuracy - global_.best.mean_accuracy) <= 15.0
    c = 38.0 <= null_cv.mean_accuracy <= 62.0
    ok = a and b and c and elapsed < 120.0 and ds.n == 80 and null.n == 160
    verdict(6, "synthetic cohort experiment", ok,
            f"(a) arm-swing in top {SELECT_K}: {arm}; "
            f"(b) honest {honest.best.mean_accuracy:.2f}% [{honest.best_spec.label()}], "
            f"global {global_.best.mean_accuracy:.2f}%; "
            f"(c) null {null_cv.mean_accuracy:.2f}% (grid max {null_tune.best.mean_accuracy:.2f}%); "
            f"subjects {ds.n}+{null.n}, failed sessions {failed}+{null_failed}, {elapsed:.1f}s")


def test_criterion_7_pipeline_determinism(verdict, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    codes = [run(["pipeline", "--out", str(a), "--seed", "7"]),
             run(["pipeline", "--out", str(b), "--seed", "7"])]
    names = sorted(p.name for p in a.iterdir())
    same_set = names == sorted(p.name for p in b.iterdir())
    differing = [n for n in names if (a / n).read_bytes() != (b / n).read_bytes()]
    ok = codes == [0, 0] and same_set and not differing and len(names) > 10
    verdict(7, "pipeline determinism", ok,
            f"exit codes {codes}, {len(names)} artifacts, differing: {differing or 'none'}")


def test_criterion_8_leakage_guard(verdict):
    ds, _ = _table(CohortSpec(20, 20, seed=5))
    audit = LeakageAudit()
    grid = default_knn_grid()[:8]
    grid_search(grid, ds, 5, seed=5, select_k=SELECT_K, audit=audit)
    mi_folds, scaler_folds = audit.covered("mi"), audit.covered("scaler")
    scaler_checks = sum(1 for _, w, _ in audit.records if w == "scaler")
    # the same instrument does flag the deliberately leaky global mode
    leaky = LeakageAudit()
    grid_search(grid, ds, 5, seed=5, select_k=SELECT_K, selection="global", audit=leaky)
    ok = (not audit.violations and mi_folds == scaler_folds == set(range(5))
          and scaler_checks == 5 * len(grid) and len(leaky.violations) == 5)
    verdict(8, "leakage guard", ok,
            f"honest violations={len(audit.violations)}, MI folds checked={sorted(mi_folds)}, "
            f"scaler fits checked={scaler_checks}, global-mode violations={len(leaky.violations)}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
