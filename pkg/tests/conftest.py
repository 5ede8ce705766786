from __future__ import annotations

import numpy as np
import pytest

from gaitlab.features import extract_all, feature_table_csv
from gaitlab.gaitsim import CohortSpec, generate_cohort, pd_preset
from gaitlab.dataset import parse_table
from gaitlab.telemetry import FRAME_DTYPE, LEFT, MAGIC, RIGHT


def make_records(n: int, rate_hz: int = 100, seed: int = 0, seq0: int = 0,
                 ts0: int = 0) -> np.ndarray:
    """Interleaved left/right wire records with random counts and a clean clock."""
    rng = np.random.default_rng(seed)
    recs = np.zeros(2 * n, dtype=FRAME_DTYPE)
    recs["magic"] = MAGIC
    ts = ts0 + (np.arange(n) * 1000) // rate_hz
    seq = (seq0 + np.arange(n)) % 65536
    for k, dev in enumerate((LEFT, RIGHT)):
        recs["device"][k::2] = dev
        recs["seq"][k::2] = seq
        recs["ts"][k::2] = ts
        recs["imu"][k::2] = rng.integers(-2000, 2000, size=(n, 9))
    return recs


@pytest.fixture(scope="session")
def strong_cohort_table():
    """Wide feature table of a 40+40 strong-preset cohort (seed 0)."""
    sessions = generate_cohort(CohortSpec(40, 40, seed=0))
    vectors, failures = extract_all(sessions)
    assert not failures
    return parse_table(feature_table_csv(vectors))


@pytest.fixture(scope="session")
def small_cohort_sessions():
    spec = CohortSpec(4, 4, pd=pd_preset("strong"), seed=11)
    return generate_cohort(spec)
