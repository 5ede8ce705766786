from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import butter

from gaitlab.errors import InputError, TooFewSteps, TooShort
from gaitlab.features import (
    ARM_SWING_FEATURES, DEFAULT_CONFIG, FEATURE_CATALOG, autocorr, bandpass, biquad_highpass,
    biquad_lowpass, detect_steps, extract_all, extract_features, feature_table_csv, highpass,
    lowpass, merge_events, pitch_axis, trim_session,
)
from gaitlab.gaitsim import GaitParams, generate_session
from gaitlab.telemetry import Session

QUIET = GaitParams(noise_g=0.0, noise_dps=0.0)


def transformed(s: Session, accel: float = 1.0, gyro: float = 1.0, perm=None) -> Session:
    def side(a):
        a = a.copy()
        a[:, 0:3] *= accel
        a[:, 3:6] *= gyro
        if perm is not None:
            a[:, 3:6] = a[:, 3:6][:, perm]
        return a
    return Session(s.subject_id, s.task, s.sample_rate_hz, s.t_ms, side(s.left), side(s.right),
                   s.label, s.gap_report)


def steady_amplitude(y: np.ndarray) -> float:
    mid = y[len(y) // 4: 3 * len(y) // 4]
    return float((mid.max() - mid.min()) / 2)


# --- filters ----------------------------------------------------------------

@pytest.mark.parametrize("fc,fs", [(3.5, 100), (0.3, 100), (10, 250), (1, 50)])
def test_biquad_matches_second_order_butterworth(fc, fs):
    b, a = biquad_lowpass(fc, fs)
    rb, ra = butter(2, fc / (fs / 2))
    np.testing.assert_allclose(b, rb, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(a, ra, rtol=1e-10, atol=1e-14)
    b, a = biquad_highpass(fc, fs)
    rb, ra = butter(2, fc / (fs / 2), btype="high")
    np.testing.assert_allclose(b, rb, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(a, ra, rtol=1e-10, atol=1e-14)


def test_lowpass_dc_gain_is_one():
    x = np.full(500, 3.25)
    y = lowpass(x, 3.5, 100)
    assert y.shape == x.shape
    np.testing.assert_allclose(y, x, rtol=1e-12)


def test_lowpass_passes_1hz_and_blocks_20hz():
    t = np.arange(2000) / 100.0
    assert abs(steady_amplitude(lowpass(np.sin(2 * np.pi * t), 3.5, 100)) - 1.0) < 0.02
    assert steady_amplitude(lowpass(np.sin(2 * np.pi * 20 * t), 3.5, 100)) < 0.10


def test_lowpass_has_zero_phase():
    t = np.arange(2000) / 100.0
    x = np.sin(2 * np.pi * 1.0 * t)
    y = lowpass(x, 3.5, 100)
    mid = slice(500, 1500)
    # no phase shift: the steady-state output is a scaled copy of the input
    gain = np.dot(y[mid], x[mid]) / np.dot(x[mid], x[mid])
    assert np.abs(y[mid] - gain * x[mid]).max() < 1e-3


def test_highpass_removes_dc_and_bandpass_keeps_swing_band():
    t = np.arange(3000) / 100.0
    assert np.abs(highpass(np.full(3000, 5.0), 0.3, 100)).max() < 1e-9
    y = bandpass(2 * np.sin(2 * np.pi * 0.9 * t) + 1.0, 0.3, 3.0, 100)
    assert abs(steady_amplitude(y) - 2.0) < 0.15


@pytest.mark.parametrize("fc", [50, 60, 0, -1])
def test_bad_cutoff_rejected(fc):
    with pytest.raises(InputError):
        lowpass(np.zeros(10), fc, 100)


# --- steps ------------------------------------------------------------------

def test_cadence_120_gives_about_120_steps():
    s = generate_session(replace(GaitParams(), cadence_spm=120, seed=4), "a")
    assert abs(len(detect_steps(s)) - 120) <= 3


def test_no_impacts_no_steps():
    s = generate_session(replace(QUIET, impact_g=0.0), "a")
    assert len(detect_steps(s)) == 0


def test_doubling_accel_keeps_step_times():
    s = generate_session(GaitParams(seed=2), "a")
    np.testing.assert_array_equal(detect_steps(transformed(s, accel=2.0)), detect_steps(s))


@settings(max_examples=10, deadline=None)
@given(st.floats(0.05, 20.0))
def test_step_times_are_scale_invariant(c):
    s = generate_session(GaitParams(seed=5, duration_s=30), "a")
    np.testing.assert_allclose(detect_steps(transformed(s, accel=c)), detect_steps(s), atol=1e-9)


def test_too_short_for_detection():
    with pytest.raises(TooShort):
        detect_steps(generate_session(replace(QUIET, duration_s=5), "a"))


def test_steps_are_sorted_and_separated():
    s = generate_session(GaitParams(seed=9, cadence_spm=130), "a")
    steps = detect_steps(s)
    assert (np.diff(steps) >= DEFAULT_CONFIG.merge_window_s).all()


def test_merge_events():
    np.testing.assert_allclose(merge_events([1.0, 1.1, 2.0, 0.5], 0.15), [0.5, 1.05, 2.0])
    assert len(merge_events([], 0.15)) == 0


# --- extraction -------------------------------------------------------------

def test_symmetric_session_has_low_asymmetry():
    fv = extract_features(generate_session(GaitParams(seed=1), "a"))
    assert fv.values["swing_asym"] < 0.05


def test_half_right_swing_gives_asymmetry_half():
    p = replace(GaitParams(seed=2), swing_amp_left_dps=60, swing_amp_right_dps=30)
    assert abs(extract_features(generate_session(p, "a")).values["swing_asym"] - 0.5) <= 0.05


def test_cadence_110_within_two_percent():
    fv = extract_features(generate_session(GaitParams(cadence_spm=110, seed=3), "a"))
    assert abs(fv.values["cadence_spm"] - 110) <= 0.02 * 110


def test_cadence_identity_holds_exactly():
    s = generate_session(GaitParams(seed=6), "a")
    fv = extract_features(s)
    steps = detect_steps(trim_session(s, DEFAULT_CONFIG.trim_s))
    assert fv.values["step_count"] == len(steps)
    assert fv.values["cadence_spm"] == 60.0 * (len(steps) - 1) / (steps[-1] - steps[0])


def test_catalog_order_ranges_and_finiteness():
    for seed in range(3):
        p = replace(GaitParams(seed=seed), swing_asym=0.3, tremor_hz=5, tremor_amp_dps=5)
        fv = extract_features(generate_session(p, "a", "dual", 1))
        assert tuple(fv.values) == FEATURE_CATALOG
        assert np.isfinite(fv.as_array()).all()
        assert 0.0 <= fv.values["swing_asym"] <= 1.0
        for name in ("swing_regularity", "step_regularity", "stride_regularity"):
            assert -1.0 <= fv.values[name] <= 1.0
        assert fv.label == 1


def test_catalog_shape():
    assert len(FEATURE_CATALOG) == 14
    assert set(ARM_SWING_FEATURES) == {"swing_amp_left_dps", "swing_amp_right_dps", "swing_asym",
                                      "swing_regularity"}


def test_gyro_scaling_keeps_asymmetry_and_accel_scaling_keeps_cadence():
    s = generate_session(replace(GaitParams(seed=7), swing_asym=0.25), "a")
    base = extract_features(s).values
    scaled = extract_features(transformed(s, accel=3.0, gyro=0.5)).values
    assert scaled["swing_asym"] == pytest.approx(base["swing_asym"], abs=1e-12)
    assert scaled["cadence_spm"] == pytest.approx(base["cadence_spm"], abs=1e-9)


def test_pitch_axis_is_found_after_remounting():
    s = generate_session(GaitParams(seed=8), "a")
    remounted = transformed(s, perm=[1, 2, 0])
    assert pitch_axis(s) == 1 and pitch_axis(remounted) == 0
    a, b = extract_features(s).values, extract_features(remounted).values
    assert a["swing_amp_left_dps"] == pytest.approx(b["swing_amp_left_dps"])


def test_extraction_is_deterministic():
    s = generate_session(GaitParams(seed=10), "a")
    assert extract_features(s) == extract_features(s)


def test_degraded_sessions_are_flagged_not_fatal():
    good = generate_session(GaitParams(seed=1), "g")
    flat = generate_session(replace(QUIET, impact_g=0.0), "flat")
    short = generate_session(replace(GaitParams(), duration_s=20), "short")
    with pytest.raises(TooFewSteps):
        extract_features(flat)
    with pytest.raises(TooShort):
        extract_features(short)
    vectors, failures = extract_all([good, flat, short])
    assert [v.subject_id for v in vectors] == ["g"]
    assert [f.subject_id for f in failures] == ["flat", "short"]


def test_feature_table_csv_header():
    fv = extract_features(generate_session(GaitParams(seed=1), "a", "walk", 0))
    text = feature_table_csv([fv], "made by test")
    lines = text.splitlines()
    assert lines[0] == "# made by test"
    assert lines[1] == "subject_id,task,label," + ",".join(FEATURE_CATALOG)
    assert lines[2].startswith("a,walk,0,")


# --- autocorrelation oracle -------------------------------------------------

def autocorr_loop(x, lag):
    n = len(x)
    m = sum(x) / n
    c0 = sum((v - m) ** 2 for v in x) / n
    ck = sum((x[i] - m) * (x[i + lag] - m) for i in range(n - lag)) / (n - lag)
    return max(-1.0, min(1.0, ck / c0))


@settings(max_examples=100)
@given(st.lists(st.floats(-100, 100), min_size=3, max_size=60), st.integers(1, 50))
def test_autocorr_matches_loop_oracle(xs, lag):
    x = np.array(xs)
    if lag >= len(x) or np.var(x) < 1e-9:
        return
    assert autocorr(x, lag) == pytest.approx(autocorr_loop(xs, lag), abs=1e-9)
    assert -1.0 <= autocorr(x, lag) <= 1.0


def test_autocorr_of_periodic_signal():
    t = np.arange(1000)
    x = np.sin(2 * np.pi * t / 50)
    assert autocorr(x, 50) == pytest.approx(1.0, abs=1e-9)
    assert autocorr(x, 25) == pytest.approx(-1.0, abs=1e-9)
