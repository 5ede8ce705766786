"""Gait and arm-swing features from a two-wrist session.

Each session yields the same 14 named features, in catalog order. Steps come
from accel-magnitude peaks on both wrists; arm swing comes from the gyro axis
carrying the most variance.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, fields, replace

import numpy as np
from scipy.signal import filtfilt, find_peaks

from .errors import InputError, TooFewSteps, TooShort
from .telemetry import Session, Task

FEATURE_CATALOG = (
    "cadence_spm",
    "step_time_mean_s",
    "step_time_cv",
    "step_count",
    "accel_rms_g",
    "jerk_rms",
    "swing_amp_left_dps",
    "swing_amp_right_dps",
    "swing_asym",
    "swing_regularity",
    "step_regularity",
    "stride_regularity",
    "dominant_freq_hz",
    "spectral_ratio",
)
ARM_SWING_FEATURES = tuple(f for f in FEATURE_CATALOG if f.startswith("swing_"))
BUTTERWORTH_Q = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class FeatureConfig:
    lowpass_hz: float = 3.5
    peak_rel_threshold: float = 0.3
    peak_percentile: float = 95.0
    refractory_s: float = 0.25
    merge_window_s: float = 0.15
    swing_band_lo_hz: float = 0.3
    swing_band_hi_hz: float = 3.0
    swing_percentile: float = 90.0
    spectral_band_lo_hz: float = 0.5
    spectral_band_hi_hz: float = 3.0
    trim_s: float = 2.0
    min_steps: int = 10
    min_duration_s: float = 30.0
    min_detect_s: float = 10.0

    def with_overrides(self, items: dict[str, str]) -> "FeatureConfig":
        known = {f.name: f.type for f in fields(self)}
        updates = {}
        for key, raw in items.items():
            if key not in known:
                raise InputError(f"unknown feature setting {key!r}")
            updates[key] = int(raw) if key == "min_steps" else float(raw)
        return replace(self, **updates)


DEFAULT_CONFIG = FeatureConfig()


# --- filters ----------------------------------------------------------------

def _check_cutoff(cutoff_hz: float, rate_hz: float) -> None:
    if cutoff_hz <= 0:
        raise InputError("cutoff must be positive")
    if cutoff_hz >= rate_hz / 2.0:
        raise InputError(f"cutoff {cutoff_hz} Hz is at or above Nyquist ({rate_hz / 2} Hz)")


def biquad_lowpass(cutoff_hz: float, rate_hz: float, q: float = BUTTERWORTH_Q):
    """Bilinear-transform low-pass biquad, returned as normalized (b, a)."""
    _check_cutoff(cutoff_hz, rate_hz)
    w0 = 2.0 * math.pi * cutoff_hz / rate_hz
    cw, alpha = math.cos(w0), math.sin(w0) / (2.0 * q)
    a0 = 1.0 + alpha
    b = np.array([(1.0 - cw) / 2.0, 1.0 - cw, (1.0 - cw) / 2.0]) / a0
    a = np.array([1.0, -2.0 * cw / a0, (1.0 - alpha) / a0])
    return b, a


def biquad_highpass(cutoff_hz: float, rate_hz: float, q: float = BUTTERWORTH_Q):
    _check_cutoff(cutoff_hz, rate_hz)
    w0 = 2.0 * math.pi * cutoff_hz / rate_hz
    cw, alpha = math.cos(w0), math.sin(w0) / (2.0 * q)
    a0 = 1.0 + alpha
    b = np.array([(1.0 + cw) / 2.0, -(1.0 + cw), (1.0 + cw) / 2.0]) / a0
    a = np.array([1.0, -2.0 * cw / a0, (1.0 - alpha) / a0])
    return b, a


def _zero_phase(b, a, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 2:
        return x.copy()
    padlen = min(3 * max(len(a), len(b)), x.shape[0] - 1)
    return filtfilt(b, a, x, axis=0, padlen=padlen)


def lowpass(signal, cutoff_hz: float, rate_hz: float) -> np.ndarray:
    """Zero-phase second-order low-pass (forward then backward pass)."""
    return _zero_phase(*biquad_lowpass(cutoff_hz, rate_hz), signal)


def highpass(signal, cutoff_hz: float, rate_hz: float) -> np.ndarray:
    return _zero_phase(*biquad_highpass(cutoff_hz, rate_hz), signal)


def bandpass(signal, lo_hz: float, hi_hz: float, rate_hz: float) -> np.ndarray:
    return lowpass(highpass(signal, lo_hz, rate_hz), hi_hz, rate_hz)


# --- steps ------------------------------------------------------------------

def _wrist_peaks(t_s: np.ndarray, accel: np.ndarray, rate: float, cfg: FeatureConfig) -> np.ndarray:
    mag = np.linalg.norm(accel, axis=1)
    smooth = lowpass(mag, cfg.lowpass_hz, rate)
    # gravity baseline from the data itself keeps the threshold scale-free
    sig = smooth - np.median(smooth)
    level = np.percentile(np.abs(sig), cfg.peak_percentile)
    if level <= 1e-9 * max(np.median(np.abs(mag)), 1e-300):
        return np.empty(0)
    distance = max(1, int(math.ceil(cfg.refractory_s * rate)))
    idx, _ = find_peaks(sig, height=cfg.peak_rel_threshold * level, distance=distance)
    times = t_s[idx].astype(float)
    # parabolic refinement of each peak position
    inner = (idx > 0) & (idx < len(sig) - 1)
    i = idx[inner]
    y0, y1, y2 = sig[i - 1], sig[i], sig[i + 1]
    denom = y0 - 2.0 * y1 + y2
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(denom != 0, 0.5 * (y0 - y2) / denom, 0.0)
    delta = np.clip(delta, -0.5, 0.5)
    times[inner] = t_s[i] + delta * (t_s[i + 1] - t_s[i - 1]) / 2.0
    return times


def merge_events(times: np.ndarray, window_s: float) -> np.ndarray:
    """Collapse events closer than ``window_s`` to the cluster start into their mean."""
    times = np.sort(np.asarray(times, dtype=float))
    if len(times) == 0:
        return times
    merged, cluster = [], [times[0]]
    for t in times[1:]:
        if t - cluster[0] < window_s:
            cluster.append(t)
        else:
            merged.append(float(np.mean(cluster)))
            cluster = [t]
    merged.append(float(np.mean(cluster)))
    return np.asarray(merged)


def detect_steps(session: Session, config: FeatureConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Step times in seconds (on the session clock), merged across both wrists."""
    if session.duration_s < config.min_detect_s:
        raise TooShort(f"session is {session.duration_s:.1f} s, need {config.min_detect_s:.0f} s")
    t_s = session.t_ms / 1000.0
    rate = session.sample_rate_hz
    events = [_wrist_peaks(t_s, session.accel(side), rate, config) for side in ("left", "right")]
    return merge_events(np.concatenate(events), config.merge_window_s)


# --- feature extraction -----------------------------------------------------

@dataclass(frozen=True)
class FeatureVector:
    subject_id: str
    task: Task
    values: dict[str, float]
    label: int | None = None

    def as_array(self) -> np.ndarray:
        return np.array([self.values[name] for name in FEATURE_CATALOG])


def autocorr(x: np.ndarray, lag: int) -> float:
    """Unbiased autocorrelation at ``lag`` normalized by the lag-0 value, clipped to [-1, 1]."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if lag <= 0:
        return 1.0
    if lag >= n:
        return 0.0
    x = x - x.mean()
    c0 = np.dot(x, x) / n
    if c0 <= 0:
        return 0.0
    ck = np.dot(x[:-lag], x[lag:]) / (n - lag)
    return float(np.clip(ck / c0, -1.0, 1.0))


def trim_session(s: Session, trim_s: float) -> Session:
    t0, t1 = s.t_ms[0] + 1000.0 * trim_s, s.t_ms[-1] - 1000.0 * trim_s
    mask = (s.t_ms >= t0) & (s.t_ms <= t1)
    return Session(s.subject_id, s.task, s.sample_rate_hz, s.t_ms[mask], s.left[mask],
                   s.right[mask], s.label, s.gap_report)


def pitch_axis(s: Session) -> int:
    """Gyro axis (0=x, 1=y, 2=z) with the largest variance summed over both wrists."""
    var = s.gyro("left").var(axis=0) + s.gyro("right").var(axis=0)
    return int(np.argmax(var))


def _dominant_freq(x: np.ndarray, rate: float, min_hz: float = 0.2) -> float:
    x = x - x.mean()
    nfft = max(len(x), int(2 ** math.ceil(math.log2(max(len(x), 2)))) * 4)
    power = np.abs(np.fft.rfft(x, n=nfft)) ** 2
    freqs = np.fft.rfftfreq(nfft, 1.0 / rate)
    ok = freqs >= min_hz
    if not ok.any() or power[ok].max() <= 0:
        return 0.0
    return float(freqs[ok][np.argmax(power[ok])])


def _band_ratio(x: np.ndarray, rate: float, lo: float, hi: float) -> float:
    x = x - x.mean()
    power = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(len(x), 1.0 / rate)
    total = power[1:].sum()
    if total <= 0:
        return 0.0
    band = (freqs >= lo) & (freqs <= hi)
    return float(power[band].sum() / total)


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(x))))


def extract_features(session: Session, config: FeatureConfig = DEFAULT_CONFIG) -> FeatureVector:
    if session.duration_s < config.min_duration_s:
        raise TooShort(f"session {session.subject_id}/{session.task.value} is "
                       f"{session.duration_s:.1f} s, need {config.min_duration_s:.0f} s")
    s = trim_session(session, config.trim_s)
    rate = s.sample_rate_hz
    steps = detect_steps(s, config)
    if len(steps) < config.min_steps:
        raise TooFewSteps(f"session {session.subject_id}/{session.task.value}: "
                          f"{len(steps)} steps detected, need {config.min_steps}")

    intervals = np.diff(steps)
    step_mean = float(intervals.mean())
    cadence = 60.0 * (len(steps) - 1) / (steps[-1] - steps[0])
    step_lag = max(1, int(round(step_mean * rate)))
    stride_lag = max(1, int(round(2.0 * step_mean * rate)))

    axis = pitch_axis(s)
    swing_amp, swing_reg, dom = {}, [], []
    accel_rms, jerk, step_reg, stride_reg, spec_ratio = [], [], [], [], []
    for side in ("left", "right"):
        pitch = bandpass(s.gyro(side)[:, axis], config.swing_band_lo_hz,
                         config.swing_band_hi_hz, rate)
        swing_amp[side] = float(np.percentile(np.abs(pitch), config.swing_percentile))
        swing_reg.append(autocorr(pitch, stride_lag))
        dom.append(_dominant_freq(s.gyro(side)[:, axis], rate))

        mag = np.linalg.norm(s.accel(side), axis=1)
        accel_rms.append(_rms(mag - mag.mean()))
        jerk.append(_rms(np.diff(mag) * rate))
        smooth = lowpass(mag, config.lowpass_hz, rate)
        step_reg.append(autocorr(smooth, step_lag))
        stride_reg.append(autocorr(smooth, stride_lag))
        spec_ratio.append(_band_ratio(mag, rate, config.spectral_band_lo_hz,
                                      config.spectral_band_hi_hz))

    top = max(swing_amp["left"], swing_amp["right"])
    asym = abs(swing_amp["left"] - swing_amp["right"]) / top if top > 0 else 0.0

    values = {
        "cadence_spm": float(cadence),
        "step_time_mean_s": step_mean,
        "step_time_cv": float(intervals.std() / step_mean),
        "step_count": float(len(steps)),
        "accel_rms_g": float(np.mean(accel_rms)),
        "jerk_rms": float(np.mean(jerk)),
        "swing_amp_left_dps": swing_amp["left"],
        "swing_amp_right_dps": swing_amp["right"],
        "swing_asym": float(asym),
        "swing_regularity": float(np.mean(swing_reg)),
        "step_regularity": float(np.mean(step_reg)),
        "stride_regularity": float(np.mean(stride_reg)),
        "dominant_freq_hz": float(np.mean(dom)),
        "spectral_ratio": float(np.mean(spec_ratio)),
    }
    if not all(math.isfinite(v) for v in values.values()):
        raise TooFewSteps(f"session {session.subject_id}/{session.task.value}: "
                          "non-finite feature values")
    return FeatureVector(session.subject_id, session.task, values, session.label)


@dataclass(frozen=True)
class ExtractionFailure:
    subject_id: str
    task: Task
    reason: str


def extract_all(sessions, config: FeatureConfig = DEFAULT_CONFIG
                ) -> tuple[list[FeatureVector], list[ExtractionFailure]]:
    """Extract every session; degraded sessions are flagged instead of aborting the batch."""
    vectors, failures = [], []
    for s in sessions:
        try:
            vectors.append(extract_features(s, config))
        except (TooShort, TooFewSteps) as exc:
            failures.append(ExtractionFailure(s.subject_id, s.task, str(exc)))
    return vectors, failures


def feature_table_csv(vectors: list[FeatureVector], comment: str | None = None) -> str:
    """Long-format feature table: one row per (subject, task)."""
    out = io.StringIO()
    if comment:
        for line in comment.splitlines():
            out.write(f"# {line}\n")
    out.write(",".join(("subject_id", "task", "label") + FEATURE_CATALOG) + "\n")
    for v in vectors:
        label = "" if v.label is None else str(v.label)
        row = [v.subject_id, v.task.value, label] + [repr(float(v.values[n])) for n in FEATURE_CATALOG]
        out.write(",".join(row) + "\n")
    return out.getvalue()
