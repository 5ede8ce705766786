"""Synthetic two-wrist IMU sessions with known gait parameters.

Kinematic model per wrist (100 Hz default):

* gyro pitch (gy): anti-phase sinusoids, one half cycle per step, with the
  phase pinned to the jittered step times so arm swing follows cadence;
* accel z: 1 g plus a 10 ms decaying exponential at every step;
* optional rest tremor on the more affected arm;
* Gaussian white noise on every axis.

The dual task scales cadence by 0.9 and step_time_cv by 1.5.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import InputError
from .telemetry import DEFAULT_RATE_HZ, Session, Task

IMPACT_TAU_S = 0.010
DUAL_CADENCE_FACTOR = 0.9
DUAL_CV_FACTOR = 1.5

_TASK_STREAM = {Task.WALK: 0, Task.DUAL: 1}


@dataclass(frozen=True)
class GaitParams:
    cadence_spm: float = 110.0
    step_time_cv: float = 0.02
    swing_amp_left_dps: float = 60.0
    swing_amp_right_dps: float = 60.0
    swing_asym: float = 0.0
    asym_side: str = "right"
    impact_g: float = 1.0
    tremor_hz: float = 0.0
    tremor_amp_dps: float = 0.0
    noise_g: float = 0.01
    noise_dps: float = 1.0
    duration_s: float = 60.0
    sample_rate_hz: float = DEFAULT_RATE_HZ
    seed: int = 0

    def validate(self) -> None:
        if self.cadence_spm <= 0:
            raise InputError("cadence_spm must be positive")
        if not 0.0 <= self.step_time_cv <= 0.5:
            raise InputError("step_time_cv must lie in [0, 0.5]")
        if not 0.0 <= self.swing_asym < 1.0:
            raise InputError("swing_asym must lie in [0, 1)")
        for name in ("swing_amp_left_dps", "swing_amp_right_dps", "impact_g",
                     "tremor_amp_dps", "noise_g", "noise_dps", "tremor_hz"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be >= 0")
        if self.asym_side not in ("left", "right"):
            raise InputError("asym_side must be 'left' or 'right'")
        if self.duration_s <= 0 or self.sample_rate_hz <= 0:
            raise InputError("duration_s and sample_rate_hz must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise InputError("seed must fit in 64 unsigned bits")

    def for_task(self, task: Task | str) -> "GaitParams":
        """Parameters actually used for ``task`` (dual task slows and destabilizes gait)."""
        if Task(task) is Task.DUAL:
            return replace(self, cadence_spm=self.cadence_spm * DUAL_CADENCE_FACTOR,
                           step_time_cv=min(0.5, self.step_time_cv * DUAL_CV_FACTOR))
        return self

    def swing_amplitudes(self) -> tuple[float, float]:
        left, right = self.swing_amp_left_dps, self.swing_amp_right_dps
        if self.asym_side == "right":
            right *= 1.0 - self.swing_asym
        else:
            left *= 1.0 - self.swing_asym
        return left, right


def _rng(p: GaitParams, task: Task) -> np.random.Generator:
    return np.random.default_rng([int(p.seed), _TASK_STREAM[task]])


def step_schedule(p: GaitParams, task: Task | str = Task.WALK,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Step (impact) times in seconds for one session."""
    task = Task(task)
    p.validate()
    q = p.for_task(task)
    rng = _rng(p, task) if rng is None else rng
    period = 60.0 / q.cadence_spm
    t = rng.uniform(0.0, period)
    times = []
    while t < q.duration_s:
        times.append(t)
        jitter = 1.0 + q.step_time_cv * rng.standard_normal()
        t += period * float(np.clip(jitter, 0.5, 1.5))
    return np.asarray(times)


def generate_session(p: GaitParams, subject_id: str, task: Task | str = Task.WALK,
                     label: int | None = None) -> Session:
    task = Task(task)
    p.validate()
    q = p.for_task(task)
    rng = _rng(p, task)
    steps = step_schedule(p, task, rng)

    rate = q.sample_rate_hz
    n = int(round(q.duration_s * rate))
    t = np.arange(n) / rate
    t_ms = np.rint(np.arange(n) * 1000.0 / rate)

    period = 60.0 / q.cadence_spm
    knots_t = np.concatenate([[steps[0] - period], steps, [steps[-1] + period]]) if len(steps) \
        else np.array([0.0, period])
    knots_phi = np.pi * (np.arange(len(knots_t)) - 1)
    lo_t, hi_t = knots_t[0], knots_t[-1]
    phi = np.interp(t, knots_t, knots_phi)
    phi = np.where(t < lo_t, knots_phi[0] - np.pi * (lo_t - t) / period, phi)
    phi = np.where(t > hi_t, knots_phi[-1] + np.pi * (t - hi_t) / period, phi)
    swing = np.sin(phi)

    impacts = np.zeros(n)
    width = int(np.ceil(10 * IMPACT_TAU_S * rate)) + 1
    for s in steps:
        i0 = int(np.ceil(s * rate - 1e-9))
        idx = np.arange(i0, min(i0 + width, n))
        impacts[idx] += q.impact_g * np.exp(-(idx / rate - s) / IMPACT_TAU_S)

    amp_l, amp_r = q.swing_amplitudes()
    tremor_phase = rng.uniform(0, 2 * np.pi)
    tremor = q.tremor_amp_dps * np.sin(2 * np.pi * q.tremor_hz * t + tremor_phase)

    channels = {}
    for side, amp, sign in (("left", amp_l, 1.0), ("right", amp_r, -1.0)):
        pitch = sign * amp * swing
        data = np.zeros((n, 9))
        data[:, 2] = 1.0 + impacts
        data[:, 3] = 0.2 * pitch
        data[:, 4] = pitch
        data[:, 5] = 0.1 * pitch
        if side == q.asym_side:
            data[:, 3] += tremor
            data[:, 4] += 0.5 * tremor
        data[:, 0:3] += q.noise_g * rng.standard_normal((n, 3))
        data[:, 3:6] += q.noise_dps * rng.standard_normal((n, 3))
        # a fixed geomagnetic vector; magnetometer channels are carried, not analysed
        data[:, 6:9] = (20.0, 0.0, -40.0)
        channels[side] = data
    return Session(subject_id, task, rate, t_ms, channels["left"], channels["right"], label)


# --- cohorts ----------------------------------------------------------------

_JITTERABLE = ("cadence_spm", "step_time_cv", "swing_amp_left_dps", "swing_amp_right_dps",
               "swing_asym", "impact_g", "tremor_hz", "tremor_amp_dps")
_NUMERIC_FIELDS = {f.name for f in fields(GaitParams)} - {"asym_side"}


@dataclass(frozen=True)
class ParamDistribution:
    """Per-subject parameters: ``mean`` plus Gaussian jitter (std) per field."""

    mean: GaitParams
    jitter: dict[str, float] = field(default_factory=dict)

    def draw(self, rng: np.random.Generator, seed: int) -> GaitParams:
        values = {}
        z = rng.standard_normal(len(_JITTERABLE))
        for zi, name in zip(z, _JITTERABLE):
            values[name] = getattr(self.mean, name) + self.jitter.get(name, 0.0) * zi
        values["cadence_spm"] = max(values["cadence_spm"], 40.0)
        values["step_time_cv"] = float(np.clip(values["step_time_cv"], 0.0, 0.5))
        values["swing_asym"] = float(np.clip(values["swing_asym"], 0.0, 0.95))
        for name in ("swing_amp_left_dps", "swing_amp_right_dps", "impact_g",
                     "tremor_hz", "tremor_amp_dps"):
            values[name] = max(values[name], 0.0)
        return replace(self.mean, seed=seed, **values)


def control_preset() -> ParamDistribution:
    return ParamDistribution(
        GaitParams(cadence_spm=112, step_time_cv=0.02, swing_amp_left_dps=60,
                   swing_amp_right_dps=60, swing_asym=0.05, impact_g=1.0,
                   noise_g=0.02, noise_dps=2.0),
        {"cadence_spm": 6, "step_time_cv": 0.007, "swing_amp_left_dps": 8,
         "swing_amp_right_dps": 8, "swing_asym": 0.03, "impact_g": 0.15},
    )


def pd_preset(strength: str = "strong") -> ParamDistribution:
    if strength == "null":
        return control_preset()
    if strength == "strong":
        mean = GaitParams(cadence_spm=98, step_time_cv=0.035, swing_amp_left_dps=46,
                          swing_amp_right_dps=46, swing_asym=0.3, impact_g=0.8,
                          tremor_hz=5.0, tremor_amp_dps=6.0, noise_g=0.02, noise_dps=2.0)
        jitter = {"cadence_spm": 8, "step_time_cv": 0.01, "swing_amp_left_dps": 8,
                  "swing_amp_right_dps": 8, "swing_asym": 0.12, "impact_g": 0.15,
                  "tremor_amp_dps": 2.0}
    elif strength == "mild":
        mean = GaitParams(cadence_spm=106, step_time_cv=0.028, swing_amp_left_dps=52,
                          swing_amp_right_dps=52, swing_asym=0.15, impact_g=0.9,
                          tremor_hz=5.0, tremor_amp_dps=3.0, noise_g=0.02, noise_dps=2.0)
        jitter = {"cadence_spm": 7, "step_time_cv": 0.008, "swing_amp_left_dps": 8,
                  "swing_amp_right_dps": 8, "swing_asym": 0.1, "impact_g": 0.15,
                  "tremor_amp_dps": 1.5}
    else:
        raise InputError(f"unknown preset {strength!r} (strong, mild, null)")
    return ParamDistribution(mean, jitter)


@dataclass(frozen=True)
class CohortSpec:
    n_control: int = 40
    n_pd: int = 40
    control: ParamDistribution = field(default_factory=control_preset)
    pd: ParamDistribution = field(default_factory=pd_preset)
    seed: int = 0

    def validate(self) -> None:
        if self.n_control < 0 or self.n_pd < 0 or self.n_control + self.n_pd < 2:
            raise InputError("cohort needs n_control + n_pd >= 2")


@dataclass(frozen=True)
class Subject:
    subject_id: str
    label: int
    params: GaitParams


def draw_subjects(spec: CohortSpec) -> list[Subject]:
    spec.validate()
    rng = np.random.default_rng(int(spec.seed))
    subjects = []
    for label, count, dist, prefix in ((0, spec.n_control, spec.control, "ctl"),
                                       (1, spec.n_pd, spec.pd, "pd")):
        for i in range(count):
            seed = int(rng.integers(0, 2**63))
            subjects.append(Subject(f"{prefix}{i + 1:03d}", label, dist.draw(rng, seed)))
    return subjects


def generate_cohort(spec: CohortSpec) -> list[Session]:
    """Both tasks for every subject, controls first, walk before dual."""
    sessions = []
    for subj in draw_subjects(spec):
        for task in (Task.WALK, Task.DUAL):
            sessions.append(generate_session(subj.params, subj.subject_id, task, subj.label))
    return sessions


# --- key=value config -------------------------------------------------------

def _coerce(name: str, raw: str):
    if name == "asym_side":
        return raw
    if name == "seed":
        return int(raw)
    return float(raw)


def _apply_overrides(dist: ParamDistribution, items: dict[str, str]) -> ParamDistribution:
    mean_updates, jitter = {}, dict(dist.jitter)
    for key, raw in items.items():
        name, _, suffix = key.partition(".")
        if name not in _NUMERIC_FIELDS and name != "asym_side":
            raise InputError(f"unknown gait parameter {name!r}")
        if suffix == "jitter":
            if name not in _JITTERABLE:
                raise InputError(f"{name!r} cannot be jittered")
            jitter[name] = float(raw)
        elif suffix:
            raise InputError(f"unknown suffix in {key!r}")
        else:
            mean_updates[name] = _coerce(name, raw)
    return ParamDistribution(replace(dist.mean, **mean_updates), jitter)


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise InputError(f"line {lineno}: expected key=value, got {line!r}")
        out[key.strip()] = val.strip()
    return out


def cohort_from_config(cfg: dict[str, str] | str) -> CohortSpec:
    """Build a CohortSpec from key=value pairs.

    Recognised keys: ``n_control``, ``n_pd``, ``seed``, ``preset``
    (strong | mild | null), ``duration_s``, ``sample_rate_hz`` and per-group
    overrides ``control.<param>`` / ``pd.<param>`` / ``<group>.<param>.jitter``.
    Unrelated keys are ignored so one file can drive the whole pipeline.
    """
    if isinstance(cfg, str):
        cfg = parse_kv(cfg)
    try:
        preset = cfg.get("preset", "strong")
        control, pd = control_preset(), pd_preset(preset)
        shared = {k: cfg[k] for k in ("duration_s", "sample_rate_hz", "noise_g", "noise_dps")
                  if k in cfg}
        groups = {"control": dict(shared), "pd": dict(shared)}
        for key, val in cfg.items():
            group, _, rest = key.partition(".")
            if group in groups and rest:
                groups[group][rest] = val
        control = _apply_overrides(control, groups["control"])
        pd = _apply_overrides(pd, groups["pd"])
        spec = CohortSpec(int(cfg.get("n_control", 40)), int(cfg.get("n_pd", 40)),
                          control, pd, int(cfg.get("seed", 0)))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"bad cohort config: {exc}") from None
    spec.validate()
    spec.control.mean.validate()
    spec.pd.mean.validate()
    return spec


def load_cohort_config(path: str | Path) -> CohortSpec:
    return cohort_from_config(Path(path).read_text())


def cohort_config_items(spec: CohortSpec) -> dict[str, str]:
    """Fully resolved key=value form of ``spec``; feeding it back reproduces the cohort."""
    items = {"n_control": str(spec.n_control), "n_pd": str(spec.n_pd), "seed": str(spec.seed)}
    for group, dist in (("control", spec.control), ("pd", spec.pd)):
        for name, val in params_without_seed(dist.mean).items():
            items[f"{group}.{name}"] = val if isinstance(val, str) else repr(float(val))
        for name in _JITTERABLE:
            items[f"{group}.{name}.jitter"] = repr(float(dist.jitter.get(name, 0.0)))
    return items


def params_without_seed(p: GaitParams) -> dict:
    d = dataclasses.asdict(p)
    d.pop("seed")
    return d
