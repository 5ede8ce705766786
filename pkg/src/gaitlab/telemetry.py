"""Wrist peripheral wire protocol, session assembly and session CSV files.

Frame layout (little-endian, 27 bytes)::

    0      magic 0xA5
    1      device id (1 = left wrist, 2 = right wrist)
    2..3   seq, uint16, wraps
    4..7   timestamp_ms, uint32
    8..25  ax ay az gx gy gz mx my mz, int16 raw counts
    26     CRC-8 (poly 0x07, init 0x00) over bytes 0..25

Raw counts convert linearly to physical units: counts * fullscale / 32768,
with fullscale 4 g, 2000 deg/s and 400 uT.
"""

from __future__ import annotations

import io
import socket
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator

import numpy as np

from .errors import (
    BadCrc,
    BadDeviceId,
    BadMagic,
    ClockSkew,
    EmptyChannel,
    EncodeError,
    FrameError,
    InputError,
    SchemaMismatch,
    Truncated,
)

MAGIC = 0xA5
FRAME_LEN = 27
LEFT, RIGHT = 1, 2
DEVICE_IDS = (LEFT, RIGHT)

ACCEL_FULLSCALE_G = 4.0
GYRO_FULLSCALE_DPS = 2000.0
MAG_FULLSCALE_UT = 400.0
FULLSCALE = np.array([ACCEL_FULLSCALE_G] * 3 + [GYRO_FULLSCALE_DPS] * 3 + [MAG_FULLSCALE_UT] * 3)
COUNTS_PER_FULLSCALE = 32768.0

DEFAULT_RATE_HZ = 100
MAX_INTERP_GAP = 5
MAX_SKEW_MS = 1000.0

FRAME_DTYPE = np.dtype(
    [
        ("magic", "u1"),
        ("device", "u1"),
        ("seq", "<u2"),
        ("ts", "<u4"),
        ("imu", "<i2", (9,)),
        ("crc", "u1"),
    ]
)
assert FRAME_DTYPE.itemsize == FRAME_LEN

AXES = ("ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz")
CSV_COLUMNS = ("t_ms",) + tuple(f"{a}_left" for a in AXES) + tuple(f"{a}_right" for a in AXES)
CSV_MAGIC = "#gaitlab-session"
CSV_VERSION = "v1"


def _crc8_table(poly: int = 0x07) -> np.ndarray:
    table = np.zeros(256, dtype=np.uint8)
    for i in range(256):
        c = i
        for _ in range(8):
            c = ((c << 1) ^ poly) & 0xFF if c & 0x80 else (c << 1) & 0xFF
        table[i] = c
    return table


CRC8_TABLE = _crc8_table()
_CRC8_LIST = CRC8_TABLE.tolist()


def crc8(data: bytes) -> int:
    crc = 0
    for b in data:
        crc = _CRC8_LIST[crc ^ b]
    return crc


def _crc8_rows(rows: np.ndarray) -> np.ndarray:
    """CRC-8 of every row of a (n, m) uint8 array."""
    crc = np.zeros(rows.shape[0], dtype=np.uint8)
    for col in range(rows.shape[1]):
        crc = CRC8_TABLE[crc ^ rows[:, col]]
    return crc


class Task(str, Enum):
    WALK = "walk"
    DUAL = "dual"


@dataclass(frozen=True)
class SensorFrame:
    """One 9-axis sample from one wrist, in raw counts."""

    device_id: int
    seq: int
    timestamp_ms: int
    accel: tuple[int, int, int] = (0, 0, 0)
    gyro: tuple[int, int, int] = (0, 0, 0)
    mag: tuple[int, int, int] = (0, 0, 0)

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(self.accel) + tuple(self.gyro) + tuple(self.mag)

    @property
    def accel_g(self) -> np.ndarray:
        return np.asarray(self.accel, dtype=float) * ACCEL_FULLSCALE_G / COUNTS_PER_FULLSCALE

    @property
    def gyro_dps(self) -> np.ndarray:
        return np.asarray(self.gyro, dtype=float) * GYRO_FULLSCALE_DPS / COUNTS_PER_FULLSCALE

    @property
    def mag_ut(self) -> np.ndarray:
        return np.asarray(self.mag, dtype=float) * MAG_FULLSCALE_UT / COUNTS_PER_FULLSCALE

    def physical(self) -> np.ndarray:
        return counts_to_physical(np.asarray(self.counts, dtype=float))


def counts_to_physical(counts: np.ndarray) -> np.ndarray:
    return np.asarray(counts, dtype=float) * FULLSCALE / COUNTS_PER_FULLSCALE


def physical_to_counts(values: np.ndarray) -> np.ndarray:
    counts = np.rint(np.asarray(values, dtype=float) * COUNTS_PER_FULLSCALE / FULLSCALE)
    return np.clip(counts, -32768, 32767).astype(np.int16)


# --- codec ------------------------------------------------------------------

def encode_frame(frame: SensorFrame) -> bytes:
    if frame.device_id not in DEVICE_IDS:
        raise EncodeError(f"device_id must be 1 or 2, got {frame.device_id}")
    if not 0 <= frame.seq <= 0xFFFF:
        raise EncodeError(f"seq out of uint16 range: {frame.seq}")
    if not 0 <= frame.timestamp_ms <= 0xFFFFFFFF:
        raise EncodeError(f"timestamp_ms out of uint32 range: {frame.timestamp_ms}")
    counts = frame.counts
    if len(counts) != 9:
        raise EncodeError("every sensor triple (accel/gyro/mag) needs 3 components")
    for c in counts:
        if int(c) != c or not -32768 <= c <= 32767:
            raise EncodeError(f"raw count out of int16 range: {c}")
    rec = np.zeros(1, dtype=FRAME_DTYPE)
    rec["magic"] = MAGIC
    rec["device"] = frame.device_id
    rec["seq"] = frame.seq
    rec["ts"] = frame.timestamp_ms
    rec["imu"][0] = counts
    body = rec.tobytes()[: FRAME_LEN - 1]
    return body + bytes([crc8(body)])


def decode_frame(buf: bytes) -> SensorFrame:
    """Decode the frame at the start of ``buf``.

    Checks run in wire order: magic, length, CRC, device id.
    """
    if len(buf) == 0:
        raise Truncated("empty buffer")
    if buf[0] != MAGIC:
        raise BadMagic(f"expected 0xA5, got {buf[0]:#04x}")
    if len(buf) < FRAME_LEN:
        raise Truncated(f"need {FRAME_LEN} bytes, got {len(buf)}")
    raw = bytes(buf[:FRAME_LEN])
    if crc8(raw[:-1]) != raw[-1]:
        raise BadCrc("CRC-8 mismatch")
    rec = np.frombuffer(raw, dtype=FRAME_DTYPE)[0]
    if int(rec["device"]) not in DEVICE_IDS:
        raise BadDeviceId(f"unknown device id {int(rec['device'])}")
    imu = [int(v) for v in rec["imu"]]
    return SensorFrame(
        device_id=int(rec["device"]),
        seq=int(rec["seq"]),
        timestamp_ms=int(rec["ts"]),
        accel=tuple(imu[0:3]),
        gyro=tuple(imu[3:6]),
        mag=tuple(imu[6:9]),
    )


def frames_to_array(frames: Iterable[SensorFrame]) -> np.ndarray:
    frames = list(frames)
    out = np.zeros(len(frames), dtype=FRAME_DTYPE)
    if not frames:
        return out
    out["magic"] = MAGIC
    out["device"] = [f.device_id for f in frames]
    out["seq"] = [f.seq for f in frames]
    out["ts"] = [f.timestamp_ms for f in frames]
    out["imu"] = [f.counts for f in frames]
    return out


def array_to_frames(records: np.ndarray) -> list[SensorFrame]:
    frames = []
    for rec in records:
        imu = [int(v) for v in rec["imu"]]
        frames.append(
            SensorFrame(int(rec["device"]), int(rec["seq"]), int(rec["ts"]),
                        tuple(imu[0:3]), tuple(imu[3:6]), tuple(imu[6:9]))
        )
    return frames


def encode_records(records: np.ndarray) -> bytes:
    """Vectorized encoder for a FRAME_DTYPE array (magic and CRC are filled in)."""
    recs = np.array(records, dtype=FRAME_DTYPE, copy=True)
    if recs.size and not np.isin(recs["device"], DEVICE_IDS).all():
        raise EncodeError("device_id must be 1 or 2")
    recs["magic"] = MAGIC
    raw = recs.view(np.uint8).reshape(-1, FRAME_LEN)
    recs["crc"] = _crc8_rows(raw[:, : FRAME_LEN - 1])
    return recs.tobytes()


@dataclass
class DecodeStats:
    frames: int = 0
    bad_magic: int = 0
    bad_crc: int = 0
    bad_device: int = 0
    truncated: int = 0
    skipped_bytes: int = 0

    @property
    def errors(self) -> int:
        return self.bad_magic + self.bad_crc + self.bad_device + self.truncated


class FrameDecoder:
    """Incremental stream decoder with resynchronization.

    After a rejected frame the decoder advances one byte and scans for the
    next magic byte. Bytes that cannot yet form a full frame are held until
    the next ``feed`` or reported as truncated by ``close``.
    """

    def __init__(self) -> None:
        self.stats = DecodeStats()
        self._buf = b""

    def feed(self, data: bytes) -> list[SensorFrame]:
        buf = self._buf + bytes(data)
        frames, consumed = self._scan(buf, final=False)
        self._buf = buf[consumed:]
        return frames

    def close(self) -> list[SensorFrame]:
        frames, _ = self._scan(self._buf, final=True)
        self._buf = b""
        return frames

    def _scan(self, buf: bytes, final: bool) -> tuple[list[SensorFrame], int]:
        out: list[SensorFrame] = []
        pos = 0
        n = len(buf)
        while pos < n:
            if buf[pos] != MAGIC:
                nxt = buf.find(bytes([MAGIC]), pos)
                end = n if nxt < 0 else nxt
                self.stats.bad_magic += 1
                self.stats.skipped_bytes += end - pos
                pos = end
                continue
            if n - pos < FRAME_LEN:
                if final:
                    self.stats.truncated += 1
                    self.stats.skipped_bytes += n - pos
                    pos = n
                break
            try:
                frame = decode_frame(buf[pos: pos + FRAME_LEN])
            except BadCrc:
                self.stats.bad_crc += 1
            except BadDeviceId:
                self.stats.bad_device += 1
            else:
                out.append(frame)
                self.stats.frames += 1
                pos += FRAME_LEN
                continue
            self.stats.skipped_bytes += 1
            pos += 1
        return out, pos


def decode_stream(data: bytes) -> tuple[np.ndarray, DecodeStats]:
    """Decode a complete byte stream into a FRAME_DTYPE array.

    Clean streams (whole frames, all valid) take a vectorized path; anything
    else falls back to the resynchronizing scanner.
    """
    data = bytes(data)
    if data and len(data) % FRAME_LEN == 0:
        recs = np.frombuffer(data, dtype=FRAME_DTYPE)
        raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, FRAME_LEN)
        ok = (
            (recs["magic"] == MAGIC).all()
            and (_crc8_rows(raw[:, : FRAME_LEN - 1]) == recs["crc"]).all()
            and np.isin(recs["device"], DEVICE_IDS).all()
        )
        if ok:
            return recs.copy(), DecodeStats(frames=len(recs))
    dec = FrameDecoder()
    frames = dec.feed(data) + dec.close()
    return frames_to_array(frames), dec.stats


def iter_frames(chunks: Iterable[bytes]) -> Iterator[SensorFrame]:
    dec = FrameDecoder()
    for chunk in chunks:
        yield from dec.feed(chunk)
    yield from dec.close()


def receive_tcp(port: int, host: str = "127.0.0.1", timeout: float | None = 30.0,
                ready: threading.Event | None = None) -> bytes:
    """Accept one connection and return everything sent until EOF."""
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as srv:
        srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        srv.bind((host, port))
        srv.listen(1)
        srv.settimeout(timeout)
        if ready is not None:
            ready.port = srv.getsockname()[1]  # type: ignore[attr-defined]
            ready.set()
        conn, _ = srv.accept()
        with conn:
            conn.settimeout(timeout)
            parts = []
            while True:
                chunk = conn.recv(65536)
                if not chunk:
                    break
                parts.append(chunk)
    return b"".join(parts)


# --- sessions ---------------------------------------------------------------

@dataclass(frozen=True)
class Session:
    """Two aligned wrist channels on a shared time axis.

    ``left`` and ``right`` are (n, 9) arrays in physical units, columns
    ordered as AXES. Long gaps show up as jumps in ``t_ms``.
    """

    subject_id: str
    task: Task
    sample_rate_hz: float
    t_ms: np.ndarray
    left: np.ndarray
    right: np.ndarray
    label: int | None = None
    gap_report: tuple[tuple[int, int, int], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "task", Task(self.task))
        for name in ("t_ms", "left", "right"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.left.shape != self.right.shape or self.left.shape != (len(self.t_ms), 9):
            raise InputError("left/right must be (n, 9) arrays matching t_ms")
        if self.sample_rate_hz <= 0:
            raise InputError("sample_rate_hz must be positive")
        if self.label not in (None, 0, 1):
            raise InputError(f"label must be 0, 1 or None, got {self.label!r}")
        if len(self.t_ms) > 1 and not (np.diff(self.t_ms) > 0).all():
            raise InputError("timestamps must be strictly increasing")

    @property
    def n(self) -> int:
        return len(self.t_ms)

    @property
    def duration_s(self) -> float:
        if self.n == 0:
            return 0.0
        return (self.t_ms[-1] - self.t_ms[0]) / 1000.0 + 1.0 / self.sample_rate_hz

    @property
    def has_valid_duration(self) -> bool:
        return 50.0 <= self.duration_s <= 70.0

    def accel(self, side: str) -> np.ndarray:
        return self._side(side)[:, 0:3]

    def gyro(self, side: str) -> np.ndarray:
        return self._side(side)[:, 3:6]

    def _side(self, side: str) -> np.ndarray:
        if side == "left":
            return self.left
        if side == "right":
            return self.right
        raise ValueError(side)

    def equals(self, other: "Session") -> bool:
        return (
            self.subject_id == other.subject_id
            and self.task == other.task
            and self.sample_rate_hz == other.sample_rate_hz
            and self.label == other.label
            and self.gap_report == other.gap_report
            and np.array_equal(self.t_ms, other.t_ms)
            and np.array_equal(self.left, other.left)
            and np.array_equal(self.right, other.right)
        )


@dataclass
class _Channel:
    t: np.ndarray
    values: np.ndarray
    long_gaps: list[tuple[float, float]] = field(default_factory=list)


def _unwrap_seq(seq: np.ndarray) -> np.ndarray:
    seq = seq.astype(np.int64)
    if len(seq) < 2:
        return seq
    d = np.diff(seq)
    d = np.where(d < -32768, d + 65536, d)
    d = np.where(d > 32768, d - 65536, d)
    return np.concatenate([[seq[0]], seq[0] + np.cumsum(d)])


def _build_channel(recs: np.ndarray, device: int, max_gap: int,
                   gaps: list[tuple[int, int, int]]) -> _Channel:
    imu = recs["imu"].astype(np.int64)
    ts = recs["ts"].astype(np.int64)
    seq = recs["seq"].astype(np.int64)
    # canonical arrival-independent order before unwrapping
    keys = [imu[:, j] for j in range(8, -1, -1)] + [seq, ts]
    order = np.lexsort(keys)
    ts, seq, imu = ts[order], seq[order], imu[order]
    useq = _unwrap_seq(seq)
    order = np.lexsort((ts, useq))
    ts, seq, imu, useq = ts[order], seq[order], imu[order], useq[order]
    keep = np.concatenate([[True], np.diff(useq) != 0])
    ts, seq, imu, useq = ts[keep], seq[keep], imu[keep], useq[keep]

    values = counts_to_physical(imu.astype(float))
    t = ts.astype(float)
    t_parts, v_parts = [t[:1]], [values[:1]]
    long_gaps = []
    for i in range(1, len(useq)):
        missing = int(useq[i] - useq[i - 1] - 1)
        if missing > 0:
            gaps.append((device, int(seq[i - 1]), int(seq[i])))
            if missing <= max_gap:
                frac = np.arange(1, missing + 1) / (missing + 1)
                t_parts.append(t[i - 1] + frac * (t[i] - t[i - 1]))
                v_parts.append(values[i - 1] + frac[:, None] * (values[i] - values[i - 1]))
            else:
                long_gaps.append((t[i - 1], t[i]))
        t_parts.append(t[i: i + 1])
        v_parts.append(values[i: i + 1])
    t = np.concatenate(t_parts)
    values = np.concatenate(v_parts)
    # a sample whose timestamp does not advance cannot be placed on the time axis
    mono = np.concatenate([[True], np.diff(t) > 0])
    if not mono.all():
        t_run = np.maximum.accumulate(t)
        mono = np.concatenate([[True], t[1:] > t_run[:-1]])
    return _Channel(t[mono], values[mono], long_gaps)


class SessionAssembler:
    """Collects frames from both wrists; ``add`` may be called from several threads."""

    def __init__(self, subject_id: str, task: Task | str, sample_rate_hz: float = DEFAULT_RATE_HZ,
                 label: int | None = None, max_gap: int = MAX_INTERP_GAP,
                 max_skew_ms: float = MAX_SKEW_MS):
        self.subject_id = subject_id
        self.task = Task(task)
        self.sample_rate_hz = sample_rate_hz
        self.label = label
        self.max_gap = max_gap
        self.max_skew_ms = max_skew_ms
        self._lock = threading.Lock()
        self._chunks: list[np.ndarray] = []

    def add(self, frames: Iterable[SensorFrame] | np.ndarray) -> None:
        recs = frames if isinstance(frames, np.ndarray) else frames_to_array(frames)
        recs = np.asarray(recs, dtype=FRAME_DTYPE)
        if recs.size and not np.isin(recs["device"], DEVICE_IDS).all():
            raise InputError("frames from more than the two wrist devices")
        with self._lock:
            self._chunks.append(recs.copy())

    def build(self) -> Session:
        with self._lock:
            recs = np.concatenate(self._chunks) if self._chunks else np.zeros(0, FRAME_DTYPE)
        gaps: list[tuple[int, int, int]] = []
        channels = {}
        for dev, side in ((LEFT, "left"), (RIGHT, "right")):
            sub = recs[recs["device"] == dev]
            if sub.size == 0:
                raise EmptyChannel(f"{side} wrist produced no frames")
            channels[dev] = _build_channel(sub, dev, self.max_gap, gaps)
        left, right = channels[LEFT], channels[RIGHT]
        t_ms, lv, rv = _align(left, right, self.sample_rate_hz, self.max_skew_ms)
        return Session(self.subject_id, self.task, self.sample_rate_hz, t_ms, lv, rv,
                       self.label, tuple(sorted(gaps)))


def _align(left: _Channel, right: _Channel, rate_hz: float,
           max_skew_ms: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Put the right channel on the left channel's timestamps.

    Grid points inside a long right-wrist gap are dropped so neither side
    invents data across an unfilled loss.
    """
    start_skew = abs(left.t[0] - right.t[0])
    end_skew = abs(left.t[-1] - right.t[-1])
    if max(start_skew, end_skew) > max_skew_ms:
        raise ClockSkew(
            f"wrist clocks diverge by {max(start_skew, end_skew):.0f} ms (limit {max_skew_ms:.0f})"
        )
    lo, hi = max(left.t[0], right.t[0]), min(left.t[-1], right.t[-1])
    mask = (left.t >= lo) & (left.t <= hi)
    for a, b in right.long_gaps:
        mask &= ~((left.t > a) & (left.t < b))
    t = left.t[mask]
    lv = left.values[mask]
    rv = np.column_stack([np.interp(t, right.t, right.values[:, j]) for j in range(9)])
    if abs(len(left.t) - len(right.t)) > rate_hz:
        raise ClockSkew("wrist sample counts differ by more than one second of data")
    return t, lv, rv


def assemble_session(frames: Iterable[SensorFrame] | np.ndarray, subject_id: str,
                     task: Task | str, sample_rate_hz: float = DEFAULT_RATE_HZ,
                     label: int | None = None, max_gap: int = MAX_INTERP_GAP) -> Session:
    asm = SessionAssembler(subject_id, task, sample_rate_hz, label, max_gap)
    asm.add(frames)
    return asm.build()


def session_to_records(session: Session) -> np.ndarray:
    """Quantize a session back into interleaved wire records (left, right, left, ...)."""
    n = session.n
    recs = np.zeros(2 * n, dtype=FRAME_DTYPE)
    seq = (np.arange(n) % 65536).astype(np.uint16)
    ts = np.rint(session.t_ms).astype(np.uint32)
    for k, (dev, vals) in enumerate(((LEFT, session.left), (RIGHT, session.right))):
        part = recs[k::2]
        part["magic"] = MAGIC
        part["device"] = dev
        part["seq"] = seq
        part["ts"] = ts
        part["imu"] = physical_to_counts(vals)
        recs[k::2] = part
    return recs


def encode_session(session: Session) -> bytes:
    return encode_records(session_to_records(session))


# --- CSV --------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _fmt_t(t: float) -> str:
    return str(int(t)) if float(t).is_integer() else f"{t:.3f}"


def session_to_csv(s: Session, extra: dict[str, object] | None = None) -> str:
    """Session CSV. ``extra`` adds provenance keys to the header line; readers ignore them."""
    if "," in s.subject_id or "\n" in s.subject_id:
        raise InputError("subject_id may not contain commas or newlines")
    label = "?" if s.label is None else str(s.label)
    tail = ""
    for key, val in (extra or {}).items():
        text = f"{key}={val}"
        if "," in text or "\n" in text:
            raise InputError(f"header entry {text!r} may not contain commas or newlines")
        tail += "," + text
    out = io.StringIO()
    out.write(f"{CSV_MAGIC},{CSV_VERSION},subject={s.subject_id},task={s.task.value},"
              f"rate_hz={int(round(s.sample_rate_hz))},label={label}{tail}\n")
    out.write(",".join(CSV_COLUMNS) + "\n")
    for i in range(s.n):
        row = [_fmt_t(s.t_ms[i])]
        row += [_fmt(v) for v in s.left[i]]
        row += [_fmt(v) for v in s.right[i]]
        out.write(",".join(row) + "\n")
    return out.getvalue()


def _parse_header(line: str) -> dict[str, str]:
    parts = line.strip().split(",")
    if len(parts) < 2 or parts[0] != CSV_MAGIC:
        raise SchemaMismatch("#gaitlab-session", "first line is not a gaitlab session header")
    if parts[1] != CSV_VERSION:
        raise SchemaMismatch("version", f"unsupported session version {parts[1]!r}")
    meta = {}
    for p in parts[2:]:
        key, sep, val = p.partition("=")
        if not sep:
            raise SchemaMismatch(key, "expected key=value in header")
        meta[key] = val
    for key in ("subject", "task", "rate_hz", "label"):
        if key not in meta:
            raise SchemaMismatch(key, "missing from header")
    return meta


def session_from_csv(text: str) -> Session:
    lines = text.splitlines()
    if not lines:
        raise SchemaMismatch("#gaitlab-session", "empty file")
    meta = _parse_header(lines[0])
    if len(lines) < 2:
        raise SchemaMismatch(CSV_COLUMNS[0], "missing column header line")
    cols = [c.strip() for c in lines[1].split(",")]
    for i, expected in enumerate(CSV_COLUMNS):
        if i >= len(cols) or cols[i] != expected:
            raise SchemaMismatch(expected)
    if len(cols) > len(CSV_COLUMNS):
        raise SchemaMismatch(cols[len(CSV_COLUMNS)], "unexpected extra column")
    body = "\n".join(l for l in lines[2:] if l.strip())
    if not body:
        raise EmptyChannel("session CSV has no samples")
    try:
        data = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
    except ValueError as exc:
        raise SchemaMismatch("body", str(exc)) from None
    if data.shape[1] != len(CSV_COLUMNS):
        raise SchemaMismatch("body", "row width does not match header")
    try:
        task = Task(meta["task"])
    except ValueError:
        raise SchemaMismatch("task", f"unknown task {meta['task']!r}") from None
    label = None if meta["label"] == "?" else int(meta["label"])
    return Session(meta["subject"], task, float(int(meta["rate_hz"])), data[:, 0],
                   data[:, 1:10], data[:, 10:19], label)


def write_session(path, s: Session, extra: dict[str, object] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(session_to_csv(s, extra))


def read_session(path) -> Session:
    with open(path) as fh:
        return session_from_csv(fh.read())


def sessions_equal_within(a: Session, b: Session, rtol: float = 1e-5, atol: float = 1e-9) -> bool:
    if a.n != b.n:
        return False
    return (np.allclose(a.t_ms, b.t_ms, rtol=0, atol=1e-3)
            and np.allclose(a.left, b.left, rtol=rtol, atol=atol)
            and np.allclose(a.right, b.right, rtol=rtol, atol=atol))


__all__ = [
    "MAGIC", "FRAME_LEN", "SensorFrame", "Session", "Task", "FrameDecoder", "FrameError",
    "encode_frame", "decode_frame", "decode_stream", "iter_frames", "assemble_session",
    "SessionAssembler", "session_to_csv", "session_from_csv", "encode_session",
]
