"""Model specs, fitted models and the GLM1 model file.

GLM1 layout (little-endian)::

    b"GLM1"  u16 format version
    u16 len + kind tag (ascii)
    u32 len + key=value block (utf-8, one pair per line)
    u32 array count, then per array:
        u16 len + name, u8 ndim, u32 dims..., float64 data
    u32 CRC-32 of everything before it
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from ..dataset import Dataset, Scaler, fit_scaler
from ..errors import ChecksumError, InputError, ModelFormatError, SchemaMismatch, VersionMismatch
from .knn import KnnClassifier
from .linear import LinearSvm, LogisticRegression
from .trees import BoostedTrees, RandomForest

MODEL_MAGIC = b"GLM1"
MODEL_VERSION = 1

KINDS = ("knn", "logistic", "linear_svm", "random_forest", "boosted_trees")

DEFAULTS: dict[str, dict[str, object]] = {
    "knn": {"k": 5, "metric": "euclidean", "weighting": "uniform"},
    "logistic": {"learning_rate": 0.1, "l2_lambda": 0.01, "max_iters": 2000, "tol": 1e-6},
    "linear_svm": {"C": 10.0, "epochs": 50, "seed": 0},
    "random_forest": {"n_trees": 101, "max_depth": 6, "min_leaf": 1, "features_per_split": 0,
                      "seed": 0},
    "boosted_trees": {"n_rounds": 100, "max_depth": 2, "shrinkage": 0.3, "l2_leaf_lambda": 1.0,
                      "min_leaf": 1},
}

_ESTIMATORS = {
    "knn": KnnClassifier,
    "logistic": LogisticRegression,
    "linear_svm": LinearSvm,
    "random_forest": RandomForest,
    "boosted_trees": BoostedTrees,
}

# display names for reports
KIND_TITLES = {
    "knn": "K-Nearest Neighbour",
    "logistic": "Logistic Regression",
    "linear_svm": "Support Vector Machine",
    "random_forest": "Random Forest",
    "boosted_trees": "Boosted Trees",
}


def _coerce(default, raw):
    if isinstance(default, str):
        return str(raw)
    if isinstance(default, int) and not isinstance(default, bool):
        val = float(raw)
        if val != int(val):
            raise InputError(f"expected an integer, got {raw!r}")
        return int(val)
    return float(raw)


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise InputError(f"unknown model kind {self.kind!r}; choose from {', '.join(KINDS)}")
        defaults = DEFAULTS[self.kind]
        unknown = set(self.params) - set(defaults)
        if unknown:
            raise InputError(f"unknown {self.kind} hyperparameter(s): {', '.join(sorted(unknown))}")
        full = {name: _coerce(default, self.params.get(name, default))
                for name, default in defaults.items()}
        object.__setattr__(self, "params", full)
        if self.kind == "knn":
            if full["k"] < 1 or full["k"] % 2 == 0:
                raise InputError("knn k must be a positive odd integer")
        self.build()  # validates ranges

    def build(self):
        return _ESTIMATORS[self.kind](**self.params)

    @classmethod
    def parse(cls, text: str) -> "ModelSpec":
        """``"knn:k=7,metric=manhattan"`` or just ``"logistic"``."""
        kind, _, rest = text.strip().partition(":")
        params = {}
        for item in filter(None, (p.strip() for p in rest.split(","))):
            key, sep, val = item.partition("=")
            if not sep:
                raise InputError(f"expected key=value in model spec, got {item!r}")
            params[key.strip()] = val.strip()
        return cls(kind.strip(), params)

    def label(self) -> str:
        inner = ",".join(f"{k}={v}" for k, v in self.params.items())
        return f"{self.kind}:{inner}"

    def __hash__(self) -> int:
        return hash(self.label())


def default_knn_grid() -> list[ModelSpec]:
    return [ModelSpec("knn", {"k": k, "metric": m, "weighting": w})
            for k in range(1, 22, 2)
            for m in ("euclidean", "manhattan")
            for w in ("uniform", "inverse_distance")]


@dataclass
class Model:
    spec: ModelSpec
    estimator: object
    feature_names: tuple[str, ...]
    scaler: Scaler
    meta: dict = field(default_factory=dict)


def fit(spec: ModelSpec, train: Dataset, features=None) -> Model:
    """Fit ``spec`` on ``train`` restricted to ``features`` (all columns by default).

    The scaler is fitted here on the training rows and travels with the model.
    """
    if train.y is None:
        raise InputError("training needs a labeled dataset")
    if len(np.unique(train.y)) < 2:
        raise InputError("training set contains a single class")
    sub = train.select(features) if features is not None else train
    scaler = fit_scaler(sub)
    est = spec.build()
    est.fit(scaler.transform(sub.X), sub.y)
    return Model(spec, est, sub.feature_names, scaler)


def _matrix(model: Model, data) -> np.ndarray:
    if isinstance(data, Dataset):
        return data.select(model.feature_names).X
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != len(model.feature_names):
        raise InputError(f"expected {len(model.feature_names)} features, got {X.shape[1]}")
    return X


def predict(model: Model, data) -> tuple[np.ndarray, np.ndarray]:
    """Labels and scores in [0, 1] for raw (unscaled) rows or a Dataset."""
    X = model.scaler.transform(_matrix(model, data))
    return model.estimator.predict_with_score(X)


# --- GLM1 -------------------------------------------------------------------

def save_model(model: Model) -> bytes:
    kv = {f"param.{k}": v for k, v in model.spec.params.items()}
    kv["features"] = ",".join(model.feature_names)
    for k, v in model.meta.items():
        kv[f"meta.{k}"] = v
    block = "".join(f"{k}={v}\n" for k, v in kv.items()).encode()
    arrays = {f"state.{k}": np.asarray(v, dtype=float) for k, v in model.estimator.state().items()}
    arrays["scaler.mean"] = np.asarray(model.scaler.mean, dtype=float)
    arrays["scaler.std"] = np.asarray(model.scaler.std, dtype=float)
    kind = model.spec.kind.encode()

    out = bytearray(MODEL_MAGIC)
    out += struct.pack("<H", MODEL_VERSION)
    out += struct.pack("<H", len(kind)) + kind
    out += struct.pack("<I", len(block)) + block
    out += struct.pack("<I", len(arrays))
    for name, arr in arrays.items():
        nb = name.encode()
        out += struct.pack("<H", len(nb)) + nb
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.astype("<f8").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    return bytes(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ModelFormatError("model file ends early")
        out = self.buf[self.pos: self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_model(data: bytes) -> Model:
    data = bytes(data)
    if data[:4] != MODEL_MAGIC:
        raise ModelFormatError("not a GLM1 model file")
    if len(data) >= 6:
        (version,) = struct.unpack("<H", data[4:6])
        if version != MODEL_VERSION:
            raise VersionMismatch(f"model format version {version}, this build reads {MODEL_VERSION}")
    if len(data) < 10 or zlib.crc32(data[:-4]) & 0xFFFFFFFF != struct.unpack("<I", data[-4:])[0]:
        raise ChecksumError("model file checksum mismatch (truncated or corrupted)")
    r = _Reader(data[:-4])
    r.take(6)
    (klen,) = r.unpack("<H")
    kind = r.take(klen).decode()
    (blen,) = r.unpack("<I")
    kv = {}
    for line in r.take(blen).decode().splitlines():
        key, _, val = line.partition("=")
        kv[key] = val
    (count,) = r.unpack("<I")
    arrays = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode()
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I") if ndim else ()
        size = int(np.prod(shape)) if shape else 1
        arrays[name] = np.frombuffer(r.take(8 * size), dtype="<f8").reshape(shape).astype(float)
    params = {k[len("param."):]: v for k, v in kv.items() if k.startswith("param.")}
    spec = ModelSpec(kind, params)
    features = tuple(f for f in kv.get("features", "").split(",") if f)
    state = {k[len("state."):]: v for k, v in arrays.items() if k.startswith("state.")}
    est = spec.build().load_state(state)
    scaler = Scaler(features, arrays["scaler.mean"], arrays["scaler.std"])
    meta = {k[len("meta."):]: v for k, v in kv.items() if k.startswith("meta.")}
    if len(scaler.mean) != len(features):
        raise SchemaMismatch("features", "scaler width does not match feature list")
    return Model(spec, est, features, scaler, meta)


def write_model(path, model: Model) -> None:
    with open(path, "wb") as fh:
        fh.write(save_model(model))


def read_model(path) -> Model:
    with open(path, "rb") as fh:
        return load_model(fh.read())
