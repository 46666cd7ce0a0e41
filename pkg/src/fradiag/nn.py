"""Dense rectifier networks with a softmax head, trained by backprop and Adam.

Weights of learnable layer ``i`` have shape ``(w_i, w_{i-1})`` and a batch is a
row matrix, so a layer computes ``h @ W.T + b``. Inputs enter the first layer as
``(x - input_offset) / input_scale``, two fixed constants stored with the model.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Connection
from .errors import DomainError, FormatError, NumericalError

DEFAULT_INPUT_SCALE = 50.0
# a fixed mid-range dB level; raw dB rows are all negative, and subtracting a
# common level keeps Adam's first-layer steps from all pushing one way
DEFAULT_INPUT_OFFSET = -45.0
DEFAULT_DROPOUT_RATE = 0.5
PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class ModelSpec:
    """Layer widths ``[w0, w1, ..., C]`` plus dropout placement.

    ``dropout_after`` holds 1-based indices of learnable layers whose rectified
    output is dropped during training; the output layer cannot carry dropout.
    """

    widths: tuple[int, ...]
    dropout_after: frozenset[int] = frozenset()
    dropout_rate: float = DEFAULT_DROPOUT_RATE
    input_scale: float = DEFAULT_INPUT_SCALE
    name: str = "custom"
    input_offset: float = DEFAULT_INPUT_OFFSET

    def __post_init__(self) -> None:
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "dropout_after", frozenset(int(i) for i in self.dropout_after))
        if len(widths) < 2:
            raise DomainError("a model needs an input width and an output width")
        if min(widths) < 1:
            raise DomainError("all layer widths must be at least 1")
        if any(not 1 <= i < self.depth for i in self.dropout_after):
            raise DomainError(f"dropout layers must lie in [1, {self.depth})")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise DomainError("dropout rate must lie in [0, 1)")
        if not self.input_scale > 0:
            raise DomainError("input scale must be positive")
        if not np.isfinite(self.input_offset):
            raise DomainError("input offset must be finite")

    @property
    def depth(self) -> int:
        """Number of learnable layers."""
        return len(self.widths) - 1

    @property
    def input_width(self) -> int:
        return self.widths[0]

    @property
    def output_width(self) -> int:
        return self.widths[-1]

    def with_output(self, C: int) -> ModelSpec:
        return ModelSpec(
            self.widths[:-1] + (C,), self.dropout_after, self.dropout_rate, self.input_scale, self.name, self.input_offset
        )


def param_count(spec: ModelSpec) -> int:
    w = spec.widths
    return sum(w[i - 1] * w[i] + w[i] for i in range(1, len(w)))


@dataclass
class ModelParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, (W, b) in enumerate(zip(self.weights, self.biases), start=1):
            out += [(f"W{i}", W), (f"b{i}", b)]
        return out

    @property
    def dtype(self) -> np.dtype:
        return self.weights[0].dtype

    def copy(self) -> ModelParams:
        return ModelParams([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def astype(self, dtype) -> ModelParams:
        return ModelParams([W.astype(dtype) for W in self.weights], [b.astype(dtype) for b in self.biases])

    def check(self, spec: ModelSpec) -> None:
        if len(self.weights) != spec.depth or len(self.biases) != spec.depth:
            raise DomainError(f"parameters hold {len(self.weights)} layers, spec has {spec.depth}")
        for i in range(1, spec.depth + 1):
            if self.weights[i - 1].shape != (spec.widths[i], spec.widths[i - 1]):
                raise DomainError(f"W{i} has shape {self.weights[i - 1].shape}")
            if self.biases[i - 1].shape != (spec.widths[i],):
                raise DomainError(f"b{i} has shape {self.biases[i - 1].shape}")

    def equals(self, other: ModelParams) -> bool:
        return len(self.weights) == len(other.weights) and all(
            np.array_equal(a, b) and a.dtype == b.dtype for (_, a), (_, b) in zip(self.tensors(), other.tensors())
        )


def init(spec: ModelSpec, seed: int, dtype=np.float32) -> ModelParams:
    """He-normal weights (variance 2 / fan_in) and zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for i in range(1, spec.depth + 1):
        fan_in, fan_out = spec.widths[i - 1], spec.widths[i]
        W = rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in)
        weights.append(W.astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return ModelParams(weights, biases)


def softmax(v: np.ndarray) -> np.ndarray:
    """Max-shifted softmax along the last axis."""
    v = np.asarray(v)
    if v.size == 0 or v.shape[-1] == 0:
        raise DomainError("softmax of an empty vector")
    e = np.exp(v - v.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _as_targets(targets: np.ndarray, C: int, dtype) -> np.ndarray:
    targets = np.asarray(targets)
    if targets.ndim == 1:
        if np.any(targets < 0) or np.any(targets >= C):
            raise DomainError(f"class index outside [0, {C})")
        onehot = np.zeros((targets.size, C), dtype=dtype)
        onehot[np.arange(targets.size), targets] = 1
        return onehot
    return targets.astype(dtype, copy=False)


def cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    """Mean over the batch of -sum_j y_j log p_j; ``targets`` are one-hot rows or indices."""
    probs = np.atleast_2d(probs)
    if probs.shape[0] == 0:
        raise DomainError("cross entropy of an empty batch")
    y = _as_targets(targets, probs.shape[1], probs.dtype)
    if y.shape != probs.shape:
        raise DomainError(f"targets {y.shape} do not match predictions {probs.shape}")
    logp = np.log(np.maximum(probs, PROB_CLAMP))
    return float(-(y * logp).sum() / probs.shape[0])


@dataclass
class Cache:
    """Intermediate values of one forward pass, consumed by :func:`backward`."""

    inputs: list[np.ndarray]  # input to each learnable layer
    pre: list[np.ndarray]  # pre-activation of each hidden layer
    masks: dict[int, np.ndarray] = field(default_factory=dict)
    probs: np.ndarray | None = None


def forward(
    params: ModelParams,
    spec: ModelSpec,
    x: np.ndarray,
    rng: np.random.Generator | None = None,
) -> tuple[Cache, np.ndarray]:
    """Class probabilities for a sample or a batch of rows.

    With ``rng`` given the pass runs in training mode: units of the designated
    layers are zeroed with probability ``dropout_rate`` and survivors scaled by
    ``1 / (1 - rate)``. Without it (evaluation) no unit is dropped.
    """
    params.check(spec)
    x = np.asarray(x)
    single = x.ndim == 1
    h = np.atleast_2d(x)
    if h.shape[1] != spec.input_width:
        raise DomainError(f"input width {h.shape[1]} does not match spec {spec.input_width}")
    if not np.all(np.isfinite(h)):
        raise DomainError("input contains non-finite values")
    t = params.dtype.type
    h = (h.astype(params.dtype, copy=False) - t(spec.input_offset)) / t(spec.input_scale)
    cache = Cache(inputs=[], pre=[])
    keep = 1.0 - spec.dropout_rate
    for i in range(1, spec.depth + 1):
        W, b = params.weights[i - 1], params.biases[i - 1]
        cache.inputs.append(h)
        z = h @ W.T + b
        if i == spec.depth:
            probs = softmax(z)
            break
        cache.pre.append(z)
        h = np.maximum(z, 0)
        if rng is not None and i in spec.dropout_after and spec.dropout_rate > 0:
            mask = (rng.random(h.shape) < keep).astype(h.dtype) / h.dtype.type(keep)
            cache.masks[i] = mask
            h = h * mask
    cache.probs = probs
    return cache, probs[0] if single else probs


def backward(params: ModelParams, spec: ModelSpec, cache: Cache, targets: np.ndarray) -> ModelParams:
    """Gradient of the mean cross entropy with respect to every weight and bias."""
    params.check(spec)
    if cache.probs is None or len(cache.inputs) != spec.depth:
        raise DomainError("cache does not belong to this model")
    probs = cache.probs
    y = _as_targets(targets, spec.output_width, probs.dtype)
    if y.shape != probs.shape:
        raise DomainError(f"targets {y.shape} do not match predictions {probs.shape}")
    delta = (probs - y) / probs.dtype.type(probs.shape[0])
    dW: list[np.ndarray] = [None] * spec.depth
    db: list[np.ndarray] = [None] * spec.depth
    for i in range(spec.depth, 0, -1):
        dW[i - 1] = delta.T @ cache.inputs[i - 1]
        db[i - 1] = delta.sum(axis=0)
        if i == 1:
            break
        delta = delta @ params.weights[i - 1]
        if i - 1 in cache.masks:
            delta = delta * cache.masks[i - 1]
        delta = delta * (cache.pre[i - 2] > 0)
    return ModelParams(dW, db)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ModelParams, lr: float = 1e-4, **hyper) -> AdamState:
        zeros = [np.zeros_like(a) for _, a in params.tensors()]
        return cls(zeros, [z.copy() for z in zeros], 0, lr, **hyper)


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update, applied to ``params`` in place.

    Buffers are updated in place, since on wide layers the step is bound by
    memory traffic rather than arithmetic.
    """
    named = grads.tensors()
    if state.t < 0:
        raise DomainError("Adam step counter must be non-negative")
    targets = [a for _, a in params.tensors()]
    for theta, (_, g) in zip(targets, named):
        if g.shape != theta.shape:
            raise DomainError("gradient and parameter shapes disagree")
    state.t += 1
    root_c2 = np.sqrt(1.0 - state.beta2**state.t)
    # lr * (m / c1) / (sqrt(v / c2) + eps), with sqrt(c2) moved to the numerator
    step = state.lr / (1.0 - state.beta1**state.t) * root_c2
    eps = state.eps * root_c2
    for theta, (name, g), m, v in zip(targets, named, state.m, state.v):
        buf = np.empty_like(v)
        with np.errstate(over="ignore", invalid="ignore"):
            m *= state.beta1
            np.multiply(g, 1.0 - state.beta1, out=buf)
            m += buf
            v *= state.beta2
            np.square(g, out=buf)
            buf *= 1.0 - state.beta2
            v += buf
            # v is non-negative, so its sum is finite exactly when every entry is
            finite = np.isfinite(v.sum())
        if not finite:
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient in {name}")
            raise NumericalError(f"second moment of {name} overflowed")
        np.sqrt(v, out=buf)
        buf += eps
        np.divide(m, buf, out=buf)
        buf *= step
        theta -= buf.astype(theta.dtype, copy=False)
    return params, state


def predict_proba(params: ModelParams, spec: ModelSpec, X: np.ndarray, batch: int = 1024) -> np.ndarray:
    X = np.atleast_2d(X)
    out = [forward(params, spec, X[a : a + batch])[1] for a in range(0, X.shape[0], batch)]
    return np.concatenate(out) if out else np.empty((0, spec.output_width))


def predict(params: ModelParams, spec: ModelSpec, X: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties go to the lower index."""
    return np.argmax(predict_proba(params, spec, X), axis=1)


# model files

MODEL_MAGIC = b"FRAM"
MODEL_VERSION = 1
_NO_CONNECTION = 255


@dataclass
class SavedModel:
    params: ModelParams
    spec: ModelSpec
    classes: tuple[str, ...]
    connection: Connection | None = None


def _pack_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def model_header(spec: ModelSpec, classes: Sequence[str], connection: Connection | None) -> bytes:
    parts = [MODEL_MAGIC, struct.pack("<H", MODEL_VERSION), _pack_str(spec.name)]
    parts.append(struct.pack(f"<H{len(spec.widths)}I", len(spec.widths), *spec.widths))
    drop = sorted(spec.dropout_after)
    parts.append(struct.pack(f"<H{len(drop)}Hd", len(drop), *drop, spec.dropout_rate))
    conn = _NO_CONNECTION if connection is None else int(connection)
    parts.append(struct.pack("<ddB", spec.input_scale, spec.input_offset, conn))
    parts.append(struct.pack("<H", len(classes)))
    parts += [_pack_str(c) for c in classes]
    return b"".join(parts)


def save_model(
    params: ModelParams,
    spec: ModelSpec,
    classes: Sequence[str],
    path: str | Path,
    connection: Connection | None = None,
) -> None:
    params.check(spec)
    if len(classes) != spec.output_width:
        raise DomainError(f"{len(classes)} class names for an output width of {spec.output_width}")
    with open(path, "wb") as fh:
        fh.write(model_header(spec, classes, connection))
        for _, tensor in params.tensors():
            fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


class _Reader:
    def __init__(self, raw: bytes) -> None:
        self.raw = raw
        self.pos = 0

    def take(self, fmt: str) -> tuple:
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.raw):
            raise FormatError("model file truncated", self.pos)
        out = struct.unpack_from(fmt, self.raw, self.pos)
        self.pos += size
        return out

    def string(self) -> str:
        (n,) = self.take("<H")
        start = self.pos
        (raw,) = self.take(f"<{n}s")
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("invalid UTF-8 string", start) from None


def load_model(path: str | Path, expected_classes: Sequence[str] | None = None) -> SavedModel:
    """Read a model file; ``expected_classes`` must equal the stored class list if given."""
    rd = _Reader(Path(path).read_bytes())
    (magic,) = rd.take("<4s")
    if magic != MODEL_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MODEL_MAGIC!r}", 0)
    (version,) = rd.take("<H")
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}", 4)
    name = rd.string()
    (nw,) = rd.take("<H")
    widths = rd.take(f"<{nw}I")
    (nd,) = rd.take("<H")
    drop = rd.take(f"<{nd}H")
    (rate,) = rd.take("<d")
    scale, offset, conn = rd.take("<ddB")
    (nc,) = rd.take("<H")
    classes = tuple(rd.string() for _ in range(nc))
    try:
        spec = ModelSpec(tuple(widths), frozenset(drop), rate, scale, name, offset)
    except DomainError as exc:
        raise FormatError(f"invalid architecture header: {exc}", 6) from None
    if nc != spec.output_width:
        raise FormatError(f"{nc} class names for an output width of {spec.output_width}", rd.pos)
    if expected_classes is not None and tuple(expected_classes) != classes:
        raise FormatError(f"model classes {classes} differ from the requested {tuple(expected_classes)}", rd.pos)
    connection = None if conn == _NO_CONNECTION else Connection(conn)
    weights, biases = [], []
    for i in range(1, spec.depth + 1):
        for shape, bucket in (((widths[i], widths[i - 1]), weights), ((widths[i],), biases)):
            count = int(np.prod(shape))
            if rd.pos + 4 * count > len(rd.raw):
                raise FormatError("model tensors truncated", rd.pos)
            arr = np.frombuffer(rd.raw, dtype="<f4", count=count, offset=rd.pos).reshape(shape)
            bucket.append(arr.astype(np.float32))
            rd.pos += 4 * count
    if rd.pos != len(rd.raw):
        raise FormatError("trailing bytes after model tensors", rd.pos)
    return SavedModel(ModelParams(weights, biases), spec, classes, connection)
