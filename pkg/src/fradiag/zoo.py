"""The six FRA-Dia architectures and the extreme learning machine baseline."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .data import GRID_POINTS, LabeledDataset, LabelScheme
from .errors import DomainError
from .nn import DEFAULT_INPUT_OFFSET, DEFAULT_INPUT_SCALE, ModelSpec, param_count


class Architecture(enum.Enum):
    DIALIGHT = "FRA-Dialight"
    DIAGNOSER = "FRA-Diagnoser"
    DIAL = "FRA-DiaL"
    DIAL_D = "FRA-DiaL-D"
    DIAXL = "FRA-DiaXL"
    DIAXL_D = "FRA-DiaXL-D"

    @classmethod
    def parse(cls, text: str | Architecture) -> Architecture:
        if isinstance(text, Architecture):
            return text
        key = text.strip().lower()
        for arch in cls:
            if arch.value.lower() == key or arch.name.lower() == key:
                return arch
        names = ", ".join(a.value for a in cls)
        raise DomainError(f"unknown architecture {text!r}; choose one of {names}")


# hidden widths at scale 1, chosen so parameter totals land near the published ones
HIDDEN_WIDTHS = {
    Architecture.DIALIGHT: (900, 220),
    Architecture.DIAGNOSER: (2100,) * 4,
    Architecture.DIAL: (3800,) * 6,
    Architecture.DIAL_D: (3800,) * 6,
    Architecture.DIAXL: (1900,) * 9,
    Architecture.DIAXL_D: (1900,) * 9,
}

DROPOUT_AFTER = {
    Architecture.DIAL_D: frozenset({4}),
    Architecture.DIAXL_D: frozenset({2, 4}),
}

# published totals, in parameters, for an output width of 5
PUBLISHED_PARAMS = {
    Architecture.DIALIGHT: 2_000_000,
    Architecture.DIAGNOSER: 18_000_000,
    Architecture.DIAL: 82_000_000,
    Architecture.DIAL_D: 82_000_000,
    Architecture.DIAXL: 32_000_000,
    Architecture.DIAXL_D: 32_000_000,
}


def build(
    name: str | Architecture,
    out_width: int,
    scale: float = 1.0,
    input_width: int = GRID_POINTS,
    input_scale: float = DEFAULT_INPUT_SCALE,
    input_offset: float = DEFAULT_INPUT_OFFSET,
) -> ModelSpec:
    """Architecture ``name`` with every hidden width multiplied by ``scale`` and rounded up."""
    arch = Architecture.parse(name)
    if out_width < 2:
        raise DomainError(f"output width must be at least 2, got {out_width}")
    if not 0.0 < scale <= 1.0:
        raise DomainError(f"scale must lie in (0, 1], got {scale}")
    # the tiny epsilon guards against 2100 * 0.1 landing a hair above 210
    hidden = tuple(math.ceil(w * scale - 1e-9) for w in HIDDEN_WIDTHS[arch])
    return ModelSpec(
        (input_width, *hidden, out_width),
        DROPOUT_AFTER.get(arch, frozenset()),
        input_scale=input_scale,
        name=arch.value,
        input_offset=input_offset,
    )


@dataclass(frozen=True, eq=False)
class ELMModel:
    """Single random rectifier layer with a ridge-regression readout."""

    hidden_weights: np.ndarray
    hidden_bias: np.ndarray
    readout: np.ndarray
    ridge: float
    input_scale: float = DEFAULT_INPUT_SCALE
    input_offset: float = DEFAULT_INPUT_OFFSET

    @property
    def hidden(self) -> int:
        return self.hidden_weights.shape[0]

    def features(self, X: np.ndarray) -> np.ndarray:
        X = (np.atleast_2d(np.asarray(X, dtype=np.float64)) - self.input_offset) / self.input_scale
        return np.maximum(X @ self.hidden_weights.T + self.hidden_bias, 0.0)


def elm_fit_arrays(
    X: np.ndarray,
    y: np.ndarray,
    C: int,
    hidden: int = 1000,
    ridge: float = 1e-3,
    seed: int = 0,
    input_scale: float = DEFAULT_INPUT_SCALE,
) -> ELMModel:
    if hidden < 1:
        raise DomainError("ELM needs at least one hidden unit")
    if not ridge > 0:
        raise DomainError("ridge coefficient must be positive")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((hidden, X.shape[1])) / np.sqrt(X.shape[1])
    b = rng.standard_normal(hidden)
    model = ELMModel(W, b, np.zeros((hidden, C)), ridge, input_scale)
    H = model.features(X)
    T = np.eye(C)[np.asarray(y)]
    beta = np.linalg.solve(H.T @ H + ridge * np.eye(hidden), H.T @ T)
    return ELMModel(W, b, beta, ridge, input_scale)


def elm_fit(
    ds: LabeledDataset,
    scheme: LabelScheme,
    hidden: int = 1000,
    ridge: float = 1e-3,
    seed: int = 0,
) -> ELMModel:
    return elm_fit_arrays(ds.values, scheme.encode_dataset(ds), scheme.C, hidden, ridge, seed)


def elm_predict(model: ELMModel, X: np.ndarray) -> np.ndarray:
    """Readout scores per class; argmax gives the predicted class."""
    return model.features(X) @ model.readout
