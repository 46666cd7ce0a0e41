"""Confusion matrices, accuracy, macro F1, and curve similarity indices."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import FaultLabel, FRASweep, LabeledDataset
from .errors import DomainError


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts with rows indexed by true class and columns by predicted class."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise DomainError("a confusion matrix must be square")
        if np.any(counts < 0):
            raise DomainError("confusion counts must be non-negative")
        object.__setattr__(self, "counts", counts.astype(np.int64))

    @property
    def C(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def tp(self) -> np.ndarray:
        return np.diag(self.counts)

    def fp(self) -> np.ndarray:
        return self.counts.sum(axis=0) - self.tp()

    def fn(self) -> np.ndarray:
        return self.counts.sum(axis=1) - self.tp()

    def tn(self) -> np.ndarray:
        return self.total - self.tp() - self.fp() - self.fn()

    def __add__(self, other: ConfusionMatrix) -> ConfusionMatrix:
        return ConfusionMatrix(self.counts + other.counts)

    def to_csv(self, classes: Sequence[str] | None = None) -> str:
        classes = list(classes) if classes is not None else [str(i) for i in range(self.C)]
        lines = ["true\\pred," + ",".join(classes)]
        lines += [f"{name}," + ",".join(str(int(v)) for v in row) for name, row in zip(classes, self.counts)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> tuple[ConfusionMatrix, list[str]]:
        rows = [line.split(",") for line in text.strip().splitlines()]
        if len(rows) < 2:
            raise DomainError("confusion CSV needs a header and at least one row")
        classes = rows[0][1:]
        counts = np.array([[int(v) for v in row[1:]] for row in rows[1:]])
        return cls(counts), classes


def confusion(preds: Sequence[int] | np.ndarray, truths: Sequence[int] | np.ndarray, C: int) -> ConfusionMatrix:
    preds, truths = np.asarray(preds, dtype=np.intp), np.asarray(truths, dtype=np.intp)
    if preds.shape != truths.shape:
        raise DomainError("predictions and truths must have equal length")
    for arr in (preds, truths):
        if np.any(arr < 0) or np.any(arr >= C):
            raise DomainError(f"class index outside [0, {C})")
    counts = np.zeros((C, C), dtype=np.int64)
    np.add.at(counts, (truths, preds), 1)
    return ConfusionMatrix(counts)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise DomainError("accuracy of an empty confusion matrix")
    return float(np.trace(cm.counts)) / cm.total


def per_class_f1(cm: ConfusionMatrix) -> np.ndarray:
    """One-vs-rest F1; a class with no predictions or no true samples scores 0."""
    tp, fp, fn = cm.tp().astype(float), cm.fp().astype(float), cm.fn().astype(float)
    f1 = np.zeros(cm.C)
    ok = (tp + fp > 0) & (tp + fn > 0) & (tp > 0)
    precision = tp[ok] / (tp[ok] + fp[ok])
    recall = tp[ok] / (tp[ok] + fn[ok])
    f1[ok] = 2 * precision * recall / (precision + recall)
    return f1


def macro_f1(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise DomainError("F1 of an empty confusion matrix")
    return float(per_class_f1(cm).sum() / cm.C)


def cc(X: np.ndarray, Y: np.ndarray) -> float:
    """Pearson correlation coefficient of two curves."""
    X, Y = np.asarray(X, dtype=np.float64), np.asarray(Y, dtype=np.float64)
    if X.shape != Y.shape or X.ndim != 1 or X.size < 2:
        raise DomainError("CC needs two vectors of equal length >= 2")
    dx, dy = X - X.mean(), Y - Y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise DomainError("CC is undefined for a constant curve")
    return float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))


def ed(X: np.ndarray, Y: np.ndarray) -> float:
    """Euclidean distance between two curves."""
    X, Y = np.asarray(X, dtype=np.float64), np.asarray(Y, dtype=np.float64)
    if X.shape != Y.shape:
        raise DomainError("ED needs two vectors of equal length")
    d = X - Y
    return float(np.sqrt(d @ d))


def mean_curve(samples: Sequence[FRASweep]) -> FRASweep:
    if len(samples) == 0:
        raise DomainError("mean of no curves")
    grid = samples[0].grid
    if any(s.grid != grid for s in samples):
        raise DomainError("curves lie on different grids")
    return FRASweep(np.mean([np.asarray(s.values, dtype=np.float64) for s in samples], axis=0), grid)


@dataclass(frozen=True, eq=False)
class CurveStats:
    """CC and ED of each selected sample against a reference curve, plus per-group means."""

    reference: FRASweep
    keys: np.ndarray  # group key of each point, e.g. fault degree
    cc: np.ndarray
    ed: np.ndarray
    mean_curves: dict[int, FRASweep]

    def __len__(self) -> int:
        return self.cc.size


def normal_reference(ds: LabeledDataset) -> FRASweep:
    normal = np.flatnonzero(ds.fault_types == 0)
    if normal.size == 0:
        raise DomainError("dataset has no Normal samples to average")
    return mean_curve([ds.sweep(i) for i in normal])


def cc_ed_map(
    ds: LabeledDataset,
    reference: FRASweep | None = None,
    select: Callable[[FaultLabel], bool] | None = None,
    key: Callable[[FaultLabel], int] = lambda lab: lab.degree,
) -> CurveStats:
    """One (CC, ED) point per selected sample, grouped by ``key`` (fault degree by default).

    The reference defaults to the mean Normal curve of ``ds``.
    """
    reference = normal_reference(ds) if reference is None else reference
    if reference.grid != ds.grid:
        raise DomainError("reference curve lies on a different grid")
    rows = [i for i in range(len(ds)) if select is None or select(ds.label(i))]
    keys = np.array([key(ds.label(i)) for i in rows], dtype=np.intp)
    ccs = np.array([cc(ds.values[i], reference.values) for i in rows])
    eds = np.array([ed(ds.values[i], reference.values) for i in rows])
    means = {
        int(k): mean_curve([ds.sweep(i) for i, kk in zip(rows, keys) if kk == k]) for k in np.unique(keys)
    }
    return CurveStats(reference, keys, ccs, eds, means)
