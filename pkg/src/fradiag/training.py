"""Mini-batch Adam training and k-fold cross-validation."""

from __future__ import annotations

import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .data import LabeledDataset, LabelScheme, stratified_folds
from .errors import DomainError, NumericalError
from .metrics import ConfusionMatrix, accuracy, confusion, macro_f1
from .nn import AdamState, ModelParams, ModelSpec, adam_step, backward, cross_entropy, forward, init, predict, predict_proba

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 20
    min_delta: float = 1e-5
    init_seed: int = 0
    shuffle_seed: int = 1
    dropout_seed: int = 2
    restore_best: bool = True

    def __post_init__(self) -> None:
        if self.lr <= 0 or self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise DomainError("learning rate, batch size, epochs and patience must be positive")

    @classmethod
    def seeded(cls, seed: int, **overrides) -> TrainConfig:
        """Config whose three seeds all derive from one integer."""
        s = np.random.SeedSequence(seed).generate_state(3, np.uint32)
        return cls(init_seed=int(s[0]), shuffle_seed=int(s[1]), dropout_seed=int(s[2]), **overrides)

    def for_fold(self, fold: int) -> TrainConfig:
        s = np.random.SeedSequence([self.init_seed, self.shuffle_seed, self.dropout_seed, fold])
        a, b, c = (int(v) for v in s.generate_state(3, np.uint32))
        return replace(self, init_seed=a, shuffle_seed=b, dropout_seed=c)


@dataclass
class TrainResult:
    params: ModelParams
    history: list[float]

    @property
    def epochs(self) -> int:
        return len(self.history)


def train_arrays(spec: ModelSpec, X: np.ndarray, y: np.ndarray, cfg: TrainConfig, dtype=np.float32) -> TrainResult:
    """Train a fresh model on rows ``X`` with class indices ``y``.

    Each epoch visits the samples in a fresh seeded order. Training stops after
    ``max_epochs`` or once the epoch loss has not improved by ``min_delta`` for
    ``patience`` epochs. With ``restore_best`` the returned weights are the
    end-of-epoch snapshot with the lowest full-pass training loss, which guards
    against a late Adam step that happens to overshoot.
    """
    X = np.asarray(X)
    y = np.asarray(y, dtype=np.intp)
    n = X.shape[0]
    if n == 0:
        raise DomainError("cannot train on an empty dataset")
    if cfg.batch_size > n:
        raise DomainError(f"batch size {cfg.batch_size} exceeds dataset size {n}")
    missing = set(range(spec.output_width)) - set(np.unique(y).tolist())
    if missing:
        warnings.warn(f"classes {sorted(missing)} have no training samples", stacklevel=2)
    params = init(spec, cfg.init_seed, dtype)
    state = AdamState.for_params(params, lr=cfg.lr)
    shuffle_rng = np.random.default_rng(cfg.shuffle_seed)
    dropout_rng = np.random.default_rng(cfg.dropout_seed)
    X = X.astype(dtype, copy=False)
    history: list[float] = []
    best, stale = np.inf, 0
    best_fit, snapshot = np.inf, None
    for epoch in range(cfg.max_epochs):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for a in range(0, n, cfg.batch_size):
            idx = order[a : a + cfg.batch_size]
            cache, probs = forward(params, spec, X[idx], rng=dropout_rng)
            total += cross_entropy(probs, y[idx]) * idx.size
            grads = backward(params, spec, cache, y[idx])
            try:
                adam_step(params, grads, state)
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch}: {exc}") from None
        loss = total / n
        if not np.isfinite(loss):
            raise NumericalError(f"training loss diverged at epoch {epoch}")
        history.append(loss)
        if cfg.restore_best:
            fit = cross_entropy(predict_proba(params, spec, X), y)
            if fit < best_fit:
                best_fit, snapshot = fit, params.copy()
        if best - loss > cfg.min_delta:
            best, stale = loss, 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return TrainResult(snapshot if snapshot is not None else params, history)


def train(spec: ModelSpec, ds: LabeledDataset, scheme: LabelScheme, cfg: TrainConfig) -> TrainResult:
    if spec.output_width != scheme.C:
        raise DomainError(f"model outputs {spec.output_width} classes, scheme has {scheme.C}")
    return train_arrays(spec, ds.values, scheme.encode_dataset(ds), cfg)


@dataclass
class FoldResult:
    fold: int
    acc: float
    f1: float
    cm: ConfusionMatrix
    n_train: int
    n_test: int
    epochs: int


@dataclass
class CVReport:
    classes: tuple[str, ...]
    folds: list[FoldResult]
    fold_of: np.ndarray
    predictions: np.ndarray
    wall_clock: float = 0.0
    meta: dict[str, str] = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.folds)

    @property
    def accs(self) -> np.ndarray:
        return np.array([f.acc for f in self.folds])

    @property
    def f1s(self) -> np.ndarray:
        return np.array([f.f1 for f in self.folds])

    @property
    def mean_acc(self) -> float:
        return float(self.accs.mean())

    @property
    def mean_f1(self) -> float:
        return float(self.f1s.mean())

    @staticmethod
    def _spread(values: np.ndarray) -> tuple[float, float]:
        std = float(values.std(ddof=1)) if values.size > 1 else 0.0
        return std, std / np.sqrt(values.size)

    @property
    def pooled(self) -> ConfusionMatrix:
        total = self.folds[0].cm
        for f in self.folds[1:]:
            total = total + f.cm
        return total

    def to_text(self) -> str:
        acc_std, acc_sem = self._spread(self.accs)
        f1_std, f1_sem = self._spread(self.f1s)
        lines = [f"{key} = {value}" for key, value in self.meta.items()]
        lines += [
            f"k = {self.k}",
            f"classes = {','.join(self.classes)}",
            f"acc_mean = {self.mean_acc:.6f}",
            f"acc_std = {acc_std:.6f}",
            f"acc_sem = {acc_sem:.6f}",
            f"f1_mean = {self.mean_f1:.6f}",
            f"f1_std = {f1_std:.6f}",
            f"f1_sem = {f1_sem:.6f}",
            f"pooled_acc = {accuracy(self.pooled):.6f}",
            f"pooled_f1 = {macro_f1(self.pooled):.6f}",
        ]
        for f in self.folds:
            lines.append(f"fold_{f.fold:02d}_acc = {f.acc:.6f}")
            lines.append(f"fold_{f.fold:02d}_f1 = {f.f1:.6f}")
            lines.append(f"fold_{f.fold:02d}_epochs = {f.epochs}")
        return "\n".join(lines) + "\n"

    def write(self, directory: str | Path) -> None:
        """``report.txt`` plus one confusion CSV per fold and a pooled one."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(self.to_text())
        for f in self.folds:
            (out / f"fold_{f.fold:02d}_confusion.csv").write_text(f.cm.to_csv(self.classes))
        (out / "confusion.csv").write_text(self.pooled.to_csv(self.classes))


def _run_fold(args) -> tuple[FoldResult, np.ndarray]:
    spec, X, y, train_idx, test_idx, cfg, fold = args
    result = train_arrays(spec, X[train_idx], y[train_idx], cfg.for_fold(fold))
    preds = predict(result.params, spec, X[test_idx])
    cm = confusion(preds, y[test_idx], spec.output_width)
    fold_result = FoldResult(fold, accuracy(cm), macro_f1(cm), cm, train_idx.size, test_idx.size, result.epochs)
    log.info("fold %d: acc %.4f f1 %.4f after %d epochs", fold, fold_result.acc, fold_result.f1, result.epochs)
    return fold_result, preds


def cross_validate(
    builder: Callable[[int], ModelSpec],
    ds: LabeledDataset,
    scheme: LabelScheme,
    k: int = 10,
    cfg: TrainConfig | None = None,
    fold_seed: int = 0,
    jobs: int = 1,
) -> CVReport:
    """Train ``k`` fresh models, each scored on its held-out stratified fold.

    ``builder`` maps the class count to a model spec.
    """
    cfg = cfg or TrainConfig()
    start = time.perf_counter()
    y = scheme.encode_dataset(ds)
    folds = stratified_folds(y, k, fold_seed)
    spec = builder(scheme.C)
    tasks = [(spec, ds.values, y, *folds.split(i), cfg, i) for i in range(k)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_fold, tasks))
    else:
        outcomes = [_run_fold(t) for t in tasks]
    predictions = np.empty(len(ds), dtype=np.intp)
    for (_, test_idx), (_, preds) in zip((folds.split(i) for i in range(k)), outcomes):
        predictions[test_idx] = preds
    report = CVReport(
        scheme.classes,
        [fr for fr, _ in outcomes],
        folds.fold_of,
        predictions,
        time.perf_counter() - start,
        {"model": spec.name, "widths": "-".join(map(str, spec.widths)), "samples": str(len(ds))},
    )
    log.info("cross-validation finished in %.1f s", report.wall_clock)
    return report
