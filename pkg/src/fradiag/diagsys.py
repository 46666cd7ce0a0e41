"""Weighted fusion of two classifiers and the two-stage EE/CIW diagnosis pipeline."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import (
    Connection,
    FaultLabel,
    FaultType,
    FrequencyGrid,
    FRASweep,
    LabelScheme,
    SchemeKind,
)
from .errors import DomainError, FormatError
from .nn import ModelParams, ModelSpec, SavedModel, load_model, predict_proba

LAMBDA_GRID = tuple(i / 20 for i in range(21))


def fuse(p1: np.ndarray, p2: np.ndarray, lam: float) -> np.ndarray:
    """``lam * p1 + (1 - lam) * p2`` for single vectors or batches of rows."""
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"fusion weight must lie in [0, 1], got {lam}")
    p1, p2 = np.asarray(p1, dtype=np.float64), np.asarray(p2, dtype=np.float64)
    if p1.shape != p2.shape:
        raise DomainError(f"prediction shapes differ: {p1.shape} vs {p2.shape}")
    return lam * p1 + (1.0 - lam) * p2


def tune_lambda(p1: np.ndarray, p2: np.ndarray, truths: Sequence[int] | np.ndarray) -> tuple[float, float]:
    """Grid-search the fusion weight for validation accuracy.

    Among equally accurate weights the one nearest 0.5 wins, then the smaller.
    Returns ``(weight, accuracy)``.
    """
    truths = np.asarray(truths)
    if truths.size == 0:
        raise DomainError("tuning needs a non-empty validation set")
    scored = []
    for lam in LAMBDA_GRID:
        acc = float(np.mean(np.argmax(fuse(p1, p2, lam), axis=1) == truths))
        scored.append((-acc, abs(lam - 0.5), lam))
    neg_acc, _, lam = min(scored)
    return lam, -neg_acc


def scheme_from_classes(classes: Sequence[str]) -> LabelScheme:
    """Recover the label scheme whose class list is ``classes``."""
    classes = tuple(classes)
    if not classes or classes[0] != "Normal":
        raise DomainError(f"class list {classes} does not start with Normal")
    try:
        if all("-" not in c for c in classes[1:]):
            scheme = LabelScheme.type_scheme([FaultType.parse(c) for c in classes[1:]])
        else:
            types = []
            for c in classes[1:]:
                ft = FaultType.parse(c.split("-")[0])
                if ft not in types:
                    types.append(ft)
            kind = SchemeKind.DEGREE if len(types) == 1 else SchemeKind.JOINT
            scheme = LabelScheme(kind, tuple(types))
    except (DomainError, ValueError):
        raise DomainError(f"class list {classes} matches no label scheme") from None
    if scheme.classes != classes:
        raise DomainError(f"class list {classes} matches no label scheme")
    return scheme


@dataclass
class Classifier:
    """A trained network together with its class list and the connection it was trained on."""

    params: ModelParams
    spec: ModelSpec
    classes: tuple[str, ...]
    connection: Connection | None = None

    @classmethod
    def from_saved(cls, saved: SavedModel) -> Classifier:
        return cls(saved.params, saved.spec, saved.classes, saved.connection)

    @classmethod
    def load(cls, path: str | Path) -> Classifier:
        return cls.from_saved(load_model(path))

    @property
    def scheme(self) -> LabelScheme:
        return scheme_from_classes(self.classes)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return predict_proba(self.params, self.spec, X)


@dataclass(frozen=True, eq=False)
class Diagnosis:
    verdict: FaultLabel  # Normal means healthy
    stage1: np.ndarray | None
    stage2: np.ndarray | None
    conflict: bool = False
    stage1_classes: tuple[str, ...] = ()
    stage2_classes: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.healthy and self.stage2 is not None:
            raise DomainError("a healthy verdict never carries stage-2 probabilities")

    @property
    def healthy(self) -> bool:
        return self.verdict.fault_type is FaultType.NORMAL

    def to_text(self) -> str:
        lines = [f"verdict = {'Healthy' if self.healthy else self.verdict}"]
        if not self.healthy:
            lines += [f"fault_type = {self.verdict.fault_type.label}", f"degree = {self.verdict.degree}"]
        lines.append(f"conflict = {str(self.conflict).lower()}")
        for stage, probs, classes in (("stage1", self.stage1, self.stage1_classes), ("stage2", self.stage2, self.stage2_classes)):
            if probs is None:
                continue
            lines += [f"{stage}.p[{name}] = {p:.6f}" for name, p in zip(classes, probs)]
        return "\n".join(lines) + "\n"


def _check_stage(model: Classifier, connection: Connection, kinds: tuple[SchemeKind, ...], stage: str) -> LabelScheme:
    if model.connection is not connection:
        found = "none" if model.connection is None else model.connection.name
        raise DomainError(f"{stage} model was trained on {found} data, expected {connection.name}")
    scheme = model.scheme
    if scheme.kind not in kinds:
        raise DomainError(f"{stage} model uses a {scheme.kind.value} scheme")
    return scheme


def _check_grid(sweeps: Sequence[FRASweep], grid: FrequencyGrid) -> None:
    for s in sweeps:
        if s.grid != grid:
            raise DomainError(f"sweep grid {s.grid} differs from the pipeline grid {grid}")


def _stage2_verdict(probs: np.ndarray, scheme: LabelScheme) -> tuple[FaultLabel, bool]:
    best = int(np.argmax(probs))
    if best != 0:
        return scheme.decode(best), False
    return scheme.decode(1 + int(np.argmax(probs[1:]))), True


def diagnose_batch(
    stage1: Classifier,
    stage2: Classifier,
    ee: Sequence[FRASweep],
    ciw: Sequence[FRASweep],
    grid: FrequencyGrid | None = None,
) -> list[Diagnosis]:
    """Two-stage diagnosis of paired EE/CIW sweeps of the same windings.

    Stage 1 screens the EE sweep; only windings it flags as faulty reach stage
    2, whose type and degree call on the CIW sweep is final. When stage 2 then
    ranks Normal first, its best fault class is reported with the conflict flag.
    """
    if len(ee) != len(ciw):
        raise DomainError("EE and CIW sweeps must pair up")
    grid = grid or FrequencyGrid()
    _check_grid([*ee, *ciw], grid)
    _check_stage(stage1, Connection.EE, (SchemeKind.TYPE,), "stage-1")
    scheme2 = _check_stage(stage2, Connection.CIW, (SchemeKind.JOINT, SchemeKind.DEGREE), "stage-2")
    if not ee:
        return []
    p1 = stage1.predict_proba(np.stack([s.values for s in ee]))
    faulty = np.flatnonzero(np.argmax(p1, axis=1) != 0)
    p2 = {}
    if faulty.size:
        probs = stage2.predict_proba(np.stack([ciw[i].values for i in faulty]))
        p2 = dict(zip(faulty.tolist(), probs))
    out = []
    for i in range(len(ee)):
        if i not in p2:
            out.append(Diagnosis(FaultLabel(FaultType.NORMAL), p1[i], None, False, stage1.classes, stage2.classes))
            continue
        verdict, conflict = _stage2_verdict(p2[i], scheme2)
        out.append(Diagnosis(verdict, p1[i], p2[i], conflict, stage1.classes, stage2.classes))
    return out


def diagnose(
    stage1: Classifier,
    stage2: Classifier,
    ee: FRASweep,
    ciw: FRASweep,
    grid: FrequencyGrid | None = None,
) -> Diagnosis:
    return diagnose_batch(stage1, stage2, [ee], [ciw], grid)[0]


def diagnose_stage2_only(stage2: Classifier, ciw: FRASweep, grid: FrequencyGrid | None = None) -> Diagnosis:
    """Skip screening for a winding already known to be faulty."""
    _check_grid([ciw], grid or FrequencyGrid())
    scheme2 = _check_stage(stage2, Connection.CIW, (SchemeKind.JOINT, SchemeKind.DEGREE), "stage-2")
    probs = stage2.predict_proba(ciw.values[None])[0]
    verdict, conflict = _stage2_verdict(probs, scheme2)
    return Diagnosis(verdict, None, probs, conflict, (), stage2.classes)


@dataclass(frozen=True)
class PipelineManifest:
    stage1: str
    stage2: str
    grid_hash: str
    fusion_weight: float | None = None

    def to_text(self) -> str:
        lines = [f"stage1 = {self.stage1}", f"stage2 = {self.stage2}", f"grid_hash = {self.grid_hash}"]
        if self.fusion_weight is not None:
            lines.append(f"lambda = {self.fusion_weight!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> PipelineManifest:
        fields = {}
        for n, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise FormatError(f"manifest line {n} is not 'key = value'")
            fields[key.strip()] = value.strip()
        missing = {"stage1", "stage2", "grid_hash"} - fields.keys()
        if missing:
            raise FormatError(f"manifest lacks {', '.join(sorted(missing))}")
        lam = fields.get("lambda")
        return cls(fields["stage1"], fields["stage2"], fields["grid_hash"], None if lam is None else float(lam))

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def read(cls, path: str | Path) -> PipelineManifest:
        return cls.from_text(Path(path).read_text())
