"""Sweeps, fault labels, datasets, label schemes, fold assignment and dataset files."""

from __future__ import annotations

import enum
import hashlib
import struct
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import DomainError, FormatError

GRID_POINTS = 2000
DB_FLOOR = -160.0
DEGREES = (1, 2, 3, 4)


class FaultType(enum.IntEnum):
    NORMAL = 0
    AD = 1
    DSV = 2
    FB = 3
    SC = 4

    @property
    def label(self) -> str:
        return "Normal" if self is FaultType.NORMAL else self.name

    @classmethod
    def parse(cls, text: str | int | FaultType) -> FaultType:
        if isinstance(text, (int, FaultType)):
            return cls(int(text))
        key = text.strip().upper()
        if key not in cls.__members__:
            raise DomainError(f"unknown fault type {text!r}")
        return cls[key]


FAULT_ORDER = (FaultType.AD, FaultType.DSV, FaultType.FB, FaultType.SC)


class Connection(enum.IntEnum):
    EE = 0
    CIW = 1


class Winding(enum.IntEnum):
    DISC10 = 0
    DISC12 = 1

    @property
    def disc_count(self) -> int:
        return 10 if self is Winding.DISC10 else 12


class Group(enum.IntEnum):
    GROUP1 = 1
    GROUP2 = 2
    GROUP3 = 3

    @property
    def connection(self) -> Connection:
        return Connection.CIW if self is Group.GROUP2 else Connection.EE

    @property
    def winding(self) -> Winding:
        return Winding.DISC12 if self is Group.GROUP3 else Winding.DISC10

    @property
    def fault_types(self) -> tuple[FaultType, ...]:
        return FAULT_ORDER if self is Group.GROUP3 else FAULT_ORDER[:3]

    @classmethod
    def of(cls, connection: Connection, winding: Winding) -> Group:
        for group in cls:
            if group.connection == connection and group.winding == winding:
                return group
        raise DomainError(f"no dataset group uses {connection.name} on {winding.name.lower()}")


@dataclass(frozen=True)
class FrequencyGrid:
    """Log-spaced measurement frequencies in Hz."""

    f_min: float = 20.0
    f_max: float = 2e6
    count: int = GRID_POINTS

    def __post_init__(self) -> None:
        if self.count != GRID_POINTS:
            raise DomainError(f"a grid holds exactly {GRID_POINTS} points, got {self.count}")
        if not (np.isfinite(self.f_min) and np.isfinite(self.f_max)):
            raise DomainError("grid bounds must be finite")
        if not 0 < self.f_min < self.f_max:
            raise DomainError("grid bounds must satisfy 0 < f_min < f_max")

    @cached_property
    def points(self) -> np.ndarray:
        pts = np.geomspace(self.f_min, self.f_max, self.count)
        pts.setflags(write=False)
        return pts

    @property
    def grid_id(self) -> str:
        raw = struct.pack("<ddI", self.f_min, self.f_max, self.count)
        return hashlib.sha256(raw).hexdigest()[:16]


@dataclass(frozen=True)
class FRASweep:
    """One magnitude curve in dB on a frequency grid."""

    values: np.ndarray
    grid: FrequencyGrid = field(default_factory=FrequencyGrid)

    def __post_init__(self) -> None:
        values = np.asarray(self.values)
        if values.shape != (self.grid.count,):
            raise DomainError(f"sweep length {values.shape} does not match grid ({self.grid.count},)")
        if not np.all(np.isfinite(values)):
            raise DomainError("sweep values must be finite")
        if np.any(values < DB_FLOOR):
            raise DomainError(f"sweep values must not fall below {DB_FLOOR} dB")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class FaultLabel:
    fault_type: FaultType
    degree: int = 0
    position: int = 0

    def __post_init__(self) -> None:
        ft = FaultType(self.fault_type)
        object.__setattr__(self, "fault_type", ft)
        if ft is FaultType.NORMAL:
            if self.degree != 0 or self.position != 0:
                raise DomainError("a Normal label has degree 0 and position 0")
        elif self.degree not in DEGREES:
            raise DomainError(f"fault degree must be in 1..4, got {self.degree}")
        if self.position < 0:
            raise DomainError("position must be non-negative")

    def __str__(self) -> str:
        if self.fault_type is FaultType.NORMAL:
            return "Normal"
        return f"{self.fault_type.label}-{self.degree}"


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Sweeps of one winding under one connection, with their fault labels.

    Sweeps are stored row-wise as float32 so that writing and reading a file is
    exact.
    """

    values: np.ndarray
    fault_types: np.ndarray
    degrees: np.ndarray
    positions: np.ndarray
    seeds: np.ndarray
    connection: Connection
    winding: Winding
    grid: FrequencyGrid = field(default_factory=FrequencyGrid)

    def __post_init__(self) -> None:
        values = np.ascontiguousarray(self.values, dtype=np.float32).reshape(-1, self.grid.count)
        n = values.shape[0]
        cols = {
            "fault_types": np.asarray(self.fault_types, dtype=np.uint8),
            "degrees": np.asarray(self.degrees, dtype=np.uint8),
            "positions": np.asarray(self.positions, dtype=np.uint16),
            "seeds": np.asarray(self.seeds, dtype=np.uint32),
        }
        for name, col in cols.items():
            if col.shape != (n,):
                raise DomainError(f"{name} has shape {col.shape}, expected ({n},)")
            object.__setattr__(self, name, col)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "connection", Connection(self.connection))
        object.__setattr__(self, "winding", Winding(self.winding))
        Group.of(self.connection, self.winding)
        normal = self.fault_types == FaultType.NORMAL
        if np.any(self.fault_types > FaultType.SC):
            raise DomainError("unknown fault type code in dataset")
        if np.any(normal != (self.degrees == 0)) or np.any(self.degrees > 4):
            raise DomainError("degree must be 0 exactly for Normal samples and 1..4 otherwise")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def group(self) -> Group:
        return Group.of(self.connection, self.winding)

    def label(self, i: int) -> FaultLabel:
        return FaultLabel(FaultType(int(self.fault_types[i])), int(self.degrees[i]), int(self.positions[i]))

    @property
    def labels(self) -> list[FaultLabel]:
        return [self.label(i) for i in range(len(self))]

    def sweep(self, i: int) -> FRASweep:
        return FRASweep(self.values[i], self.grid)

    def __iter__(self) -> Iterator[tuple[FRASweep, FaultLabel, int]]:
        for i in range(len(self)):
            yield self.sweep(i), self.label(i), int(self.seeds[i])

    def subset(self, indices: Sequence[int] | np.ndarray) -> LabeledDataset:
        idx = np.asarray(indices, dtype=np.intp)
        return LabeledDataset(
            self.values[idx], self.fault_types[idx], self.degrees[idx], self.positions[idx],
            self.seeds[idx], self.connection, self.winding, self.grid,
        )

    def present_types(self) -> tuple[FaultType, ...]:
        codes = set(int(c) for c in np.unique(self.fault_types))
        return tuple(ft for ft in FAULT_ORDER if ft in codes)

    def equals(self, other: LabeledDataset) -> bool:
        return (
            self.connection == other.connection
            and self.winding == other.winding
            and self.grid == other.grid
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.fault_types, other.fault_types)
            and np.array_equal(self.degrees, other.degrees)
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.seeds, other.seeds)
        )


class SchemeKind(enum.Enum):
    TYPE = "type"
    DEGREE = "degree"
    JOINT = "joint"


@dataclass(frozen=True)
class LabelScheme:
    """Maps fault labels onto the class indices of a classifier's output layer."""

    kind: SchemeKind
    fault_types: tuple[FaultType, ...]

    def __post_init__(self) -> None:
        types = tuple(FaultType(t) for t in self.fault_types)
        if not types or FaultType.NORMAL in types:
            raise DomainError("a scheme needs at least one non-Normal fault type")
        if self.kind is SchemeKind.DEGREE and len(types) != 1:
            raise DomainError("a degree scheme covers exactly one fault type")
        if list(types) != sorted(types):
            raise DomainError("fault types must follow the AD, DSV, FB, SC order")
        object.__setattr__(self, "fault_types", types)

    @classmethod
    def type_scheme(cls, fault_types: Sequence[FaultType]) -> LabelScheme:
        return cls(SchemeKind.TYPE, tuple(fault_types))

    @classmethod
    def degree_scheme(cls, fault_type: FaultType) -> LabelScheme:
        return cls(SchemeKind.DEGREE, (FaultType(fault_type),))

    @classmethod
    def joint_scheme(cls, fault_types: Sequence[FaultType]) -> LabelScheme:
        return cls(SchemeKind.JOINT, tuple(fault_types))

    @classmethod
    def for_group(cls, group: Group, kind: SchemeKind, fault_type: FaultType | None = None) -> LabelScheme:
        if kind is SchemeKind.DEGREE:
            if fault_type is None:
                raise DomainError("a degree scheme needs a fault type")
            return cls.degree_scheme(fault_type)
        return cls(kind, group.fault_types)

    @cached_property
    def classes(self) -> tuple[str, ...]:
        names = ["Normal"]
        if self.kind is SchemeKind.TYPE:
            names += [ft.label for ft in self.fault_types]
        else:
            names += [f"{ft.label}-{d}" for ft in self.fault_types for d in DEGREES]
        return tuple(names)

    @property
    def C(self) -> int:
        return len(self.classes)

    def covers(self, fault_type: FaultType) -> bool:
        return fault_type is FaultType.NORMAL or fault_type in self.fault_types

    def encode(self, label: FaultLabel) -> int:
        ft = label.fault_type
        if ft is FaultType.NORMAL:
            return 0
        if ft not in self.fault_types:
            raise DomainError(f"{ft.label} is not covered by the {self.kind.value} scheme {self.classes}")
        t = self.fault_types.index(ft)
        if self.kind is SchemeKind.TYPE:
            return 1 + t
        return 1 + len(DEGREES) * t + (label.degree - 1)

    def decode(self, index: int) -> FaultLabel:
        if not 0 <= index < self.C:
            raise DomainError(f"class index {index} outside [0, {self.C})")
        if index == 0:
            return FaultLabel(FaultType.NORMAL)
        if self.kind is SchemeKind.TYPE:
            return FaultLabel(self.fault_types[index - 1], 1)
        t, d = divmod(index - 1, len(DEGREES))
        return FaultLabel(self.fault_types[t], d + 1)

    def encode_dataset(self, ds: LabeledDataset) -> np.ndarray:
        """Class index of every sample; vectorised form of :meth:`encode`."""
        out = np.empty(len(ds), dtype=np.intp)
        for code in np.unique(ds.fault_types):
            ft = FaultType(int(code))
            if not self.covers(ft):
                raise DomainError(f"{ft.label} is not covered by the {self.kind.value} scheme {self.classes}")
            mask = ds.fault_types == code
            if ft is FaultType.NORMAL:
                out[mask] = 0
            elif self.kind is SchemeKind.TYPE:
                out[mask] = 1 + self.fault_types.index(ft)
            else:
                out[mask] = 1 + len(DEGREES) * self.fault_types.index(ft) + ds.degrees[mask].astype(np.intp) - 1
        return out


def encode_label(scheme: LabelScheme, label: FaultLabel) -> int:
    return scheme.encode(label)


def decode_label(scheme: LabelScheme, index: int) -> FaultLabel:
    return scheme.decode(index)


def one_hot(class_index: int | np.ndarray, C: int) -> np.ndarray:
    """One-hot rows for one index or an array of indices."""
    idx = np.asarray(class_index)
    if np.any(idx < 0) or np.any(idx >= C):
        raise DomainError(f"class index outside [0, {C})")
    return np.eye(C)[idx]


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    k: int
    fold_of: np.ndarray
    warnings: tuple[str, ...] = ()

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """(train indices, held-out indices) for one fold."""
        held = self.fold_of == fold
        return np.flatnonzero(~held), np.flatnonzero(held)


def stratified_folds(labels: Sequence[int] | np.ndarray, k: int, seed: int) -> FoldAssignment:
    """Shuffle each class with a seeded generator, then deal its members round-robin.

    The dealing position carries over from one class to the next, so total fold
    sizes also differ by at most one.
    """
    if k < 2:
        raise DomainError(f"fold count must be at least 2, got {k}")
    labels = np.asarray(labels)
    if labels.size == 0:
        raise DomainError("cannot fold an empty label vector")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(labels.size, dtype=np.intp)
    notes = []
    start = 0
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if members.size < k:
            notes.append(f"class {cls} has {members.size} samples, fewer than {k} folds")
        members = members[rng.permutation(members.size)]
        fold_of[members] = (start + np.arange(members.size)) % k
        start = (start + members.size) % k
    for note in notes:
        warnings.warn(note, stacklevel=2)
    return FoldAssignment(k, fold_of, tuple(notes))


def slice_degree_task(ds: LabeledDataset, fault_type: FaultType) -> LabeledDataset:
    """Normal samples plus every sample of one fault type, in original order."""
    ft = FaultType(fault_type)
    if ft is FaultType.NORMAL:
        raise DomainError("a degree task needs a fault type other than Normal")
    if not np.any(ds.fault_types == ft):
        raise DomainError(f"{ft.label} is absent from the dataset")
    keep = (ds.fault_types == ft) | (ds.fault_types == FaultType.NORMAL)
    return ds.subset(np.flatnonzero(keep))


MAGIC = b"FRDS"
VERSION = 1
_HEADER = struct.Struct("<4sHBBddII")


def _record_dtype(count: int) -> np.dtype:
    return np.dtype([("t", "u1"), ("d", "u1"), ("p", "<u2"), ("s", "<u4"), ("values", "<f4", (count,))])


def write_dataset(ds: LabeledDataset, path: str | Path) -> None:
    n = len(ds)
    header = _HEADER.pack(MAGIC, VERSION, ds.connection, ds.winding, ds.grid.f_min, ds.grid.f_max, ds.grid.count, n)
    records = np.empty(n, dtype=_record_dtype(ds.grid.count))
    records["t"], records["d"], records["p"], records["s"] = ds.fault_types, ds.degrees, ds.positions, ds.seeds
    records["values"] = ds.values
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(records.tobytes())


def read_dataset(path: str | Path, grid: FrequencyGrid | None = None) -> LabeledDataset:
    """Read a dataset file; when ``grid`` is given, the file's grid must match it."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError("file shorter than the dataset header", len(raw))
    magic, version, conn, wind, f_min, f_max, count, n = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported dataset version {version}", 4)
    try:
        connection, winding = Connection(conn), Winding(wind)
    except ValueError as exc:
        raise FormatError(str(exc), 6) from None
    try:
        file_grid = FrequencyGrid(f_min, f_max, count)
    except DomainError as exc:
        raise FormatError(f"invalid grid header: {exc}", 8) from None
    if grid is not None and grid != file_grid:
        raise FormatError(f"grid mismatch: file has {file_grid}, expected {grid}", 8)
    rec = _record_dtype(count)
    need = _HEADER.size + n * rec.itemsize
    if len(raw) != need:
        off = min(len(raw), need)
        raise FormatError(f"payload holds {len(raw) - _HEADER.size} bytes, expected {need - _HEADER.size}", off)
    records = np.frombuffer(raw, dtype=rec, count=n, offset=_HEADER.size)
    try:
        return LabeledDataset(
            records["values"].astype(np.float32), records["t"], records["d"], records["p"], records["s"],
            connection, winding, file_grid,
        )
    except DomainError as exc:
        raise FormatError(f"invalid sample records: {exc}", _HEADER.size) from None


def export_csv(ds: LabeledDataset, path: str | Path) -> None:
    header = "type,degree,position,seed," + ",".join(f"f={f:.6g}" for f in ds.grid.points)
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for i in range(len(ds)):
            head = f"{FaultType(int(ds.fault_types[i])).label},{ds.degrees[i]},{ds.positions[i]},{ds.seeds[i]},"
            fh.write(head + ",".join(f"{v:.6g}" for v in ds.values[i]) + "\n")
