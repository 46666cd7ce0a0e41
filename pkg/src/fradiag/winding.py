"""Lumped ladder-network model of a two-winding disc transformer.

HV disc ``k`` sits between HV nodes ``k`` and ``k + 1``; LV disc ``k`` likewise
between LV nodes. Every disc is a series R-L branch bridged by its series
capacitance. Ground and inter-winding capacitances of a disc are split half and
half onto its two end nodes, so a network with uniform parameters is mirror
symmetric about its middle. Node voltages are found by complex nodal analysis,
one dense solve per frequency.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.linalg

from .data import (
    DB_FLOOR,
    DEGREES,
    Connection,
    FaultLabel,
    FaultType,
    FrequencyGrid,
    FRASweep,
    Group,
    LabeledDataset,
    Winding,
)
from .errors import DomainError, NumericalError

# nominal per-disc values for the 10-disc winding
NOMINAL_R = 0.5
NOMINAL_L_HV = 1.0e-3
NOMINAL_L_LV = 0.25e-3
NOMINAL_CS = 1.0e-9
NOMINAL_CG = 0.5e-9
NOMINAL_CIW = 1.0e-9
ADJACENT_COUPLING = 0.3
COUPLING_DECAY = 0.5
FACING_COUPLING = 0.4

SHORT_OHM = 1e-3
SC_MUTUAL_FACTOR = 0.05
DSV_BASE_GAP_MM = 4.0
FB_ARC_DEG = 30.0
FB_RADIAL_RATIO = 0.125
FB_SENSITIVITY = 0.8
FB_L_FACTOR = 0.98
AD_MUTUAL_PER_MM = 0.006
AD_CG_PER_MM = 0.004

NORMAL_JITTER = 0.005
NORMAL_NOISE_DB = 0.1

GROUP_COUNTS = {
    Group.GROUP1: {FaultType.NORMAL: 25, FaultType.AD: 200, FaultType.DSV: 600, FaultType.FB: 600},
    Group.GROUP2: {FaultType.NORMAL: 25, FaultType.AD: 200, FaultType.DSV: 600, FaultType.FB: 600},
    Group.GROUP3: {FaultType.NORMAL: 45, FaultType.AD: 200, FaultType.DSV: 855, FaultType.FB: 1080, FaultType.SC: 675},
}


@dataclass(frozen=True)
class WindingSpec:
    """Winding geometry in mm."""

    disc_count: int
    hv_outer: float
    hv_inner: float
    lv_outer: float
    lv_inner: float
    height: float

    def __post_init__(self) -> None:
        if self.disc_count not in (10, 12):
            raise DomainError(f"disc count must be 10 or 12, got {self.disc_count}")

    @classmethod
    def for_winding(cls, winding: Winding) -> WindingSpec:
        return WINDING_SPECS[Winding(winding)]

    @property
    def winding(self) -> Winding:
        return Winding.DISC10 if self.disc_count == 10 else Winding.DISC12

    @property
    def hv_mean_diameter(self) -> float:
        return 0.5 * (self.hv_outer + self.hv_inner)

    @property
    def lv_mean_diameter(self) -> float:
        return 0.5 * (self.lv_outer + self.lv_inner)


WINDING_SPECS = {
    Winding.DISC10: WindingSpec(10, 934.0, 780.0, 682.0, 520.0, 205.0),
    Winding.DISC12: WindingSpec(12, 467.0, 390.0, 341.0, 260.0, 205.0),
}

AD_DISPLACEMENT_MM = {Winding.DISC10: (10.0, 15.0, 20.0, 25.0), Winding.DISC12: (10.0, 20.0, 30.0, 40.0)}
DSV_SPACING_MM = {Winding.DISC10: (5.0, 10.0, 15.0, 20.0), Winding.DISC12: (10.0, 20.0, 30.0, 40.0)}


def fb_ciw_factor() -> float:
    """Inter-winding capacitance multiplier of one buckled disc."""
    bulge = (FB_ARC_DEG / 360.0) * FB_RADIAL_RATIO / (1.0 - FB_RADIAL_RATIO)
    return (1.0 - bulge) * FB_SENSITIVITY


@lru_cache(maxsize=None)
def fault_hosts(fault_type: FaultType, degree: int, disc_count: int) -> tuple[tuple[int, ...], ...]:
    """Disc sets (0-based) that can host a fault; ``position`` indexes this tuple.

    AD moves the whole HV winding and has a single host. DSV widens three
    neighbouring gaps. FB buckles ``degree`` adjacent discs and SC shorts
    ``degree`` adjacent sections.
    """
    ft = FaultType(fault_type)
    if degree not in DEGREES:
        raise DomainError(f"fault degree must be in 1..4, got {degree}")
    if ft is FaultType.AD:
        return (tuple(range(disc_count)),)
    if ft is FaultType.DSV:
        return tuple((p, p + 1, p + 2) for p in range(disc_count - 2))
    if ft in (FaultType.FB, FaultType.SC):
        if degree > disc_count - 1:
            raise DomainError(f"degree {degree} exceeds disc_count - 1 = {disc_count - 1}")
        return tuple(tuple(range(p, p + degree)) for p in range(disc_count - degree + 1))
    raise DomainError("Normal carries no fault hosts")


@dataclass(frozen=True)
class FaultSpec:
    fault_type: FaultType
    degree: int
    position: int = 0

    def __post_init__(self) -> None:
        ft = FaultType(self.fault_type)
        if ft is FaultType.NORMAL:
            raise DomainError("Normal is not a fault")
        if self.degree not in DEGREES:
            raise DomainError(f"fault degree must be in 1..4, got {self.degree}")
        object.__setattr__(self, "fault_type", ft)

    @classmethod
    def from_label(cls, label: FaultLabel) -> FaultSpec:
        return cls(label.fault_type, label.degree, label.position)

    def hosts(self, disc_count: int) -> tuple[int, ...]:
        options = fault_hosts(self.fault_type, self.degree, disc_count)
        if not 0 <= self.position < len(options):
            raise DomainError(
                f"{self.fault_type.label} position {self.position} outside [0, {len(options)}) for {disc_count} discs"
            )
        return options[self.position]

    def displacement_mm(self, winding: Winding) -> float:
        return AD_DISPLACEMENT_MM[winding][self.degree - 1]

    def spacing_mm(self, winding: Winding) -> float:
        return DSV_SPACING_MM[winding][self.degree - 1]


@dataclass(frozen=True, eq=False)
class LadderNetwork:
    """Per-disc parameters of both windings.

    ``mutual`` is the 2N x 2N matrix of mutual inductances (HV discs first, then
    LV), with a zero diagonal; self inductances live in ``hv_L``/``lv_L``.
    """

    winding: Winding
    hv_R: np.ndarray
    hv_L: np.ndarray
    hv_Cs: np.ndarray
    hv_Cg: np.ndarray
    lv_R: np.ndarray
    lv_L: np.ndarray
    lv_Cs: np.ndarray
    lv_Cg: np.ndarray
    ciw: np.ndarray
    mutual: np.ndarray
    shorted: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        n = len(self.hv_R)
        for name in ("hv_R", "hv_L", "hv_Cs", "hv_Cg", "lv_R", "lv_L", "lv_Cs", "lv_Cg", "ciw"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            if arr.shape != (n,):
                raise DomainError(f"{name} must hold one value per disc")
            object.__setattr__(self, name, arr)
        shorted = np.zeros(n, dtype=bool) if self.shorted is None else np.array(self.shorted, dtype=bool)
        mutual = np.array(self.mutual, dtype=np.float64)
        object.__setattr__(self, "shorted", shorted)
        object.__setattr__(self, "mutual", mutual)
        if mutual.shape != (2 * n, 2 * n):
            raise DomainError("mutual inductance matrix must be 2N x 2N")
        if not np.array_equal(mutual, mutual.T):
            raise DomainError("mutual inductance matrix must be symmetric")
        if np.any(np.diag(mutual) != 0):
            raise DomainError("mutual inductance matrix must have a zero diagonal")
        live = np.concatenate([~shorted, np.ones(n, dtype=bool)])
        for name in ("hv_R", "hv_L"):
            if np.any(getattr(self, name)[~shorted] <= 0):
                raise DomainError(f"{name} must be positive on unshorted discs")
        for name in ("hv_Cs", "hv_Cg", "lv_R", "lv_L", "lv_Cs", "lv_Cg", "ciw"):
            if np.any(getattr(self, name) <= 0):
                raise DomainError(f"{name} must be positive")
        L = self.self_inductance
        bound = np.sqrt(np.outer(L, L))
        sub = np.ix_(live, live)
        if np.any(np.abs(mutual[sub]) > bound[sub] * (1 + 1e-12)):
            raise DomainError("a mutual inductance exceeds sqrt(L_j L_k)")

    @property
    def disc_count(self) -> int:
        return len(self.hv_R)

    @property
    def node_count(self) -> int:
        return 2 * (self.disc_count + 1)

    @property
    def self_inductance(self) -> np.ndarray:
        return np.concatenate([self.hv_L, self.lv_L])

    def hv_node(self, k: int) -> int:
        return k

    def lv_node(self, k: int) -> int:
        return self.disc_count + 1 + k

    def copy(self, **changes) -> LadderNetwork:
        fields = {
            name: np.array(getattr(self, name))
            for name in ("hv_R", "hv_L", "hv_Cs", "hv_Cg", "lv_R", "lv_L", "lv_Cs", "lv_Cg", "ciw", "mutual", "shorted")
        }
        fields.update(changes)
        return replace(self, **fields)


@dataclass(frozen=True)
class MeasurementSetup:
    connection: Connection
    source_ohm: float = 50.0
    measure_ohm: float = 50.0
    floor_db: float = DB_FLOOR

    def __post_init__(self) -> None:
        if self.source_ohm <= 0 or self.measure_ohm <= 0:
            raise DomainError("source and measurement impedances must be positive")
        object.__setattr__(self, "connection", Connection(self.connection))

    def terminals(self, net: LadderNetwork) -> tuple[int, int]:
        """(source node, measured node) of this connection on ``net``."""
        if self.connection is Connection.EE:
            return net.hv_node(0), net.hv_node(net.disc_count)
        return net.hv_node(0), net.lv_node(0)


def _coupling_matrix(n: int) -> np.ndarray:
    """Coupling coefficients between all 2N discs (HV first)."""
    sep = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    same = np.where(sep > 0, ADJACENT_COUPLING * COUPLING_DECAY ** np.maximum(sep - 1, 0), 0.0)
    k = np.zeros((2 * n, 2 * n))
    k[:n, :n] = same
    k[n:, n:] = same
    k[:n, n:] = FACING_COUPLING * np.eye(n)
    k[n:, :n] = FACING_COUPLING * np.eye(n)
    return k


def base_parameters(spec: WindingSpec, jitter_seed: int = 0, jitter_sigma: float = 0.0) -> LadderNetwork:
    """Nominal healthy network for ``spec``, optionally with seeded per-parameter jitter.

    Capacitances scale linearly and inductances quadratically with the mean
    diameter relative to the 10-disc winding. Mutual inductances are formed from
    the fixed coupling coefficients after jitter, which keeps them passive.
    """
    if not 0.0 <= jitter_sigma <= 0.05:
        raise DomainError(f"jitter_sigma must lie in [0, 0.05], got {jitter_sigma}")
    ref = WINDING_SPECS[Winding.DISC10]
    hv_ratio = spec.hv_mean_diameter / ref.hv_mean_diameter
    lv_ratio = spec.lv_mean_diameter / ref.lv_mean_diameter
    n = spec.disc_count
    ones = np.ones(n)
    nominal = np.stack([
        NOMINAL_R * ones,
        NOMINAL_L_HV * hv_ratio**2 * ones,
        NOMINAL_CS * hv_ratio * ones,
        NOMINAL_CG * hv_ratio * ones,
        NOMINAL_R * ones,
        NOMINAL_L_LV * lv_ratio**2 * ones,
        NOMINAL_CS * lv_ratio * ones,
        NOMINAL_CG * lv_ratio * ones,
        NOMINAL_CIW * hv_ratio * ones,
    ])
    if jitter_sigma > 0:
        eps = np.random.default_rng(jitter_seed).standard_normal(nominal.shape)
        nominal = nominal * (1.0 + jitter_sigma * eps)
    hv_R, hv_L, hv_Cs, hv_Cg, lv_R, lv_L, lv_Cs, lv_Cg, ciw = nominal
    L = np.concatenate([hv_L, lv_L])
    mutual = _coupling_matrix(n) * np.sqrt(np.outer(L, L))
    return LadderNetwork(spec.winding, hv_R, hv_L, hv_Cs, hv_Cg, lv_R, lv_L, lv_Cs, lv_Cg, ciw, mutual)


def apply_fault(net: LadderNetwork, fault: FaultSpec) -> LadderNetwork:
    """Perturbed copy of ``net``; only the parameters a fault acts on change."""
    n = net.disc_count
    hosts = list(fault.hosts(n))
    ft = fault.fault_type
    if ft is FaultType.AD:
        delta = fault.displacement_mm(net.winding)
        mutual = net.mutual.copy()
        mutual[:n, n:] *= 1.0 - AD_MUTUAL_PER_MM * delta
        mutual[n:, :n] *= 1.0 - AD_MUTUAL_PER_MM * delta
        hv_Cg = net.hv_Cg.copy()
        hv_Cg[0] *= 1.0 - AD_CG_PER_MM * delta
        return net.copy(mutual=mutual, hv_Cg=hv_Cg)
    if ft is FaultType.DSV:
        s = fault.spacing_mm(net.winding)
        hv_Cs = net.hv_Cs.copy()
        hv_Cs[hosts] *= DSV_BASE_GAP_MM / (DSV_BASE_GAP_MM + s)
        return net.copy(hv_Cs=hv_Cs)
    if ft is FaultType.FB:
        ciw = net.ciw.copy()
        hv_L = net.hv_L.copy()
        ciw[hosts] *= fb_ciw_factor()
        hv_L[hosts] *= FB_L_FACTOR
        return net.copy(ciw=ciw, hv_L=hv_L)
    shorted = net.shorted.copy()
    shorted[hosts] = True
    mutual = net.mutual.copy()
    touch = np.zeros(2 * n, dtype=bool)
    touch[hosts] = True
    mask = touch[:, None] | touch[None, :]
    mutual[mask] *= SC_MUTUAL_FACTOR
    return net.copy(shorted=shorted, mutual=mutual)


def _assemble(net: LadderNetwork, omega: np.ndarray) -> np.ndarray:
    """Nodal admittance matrices, shape (F, nodes, nodes), without terminations."""
    n = net.disc_count
    nodes = net.node_count
    live = np.concatenate([~net.shorted, np.ones(n, dtype=bool)])
    branch_from = np.concatenate([np.arange(n), n + 1 + np.arange(n)])
    incidence = np.zeros((nodes, 2 * n))
    incidence[branch_from, np.arange(2 * n)] = 1.0
    incidence[branch_from + 1, np.arange(2 * n)] = -1.0
    A = incidence[:, live]

    R = np.concatenate([net.hv_R, net.lv_R])[live]
    Lmat = (np.diag(net.self_inductance) + net.mutual)[np.ix_(live, live)]
    # (R + jwL)^-1 = V diag(1 / (1 + jw mu)) V^T with L V = R V diag(mu), V^T R V = I
    try:
        mu, V = scipy.linalg.eigh(Lmat, np.diag(R))
    except np.linalg.LinAlgError:
        raise NumericalError("branch inductance matrix is not positive definite") from None
    W = A @ V
    d = 1.0 / (1.0 + 1j * omega[:, None] * mu[None, :])
    Y = (W[None] * d.real[:, None, :]) @ W.T + 1j * ((W[None] * d.imag[:, None, :]) @ W.T)

    C = np.zeros((nodes, nodes))
    G = np.zeros((nodes, nodes))

    def stamp(M, a, b, value):
        M[a, a] += value
        M[b, b] += value
        M[a, b] -= value
        M[b, a] -= value

    for k in range(n):
        h0, h1 = net.hv_node(k), net.hv_node(k + 1)
        l0, l1 = net.lv_node(k), net.lv_node(k + 1)
        stamp(C, h0, h1, net.hv_Cs[k])
        stamp(C, l0, l1, net.lv_Cs[k])
        for node in (h0, h1):
            C[node, node] += 0.5 * net.hv_Cg[k]
        for node in (l0, l1):
            C[node, node] += 0.5 * net.lv_Cg[k]
        stamp(C, h0, l0, 0.5 * net.ciw[k])
        stamp(C, h1, l1, 0.5 * net.ciw[k])
        if net.shorted[k]:
            stamp(G, h0, h1, 1.0 / SHORT_OHM)
    return Y + G[None] + 1j * omega[:, None, None] * C[None]


def transfer(
    net: LadderNetwork,
    freqs: np.ndarray,
    source_node: int,
    measure_node: int,
    source_ohm: float = 50.0,
    measure_ohm: float = 50.0,
) -> np.ndarray:
    """V(measure_node) / source EMF for a source behind ``source_ohm``."""
    freqs = np.atleast_1d(np.asarray(freqs, dtype=np.float64))
    if np.any(freqs <= 0):
        raise DomainError("frequencies must be positive")
    if source_node == measure_node:
        raise DomainError("source and measurement nodes must differ")
    Y = _assemble(net, 2.0 * math.pi * freqs)
    Y[:, source_node, source_node] += 1.0 / source_ohm
    Y[:, measure_node, measure_node] += 1.0 / measure_ohm
    rhs = np.zeros((freqs.size, net.node_count, 1), dtype=complex)
    rhs[:, source_node, 0] = 1.0 / source_ohm
    try:
        V = np.linalg.solve(Y, rhs)
    except np.linalg.LinAlgError:
        bad = [f for f, y in zip(freqs, Y) if np.linalg.matrix_rank(y) < y.shape[0]]
        raise NumericalError(f"singular nodal system at f = {bad[0] if bad else freqs[0]:g} Hz") from None
    H = V[:, measure_node, 0]
    if not np.all(np.isfinite(H)):
        raise NumericalError(f"non-finite response at f = {freqs[~np.isfinite(H)][0]:g} Hz")
    return H


def response(net: LadderNetwork, setup: MeasurementSetup, freqs: np.ndarray) -> np.ndarray:
    src, meas = setup.terminals(net)
    return transfer(net, freqs, src, meas, setup.source_ohm, setup.measure_ohm)


def solve_at(net: LadderNetwork, setup: MeasurementSetup, f: float) -> complex:
    if not f > 0:
        raise DomainError(f"frequency must be positive, got {f}")
    return complex(response(net, setup, np.array([f]))[0])


def sweep(
    net: LadderNetwork,
    setup: MeasurementSetup,
    grid: FrequencyGrid,
    noise_seed: int = 0,
    noise_db: float = 0.0,
) -> FRASweep:
    if noise_db < 0:
        raise DomainError("noise_db must be non-negative")
    H = response(net, setup, grid.points)
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(np.abs(H))
    if noise_db > 0:
        db = db + noise_db * np.random.default_rng(noise_seed).standard_normal(db.shape)
    return FRASweep(np.maximum(setup.floor_db, db), grid)


def degree_counts(total: int) -> list[int]:
    """Split ``total`` over the four degrees; the remainder goes to lower degrees."""
    q, r = divmod(total, len(DEGREES))
    return [q + (1 if i < r else 0) for i in range(len(DEGREES))]


def group_labels(group: Group) -> list[FaultLabel]:
    """Labels of a group in generation order: Normal, then each type by degree."""
    winding = group.winding
    labels = []
    for ft, total in GROUP_COUNTS[group].items():
        if ft is FaultType.NORMAL:
            labels += [FaultLabel(ft)] * total
            continue
        for degree, count in zip(DEGREES, degree_counts(total)):
            hosts = len(fault_hosts(ft, degree, winding.disc_count))
            labels += [FaultLabel(ft, degree, j % hosts) for j in range(count)]
    return labels


def sample_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint32)[0])


def simulate(
    winding: Winding,
    connection: Connection,
    label: FaultLabel,
    seed_id: int,
    grid: FrequencyGrid,
    jitter_sigma: float = NORMAL_JITTER,
    noise_db: float = NORMAL_NOISE_DB,
) -> FRASweep:
    """One synthetic measurement of a possibly faulted winding."""
    net = base_parameters(WindingSpec.for_winding(winding), jitter_seed=seed_id, jitter_sigma=jitter_sigma)
    if label.fault_type is not FaultType.NORMAL:
        net = apply_fault(net, FaultSpec.from_label(label))
    noise_seed = int(np.random.SeedSequence([seed_id, 1]).generate_state(1, np.uint32)[0])
    return sweep(net, MeasurementSetup(connection), grid, noise_seed, noise_db)


def _simulate_chunk(args) -> np.ndarray:
    winding, connection, labels, seeds, grid, jitter_sigma, noise_db = args
    out = np.empty((len(labels), grid.count), dtype=np.float32)
    for i, (label, s) in enumerate(zip(labels, seeds)):
        out[i] = simulate(winding, connection, label, s, grid, jitter_sigma, noise_db).values
    return out


def simulate_dataset(
    winding: Winding,
    connection: Connection,
    labels: list[FaultLabel],
    seeds: list[int],
    grid: FrequencyGrid | None = None,
    jitter_sigma: float = NORMAL_JITTER,
    noise_db: float = NORMAL_NOISE_DB,
    jobs: int = 1,
) -> LabeledDataset:
    grid = grid or FrequencyGrid()
    if len(labels) != len(seeds):
        raise DomainError("labels and seeds must pair up")
    chunks = max(1, jobs) * 4
    bounds = np.linspace(0, len(labels), chunks + 1).astype(int)
    tasks = [
        (winding, connection, labels[a:b], seeds[a:b], grid, jitter_sigma, noise_db)
        for a, b in zip(bounds[:-1], bounds[1:])
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_simulate_chunk, tasks))
    else:
        parts = [_simulate_chunk(t) for t in tasks]
    values = np.concatenate(parts) if parts else np.empty((0, grid.count), dtype=np.float32)
    return LabeledDataset(
        values,
        [lab.fault_type for lab in labels],
        [lab.degree for lab in labels],
        [lab.position for lab in labels],
        seeds,
        connection,
        winding,
        grid,
    )


def generate_group(group: Group, seed: int, grid: FrequencyGrid | None = None, jobs: int = 1) -> LabeledDataset:
    """Synthetic counterpart of one of the three measured datasets.

    Sample ``i`` of Group1 and Group2 share label and seed, i.e. they are the EE
    and CIW measurements of the same faulted winding.
    """
    group = Group(group)
    labels = group_labels(group)
    seeds = [sample_seed(seed, i) for i in range(len(labels))]
    return simulate_dataset(group.winding, group.connection, labels, seeds, grid, jobs=jobs)


def to_netlist(net: LadderNetwork) -> str:
    """Plain-text dump, one branch per line: ``node_a node_b kind value``."""
    lines = []
    n = net.disc_count
    for k in range(n):
        for side, a, b, R, L, Cs, Cg in (
            ("hv", net.hv_node(k), net.hv_node(k + 1), net.hv_R[k], net.hv_L[k], net.hv_Cs[k], net.hv_Cg[k]),
            ("lv", net.lv_node(k), net.lv_node(k + 1), net.lv_R[k], net.lv_L[k], net.lv_Cs[k], net.lv_Cg[k]),
        ):
            if side == "hv" and net.shorted[k]:
                lines.append(f"{a} {b} R {SHORT_OHM:.9g}")
            else:
                lines.append(f"{a} {b} RL {R:.9g}+{L:.9g}H")
            lines.append(f"{a} {b} C {Cs:.9g}")
            lines.append(f"{a} gnd C {0.5 * Cg:.9g}")
            lines.append(f"{b} gnd C {0.5 * Cg:.9g}")
        lines.append(f"{net.hv_node(k)} {net.lv_node(k)} C {0.5 * net.ciw[k]:.9g}")
        lines.append(f"{net.hv_node(k + 1)} {net.lv_node(k + 1)} C {0.5 * net.ciw[k]:.9g}")
    for j, k in zip(*np.triu_indices(2 * n, 1)):
        if net.mutual[j, k] != 0:
            lines.append(f"L{j} L{k} M {net.mutual[j, k]:.9g}")
    return "\n".join(lines) + "\n"
