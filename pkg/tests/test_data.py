from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fradiag.data import (
    DEGREES,
    Connection,
    FaultLabel,
    FaultType,
    FrequencyGrid,
    FRASweep,
    Group,
    LabeledDataset,
    LabelScheme,
    SchemeKind,
    Winding,
    decode_label,
    encode_label,
    export_csv,
    one_hot,
    read_dataset,
    slice_degree_task,
    stratified_folds,
    write_dataset,
)
from fradiag.errors import DomainError, FormatError


def random_dataset(n: int, seed: int = 0, group: Group = Group.GROUP1) -> LabeledDataset:
    rng = np.random.default_rng(seed)
    types = rng.choice([int(t) for t in (FaultType.NORMAL, *group.fault_types)], n)
    degrees = np.where(types == 0, 0, rng.integers(1, 5, n))
    return LabeledDataset(
        rng.uniform(-120, -5, (n, 2000)).astype(np.float32),
        types,
        degrees,
        np.where(types == 0, 0, rng.integers(0, 8, n)),
        rng.integers(0, 2**32, n, dtype=np.uint64),
        group.connection,
        group.winding,
    )


def test_grid_is_log_spaced_and_read_only():
    g = FrequencyGrid()
    pts = g.points
    assert pts.size == 2000 and pts[0] == pytest.approx(20.0) and pts[-1] == pytest.approx(2e6)
    ratios = pts[1:] / pts[:-1]
    assert np.allclose(ratios, ratios[0])
    with pytest.raises(ValueError):
        pts[0] = 1.0


@pytest.mark.parametrize("kwargs", [{"count": 1999}, {"f_min": 0.0}, {"f_min": 10.0, "f_max": 5.0}, {"f_max": np.inf}])
def test_grid_rejects_bad_bounds(kwargs):
    with pytest.raises(DomainError):
        FrequencyGrid(**kwargs)


def test_grid_id_distinguishes_grids():
    assert FrequencyGrid().grid_id == FrequencyGrid().grid_id
    assert FrequencyGrid().grid_id != FrequencyGrid(f_min=1e3, f_max=1e6).grid_id


def test_sweep_validation():
    FRASweep(np.full(2000, -160.0))
    with pytest.raises(DomainError):
        FRASweep(np.zeros(1999))
    with pytest.raises(DomainError):
        FRASweep(np.full(2000, -160.5))
    bad = np.zeros(2000)
    bad[5] = np.nan
    with pytest.raises(DomainError):
        FRASweep(bad)


def test_fault_label_rules():
    assert str(FaultLabel(FaultType.FB, 2, 3)) == "FB-2"
    assert str(FaultLabel(FaultType.NORMAL)) == "Normal"
    for bad in [(FaultType.NORMAL, 1, 0), (FaultType.AD, 0, 0), (FaultType.SC, 5, 0), (FaultType.DSV, 1, -1)]:
        with pytest.raises(DomainError):
            FaultLabel(*bad)


def test_group_properties():
    assert Group.GROUP1.connection is Connection.EE and Group.GROUP1.winding is Winding.DISC10
    assert Group.GROUP2.connection is Connection.CIW and Group.GROUP2.winding is Winding.DISC10
    assert Group.GROUP3.connection is Connection.EE and Group.GROUP3.winding is Winding.DISC12
    assert Group.GROUP3.fault_types[-1] is FaultType.SC and len(Group.GROUP1.fault_types) == 3
    with pytest.raises(DomainError):
        Group.of(Connection.CIW, Winding.DISC12)


def test_scheme_class_lists():
    assert LabelScheme.for_group(Group.GROUP1, SchemeKind.TYPE).classes == ("Normal", "AD", "DSV", "FB")
    assert LabelScheme.for_group(Group.GROUP3, SchemeKind.TYPE).C == 5
    assert LabelScheme.degree_scheme(FaultType.FB).classes == ("Normal", "FB-1", "FB-2", "FB-3", "FB-4")
    joint = LabelScheme.for_group(Group.GROUP2, SchemeKind.JOINT)
    assert joint.C == 13
    assert joint.classes[11] == "FB-3"


def test_scheme_examples():
    assert encode_label(LabelScheme.for_group(Group.GROUP3, SchemeKind.TYPE), FaultLabel(FaultType.SC, 3)) == 4
    assert encode_label(LabelScheme.joint_scheme(Group.GROUP2.fault_types), FaultLabel(FaultType.FB, 3)) == 11
    assert encode_label(LabelScheme.degree_scheme(FaultType.FB), FaultLabel(FaultType.NORMAL)) == 0
    with pytest.raises(DomainError):
        encode_label(LabelScheme.type_scheme(Group.GROUP1.fault_types), FaultLabel(FaultType.SC, 1))
    with pytest.raises(DomainError):
        decode_label(LabelScheme.degree_scheme(FaultType.AD), 5)


def test_scheme_rejects_bad_type_lists():
    with pytest.raises(DomainError):
        LabelScheme.type_scheme([FaultType.FB, FaultType.AD])
    with pytest.raises(DomainError):
        LabelScheme(SchemeKind.DEGREE, (FaultType.AD, FaultType.FB))
    with pytest.raises(DomainError):
        LabelScheme.type_scheme([FaultType.NORMAL])


labels = st.one_of(
    st.just(FaultLabel(FaultType.NORMAL)),
    st.builds(FaultLabel, st.sampled_from(list(FaultType)[1:]), st.sampled_from(DEGREES), st.integers(0, 50)),
)


@given(labels, st.sampled_from(list(SchemeKind)))
def test_encode_decode_round_trip(label, kind):
    scheme = LabelScheme(kind, (label.fault_type,)) if label.fault_type is not FaultType.NORMAL else LabelScheme(
        kind, (FaultType.AD,)
    )
    idx = scheme.encode(label)
    assert 0 <= idx < scheme.C
    back = scheme.decode(idx)
    assert back.fault_type is label.fault_type
    if kind is not SchemeKind.TYPE:
        assert back.degree == label.degree


@given(st.sampled_from([Group.GROUP1, Group.GROUP2, Group.GROUP3]), st.sampled_from(list(SchemeKind)))
def test_every_class_decodes_and_reencodes(group, kind):
    scheme = LabelScheme(kind, group.fault_types[:1] if kind is SchemeKind.DEGREE else group.fault_types)
    for i in range(scheme.C):
        assert scheme.encode(scheme.decode(i)) == i


def test_encode_dataset_matches_scalar_encode():
    ds = random_dataset(200, 3, Group.GROUP3)
    for kind in (SchemeKind.TYPE, SchemeKind.JOINT):
        scheme = LabelScheme.for_group(Group.GROUP3, kind)
        assert scheme.encode_dataset(ds).tolist() == [scheme.encode(lab) for lab in ds.labels]


@given(st.integers(2, 20), st.data())
def test_one_hot(C, data):
    i = data.draw(st.integers(0, C - 1))
    v = one_hot(i, C)
    assert v.sum() == 1 and v[i] == 1
    with pytest.raises(DomainError):
        one_hot(C, C)


@settings(max_examples=60)
@given(st.lists(st.integers(0, 5), min_size=1, max_size=300), st.integers(2, 10), st.integers(0, 2**31))
def test_stratified_folds_properties(labels, k, seed):
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fa = stratified_folds(labels, k, seed)
        again = stratified_folds(labels, k, seed)
    y = np.asarray(labels)
    assert np.array_equal(fa.fold_of, again.fold_of)
    assert fa.fold_of.min() >= 0 and fa.fold_of.max() < k
    sizes = np.bincount(fa.fold_of, minlength=k)
    assert sizes.max() - sizes.min() <= 1
    for c in np.unique(y):
        per = np.bincount(fa.fold_of[y == c], minlength=k)
        assert per.max() - per.min() <= 1
    for f in range(k):
        tr, te = fa.split(f)
        assert np.intersect1d(tr, te).size == 0 and tr.size + te.size == y.size


def test_stratified_folds_warns_on_small_class():
    with pytest.warns(UserWarning):
        fa = stratified_folds([0] * 20 + [1] * 3, 10, 0)
    assert fa.warnings
    with pytest.raises(DomainError):
        stratified_folds([0, 1], 1, 0)


def test_slice_degree_task():
    ds = random_dataset(300, 1)
    sliced = slice_degree_task(ds, FaultType.FB)
    assert set(np.unique(sliced.fault_types).tolist()) <= {0, int(FaultType.FB)}
    assert len(sliced) == int(np.sum((ds.fault_types == 0) | (ds.fault_types == FaultType.FB)))
    with pytest.raises(DomainError):
        slice_degree_task(ds, FaultType.SC)


def test_dataset_column_validation():
    with pytest.raises(DomainError):
        LabeledDataset(np.zeros((2, 2000)), [0, 1], [1, 1], [0, 0], [1, 2], Connection.EE, Winding.DISC10)
    with pytest.raises(DomainError):
        LabeledDataset(np.zeros((2, 2000)), [0, 1], [0, 1], [0, 0], [1], Connection.EE, Winding.DISC10)


def test_dataset_file_round_trip(tmp_path):
    ds = random_dataset(57, 5)
    p = tmp_path / "d.frds"
    write_dataset(ds, p)
    back = read_dataset(p, FrequencyGrid())
    assert back.equals(ds)
    write_dataset(back, tmp_path / "e.frds")
    assert p.read_bytes() == (tmp_path / "e.frds").read_bytes()


def test_dataset_file_errors_carry_offsets(tmp_path):
    ds = random_dataset(4, 6)
    p = tmp_path / "d.frds"
    write_dataset(ds, p)
    raw = p.read_bytes()
    (tmp_path / "magic.frds").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError, match="offset 0"):
        read_dataset(tmp_path / "magic.frds")
    (tmp_path / "short.frds").write_bytes(raw[:-10])
    with pytest.raises(FormatError) as exc:
        read_dataset(tmp_path / "short.frds")
    assert exc.value.offset == len(raw) - 10
    (tmp_path / "ver.frds").write_bytes(raw[:4] + b"\x09\x00" + raw[6:])
    with pytest.raises(FormatError, match="version"):
        read_dataset(tmp_path / "ver.frds")
    with pytest.raises(FormatError, match="grid mismatch"):
        read_dataset(p, FrequencyGrid(f_min=1e3, f_max=1e6))


def test_export_csv(tmp_path):
    ds = random_dataset(3, 7)
    p = tmp_path / "d.csv"
    export_csv(ds, p)
    lines = p.read_text().splitlines()
    assert len(lines) == 4
    assert lines[0].startswith("type,degree,position,seed,f=20,")
    assert len(lines[1].split(",")) == 2004
    assert float(lines[1].split(",")[4]) == pytest.approx(ds.values[0, 0], rel=1e-5)
