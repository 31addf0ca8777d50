from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chlsim.data import (
    FirstDerivative,
    ZScoreScaler,
    apply_scaler,
    fit_scaler,
    first_derivative,
    ingest_spectra_csv,
    join_by_id,
    load_dataset,
    match_by_timestamp,
    match_timestamps,
    quantile_bins,
    read_labels_csv,
    stratified_folds,
    stratified_split,
    write_labels_csv,
    write_spectra_csv,
)
from chlsim.exceptions import ParseError

T0 = datetime(2018, 7, 1, 10, 0, 0)


def write(path, text):
    path.write_text(text)
    return path


def test_minimal_spectra_file(tmp_path):
    p = write(tmp_path / "s.csv", "wavelength_nm,a,b\n500,0.1,0.2\n501,0.11,0.21\n502,0.12,0.22\n")
    t = ingest_spectra_csv(p)
    assert len(t) == 2 and len(t.grid) == 3
    assert t.ids == ("a", "b")
    assert np.array_equal(t.reflectance[1], [0.2, 0.21, 0.22])


def test_spectra_clipped_to_window(tmp_path):
    wl = 341.0 + 0.66 * np.arange(1022)
    refl = np.full((2, wl.size), 0.05)
    p = tmp_path / "s.csv"
    write_spectra_csv(p, wl, refl, ["a", "b"])
    t = ingest_spectra_csv(p)
    assert t.grid.min >= 400 and t.grid.max <= 900
    assert t.grid.min < 400.66 and t.grid.max > 899.3


def test_duplicate_wavelength_row(tmp_path):
    p = write(tmp_path / "s.csv", "wavelength_nm,a\n500,0.1\n500,0.2\n501,0.3\n")
    with pytest.raises(ParseError) as info:
        ingest_spectra_csv(p)
    assert info.value.row == 3


def test_parse_error_locations(tmp_path):
    p = write(tmp_path / "s.csv", "wavelength_nm,a,b\n500,0.1,x\n501,0.1,0.2\n")
    with pytest.raises(ParseError) as info:
        ingest_spectra_csv(p)
    assert (info.value.row, info.value.column) == (2, 3)
    p = write(tmp_path / "r.csv", "wavelength_nm,a,b\n500,0.1\n")
    with pytest.raises(ParseError):
        ingest_spectra_csv(p)
    p = write(tmp_path / "h.csv", "nm,a\n500,0.1\n501,0.1\n")
    with pytest.raises(ParseError):
        ingest_spectra_csv(p)


def test_labels_validation(tmp_path):
    p = write(tmp_path / "l.csv", "id,chl_a_ug_l\na,1.5\nb,-2\n")
    with pytest.raises(ParseError) as info:
        read_labels_csv(p)
    assert info.value.row == 3
    p = write(tmp_path / "l2.csv", "sample,chl\na,1\n")
    with pytest.raises(ParseError):
        read_labels_csv(p)


def test_round_trip_with_timestamps(tmp_path):
    wl = np.arange(400.0, 410.0)
    refl = np.random.default_rng(0).uniform(0, 0.1, (3, wl.size))
    times = [T0 + timedelta(minutes=i) for i in range(3)]
    write_spectra_csv(tmp_path / "s.csv", wl, refl, ["a", "b", "c"], times)
    write_labels_csv(tmp_path / "l.csv", times[::-1], [3.0, 2.0, 1.0], key="timestamp")
    d = load_dataset(tmp_path / "s.csv", tmp_path / "l.csv")
    assert [s.sample_id for s in d.samples] == ["c", "b", "a"]
    assert np.array_equal(d.reflectance, refl[::-1])
    assert list(d.chl_a) == [3.0, 2.0, 1.0]


def test_join_by_id_unknown(tmp_path):
    write(tmp_path / "s.csv", "wavelength_nm,a\n500,0.1\n501,0.1\n")
    write(tmp_path / "l.csv", "id,chl_a_ug_l\nz,1\n")
    with pytest.raises(ParseError):
        join_by_id(ingest_spectra_csv(tmp_path / "s.csv"), read_labels_csv(tmp_path / "l.csv"))


def test_identical_timestamps_match_with_zero_gap():
    times = [T0 + timedelta(seconds=30 * i) for i in range(4)]
    r = match_timestamps(times, times, tolerance=1)
    assert [(i, j) for i, j, _ in r.pairs] == [(0, 0), (1, 1), (2, 2), (3, 3)]
    assert all(g == 0 for *_, g in r.pairs)
    assert not r.unmatched_labels


def test_label_outside_tolerance():
    r = match_timestamps([T0], [T0 + timedelta(seconds=10)], tolerance=5)
    assert r.pairs == [] and r.unmatched_labels == [0]


def test_two_labels_competing_for_one_spectrum():
    spectra = [T0, T0 + timedelta(seconds=100)]
    labels = [T0 + timedelta(seconds=2), T0 + timedelta(seconds=5)]
    # gaps: label0 -> 2, 98; label1 -> 5, 95
    r = match_timestamps(spectra, labels, tolerance=120)
    assert [(i, j) for i, j, _ in r.pairs] == [(0, 0), (1, 1)]
    r = match_timestamps(spectra, labels, tolerance=60)
    assert [(i, j) for i, j, _ in r.pairs] == [(0, 0)]
    assert r.unmatched_labels == [1]


def test_match_by_timestamp_reports(tmp_path):
    write_spectra_csv(tmp_path / "s.csv", [500.0, 501.0], np.ones((1, 2)), ["a"], [T0])
    write_labels_csv(tmp_path / "l.csv", [T0, T0 + timedelta(hours=1)], [1.0, 2.0], key="timestamp")
    d, report = match_by_timestamp(ingest_spectra_csv(tmp_path / "s.csv"), read_labels_csv(tmp_path / "l.csv"))
    assert len(d) == 1 and report.unmatched_labels == [1]


def test_split_408_bins():
    y = np.random.default_rng(3).uniform(0, 100, 408)
    sizes = [b.size for b in quantile_bins(y)]
    assert sizes == [82, 82, 82, 81, 81]
    s = stratified_split(y, 0.5, seed=1)
    assert s.train_indices.size + s.test_indices.size == 408
    assert [int((s.bins[s.test_indices] == b).sum()) for b in range(5)] == [41, 41, 41, 41, 41]


def test_split_ten_samples():
    s = stratified_split(np.arange(1.0, 11.0), 0.5, seed=0)
    for b in range(5):
        assert (s.bins[s.test_indices] == b).sum() == 1


def test_split_determinism():
    y = np.random.default_rng(0).uniform(0, 100, 100)
    a, b, c = stratified_split(y, seed=5), stratified_split(y, seed=5), stratified_split(y, seed=6)
    assert np.array_equal(a.test_indices, b.test_indices)
    assert not np.array_equal(a.test_indices, c.test_indices)


def test_split_bin_edges_monotone():
    y = np.random.default_rng(0).uniform(0, 100, 50)
    s = stratified_split(y)
    assert np.all(np.diff(s.bin_edges) >= 0)
    assert s.bin_edges[0] == y.min() and s.bin_edges[-1] == y.max()


def test_split_rejects_bad_fraction():
    with pytest.raises(ValueError):
        stratified_split(np.arange(20.0), 1.0)


@settings(max_examples=60, deadline=None)
@given(
    arrays(np.float64, st.integers(10, 200), elements=st.floats(0, 500)),
    st.floats(0.1, 0.9),
    st.integers(0, 2**32 - 1),
)
def test_split_partition_property(y, fraction, seed):
    s = stratified_split(y, fraction, seed)
    both = np.concatenate([s.train_indices, s.test_indices])
    assert np.array_equal(np.sort(both), np.arange(y.size))
    for b in range(5):
        size = int((s.bins == b).sum())
        n_test = int((s.bins[s.test_indices] == b).sum())
        assert abs(n_test - fraction * size) <= 0.5 + 1e-9


def test_split_manifest(tmp_path):
    s = stratified_split(np.arange(1.0, 11.0))
    s.write_manifest(tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "index,subset,bin" and len(lines) == 11


def test_folds_cover_range():
    y = np.random.default_rng(0).uniform(0, 100, 203)
    folds = stratified_folds(y, 5, seed=0)
    counts = np.bincount(folds, minlength=5)
    assert counts.max() - counts.min() <= 1
    for f in range(5):
        assert y[folds == f].min() < 5 and y[folds == f].max() > 95


def test_scaler_two_point():
    p = fit_scaler(np.array([[1.0], [3.0]]))
    assert p.mean[0] == 2 and p.std[0] == 1
    assert np.array_equal(apply_scaler(p, np.array([[1.0], [3.0]])).ravel(), [-1, 1])


def test_scaler_constant_column():
    X = np.column_stack([np.full(4, 7.0), np.arange(4.0)])
    p = fit_scaler(X)
    assert p.constant.tolist() == [True, False] and p.std[0] == 1
    assert np.all(apply_scaler(p, X)[:, 0] == 0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (6, 3), elements=st.floats(-1e3, 1e3)))
def test_scaler_inverse(X):
    sc = ZScoreScaler().fit(X)
    assert np.allclose(sc.inverse_transform(sc.transform(X)), X, atol=1e-12 * max(1, np.abs(X).max()))


def test_scaler_uses_training_rows_only(rng):
    train = rng.normal(0, 1, (50, 4))
    test = rng.normal(100, 1, (50, 4))
    sc = ZScoreScaler().fit(train)
    assert np.allclose(sc.params_.mean, train.mean(0))
    # test distribution does not leak: scaled test rows are far from zero mean
    assert np.all(sc.transform(test).mean(0) > 50)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1))
def test_derivative_of_line(a, b):
    centers = np.array([443.0, 490.0, 560.0, 665.0, 705.0])
    d = first_derivative((a * centers + b)[None, :], centers)
    assert np.allclose(d, a, atol=1e-12)


def test_derivative_width_and_constant():
    centers = np.linspace(423, 895, 77)
    X = np.full((3, 77), 0.2)
    d = FirstDerivative(centers).fit_transform(X)
    assert d.shape == (3, 76) and np.all(d == 0)


def test_derivative_validation():
    with pytest.raises(ValueError):
        first_derivative(np.ones((1, 3)), [1.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        first_derivative(np.ones((1, 3)), [1.0, 2.0])
