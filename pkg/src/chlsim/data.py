"""Data ingestion, timestamp matching, stratified splitting and feature preprocessing."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import InvariantError, ParseError
from .sensors import WINDOW
from .spectral import LabeledSample, SpectralDataset, Spectrum, WavelengthGrid

logger = logging.getLogger(__name__)

N_BINS = 5


# --- ingestion -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectraTable:
    """Unlabelled spectra read from disk: one column per measurement."""

    grid: WavelengthGrid
    reflectance: np.ndarray  # (n_measurements, n_wavelengths)
    ids: tuple
    timestamps: tuple  # datetime or None per measurement

    def __len__(self):
        return self.reflectance.shape[0]

    def spectrum(self, i) -> Spectrum:
        return Spectrum(self.grid, self.reflectance[i])


def _parse_time(text, path, row, column):
    try:
        return datetime.fromisoformat(text.strip())
    except ValueError:
        raise ParseError(f"invalid ISO-8601 timestamp {text!r}", path, row, column) from None


def _parse_float(text, path, row, column):
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"non-numeric cell {text!r}", path, row, column) from None


def ingest_spectra_csv(path, window=WINDOW) -> SpectraTable:
    """Read a spectra CSV and clip it to ``window`` (inclusive).

    Layout: header ``wavelength_nm,<id>,...``; an optional row starting with
    ``timestamp`` carrying ISO-8601 times per column; then one row per
    wavelength.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(cell.strip() for cell in r)]
    if not rows:
        raise ParseError("empty file", path)
    header = [c.strip() for c in rows[0]]
    if header[0] != "wavelength_nm":
        raise ParseError("first header cell must be 'wavelength_nm'", path, 1, 1)
    n_cols = len(header)
    if n_cols < 2:
        raise ParseError("no measurement columns", path, 1)
    ids = tuple(header[1:])

    body_start = 1
    timestamps = (None,) * (n_cols - 1)
    if len(rows) > 1 and rows[1][0].strip().lower() == "timestamp":
        if len(rows[1]) != n_cols:
            raise ParseError(f"expected {n_cols} cells, got {len(rows[1])}", path, 2)
        timestamps = tuple(_parse_time(c, path, 2, j + 1) for j, c in enumerate(rows[1][1:], start=1))
        body_start = 2

    wl, values = [], []
    for r, row in enumerate(rows[body_start:], start=body_start + 1):
        if len(row) != n_cols:
            raise ParseError(f"ragged row: expected {n_cols} cells, got {len(row)}", path, r)
        wl.append(_parse_float(row[0], path, r, 1))
        values.append([_parse_float(c, path, r, j) for j, c in enumerate(row[1:], start=2)])
        if len(wl) > 1 and wl[-1] <= wl[-2]:
            raise ParseError(f"wavelength {wl[-1]:g} not greater than previous {wl[-2]:g}", path, r, 1)

    wl = np.array(wl)
    data = np.array(values, dtype=np.float64).reshape(len(wl), n_cols - 1)
    lo, hi = window
    keep = (wl >= lo) & (wl <= hi)
    if keep.sum() < 2:
        raise ParseError(f"fewer than 2 wavelengths inside {lo:g}-{hi:g} nm", path)
    if not np.all(np.isfinite(data[keep])):
        raise ParseError("non-finite reflectance inside the analysis window", path)
    return SpectraTable(WavelengthGrid(wl[keep]), data[keep].T.copy(), ids, timestamps)


def write_spectra_csv(path, wavelengths, reflectance, ids, timestamps=None) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["wavelength_nm", *ids])
        if timestamps is not None:
            w.writerow(["timestamp", *(t.isoformat() for t in timestamps)])
        refl = np.asarray(reflectance)
        for j, lam in enumerate(wavelengths):
            w.writerow([repr(float(lam)), *(repr(float(v)) for v in refl[:, j])])


@dataclass(frozen=True)
class LabelTable:
    key: str  # "timestamp" or "id"
    keys: tuple
    chl_a: tuple


def read_labels_csv(path) -> LabelTable:
    """Labels CSV with header ``timestamp,chl_a_ug_l`` or ``id,chl_a_ug_l``."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError("empty file", path)
    header = [c.strip() for c in rows[0]]
    if len(header) != 2 or header[1] != "chl_a_ug_l" or header[0] not in ("timestamp", "id"):
        raise ParseError("header must be 'timestamp,chl_a_ug_l' or 'id,chl_a_ug_l'", path, 1)
    keys, chl = [], []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise ParseError(f"expected 2 cells, got {len(row)}", path, r)
        keys.append(_parse_time(row[0], path, r, 1) if header[0] == "timestamp" else row[0].strip())
        value = _parse_float(row[1], path, r, 2)
        if not np.isfinite(value) or value < 0:
            raise ParseError(f"chl-a must be finite and >= 0, got {row[1]!r}", path, r, 2)
        chl.append(value)
    return LabelTable(header[0], tuple(keys), tuple(chl))


def write_labels_csv(path, keys, chl_a, key="id") -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([key, "chl_a_ug_l"])
        for k, c in zip(keys, chl_a):
            w.writerow([k.isoformat() if isinstance(k, datetime) else k, repr(float(c))])


# --- matching --------------------------------------------------------------


@dataclass
class MatchReport:
    pairs: List[tuple] = field(default_factory=list)  # (label_idx, spectrum_idx, gap_seconds)
    unmatched_labels: List[int] = field(default_factory=list)
    unmatched_spectra: List[int] = field(default_factory=list)


def match_timestamps(spectrum_times: Sequence[datetime], label_times: Sequence[datetime], tolerance: float) -> MatchReport:
    """One-to-one greedy matching, smallest gap first.

    Ties in gap are resolved by label index, then spectrum index.
    """
    candidates = []
    for i, lt in enumerate(label_times):
        for j, st in enumerate(spectrum_times):
            gap = abs((lt - st).total_seconds())
            if gap <= tolerance:
                candidates.append((gap, i, j))
    candidates.sort()
    used_labels, used_spectra = set(), set()
    report = MatchReport()
    for gap, i, j in candidates:
        if i in used_labels or j in used_spectra:
            continue
        used_labels.add(i)
        used_spectra.add(j)
        report.pairs.append((i, j, gap))
    report.pairs.sort()
    report.unmatched_labels = [i for i in range(len(label_times)) if i not in used_labels]
    report.unmatched_spectra = [j for j in range(len(spectrum_times)) if j not in used_spectra]
    return report


def match_by_timestamp(spectra: SpectraTable, labels: LabelTable, tolerance: float = 60.0):
    """Pair labels with their nearest spectrum within ``tolerance`` seconds.

    Returns ``(dataset, report)``; unmatched labels are logged and listed in the report.
    """
    if labels.key != "timestamp" or any(t is None for t in spectra.timestamps):
        raise ValueError("timestamp matching needs timestamped spectra and labels")
    report = match_timestamps(spectra.timestamps, labels.keys, tolerance)
    if report.unmatched_labels:
        logger.warning("%d label(s) without a spectrum within %gs: %s",
                       len(report.unmatched_labels), tolerance, report.unmatched_labels)
    if not report.pairs:
        raise InvariantError("dataset-nonempty", "no label matched any spectrum")
    samples = [
        LabeledSample(spectra.spectrum(j), labels.chl_a[i], labels.keys[i], spectra.ids[j])
        for i, j, _ in report.pairs
    ]
    return SpectralDataset(tuple(samples), spectra.grid), report


def join_by_id(spectra: SpectraTable, labels: LabelTable) -> SpectralDataset:
    index = {sid: j for j, sid in enumerate(spectra.ids)}
    missing = [k for k in labels.keys if k not in index]
    if missing:
        raise ParseError(f"label id(s) without a spectrum column: {', '.join(map(str, missing[:10]))}")
    samples = [
        LabeledSample(spectra.spectrum(index[k]), c, spectra.timestamps[index[k]], k)
        for k, c in zip(labels.keys, labels.chl_a)
    ]
    return SpectralDataset(tuple(samples), spectra.grid)


def load_dataset(spectra_path, labels_path, tolerance: float = 60.0) -> SpectralDataset:
    """Ingest spectra and labels, joining by id or by timestamp as the labels header dictates."""
    spectra = ingest_spectra_csv(spectra_path)
    labels = read_labels_csv(labels_path)
    if labels.key == "id":
        return join_by_id(spectra, labels)
    dataset, _ = match_by_timestamp(spectra, labels, tolerance)
    return dataset


# --- splitting -------------------------------------------------------------


@dataclass(frozen=True)
class SplitAssignment:
    train_indices: np.ndarray
    test_indices: np.ndarray
    bin_edges: np.ndarray
    bins: np.ndarray  # bin label per sample index
    seed: int

    def write_manifest(self, path) -> None:
        subset = np.empty(self.bins.size, dtype=object)
        subset[self.train_indices] = "train"
        subset[self.test_indices] = "test"
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "subset", "bin"])
            for i in range(self.bins.size):
                w.writerow([i, subset[i], int(self.bins[i])])


def quantile_bins(y, n_bins: int = N_BINS) -> list:
    """Indices sorted by ``y`` (ties by index) cut into ``n_bins`` contiguous blocks.

    Block sizes differ by at most one, larger blocks first.
    """
    order = np.lexsort((np.arange(len(y)), np.asarray(y)))
    return np.array_split(order, n_bins)


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def stratified_split(chl_a, test_fraction: float = 0.5, seed: int = 0, n_bins: int = N_BINS) -> SplitAssignment:
    """Five-bin target-stratified train/test split.

    Each quantile bin contributes ``round(test_fraction * bin_size)`` randomly
    chosen samples (halves rounded up) to the test subset.
    """
    y = np.asarray(chl_a, dtype=np.float64)
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    if y.size < 2 * n_bins:
        raise ValueError(f"need at least {2 * n_bins} samples for a {n_bins}-bin split, got {y.size}")
    rng = np.random.default_rng(seed)
    bins = np.empty(y.size, dtype=np.int64)
    train, test = [], []
    edges = []
    for b, members in enumerate(quantile_bins(y, n_bins)):
        bins[members] = b
        edges.append(y[members[0]])
        shuffled = rng.permutation(members)
        n_test = _round_half_up(test_fraction * members.size)
        test.append(shuffled[:n_test])
        train.append(shuffled[n_test:])
    edges.append(y[members[-1]])
    return SplitAssignment(
        np.sort(np.concatenate(train)),
        np.sort(np.concatenate(test)),
        np.array(edges),
        bins,
        int(seed),
    )


def stratified_folds(y, k: int, seed: int) -> np.ndarray:
    """Fold label per sample for target-stratified ``k``-fold CV.

    Samples sorted by target are taken ``k`` at a time and each group receives
    a random permutation of the fold labels, so every fold spans the full
    target range.
    """
    y = np.asarray(y)
    if k < 2:
        raise ValueError("k must be >= 2")
    if y.size < 2 * k:
        raise ValueError(f"need at least {2 * k} rows for {k}-fold CV, got {y.size}")
    rng = np.random.default_rng(seed)
    order = np.lexsort((np.arange(y.size), y))
    folds = np.empty(y.size, dtype=np.int64)
    for start in range(0, y.size, k):
        group = order[start:start + k]
        folds[group] = rng.permutation(k)[: group.size]
    return folds


# --- preprocessing ---------------------------------------------------------


@dataclass(frozen=True)
class ScalerParams:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray  # True where the training column had zero spread


def fit_scaler(X) -> ScalerParams:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("scaler needs a non-empty 2-D training matrix")
    mean = X.mean(axis=0)
    std = X.std(axis=0)  # population (n) denominator
    constant = ~(std > 0)
    if constant.any():
        logger.info("constant feature(s) at columns %s; std set to 1", np.flatnonzero(constant).tolist())
    return ScalerParams(mean, np.where(constant, 1.0, std), constant)


def apply_scaler(params: ScalerParams, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.mean.size:
        raise ValueError(f"expected {params.mean.size} features, got shape {X.shape}")
    return (X - params.mean) / params.std


class ZScoreScaler(TransformerMixin, BaseEstimator):
    """Per-feature standardisation fitted on training rows only."""

    def fit(self, X, y=None):
        X = check_array(X)
        self.params_ = fit_scaler(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        return apply_scaler(self.params_, check_array(X))

    def inverse_transform(self, X):
        check_is_fitted(self, "params_")
        return np.asarray(X, dtype=np.float64) * self.params_.std + self.params_.mean

    @property
    def constant_features_(self):
        return self.params_.constant


def first_derivative(features, centers) -> np.ndarray:
    """Finite-difference slope between neighbouring bands (reflectance per nm)."""
    X = np.asarray(features, dtype=np.float64)
    c = np.asarray(centers, dtype=np.float64)
    if c.ndim != 1 or c.size < 2:
        raise ValueError("need at least two band centers")
    if np.any(np.diff(c) <= 0):
        raise ValueError("band centers must be strictly increasing")
    if X.shape[-1] != c.size:
        raise ValueError(f"{X.shape[-1]} feature columns for {c.size} band centers")
    return np.diff(X, axis=-1) / np.diff(c)


class FirstDerivative(TransformerMixin, BaseEstimator):
    def __init__(self, centers=None):
        self.centers = centers

    def fit(self, X, y=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        first_derivative(X[:1], self._centers(X.shape[1]))
        return self

    def _centers(self, n):
        return np.arange(n, dtype=np.float64) if self.centers is None else self.centers

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X)
        return first_derivative(X, self._centers(self.n_features_in_))
