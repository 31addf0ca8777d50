"""Band simulation: collapse high-resolution spectra into sensor bands.

Every approach reduces to a normalised discrete weighted mean over the
spectrometer grid, ``sum(w * v) / sum(w)``; only the weights differ.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ConfigurationError, CoverageError
from .sensors import BandDefinition, SensorModel, SensorWarning
from .spectral import SpectralDataset, Spectrum, WavelengthGrid

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

#: Gaussian weights are truncated beyond this many standard deviations.
GAUSSIAN_SUPPORT_SIGMAS = 4.0

# Closed-window membership slack so grid points landing exactly on an edge count.
_EDGE_EPS = 1e-9


def sigma_from_fwhm(fwhm: float) -> float:
    if not fwhm > 0:
        raise ValueError(f"fwhm must be > 0, got {fwhm}")
    return fwhm / FWHM_PER_SIGMA


def gaussian_weights(wavelengths: np.ndarray, band: BandDefinition) -> np.ndarray:
    sigma = sigma_from_fwhm(band.fwhm)
    d = wavelengths - band.center
    w = np.exp(-(d * d) / (2.0 * sigma * sigma))
    w[np.abs(d) > GAUSSIAN_SUPPORT_SIGMAS * sigma + _EDGE_EPS] = 0.0
    return w


def equal_weights(wavelengths: np.ndarray, band: BandDefinition) -> np.ndarray:
    inside = np.abs(wavelengths - band.center) <= band.fwhm / 2.0 + _EDGE_EPS
    return inside.astype(np.float64)


def srf_weights(wavelengths: np.ndarray, band: BandDefinition) -> np.ndarray:
    if band.srf is None:
        raise ConfigurationError(f"band {band.id} has no spectral response table")
    lo, hi = band.srf.grid.min, band.srf.grid.max
    w = band.srf(wavelengths)
    w[(wavelengths < lo) | (wavelengths > hi)] = 0.0
    return w


_WEIGHTS = {"gaussian": gaussian_weights, "equal": equal_weights, "srf": srf_weights}


def nominal_support(band: BandDefinition, approach: str) -> tuple:
    """Wavelength interval over which ``band`` has non-zero weight."""
    if band.srf is not None or approach == "srf":
        if band.srf is None:
            raise ConfigurationError(f"band {band.id} has no spectral response table")
        return band.srf.grid.min, band.srf.grid.max
    if approach == "gaussian":
        half = GAUSSIAN_SUPPORT_SIGMAS * sigma_from_fwhm(band.fwhm)
    else:
        half = band.fwhm / 2.0
    return band.center - half, band.center + half


def band_weights(wavelengths: np.ndarray, band: BandDefinition, approach: str) -> np.ndarray:
    """Weights of ``band`` on ``wavelengths``; a band-level SRF overrides ``approach``."""
    if band.srf is not None:
        approach = "srf"
    try:
        fn = _WEIGHTS[approach]
    except KeyError:
        raise ConfigurationError(f"unknown weighting approach {approach!r}") from None
    w = fn(np.asarray(wavelengths, dtype=np.float64), band)
    if not np.sum(w) > 0:
        raise CoverageError(
            f"band {band.id} ({approach}, center {band.center:g} nm) has no weight on the "
            f"grid {wavelengths[0]:g}-{wavelengths[-1]:g} nm"
        )
    return w


def _weighted_mean(s: Spectrum, band: BandDefinition, approach: str) -> float:
    w = band_weights(s.wavelengths, band, approach)
    return float(np.dot(w, s.values) / np.sum(w))


def _without_srf(b: BandDefinition) -> BandDefinition:
    return b if b.srf is None else BandDefinition(b.id, b.center, b.fwhm)


def gaussian_band_value(s: Spectrum, b: BandDefinition) -> float:
    return _weighted_mean(s, _without_srf(b), "gaussian")


def equal_weight_band_value(s: Spectrum, b: BandDefinition) -> float:
    return _weighted_mean(s, _without_srf(b), "equal")


def srf_band_value(s: Spectrum, b: BandDefinition) -> float:
    return _weighted_mean(s, b, "srf")


def weight_matrix(grid: WavelengthGrid, sensor: SensorModel) -> np.ndarray:
    """Row-normalised ``(n_bands, n_wavelengths)`` weights for ``sensor`` on ``grid``.

    Bands whose nominal support reaches past the grid are computed over the
    available part only and reported with a :class:`SensorWarning`.
    """
    wl = grid.wavelengths
    rows = []
    truncated = []
    for band in sensor.bands:
        try:
            w = band_weights(wl, band, sensor.approach)
        except CoverageError as exc:
            raise CoverageError(f"{sensor.name}: {exc}") from exc
        lo, hi = nominal_support(band, sensor.approach)
        if lo < grid.min - _EDGE_EPS or hi > grid.max + _EDGE_EPS:
            truncated.append(band.id)
        rows.append(w / np.sum(w))
    if truncated:
        warnings.warn(
            f"{sensor.name}: support of band(s) {', '.join(truncated)} extends past "
            f"{grid.min:g}-{grid.max:g} nm; using the available grid only",
            SensorWarning,
            stacklevel=2,
        )
    return np.vstack(rows)


@dataclass(frozen=True)
class SimulatedSpectrum:
    sensor_name: str
    band_ids: tuple
    values: np.ndarray


def simulate_sensor_spectrum(s: Spectrum, m: SensorModel) -> SimulatedSpectrum:
    values = weight_matrix(s.grid, m) @ s.values
    return SimulatedSpectrum(m.name, tuple(m.band_ids), values)


@dataclass(frozen=True)
class SimulatedDataset:
    """Band-value feature table for one sensor; rows follow the source dataset."""

    sensor_name: str
    band_ids: tuple
    centers: np.ndarray
    features: np.ndarray
    chl_a: np.ndarray
    sample_ids: tuple = ()

    @property
    def shape(self):
        return self.features.shape

    def __len__(self):
        return self.features.shape[0]

    def to_csv(self, path) -> None:
        write_simulated_csv(self, path)


def simulate_dataset(d: SpectralDataset, m: SensorModel) -> SimulatedDataset:
    W = weight_matrix(d.shared_grid, m)
    features = d.reflectance @ W.T
    bad = ~np.all(np.isfinite(features), axis=1)
    if bad.any():
        raise CoverageError(f"{m.name}: non-finite band values for sample {int(np.argmax(bad))}")
    return SimulatedDataset(
        m.name,
        tuple(m.band_ids),
        m.centers,
        features,
        d.chl_a,
        tuple(s.sample_id for s in d.samples),
    )


def write_simulated_csv(sim: SimulatedDataset, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["chl_a", *sim.band_ids])
        for target, row in zip(sim.chl_a, sim.features):
            writer.writerow([repr(float(target)), *(f"{v:.12g}" for v in row)])


def read_simulated_csv(path, sensor: Optional[SensorModel] = None) -> SimulatedDataset:
    """Inverse of :func:`write_simulated_csv`; band centers come from ``sensor`` when given."""
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if not header or header[0] != "chl_a":
        raise ValueError(f"{path}: first column must be chl_a")
    data = np.array(body, dtype=np.float64).reshape(len(body), len(header))
    band_ids = tuple(header[1:])
    centers = sensor.centers if sensor is not None else np.arange(len(band_ids), dtype=np.float64)
    name = sensor.name if sensor is not None else Path(path).stem
    return SimulatedDataset(name, band_ids, centers, data[:, 1:], data[:, 0])


class BandSimulator(TransformerMixin, BaseEstimator):
    """Transformer mapping reflectance rows on ``wavelengths`` to ``sensor`` band values."""

    def __init__(self, sensor: SensorModel, wavelengths=None):
        self.sensor = sensor
        self.wavelengths = wavelengths

    def fit(self, X, y=None):
        X = check_array(X)
        wl = self.wavelengths if self.wavelengths is not None else np.arange(X.shape[1])
        self.grid_ = WavelengthGrid(wl)
        if len(self.grid_) != X.shape[1]:
            raise ValueError(f"{X.shape[1]} columns for a grid of {len(self.grid_)} wavelengths")
        self.weights_ = weight_matrix(self.grid_, self.sensor)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "weights_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} wavelengths, got {X.shape[1]}")
        return X @ self.weights_.T

    def get_feature_names_out(self, input_features=None):
        return np.array(self.sensor.band_ids, dtype=object)
