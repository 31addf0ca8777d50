"""Spectral data types and wavelength-grid utilities.

All containers are immutable: arrays are copied on construction and
flagged read-only so they can be shared freely between workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Optional, Sequence

import numpy as np

from .exceptions import ExtrapolationError, InvariantError, RangeError

#: Two grids are considered equal when every node differs by less than this (nm).
GRID_ATOL = 1e-9


def _frozen(values, name):
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != 1:
        raise InvariantError("shape", f"{name} must be one-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class WavelengthGrid:
    """Strictly increasing wavelength nodes in nanometres."""

    wavelengths: np.ndarray

    def __post_init__(self):
        wl = _frozen(self.wavelengths, "wavelengths")
        if wl.size < 2:
            raise InvariantError("grid-length", f"a wavelength grid needs at least 2 nodes, got {wl.size}")
        if not np.all(np.isfinite(wl)) or np.any(wl <= 0):
            raise InvariantError("grid-positive", "wavelengths must be finite and > 0")
        if np.any(np.diff(wl) <= 0):
            raise InvariantError("grid-increasing", "wavelengths must be strictly increasing")
        object.__setattr__(self, "wavelengths", wl)

    def __len__(self):
        return self.wavelengths.size

    def __eq__(self, other):
        if not isinstance(other, WavelengthGrid):
            return NotImplemented
        return len(self) == len(other) and bool(
            np.all(np.abs(self.wavelengths - other.wavelengths) < GRID_ATOL)
        )

    __hash__ = None

    @property
    def min(self) -> float:
        return float(self.wavelengths[0])

    @property
    def max(self) -> float:
        return float(self.wavelengths[-1])

    @classmethod
    def regular(cls, lo: float, hi: float, step: float) -> "WavelengthGrid":
        """Grid from ``lo`` to ``hi`` (inclusive when it lands on a step)."""
        n = int(np.floor((hi - lo) / step + 1e-9)) + 1
        return cls(lo + step * np.arange(n))


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Reflectance values sampled on a :class:`WavelengthGrid`.

    Negative values are allowed; spectrometer ratios can dip below zero.
    """

    grid: WavelengthGrid
    values: np.ndarray

    def __post_init__(self):
        if not isinstance(self.grid, WavelengthGrid):
            object.__setattr__(self, "grid", WavelengthGrid(self.grid))
        vals = _frozen(self.values, "values")
        if vals.size != len(self.grid):
            raise InvariantError(
                "spectrum-length",
                f"{vals.size} values for a grid of {len(self.grid)} wavelengths",
            )
        if not np.all(np.isfinite(vals)):
            raise InvariantError("spectrum-finite", "reflectance values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def wavelengths(self) -> np.ndarray:
        return self.grid.wavelengths

    def __eq__(self, other):
        if not isinstance(other, Spectrum):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True)
class LabeledSample:
    spectrum: Spectrum
    chl_a: float
    timestamp: Optional[datetime] = None
    sample_id: Optional[str] = None

    def __post_init__(self):
        chl = float(self.chl_a)
        if not np.isfinite(chl) or chl < 0:
            raise InvariantError("chl-nonnegative", f"chl_a must be finite and >= 0, got {self.chl_a!r}")
        object.__setattr__(self, "chl_a", chl)


@dataclass(frozen=True, eq=False)
class SpectralDataset:
    """Labelled spectra sharing a single wavelength grid."""

    samples: tuple
    shared_grid: WavelengthGrid = field(default=None)

    def __post_init__(self):
        samples = tuple(self.samples)
        if not samples:
            raise InvariantError("dataset-nonempty", "a dataset needs at least one sample")
        grid = self.shared_grid if self.shared_grid is not None else samples[0].spectrum.grid
        for i, s in enumerate(samples):
            if s.spectrum.grid != grid:
                raise InvariantError("dataset-grid", f"sample {i} is not on the shared grid")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "shared_grid", grid)

    @classmethod
    def from_arrays(
        cls,
        wavelengths: Sequence[float],
        reflectance: np.ndarray,
        chl_a: Sequence[float],
        timestamps: Optional[Sequence[Optional[datetime]]] = None,
        sample_ids: Optional[Sequence[Optional[str]]] = None,
    ) -> "SpectralDataset":
        """Build from an ``(n_samples, n_wavelengths)`` reflectance matrix."""
        grid = WavelengthGrid(wavelengths)
        reflectance = np.atleast_2d(np.asarray(reflectance, dtype=np.float64))
        n = reflectance.shape[0]
        if len(chl_a) != n:
            raise InvariantError("dataset-labels", f"{len(chl_a)} labels for {n} spectra")
        timestamps = list(timestamps) if timestamps is not None else [None] * n
        sample_ids = list(sample_ids) if sample_ids is not None else [None] * n
        samples = [
            LabeledSample(Spectrum(grid, reflectance[i]), chl_a[i], timestamps[i], sample_ids[i])
            for i in range(n)
        ]
        return cls(tuple(samples), grid)

    def __len__(self):
        return len(self.samples)

    @property
    def reflectance(self) -> np.ndarray:
        """Reflectance matrix, one row per sample."""
        return np.vstack([s.spectrum.values for s in self.samples])

    @property
    def chl_a(self) -> np.ndarray:
        return np.array([s.chl_a for s in self.samples], dtype=np.float64)

    def subset(self, indices: Iterable[int]) -> "SpectralDataset":
        return SpectralDataset(tuple(self.samples[i] for i in indices), self.shared_grid)

    def restrict(self, lo: float, hi: float) -> "SpectralDataset":
        samples = tuple(
            LabeledSample(restrict_range(s.spectrum, lo, hi), s.chl_a, s.timestamp, s.sample_id)
            for s in self.samples
        )
        return SpectralDataset(samples)


def restrict_range(s: Spectrum, lo: float, hi: float) -> Spectrum:
    """Sub-spectrum with ``lo <= wavelength <= hi``."""
    if not lo < hi:
        raise ValueError(f"lower bound {lo} must be below upper bound {hi}")
    wl = s.wavelengths
    mask = (wl >= lo) & (wl <= hi)
    n = int(mask.sum())
    if n < 2:
        raise RangeError(
            f"[{lo}, {hi}] nm keeps {n} grid point(s) of {s.grid.min:g}-{s.grid.max:g} nm; at least 2 required"
        )
    if n == wl.size:
        return s
    return Spectrum(WavelengthGrid(wl[mask]), s.values[mask])


def interpolate_at(s: Spectrum, wavelength):
    """Linearly interpolated reflectance at ``wavelength`` (scalar or array)."""
    wl = np.asarray(wavelength, dtype=np.float64)
    if np.any(wl < s.grid.min) or np.any(wl > s.grid.max):
        raise ExtrapolationError(
            f"wavelength {wavelength} nm outside sampled span [{s.grid.min:g}, {s.grid.max:g}]"
        )
    out = np.interp(wl, s.wavelengths, s.values)
    return float(out) if out.ndim == 0 else out
