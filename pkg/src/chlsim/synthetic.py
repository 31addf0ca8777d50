"""Seeded synthetic water-leaving reflectance with a known chl-a signal.

The model is deliberately simple and *not* physically calibrated::

    r(λ) = B(λ) · exp(−k·C·g(λ; 675, 15)) + p·C·g(λ; 705, 12) + η(λ)

with ``g`` an unnormalised Gaussian bump, ``B`` a piecewise-linear
baseline and ``η`` white noise.  The chl-a dependence is confined to
roughly 590-780 nm, which is what makes sensors with no bands between
660 and 710 nm measurably worse at recovering ``C``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import spearmanr

from .exceptions import InvariantError, UndefinedRatioError
from .spectral import SpectralDataset, WavelengthGrid, interpolate_at

BASELINE_NODES = ((400.0, 0.02), (560.0, 0.05), (700.0, 0.03), (900.0, 0.01))
ABSORPTION_COEF = 0.015  # L/µg
ABSORPTION_CENTER, ABSORPTION_WIDTH = 675.0, 15.0
PEAK_COEF = 4e-4  # L/µg
PEAK_CENTER, PEAK_WIDTH = 705.0, 12.0


def default_grid() -> WavelengthGrid:
    """400-900 nm at the spectrometer's 0.66 nm sampling."""
    return WavelengthGrid.regular(400.0, 900.0, 0.66)


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 400
    chl_range: tuple = (0.0, 100.0)
    noise_sd: float = 0.002
    seed: int = 0
    grid: WavelengthGrid = field(default_factory=default_grid)

    def __post_init__(self):
        lo, hi = self.chl_range
        if self.n_samples < 1:
            raise InvariantError("synth-n", "n_samples must be >= 1")
        # lo == hi is accepted as a degenerate fixed-concentration run.
        if lo < 0 or lo > hi:
            raise InvariantError("synth-range", f"chl_range must satisfy 0 <= lo <= hi, got {self.chl_range}")
        if self.noise_sd < 0:
            raise InvariantError("synth-noise", "noise_sd must be >= 0")


def bump(wavelengths, center, width):
    d = np.asarray(wavelengths, dtype=np.float64) - center
    return np.exp(-(d * d) / (2.0 * width * width))


def baseline(wavelengths) -> np.ndarray:
    x, y = zip(*BASELINE_NODES)
    return np.interp(wavelengths, x, y)


def reflectance_model(wavelengths, chl_a) -> np.ndarray:
    """Noise-free reflectance; broadcasts ``chl_a`` (n,) against ``wavelengths`` (m,) to (n, m)."""
    wl = np.asarray(wavelengths, dtype=np.float64)
    c = np.asarray(chl_a, dtype=np.float64)[..., None]
    absorbed = baseline(wl) * np.exp(-ABSORPTION_COEF * c * bump(wl, ABSORPTION_CENTER, ABSORPTION_WIDTH))
    return absorbed + PEAK_COEF * c * bump(wl, PEAK_CENTER, PEAK_WIDTH)


def generate(config: Optional[SynthConfig] = None) -> SpectralDataset:
    config = config or SynthConfig()
    wl = config.grid.wavelengths
    root = np.random.SeedSequence(config.seed)
    lo, hi = config.chl_range
    chl = np.random.default_rng(root).uniform(lo, hi, size=config.n_samples)
    refl = reflectance_model(wl, chl)
    if config.noise_sd > 0:
        # per-sample child streams keep sample i independent of n_samples
        for i, child in enumerate(root.spawn(config.n_samples)):
            refl[i] += np.random.default_rng(child).normal(0.0, config.noise_sd, size=wl.size)
    ids = [f"S{i:04d}" for i in range(config.n_samples)]
    return SpectralDataset.from_arrays(wl, refl, chl, sample_ids=ids)


def band_ratio_oracle(d: SpectralDataset, numerator=705.0, denominator=665.0) -> np.ndarray:
    """Model-free chl-a proxy: reflectance ratio r(705) / r(665) per sample."""
    out = np.empty(len(d))
    for i, s in enumerate(d.samples):
        den = interpolate_at(s.spectrum, denominator)
        if den == 0:
            raise UndefinedRatioError(f"sample {i}: zero reflectance at {denominator:g} nm")
        out[i] = interpolate_at(s.spectrum, numerator) / den
    return out


def rank_correlation(a, b) -> float:
    return float(spearmanr(a, b).statistic)
