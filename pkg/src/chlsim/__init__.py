"""Satellite band simulation and chlorophyll-a regression from reflectance spectra."""

__version__ = "0.1.0"

from .sensors import BandDefinition, SensorModel, SRFTable, builtin_catalog, load_sensor_file, uniform_band_grid
from .simulation import BandSimulator, simulate_dataset, simulate_sensor_spectrum
from .spectral import LabeledSample, SpectralDataset, Spectrum, WavelengthGrid, interpolate_at, restrict_range

__all__ = [
    "BandDefinition",
    "BandSimulator",
    "LabeledSample",
    "SRFTable",
    "SensorModel",
    "SpectralDataset",
    "Spectrum",
    "WavelengthGrid",
    "builtin_catalog",
    "interpolate_at",
    "load_sensor_file",
    "restrict_range",
    "simulate_dataset",
    "simulate_sensor_spectrum",
    "uniform_band_grid",
]
