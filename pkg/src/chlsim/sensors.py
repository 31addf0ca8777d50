"""Satellite band definitions, the built-in mission catalog and the sensor file format.

Sensor definition files are line oriented::

    # comment
    sensor Sentinel-2 approach=srf spatial=10-60 hyperspectral=false
    source free text up to the end of the line
    band B4 center=665 fwhm=30
    srf B4
    640.0 0.0
    650.0 1.0
    ...
    end

Only ``sensor`` and ``band`` lines are required.  ``spatial``,
``hyperspectral`` and ``source`` are descriptive metadata.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .exceptions import InvariantError, SensorFileError
from .spectral import WavelengthGrid

APPROACHES = ("gaussian", "equal", "srf")

#: Analysis window shared by every sensor (nm).
WINDOW = (400.0, 900.0)


class SensorWarning(UserWarning):
    """Recoverable oddity in a sensor definition or band support."""


@dataclass(frozen=True, eq=False)
class SRFTable:
    """Tabulated spectral response, linearly interpolated between nodes."""

    grid: WavelengthGrid
    weights: np.ndarray

    def __post_init__(self):
        if not isinstance(self.grid, WavelengthGrid):
            object.__setattr__(self, "grid", WavelengthGrid(self.grid))
        w = np.array(self.weights, dtype=np.float64)
        if w.shape != (len(self.grid),):
            raise InvariantError("srf-length", f"{w.size} weights for {len(self.grid)} wavelengths")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InvariantError("srf-nonnegative", "SRF weights must be finite and >= 0")
        if not np.any(w > 0):
            raise InvariantError("srf-positive", "SRF needs at least one positive weight")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __call__(self, wavelengths):
        return np.interp(wavelengths, self.grid.wavelengths, self.weights, left=0.0, right=0.0)

    def __eq__(self, other):
        if not isinstance(other, SRFTable):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.weights, other.weights)

    __hash__ = None


@dataclass(frozen=True)
class BandDefinition:
    id: str
    center: float
    fwhm: float
    srf: Optional[SRFTable] = None

    def __post_init__(self):
        if not self.id or any(ch.isspace() for ch in self.id):
            raise InvariantError("band-id", f"band id must be a non-empty token, got {self.id!r}")
        center, fwhm = float(self.center), float(self.fwhm)
        if not math.isfinite(center):
            raise InvariantError("band-center", f"band {self.id}: center must be finite")
        if not (math.isfinite(fwhm) and fwhm > 0):
            raise InvariantError("band-fwhm", f"band {self.id}: fwhm must be > 0, got {self.fwhm!r}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "fwhm", fwhm)

    @property
    def sigma(self) -> float:
        from .simulation import sigma_from_fwhm

        return sigma_from_fwhm(self.fwhm)


@dataclass(frozen=True)
class SensorModel:
    """A named mission: ordered bands plus the weighting approach used to simulate them."""

    name: str
    bands: tuple
    approach: str
    spatial_resolution_m: str = ""
    source: str = ""
    hyperspectral: bool = False

    def __post_init__(self):
        bands = tuple(self.bands)
        object.__setattr__(self, "bands", bands)
        if not self.name or any(ch.isspace() for ch in self.name):
            raise InvariantError("sensor-name", f"sensor name must be a non-empty token, got {self.name!r}")
        if self.approach not in APPROACHES:
            raise InvariantError("sensor-approach", f"approach must be one of {APPROACHES}, got {self.approach!r}")
        if not bands:
            raise InvariantError("sensor-bands", f"sensor {self.name} has no bands")
        centers = [b.center for b in bands]
        if any(b >= a for a, b in zip(centers[1:], centers[:-1])):
            raise InvariantError("sensor-sorted", f"sensor {self.name}: bands must be sorted by center")
        ids = [b.id for b in bands]
        if len(set(ids)) != len(ids):
            raise InvariantError("sensor-unique-ids", f"sensor {self.name}: duplicate band ids")
        lo, hi = WINDOW
        for b in bands:
            if not lo <= b.center <= hi:
                raise InvariantError(
                    "band-window", f"band {b.id} center {b.center:g} nm outside {lo:g}-{hi:g} nm"
                )

    @property
    def band_ids(self) -> list:
        return [b.id for b in self.bands]

    @property
    def centers(self) -> np.ndarray:
        return np.array([b.center for b in self.bands])

    @property
    def fwhms(self) -> np.ndarray:
        return np.array([b.fwhm for b in self.bands])

    def __len__(self):
        return len(self.bands)


def uniform_band_grid(lo: float, hi: float, n: int, fwhm: float, prefix: str = "B") -> list:
    """``n`` equally spaced bands from ``lo`` to ``hi`` inclusive, all with width ``fwhm``."""
    if n < 2:
        raise ValueError(f"need at least 2 bands, got {n}")
    if not lo < hi:
        raise ValueError(f"lo ({lo}) must be below hi ({hi})")
    if not fwhm > 0:
        raise ValueError(f"fwhm must be > 0, got {fwhm}")
    width = len(str(n))
    step = (hi - lo) / (n - 1)
    return [BandDefinition(f"{prefix}{i + 1:0{width}d}", lo + i * step, fwhm) for i in range(n)]


def trapezoid_srf(center: float, fwhm: float) -> SRFTable:
    """Flat top of width ``fwhm`` with linear shoulders ``fwhm / 4`` wide."""
    half, shoulder = fwhm / 2.0, fwhm / 4.0
    nodes = [center - half - shoulder, center - half, center + half, center + half + shoulder]
    return SRFTable(WavelengthGrid(nodes), [0.0, 1.0, 1.0, 0.0])


def _with_trapezoids(layout):
    return tuple(BandDefinition(bid, c, w, trapezoid_srf(c, w)) for bid, c, w in layout)


# Nominal band layouts restricted to 400-900 nm.
_SENTINEL2 = [
    ("B1", 443.0, 20.0), ("B2", 490.0, 65.0), ("B3", 560.0, 35.0), ("B4", 665.0, 30.0),
    ("B5", 705.0, 15.0), ("B6", 740.0, 15.0), ("B7", 783.0, 20.0), ("B8", 842.0, 115.0),
    ("B8A", 865.0, 20.0),
]
# OLCI band table, bands Oa1-Oa19 (Oa20/Oa21 lie beyond 900 nm).
_SENTINEL3 = [
    ("Oa1", 400.0, 15.0), ("Oa2", 412.5, 10.0), ("Oa3", 442.5, 10.0), ("Oa4", 490.0, 10.0),
    ("Oa5", 510.0, 10.0), ("Oa6", 560.0, 10.0), ("Oa7", 620.0, 10.0), ("Oa8", 665.0, 10.0),
    ("Oa9", 673.75, 7.5), ("Oa10", 681.25, 7.5), ("Oa11", 708.75, 10.0), ("Oa12", 753.75, 7.5),
    ("Oa13", 761.25, 2.5), ("Oa14", 764.375, 3.75), ("Oa15", 767.5, 2.5), ("Oa16", 778.75, 15.0),
    ("Oa17", 865.0, 20.0), ("Oa18", 885.0, 10.0), ("Oa19", 900.0, 10.0),
]
_LANDSAT8 = [
    ("B1", 443.0, 16.0), ("B2", 482.0, 60.0), ("B3", 561.0, 57.0), ("B4", 655.0, 37.0),
    ("B5", 865.0, 28.0),
]
_LANDSAT5 = [("B1", 485.0, 70.0), ("B2", 560.0, 80.0), ("B3", 660.0, 60.0), ("B4", 840.0, 140.0)]

_FALLBACK_NOTE = "nominal band centers/widths; trapezoidal fallback SRF (flat top = fwhm, shoulders = fwhm/4)"


def builtin_catalog() -> list:
    """The six missions used in the study, in report order."""
    return [
        SensorModel(
            "Sentinel-2", _with_trapezoids(_SENTINEL2), "srf", "10-60",
            "MSI bands B1-B8A within 443-865 nm; " + _FALLBACK_NOTE,
        ),
        SensorModel(
            "Sentinel-3",
            tuple(BandDefinition(*b) for b in _SENTINEL3), "gaussian", "300-1000",
            "OLCI user-guide band table, bands Oa1-Oa19 (centers <= 900 nm)",
        ),
        SensorModel(
            "Landsat-8", _with_trapezoids(_LANDSAT8), "srf", "30",
            "OLI bands 1-5; " + _FALLBACK_NOTE,
        ),
        SensorModel(
            "Landsat-5", _with_trapezoids(_LANDSAT5), "srf", "30",
            "TM bands 1-4; " + _FALLBACK_NOTE,
        ),
        SensorModel(
            "Hyperion", tuple(uniform_band_grid(406.0, 895.0, 54, 10.0, "H")), "gaussian", "30",
            "uniform grid of 54 bands over 406-895 nm, fwhm 10 nm", hyperspectral=True,
        ),
        SensorModel(
            "EnMAP", tuple(uniform_band_grid(423.0, 895.0, 77, 6.5, "E")), "gaussian", "30",
            "uniform grid of 77 bands over 423-895 nm, fwhm 6.5 nm", hyperspectral=True,
        ),
    ]


def get_sensor(name: str, catalog: Optional[Sequence[SensorModel]] = None) -> SensorModel:
    """Case-insensitive catalog lookup; ``KeyError`` lists the known names."""
    catalog = builtin_catalog() if catalog is None else catalog
    for sensor in catalog:
        if sensor.name.lower() == name.lower():
            return sensor
    known = ", ".join(s.name for s in catalog)
    raise KeyError(f"unknown sensor {name!r}; known sensors: {known}")


# --- file format -----------------------------------------------------------


def _number(text, line, what):
    try:
        value = float(text)
    except ValueError:
        raise SensorFileError(f"{what}: {text!r} is not a number", line) from None
    if not math.isfinite(value):
        raise SensorFileError(f"{what}: {text!r} is not finite", line)
    return value


def _keyvals(tokens, line):
    out = {}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep or not key:
            raise SensorFileError(f"expected key=value, got {tok!r}", line)
        out[key] = value
    return out


def parse_sensor_text(text: str) -> SensorModel:
    header = None
    source = ""
    bands = []  # (id, center, fwhm, line)
    srfs = {}
    block = None  # (band_id, nodes, start line) while inside an srf block

    for lineno, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if not content:
            continue
        tokens = content.split()
        if block is not None:
            if tokens == ["end"]:
                band_id, nodes, start = block
                if len(nodes) < 2:
                    raise SensorFileError(f"srf block for {band_id} needs at least 2 rows", start)
                try:
                    srfs[band_id] = SRFTable(
                        WavelengthGrid([n[0] for n in nodes]), [n[1] for n in nodes]
                    )
                except InvariantError as exc:
                    raise SensorFileError(f"srf block for {band_id}: {exc}", start) from exc
                block = None
                continue
            if len(tokens) != 2:
                raise SensorFileError("srf rows are '<nm> <weight>' pairs", lineno)
            block[1].append(
                (_number(tokens[0], lineno, "srf wavelength"), _number(tokens[1], lineno, "srf weight"))
            )
            continue

        kind = tokens[0]
        if kind == "sensor":
            if header is not None:
                raise SensorFileError("duplicate sensor header", lineno)
            if len(tokens) < 2:
                raise SensorFileError("sensor header needs a name", lineno)
            opts = _keyvals(tokens[2:], lineno)
            if "approach" not in opts:
                raise SensorFileError("sensor header needs approach=<gaussian|equal|srf>", lineno)
            if opts["approach"] not in APPROACHES:
                raise SensorFileError(f"unknown approach {opts['approach']!r}", lineno)
            unknown = set(opts) - {"approach", "spatial", "hyperspectral"}
            if unknown:
                raise SensorFileError(f"unknown header key(s): {', '.join(sorted(unknown))}", lineno)
            hyper = opts.get("hyperspectral", "false").lower()
            if hyper not in ("true", "false"):
                raise SensorFileError(f"hyperspectral must be true or false, got {hyper!r}", lineno)
            header = (tokens[1], opts["approach"], opts.get("spatial", ""), hyper == "true")
        elif kind == "source":
            source = content[len("source"):].strip()
        elif kind == "band":
            if len(tokens) < 2:
                raise SensorFileError("band line needs an id", lineno)
            opts = _keyvals(tokens[2:], lineno)
            missing = {"center", "fwhm"} - set(opts)
            if missing:
                raise SensorFileError(f"band {tokens[1]} missing {', '.join(sorted(missing))}", lineno)
            bands.append(
                (
                    tokens[1],
                    _number(opts["center"], lineno, "center"),
                    _number(opts["fwhm"], lineno, "fwhm"),
                    lineno,
                )
            )
        elif kind == "srf":
            if len(tokens) != 2:
                raise SensorFileError("srf line is 'srf <band-id>'", lineno)
            block = (tokens[1], [], lineno)
        else:
            raise SensorFileError(f"unrecognised directive {kind!r}", lineno)

    if block is not None:
        raise SensorFileError(f"srf block for {block[0]} not terminated by 'end'", block[2])
    if header is None:
        raise SensorFileError("missing 'sensor <name> approach=...' header")
    if not bands:
        raise SensorFileError("no band lines")

    known = {b[0] for b in bands}
    for band_id in srfs:
        if band_id not in known:
            raise SensorFileError(f"srf block for unknown band {band_id!r}")

    centers = [b[1] for b in bands]
    if centers != sorted(centers):
        warnings.warn(f"sensor {header[0]}: band centers not sorted; sorting", SensorWarning, stacklevel=3)
        bands = sorted(bands, key=lambda b: b[1])

    definitions = []
    for band_id, center, fwhm, _ in bands:
        definitions.append(BandDefinition(band_id, center, fwhm, srfs.get(band_id)))
    name, approach, spatial, hyper = header
    return SensorModel(name, tuple(definitions), approach, spatial, source, hyper)


def load_sensor_file(path) -> SensorModel:
    """Parse a sensor definition file.

    Raises :class:`SensorFileError` (with line number) on syntax problems and
    :class:`InvariantError` naming the rule when a band or sensor is invalid.
    """
    return parse_sensor_text(Path(path).read_text())


def format_sensor(sensor: SensorModel) -> str:
    head = f"sensor {sensor.name} approach={sensor.approach}"
    if sensor.spatial_resolution_m:
        head += f" spatial={sensor.spatial_resolution_m}"
    head += f" hyperspectral={'true' if sensor.hyperspectral else 'false'}"
    lines = [head]
    if sensor.source:
        lines.append(f"source {sensor.source}")
    for b in sensor.bands:
        lines.append(f"band {b.id} center={b.center!r} fwhm={b.fwhm!r}")
    for b in sensor.bands:
        if b.srf is None:
            continue
        lines.append(f"srf {b.id}")
        lines.extend(f"{wl!r} {w!r}" for wl, w in zip(b.srf.grid.wavelengths.tolist(), b.srf.weights.tolist()))
        lines.append("end")
    return "\n".join(lines) + "\n"


def save_sensor_file(sensor: SensorModel, path) -> None:
    Path(path).write_text(format_sensor(sensor))

