"""Command-line interface: ``chlsim {synth,simulate,split,run,report}``.

Settings come from an optional YAML file (``--config``) overlaid by flags.
Exit status: 0 on success, 2 on invalid configuration or malformed input
files, 3 when a computation step failed (including partially failed runs).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
import yaml

from . import __version__
from .data import load_dataset, write_labels_csv, write_spectra_csv
from .exceptions import ChlsimError, InvariantError, ParseError, SensorFileError
from .models import MODEL_KINDS
from .sensors import builtin_catalog, get_sensor, load_sensor_file
from .simulation import simulate_dataset, write_simulated_csv
from .synthetic import SynthConfig, generate
from .tuning import (
    ExperimentConfig,
    HyperparameterGrid,
    cv_csv,
    default_grids,
    derive_seed,
    plot_csv,
    read_results_csv,
    result_rows,
    results_csv,
    run_experiment,
    text_table,
)
from .data import stratified_split

logger = logging.getLogger("chlsim")

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 2, 3


class ValidationError(ChlsimError):
    """Configuration problem detected before any computation."""


@dataclass
class RunConfig:
    spectra: Optional[str] = None
    labels: Optional[str] = None
    sensor_files: List[str] = field(default_factory=list)
    sensors: Optional[List[str]] = None
    models: List[str] = field(default_factory=lambda: list(MODEL_KINDS))
    seed: int = 0
    test_fraction: float = 0.5
    k_folds: int = 5
    out: str = "out"
    workers: int = 0
    tolerance: float = 60.0
    grids: dict = field(default_factory=dict)
    scaled_models: List[str] = field(default_factory=lambda: ["mars", "svr", "ann"])
    derivative_models: List[str] = field(default_factory=lambda: ["rf", "mars"])
    derivative_sensors: Optional[List[str]] = None
    n_samples: int = 400
    chl_lo: float = 0.0
    chl_hi: float = 100.0
    noise_sd: float = 0.002
    results: Optional[str] = None

    @classmethod
    def from_sources(cls, args: argparse.Namespace) -> "RunConfig":
        values = {}
        if getattr(args, "config", None):
            path = Path(args.config)
            if not path.is_file():
                raise ValidationError(f"config file not found: {path}")
            loaded = yaml.safe_load(path.read_text()) or {}
            if not isinstance(loaded, dict):
                raise ValidationError("config file must hold a mapping of keys to values")
            values.update({k.replace("-", "_"): v for k, v in loaded.items()})
        for key, value in vars(args).items():
            if key in ("config", "command", "verbose", "func") or value is None:
                continue
            values[key] = value
        known = set(cls.__dataclass_fields__)
        unknown = set(values) - known
        if unknown:
            raise ValidationError(f"unknown configuration key(s): {', '.join(sorted(unknown))}")
        cfg = cls(**values)
        for attr in ("sensors", "models", "sensor_files", "scaled_models", "derivative_models", "derivative_sensors"):
            v = getattr(cfg, attr)
            if isinstance(v, str):
                setattr(cfg, attr, [s.strip() for s in v.split(",") if s.strip()])
        return cfg

    @property
    def n_workers(self) -> int:
        return self.workers if self.workers and self.workers > 0 else (os.cpu_count() or 1)

    def catalog(self):
        catalog = builtin_catalog()
        for path in self.sensor_files:
            if not Path(path).is_file():
                raise ValidationError(f"sensor file not found: {path}")
            loaded = load_sensor_file(path)
            catalog = [s for s in catalog if s.name.lower() != loaded.name.lower()] + [loaded]
        return catalog

    def selected_sensors(self):
        catalog = self.catalog()
        if not self.sensors:
            return catalog
        try:
            return [get_sensor(name, catalog) for name in self.sensors]
        except KeyError as exc:
            raise ValidationError(exc.args[0]) from None

    def experiment_config(self) -> ExperimentConfig:
        grids = default_grids()
        for kind, values in (self.grids or {}).items():
            if kind not in MODEL_KINDS:
                raise ValidationError(f"grid given for unknown model {kind!r}")
            grids[kind] = HyperparameterGrid(kind, {k: list(v) for k, v in values.items()})
        return ExperimentConfig(
            test_fraction=self.test_fraction,
            seed=int(self.seed),
            k_folds=self.k_folds,
            grids=grids,
            scaled_models=tuple(self.scaled_models),
            derivative_models=tuple(self.derivative_models),
            derivative_sensors=tuple(self.derivative_sensors) if self.derivative_sensors is not None else None,
            workers=self.n_workers,
        )

    def require_inputs(self):
        for attr in ("spectra", "labels"):
            value = getattr(self, attr)
            if not value:
                raise ValidationError(f"--{attr} is required")
            if not Path(value).is_file():
                raise ValidationError(f"{attr} file not found: {value}")

    def validate_run(self):
        self.require_inputs()
        bad = [m for m in self.models if m not in MODEL_KINDS]
        if bad or not self.models:
            raise ValidationError(f"unknown model(s) {bad}; choose from {', '.join(MODEL_KINDS)}")
        if not 0 < self.test_fraction < 1:
            raise ValidationError("--test-fraction must lie in (0, 1)")
        if self.k_folds < 2:
            raise ValidationError("k_folds must be >= 2")
        self.selected_sensors()
        try:
            self.experiment_config()
        except ValueError as exc:
            raise ValidationError(str(exc)) from None

    def snapshot(self) -> dict:
        snap = dict(vars(self))
        snap.pop("workers")
        return snap


def _versions() -> dict:
    import numba
    import scipy
    import sklearn

    return {
        "chlsim": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
        "numba": numba.__version__,
    }


def _write_manifest(out: Path, cfg: RunConfig, command: str, **extra) -> None:
    manifest = {"command": command, "config": cfg.snapshot(), "versions": _versions(), **extra}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- subcommands ------------------------------------------------------------


def cmd_synth(cfg: RunConfig) -> int:
    if cfg.chl_lo < 0 or cfg.chl_lo > cfg.chl_hi:
        raise ValidationError("chl range must satisfy 0 <= lo <= hi")
    synth = SynthConfig(cfg.n_samples, (cfg.chl_lo, cfg.chl_hi), cfg.noise_sd, int(cfg.seed))
    dataset = generate(synth)
    out = _outdir(cfg)
    ids = [s.sample_id for s in dataset.samples]
    write_spectra_csv(out / "spectra.csv", dataset.shared_grid.wavelengths, dataset.reflectance, ids)
    write_labels_csv(out / "labels.csv", ids, dataset.chl_a)
    _write_manifest(out, cfg, "synth", outputs=["spectra.csv", "labels.csv"])
    logger.info("wrote %d synthetic samples to %s", len(dataset), out)
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    cfg.require_inputs()
    sensors = cfg.selected_sensors()
    dataset = load_dataset(cfg.spectra, cfg.labels, cfg.tolerance)
    out = _outdir(cfg)
    written, failures = [], {}
    for sensor in sensors:
        try:
            sim = simulate_dataset(dataset, sensor)
        except ChlsimError as exc:
            failures[sensor.name] = str(exc)
            logger.error("%s: %s", sensor.name, exc)
            continue
        name = f"simulated_{sensor.name}.csv"
        write_simulated_csv(sim, out / name)
        written.append(name)
    _write_manifest(
        out, cfg, "simulate", outputs=written, failures=failures,
        provenance={s.name: f"approach={s.approach}; {s.source}" for s in sensors},
    )
    return EXIT_FAILED if failures else EXIT_OK


def cmd_split(cfg: RunConfig) -> int:
    cfg.require_inputs()
    dataset = load_dataset(cfg.spectra, cfg.labels, cfg.tolerance)
    seed = derive_seed(int(cfg.seed), "split")
    split = stratified_split(dataset.chl_a, cfg.test_fraction, seed)
    out = _outdir(cfg)
    split.write_manifest(out / "split.csv")
    _write_manifest(out, cfg, "split", outputs=["split.csv"], split_seed=seed,
                    bin_edges=split.bin_edges.tolist())
    return EXIT_OK


def _write_reports(out: Path, rows) -> None:
    (out / "results.csv").write_text(results_csv(rows))
    (out / "table.txt").write_text(text_table(rows, "mae") + "\n" + text_table(rows, "r2"))
    (out / "plot_r2.csv").write_text(plot_csv(rows))


def cmd_run(cfg: RunConfig) -> int:
    cfg.validate_run()
    sensors = cfg.selected_sensors()
    dataset = load_dataset(cfg.spectra, cfg.labels, cfg.tolerance)
    out = _outdir(cfg)
    result = run_experiment(dataset, sensors, cfg.models, cfg.experiment_config())
    rows = result_rows(result)
    _write_reports(out, rows)
    (out / "cv_results.csv").write_text(cv_csv(result))
    result.split.write_manifest(out / "split.csv")
    failures = {f"{c.sensor}/{c.model}/{c.preprocessing}": c.error for c in result.failures}
    _write_manifest(
        out, cfg, "run",
        experiment=result.config,
        provenance=result.provenance,
        outputs=["results.csv", "table.txt", "plot_r2.csv", "cv_results.csv", "split.csv"],
        failures=failures,
    )
    sys.stdout.write(text_table(rows, "mae"))
    return EXIT_FAILED if failures else EXIT_OK


def cmd_report(cfg: RunConfig) -> int:
    path = Path(cfg.results) if cfg.results else Path(cfg.out) / "results.csv"
    if not path.is_file():
        raise ValidationError(f"results file not found: {path}")
    rows = read_results_csv(path.read_text())
    out = _outdir(cfg)
    (out / "table.txt").write_text(text_table(rows, "mae") + "\n" + text_table(rows, "r2"))
    (out / "plot_r2.csv").write_text(plot_csv(rows))
    sys.stdout.write(text_table(rows, "mae") + "\n" + text_table(rows, "r2"))
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "simulate": cmd_simulate, "split": cmd_split, "run": cmd_run, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file of settings (flags override it)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="root seed for all randomness")
    common.add_argument("--workers", type=int, help="parallel workers (default: all CPUs)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    data_opts = argparse.ArgumentParser(add_help=False)
    data_opts.add_argument("--spectra", help="spectra CSV (wavelength_nm column + one column per measurement)")
    data_opts.add_argument("--labels", help="labels CSV (id or timestamp, chl_a_ug_l)")
    data_opts.add_argument("--tolerance", type=float, help="timestamp matching tolerance in seconds")
    data_opts.add_argument("--sensor-file", dest="sensor_files", action="append", help="extra sensor definition file")
    data_opts.add_argument("--sensors", help="comma-separated sensor names")
    data_opts.add_argument("--test-fraction", dest="test_fraction", type=float)

    parser = argparse.ArgumentParser(prog="chlsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic spectra + labels dataset")
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--chl-lo", dest="chl_lo", type=float)
    p.add_argument("--chl-hi", dest="chl_hi", type=float)
    p.add_argument("--noise-sd", dest="noise_sd", type=float)

    sub.add_parser("simulate", parents=[common, data_opts], help="write band-simulated CSVs per sensor")
    sub.add_parser("split", parents=[common, data_opts], help="write the stratified train/test manifest")
    p = sub.add_parser("run", parents=[common, data_opts], help="run the sensor x model experiment")
    p.add_argument("--models", help="comma-separated subset of rf,svr,mars,ann")
    p = sub.add_parser("report", parents=[common], help="re-render tables from a results CSV")
    p.add_argument("--results", help="results CSV (default: <out>/results.csv)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        cfg = RunConfig.from_sources(args)
        return COMMANDS[args.command](cfg)
    except (ValidationError, ParseError, SensorFileError, InvariantError) as exc:
        logger.error("%s", exc)
        return EXIT_INVALID
    except (ChlsimError, ValueError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
