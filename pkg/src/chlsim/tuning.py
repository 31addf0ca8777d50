"""Evaluation metrics, cross-validated grid search and the sensor x model experiment."""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import zlib
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import clone
from sklearn.pipeline import Pipeline
from threadpoolctl import threadpool_limits

from .data import FirstDerivative, SplitAssignment, ZScoreScaler, stratified_folds, stratified_split
from .exceptions import ChlsimError, TuningError, UndefinedMetricError
from .models import MODEL_KINDS, RegressorConfig
from .sensors import SensorModel
from .simulation import simulate_dataset
from .spectral import SpectralDataset

logger = logging.getLogger(__name__)

MAX_GRID_SIZE = 1000


# --- metrics ---------------------------------------------------------------


def _paired(y_true, y_pred):
    a = np.asarray(y_true, dtype=np.float64).ravel()
    b = np.asarray(y_pred, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} targets vs {b.size} predictions")
    if a.size == 0:
        raise ValueError("metrics need at least one observation")
    return a, b


def r_squared(y_true, y_pred) -> float:
    a, b = _paired(y_true, y_pred)
    ss_tot = float(np.sum((a - a.mean()) ** 2))
    if ss_tot == 0:
        raise UndefinedMetricError("R² is undefined for a constant target")
    return 1.0 - float(np.sum((a - b) ** 2)) / ss_tot


def mae(y_true, y_pred) -> float:
    a, b = _paired(y_true, y_pred)
    return float(np.mean(np.abs(a - b)))


@dataclass(frozen=True)
class EvaluationMetrics:
    r_squared: float
    mae: float
    n_test: int


def evaluate_on_test(model, X_test, y_test) -> EvaluationMetrics:
    """The single point where a cell's held-out rows are used."""
    pred = model.predict(X_test)
    return EvaluationMetrics(r_squared(y_test, pred), mae(y_test, pred), int(len(y_test)))


# --- grid search -----------------------------------------------------------


@dataclass(frozen=True)
class HyperparameterGrid:
    kind: str
    values: Dict[str, list]
    max_size: int = MAX_GRID_SIZE

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        for name, vals in self.values.items():
            if not len(vals):
                raise ValueError(f"{self.kind}: empty candidate list for {name}")
        if self.size > self.max_size:
            raise ValueError(f"{self.kind}: grid of {self.size} points exceeds cap {self.max_size}")

    @property
    def size(self) -> int:
        return int(np.prod([len(v) for v in self.values.values()])) if self.values else 1

    def points(self) -> List[dict]:
        """Grid points in canonical order: declared key order, last key varying fastest."""
        keys = list(self.values)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.values[k] for k in keys))]


def default_grids() -> Dict[str, HyperparameterGrid]:
    return {
        "rf": HyperparameterGrid("rf", {"n_trees": [200], "mtry": ["third", "sqrt", "all"], "min_leaf": [1, 5]}),
        "svr": HyperparameterGrid(
            "svr",
            {"C": [0.1, 1.0, 10.0, 100.0, 1000.0], "gamma": [1e-3, 1e-2, 1e-1, 1.0, 10.0], "epsilon": [0.1, 1.0]},
        ),
        "mars": HyperparameterGrid("mars", {"max_terms": [11, 21], "gcv_penalty": [2.0, 3.0]}),
        "ann": HyperparameterGrid("ann", {"hidden_units": [3, 5, 10], "weight_decay": [1e-4, 1e-2, 1e-1]}),
    }


@dataclass
class GridPointResult:
    params: dict
    fold_mae: List[float]
    mean_mae: float
    error: Optional[str] = None


@dataclass
class GridSearchResult:
    best: RegressorConfig
    table: List[GridPointResult]

    @property
    def best_params(self) -> dict:
        return dict(self.best.params)


def build_pipeline(config: RegressorConfig, transformers: Sequence = ()) -> Pipeline:
    steps = [(f"t{i}", clone(t)) for i, t in enumerate(transformers)]
    return Pipeline(steps + [("model", config.build())])


_RECOVERABLE = (ChlsimError, ValueError, ArithmeticError, np.linalg.LinAlgError)


def grid_search(
    grid: HyperparameterGrid,
    X_train,
    y_train,
    k: int = 5,
    seed: int = 0,
    transformers: Sequence = (),
) -> GridSearchResult:
    """Pick the grid point with the lowest mean k-fold CV MAE.

    Folds are stratified on the target.  Preprocessing ``transformers`` are
    refitted inside every fold.  A point whose training fails on any fold is
    recorded with its error and skipped; ties keep the earlier point.
    """
    X = np.asarray(X_train, dtype=np.float64)
    y = np.asarray(y_train, dtype=np.float64)
    if k < 2 or X.shape[0] < 2 * k:
        raise ValueError(f"grid search needs k >= 2 and at least 2k rows (k={k}, rows={X.shape[0]})")
    folds = stratified_folds(y, k, derive_seed(seed, "folds"))
    model_seed = derive_seed(seed, "model")
    table = []
    best_idx, best_mae = None, np.inf
    for idx, params in enumerate(grid.points()):
        config = RegressorConfig(grid.kind, params, model_seed)
        scores = []
        try:
            for f in range(k):
                tr, va = folds != f, folds == f
                pipe = build_pipeline(config, transformers).fit(X[tr], y[tr])
                scores.append(mae(y[va], pipe.predict(X[va])))
        except _RECOVERABLE as exc:
            logger.info("%s %s failed: %s", grid.kind, params, exc)
            table.append(GridPointResult(params, scores, float("nan"), f"{type(exc).__name__}: {exc}"))
            continue
        mean = float(np.mean(scores))
        table.append(GridPointResult(params, scores, mean))
        if mean < best_mae:
            best_idx, best_mae = idx, mean
    if best_idx is None:
        raise TuningError(f"all {len(table)} {grid.kind} grid points failed")
    return GridSearchResult(RegressorConfig(grid.kind, table[best_idx].params, model_seed), table)


# --- seeds -----------------------------------------------------------------


def derive_seed(root: int, *labels) -> int:
    """Stable 63-bit child seed of ``root`` for a path of string/int labels."""
    key = tuple(zlib.crc32(str(label).encode()) for label in labels)
    state = np.random.SeedSequence(int(root), spawn_key=key).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


# --- experiment ------------------------------------------------------------


@dataclass
class ExperimentConfig:
    test_fraction: float = 0.5
    seed: int = 0
    k_folds: int = 5
    grids: Dict[str, HyperparameterGrid] = field(default_factory=default_grids)
    scaled_models: tuple = ("mars", "svr", "ann")
    derivative_models: tuple = ("rf", "mars")
    # None: every sensor flagged hyperspectral in the catalog
    derivative_sensors: Optional[tuple] = None
    workers: int = 1

    def snapshot(self) -> dict:
        out = asdict(self)
        out["grids"] = {k: dict(g.values) for k, g in self.grids.items()}
        out["split_seed"] = derive_seed(self.seed, "split")
        out.pop("workers")
        return out


@dataclass
class CellResult:
    sensor: str
    model: str
    preprocessing: str
    metrics: Optional[EvaluationMetrics]
    selected_params: dict
    cv_table: List[GridPointResult]
    seed: int
    error: Optional[str] = None


@dataclass
class ExperimentResult:
    cells: List[CellResult]
    split: SplitAssignment
    config: dict
    provenance: Dict[str, str]

    def cell(self, sensor, model, preprocessing=None) -> CellResult:
        for c in self.cells:
            if c.sensor == sensor and c.model == model and (preprocessing is None or c.preprocessing == preprocessing):
                return c
        raise KeyError((sensor, model, preprocessing))

    @property
    def failures(self) -> List[CellResult]:
        return [c for c in self.cells if c.error is not None]

    def best_mae(self, sensor: str) -> float:
        vals = [c.metrics.mae for c in self.cells if c.sensor == sensor and c.metrics is not None]
        return min(vals) if vals else float("nan")


def preprocessing_tag(model: str, derivative: bool, config: ExperimentConfig) -> str:
    parts = []
    if derivative:
        parts.append("derivative")
    if model in config.scaled_models:
        parts.append("scaled")
    return "+".join(parts) or "raw"


def plan_cells(sensors: Sequence[SensorModel], models: Sequence[str], config: ExperimentConfig) -> list:
    """(sensor, model, derivative?) triples in report order."""
    deriv_sensors = config.derivative_sensors
    plan = []
    for s in sensors:
        wants_deriv = s.hyperspectral if deriv_sensors is None else s.name in deriv_sensors
        for m in models:
            plan.append((s, m, False))
            if wants_deriv and m in config.derivative_models:
                plan.append((s, m, True))
    return plan


def _run_cell(features, centers, y, split, sensor_name, model, derivative, config: ExperimentConfig) -> CellResult:
    tag = preprocessing_tag(model, derivative, config)
    seed = derive_seed(config.seed, sensor_name, model, tag)
    transformers = []
    if derivative:
        transformers.append(FirstDerivative(centers=np.asarray(centers)))
    if model in config.scaled_models:
        transformers.append(ZScoreScaler())
    Xtr, ytr = features[split.train_indices], y[split.train_indices]
    try:
        with threadpool_limits(limits=1):
            search = grid_search(config.grids[model], Xtr, ytr, config.k_folds, seed, transformers)
            final = build_pipeline(search.best, transformers).fit(Xtr, ytr)
            metrics = evaluate_on_test(final, features[split.test_indices], y[split.test_indices])
    except _RECOVERABLE + (TuningError,) as exc:
        logger.warning("cell %s/%s/%s failed: %s", sensor_name, model, tag, exc)
        return CellResult(sensor_name, model, tag, None, {}, [], seed, f"{type(exc).__name__}: {exc}")
    return CellResult(sensor_name, model, tag, metrics, search.best_params, search.table, seed)


def run_experiment(
    dataset: SpectralDataset,
    sensors: Sequence[SensorModel],
    models: Sequence[str] = MODEL_KINDS,
    config: Optional[ExperimentConfig] = None,
) -> ExperimentResult:
    """Simulate every sensor, split once on chl-a, tune and evaluate each (sensor, model) cell.

    Cells are independent work items; their seeds derive from the root seed
    and the cell labels, so ``config.workers`` does not affect results.
    """
    config = config or ExperimentConfig()
    unknown = [m for m in models if m not in config.grids]
    if unknown:
        raise ValueError(f"no grid configured for model(s) {unknown}")
    split = stratified_split(dataset.chl_a, config.test_fraction, derive_seed(config.seed, "split"))
    simulated = {s.name: simulate_dataset(dataset, s) for s in sensors}
    jobs = [
        (simulated[s.name].features, s.centers, simulated[s.name].chl_a, split, s.name, m, deriv, config)
        for s, m, deriv in plan_cells(sensors, models, config)
    ]
    if config.workers == 1:
        cells = [_run_cell(*job) for job in jobs]
    else:
        cells = Parallel(n_jobs=config.workers)(delayed(_run_cell)(*job) for job in jobs)
    for c in cells:
        if c.error:
            logger.warning("failed cell: %s/%s/%s", c.sensor, c.model, c.preprocessing)
    provenance = {s.name: f"approach={s.approach}; {s.source}" for s in sensors}
    return ExperimentResult(list(cells), split, config.snapshot(), provenance)


# --- reports ---------------------------------------------------------------

RESULT_COLUMNS = ["sensor", "model", "preprocessing", "r2", "mae", "n_test", "selected_hyperparams"]


def _fmt(x) -> str:
    return "nan" if x is None or not np.isfinite(x) else repr(float(x))


def result_rows(result: ExperimentResult) -> List[dict]:
    rows = []
    for c in result.cells:
        m = c.metrics
        rows.append({
            "sensor": c.sensor,
            "model": c.model,
            "preprocessing": c.preprocessing,
            "r2": _fmt(m.r_squared if m else None),
            "mae": _fmt(m.mae if m else None),
            "n_test": str(m.n_test) if m else "0",
            "selected_hyperparams": json.dumps(c.selected_params, sort_keys=True),
        })
    return rows


def results_csv(rows: List[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, RESULT_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def read_results_csv(text: str) -> List[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def cv_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sensor", "model", "preprocessing", "hyperparams", "mean_cv_mae", "error"])
    for c in result.cells:
        for row in c.cv_table:
            w.writerow([c.sensor, c.model, c.preprocessing, json.dumps(row.params, sort_keys=True),
                        _fmt(row.mean_mae), row.error or ""])
    return buf.getvalue()


MODEL_LABELS = {"rf": "RF", "svr": "SVM", "ann": "ANN", "mars": "MARS"}
TABLE_ORDER = ("rf", "svr", "ann", "mars")


def text_table(rows: List[dict], metric: str = "mae") -> str:
    """Aligned sensor x model table; derivative variants get their own row."""
    models = [m for m in TABLE_ORDER if any(r["model"] == m for r in rows)]
    models += sorted({r["model"] for r in rows} - set(models))
    row_keys = []
    cells = {}
    for r in rows:
        variant = "derivative" in r["preprocessing"]
        key = (r["sensor"], variant)
        if key not in row_keys:
            row_keys.append(key)
        value = float(r[metric])
        cells[(key, r["model"])] = value
    labels = [f"{s} (derivative)" if v else s for s, v in row_keys]
    width = max([len("Simulated satellite data")] + [len(lbl) for lbl in labels])
    header = "Simulated satellite data".ljust(width) + "".join(f"{MODEL_LABELS.get(m, m):>10}" for m in models)
    lines = [header, "-" * len(header)]
    for key, label in zip(row_keys, labels):
        line = label.ljust(width)
        for m in models:
            v = cells.get((key, m))
            if v is None:
                line += f"{'-':>10}"
            elif not np.isfinite(v):
                line += f"{'failed':>10}"
            else:
                line += f"{100 * v if metric == 'r2' else v:>10.1f}"
        lines.append(line)
    unit = "R² in %" if metric == "r2" else "MAE in µg/L"
    return f"{unit}\n" + "\n".join(lines) + "\n"


def plot_csv(rows: List[dict]) -> str:
    """Grouped-bar data: one bar per (sensor, model[, variant]) with R² in percent."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["group", "bar", "preprocessing", "r2_percent"])
    for r in rows:
        r2 = float(r["r2"])
        w.writerow([r["sensor"], MODEL_LABELS.get(r["model"], r["model"]), r["preprocessing"],
                    "nan" if not np.isfinite(r2) else f"{100 * r2:.6f}"])
    return buf.getvalue()
