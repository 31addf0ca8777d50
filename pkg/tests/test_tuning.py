import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.metrics import mean_absolute_error, r2_score

from chlsim import tuning
from chlsim.data import ZScoreScaler
from chlsim.exceptions import UndefinedMetricError
from chlsim.models import RegressorConfig, predict, train
from chlsim.sensors import get_sensor
from chlsim.simulation import simulate_dataset
from chlsim.tuning import (
    ExperimentConfig,
    HyperparameterGrid,
    default_grids,
    derive_seed,
    evaluate_on_test,
    grid_search,
    mae,
    plot_csv,
    r_squared,
    read_results_csv,
    result_rows,
    results_csv,
    run_experiment,
    text_table,
)

TINY = {
    "rf": HyperparameterGrid("rf", {"n_trees": [10], "mtry": ["third"]}),
    "svr": HyperparameterGrid("svr", {"C": [10.0], "gamma": [0.1]}),
    "mars": HyperparameterGrid("mars", {"max_terms": [7]}),
    "ann": HyperparameterGrid("ann", {"hidden_units": [3], "max_iterations": [50]}),
}


def test_metric_hand_case():
    assert mae([2, 2, 5], [1, 2, 3]) == 1.0
    assert r_squared([2, 2, 5], [1, 2, 3]) == pytest.approx(1 - 5 / 6, abs=1e-15)


def test_metric_baselines():
    y = np.array([1.0, 4.0, 2.0, 8.0])
    assert r_squared(y, y) == 1.0 and mae(y, y) == 0.0
    assert r_squared(y, np.full(4, y.mean())) == pytest.approx(0.0, abs=1e-15)


def test_metrics_against_sklearn():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(2, 50))
        y, p = rng.normal(size=n) * 10, rng.normal(size=n) * 10
        assert abs(r_squared(y, p) - r2_score(y, p)) <= 1e-12
        assert abs(mae(y, p) - mean_absolute_error(y, p)) <= 1e-12


@settings(max_examples=50)
@given(arrays(np.float64, 10, elements=st.floats(-100, 100)), arrays(np.float64, 10, elements=st.floats(-100, 100)))
def test_mae_homogeneous(y, p):
    assert mae(2 * y, 2 * p) == pytest.approx(2 * mae(y, p), rel=1e-12, abs=1e-12)
    assert mae(y, p) >= 0


def test_metric_errors():
    with pytest.raises(UndefinedMetricError):
        r_squared([3, 3, 3], [1, 2, 3])
    with pytest.raises(ValueError):
        mae([1, 2], [1])
    with pytest.raises(ValueError):
        mae([], [])


def test_grid_validation_and_order():
    g = HyperparameterGrid("svr", {"C": [1, 2], "gamma": [0.1, 0.2, 0.3]})
    assert g.size == 6
    assert g.points()[:2] == [{"C": 1, "gamma": 0.1}, {"C": 1, "gamma": 0.2}]
    with pytest.raises(ValueError):
        HyperparameterGrid("svr", {"C": []})
    with pytest.raises(ValueError):
        HyperparameterGrid("svr", {"C": list(range(40)), "gamma": list(range(40))})
    with pytest.raises(ValueError):
        HyperparameterGrid("knn", {})


def test_default_grids_are_valid():
    for kind, grid in default_grids().items():
        for point in grid.points():
            RegressorConfig(kind, point)


def noisy(n=80, seed=0, noise=1.0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (n, 3))
    return X, 2 * X[:, 0] + noise * rng.normal(size=n)


def test_one_point_grid():
    X, y = noisy()
    res = grid_search(HyperparameterGrid("mars", {"max_terms": [5]}), X, y)
    assert len(res.table) == 1 and res.best_params == {"max_terms": 5}


def test_svr_grid_selects_argmin():
    X, y = noisy(noise=2.0)
    res = grid_search(HyperparameterGrid("svr", {"C": [1.0, 100.0]}), X, y)
    assert [r.params["C"] for r in res.table] == [1.0, 100.0]
    best = min(res.table, key=lambda r: r.mean_mae)
    assert res.best_params == best.params


def test_tie_goes_to_earlier_point():
    X, y = noisy()
    # max_degree has no effect on a one-term model, so both points score identically
    grid = HyperparameterGrid("mars", {"max_terms": [1], "max_degree": [2, 1]})
    res = grid_search(grid, X, y)
    assert res.table[0].mean_mae == res.table[1].mean_mae
    assert res.best_params == {"max_terms": 1, "max_degree": 2}


def test_failed_points_are_recorded():
    X, y = noisy()
    grid = HyperparameterGrid("svr", {"C": [1.0], "max_updates": [1, 1_000_000]})
    res = grid_search(grid, X, y)
    assert res.table[0].error and "ConvergenceError" in res.table[0].error
    assert res.best_params["max_updates"] == 1_000_000


def test_transformers_refit_per_fold(monkeypatch):
    seen = []
    original = ZScoreScaler.fit

    def spy(self, X, y=None):
        seen.append(X.shape[0])
        return original(self, X, y)

    monkeypatch.setattr(ZScoreScaler, "fit", spy)
    X, y = noisy(100)
    grid_search(HyperparameterGrid("mars", {"max_terms": [5]}), X, y, k=5, transformers=[ZScoreScaler()])
    assert seen == [80] * 5


def test_derive_seed():
    a = derive_seed(0, "EnMAP", "rf", "raw")
    assert a == derive_seed(0, "EnMAP", "rf", "raw")
    assert a != derive_seed(1, "EnMAP", "rf", "raw") and a != derive_seed(0, "EnMAP", "rf", "derivative")
    assert 0 <= a < 2**63


def tiny_config(**kw):
    return ExperimentConfig(grids=dict(TINY), **kw)


def test_experiment_cells(small_synth):
    sensors = [get_sensor(n) for n in ("Landsat-5", "EnMAP")]
    res = run_experiment(small_synth, sensors, ["rf", "mars", "svr"], tiny_config())
    keys = [(c.sensor, c.model, c.preprocessing) for c in res.cells]
    assert keys == [
        ("Landsat-5", "rf", "raw"), ("Landsat-5", "mars", "scaled"), ("Landsat-5", "svr", "scaled"),
        ("EnMAP", "rf", "raw"), ("EnMAP", "rf", "derivative"),
        ("EnMAP", "mars", "scaled"), ("EnMAP", "mars", "derivative+scaled"), ("EnMAP", "svr", "scaled"),
    ]
    assert not res.failures
    assert res.best_mae("EnMAP") == min(c.metrics.mae for c in res.cells if c.sensor == "EnMAP")


def test_test_rows_touched_once_per_cell(small_synth, monkeypatch):
    calls = []
    original = tuning.evaluate_on_test

    def counting(model, X, y):
        calls.append(len(y))
        return original(model, X, y)

    monkeypatch.setattr(tuning, "evaluate_on_test", counting)
    res = run_experiment(small_synth, [get_sensor("Sentinel-2")], ["rf", "mars"], tiny_config(workers=1))
    assert len(calls) == len(res.cells) == 2
    assert all(n == res.split.test_indices.size for n in calls)


def test_degenerate_experiment_equals_single_fit(small_synth):
    sensor = get_sensor("Sentinel-2")
    cfg = tiny_config(scaled_models=())
    res = run_experiment(small_synth, [sensor], ["mars"], cfg)
    sim = simulate_dataset(small_synth, sensor)
    tr, te = res.split.train_indices, res.split.test_indices
    cell = res.cells[0]
    seed = derive_seed(cell.seed, "model")
    model = train(RegressorConfig("mars", {"max_terms": 7}, seed), sim.features[tr], sim.chl_a[tr])
    expected = mae(sim.chl_a[te], predict(model, sim.features[te]))
    assert cell.metrics.mae == expected


def test_experiment_is_deterministic_across_workers(small_synth):
    sensors = [get_sensor("Hyperion")]
    a = run_experiment(small_synth, sensors, ["rf", "ann"], tiny_config(workers=1))
    b = run_experiment(small_synth, sensors, ["rf", "ann"], tiny_config(workers=2))
    assert results_csv(result_rows(a)) == results_csv(result_rows(b))


def test_failed_cell_is_reported(small_synth):
    grids = dict(TINY, svr=HyperparameterGrid("svr", {"max_updates": [1]}))
    res = run_experiment(small_synth, [get_sensor("Landsat-8")], ["svr", "mars"], ExperimentConfig(grids=grids))
    assert [c.model for c in res.failures] == ["svr"]
    rows = result_rows(res)
    assert rows[0]["mae"] == "nan"
    assert "failed" in text_table(rows)


def test_reports_round_trip(small_synth):
    res = run_experiment(small_synth, [get_sensor("EnMAP")], ["rf", "mars"], tiny_config())
    rows = result_rows(res)
    text = results_csv(rows)
    assert read_results_csv(text) == rows
    table = text_table(rows, "mae")
    assert "EnMAP (derivative)" in table and "RF" in table and "MARS" in table
    plot = plot_csv(rows).splitlines()
    assert plot[0] == "group,bar,preprocessing,r2_percent" and len(plot) == 1 + len(rows)


def test_evaluate_on_test():
    class Fixed:
        def predict(self, X):
            return np.array([1.0, 2.0, 3.0])

    m = evaluate_on_test(Fixed(), np.zeros((3, 1)), np.array([2.0, 2.0, 5.0]))
    assert m.mae == 1.0 and m.n_test == 3
