"""The four regressors behind one fit/predict contract.

Estimators follow the scikit-learn API (``get_params``/``set_params``,
``fit``/``predict``, ``score``) so they drop into pipelines and
``sklearn.base.clone``.  :class:`RegressorConfig` with :func:`train` and
:func:`predict` is the configuration-driven entry point used by the
experiment runner.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict

from ._base import ChlRegressor
from .ann import NeuralNet, gradient_check
from .forest import RandomForest, RegressionTree
from .mars import MARS
from .svr import EpsilonSVR

REGISTRY = {"rf": RandomForest, "svr": EpsilonSVR, "mars": MARS, "ann": NeuralNet}
MODEL_KINDS = tuple(REGISTRY)

#: Estimators that take a ``random_state``; svr and mars are deterministic without one.
SEEDED = {"rf", "ann"}

FORMAT_NAME = "chlsim-model"
FORMAT_VERSION = 1


def _check_ranges(kind, params):
    def positive(name):
        if name in params and not params[name] > 0:
            raise ValueError(f"{kind}: {name} must be > 0, got {params[name]!r}")

    def at_least(name, lo):
        if name in params and not params[name] >= lo:
            raise ValueError(f"{kind}: {name} must be >= {lo}, got {params[name]!r}")

    if kind == "svr":
        positive("C"), positive("gamma"), at_least("epsilon", 0)
    elif kind == "rf":
        at_least("n_trees", 1), at_least("min_leaf", 1)
    elif kind == "mars":
        at_least("max_terms", 1), at_least("gcv_penalty", 0), at_least("max_degree", 1)
    elif kind == "ann":
        at_least("hidden_units", 1), at_least("weight_decay", 0), at_least("max_iterations", 1)
        positive("learning_rate")


@dataclass(frozen=True)
class RegressorConfig:
    kind: str
    params: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in REGISTRY:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        valid = set(REGISTRY[self.kind]().get_params())
        unknown = set(self.params) - valid
        if unknown:
            raise ValueError(f"{self.kind}: unknown hyperparameter(s) {sorted(unknown)}")
        _check_ranges(self.kind, self.params)

    def build(self) -> ChlRegressor:
        params = dict(self.params)
        if self.kind in SEEDED:
            params["random_state"] = self.seed
        return REGISTRY[self.kind](**params)


def train(config: RegressorConfig, X, y) -> ChlRegressor:
    return config.build().fit(X, y)


def predict(model: ChlRegressor, X):
    return model.predict(X)


def dump_model(model: ChlRegressor) -> str:
    """Versioned, self-describing JSON text for a fitted model."""
    payload = {"format": FORMAT_NAME, "version": FORMAT_VERSION, **model.to_dict()}
    return json.dumps(payload, sort_keys=True)


def parse_model(text: str) -> ChlRegressor:
    payload = json.loads(text)
    if payload.get("format") != FORMAT_NAME:
        raise ValueError("not a serialised chlsim model")
    if payload.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {payload.get('version')!r}")
    kind = payload["kind"]
    cls = RegressionTree if kind == "tree" else REGISTRY[kind]
    return cls.from_dict(payload)


def save_model(model: ChlRegressor, path) -> None:
    Path(path).write_text(dump_model(model))


def load_model(path) -> ChlRegressor:
    return parse_model(Path(path).read_text())


__all__ = [
    "ChlRegressor",
    "EpsilonSVR",
    "MARS",
    "MODEL_KINDS",
    "NeuralNet",
    "RandomForest",
    "RegressionTree",
    "RegressorConfig",
    "dump_model",
    "gradient_check",
    "load_model",
    "parse_model",
    "predict",
    "save_model",
    "train",
]
