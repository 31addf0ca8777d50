from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

MIN_TRAIN_ROWS = 5


class ChlRegressor(RegressorMixin, BaseEstimator):
    """Shared input validation and (de)serialisation for the four model families.

    Subclasses set ``kind`` and implement ``_fit``, ``_predict``,
    ``_state`` and ``_load_state``.
    """

    kind = None
    _fitted_attr = "n_features_in_"

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        if X.shape[0] < MIN_TRAIN_ROWS:
            raise ValueError(f"need at least {MIN_TRAIN_ROWS} training rows, got {X.shape[0]}")
        self.n_features_in_ = X.shape[1]
        self._fit(X, y)
        return self

    def predict(self, X):
        check_is_fitted(self, self._fitted_attr)
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"{type(self).__name__} was trained on {self.n_features_in_} features, got {X.shape[1]}"
            )
        return self._predict(X)

    def _fit(self, X, y):
        raise NotImplementedError

    def _predict(self, X):
        raise NotImplementedError

    def _state(self) -> dict:
        raise NotImplementedError

    def _load_state(self, state: dict) -> None:
        raise NotImplementedError

    def to_dict(self) -> dict:
        check_is_fitted(self, self._fitted_attr)
        return {
            "kind": self.kind,
            "params": self.get_params(),
            "n_features_in": int(self.n_features_in_),
            "state": self._state(),
        }

    @classmethod
    def from_dict(cls, payload: dict):
        model = cls(**payload["params"])
        model.n_features_in_ = int(payload["n_features_in"])
        model._load_state(payload["state"])
        return model


def as_list(a):
    return np.asarray(a).tolist()
