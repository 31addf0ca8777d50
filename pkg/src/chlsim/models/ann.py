"""Single-hidden-layer perceptron for regression.

Sigmoid hidden units, one linear output.  The objective on targets rescaled
to [0, 1] is

    L(w) = sum_i (f(x_i) - t_i)^2 + weight_decay * ||w||^2

with every weight and bias decayed.  It is minimised by plain gradient
descent whose step is halved whenever a step would raise the objective.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..exceptions import ConvergenceError
from ._base import ChlRegressor, as_list

INIT_RANGE = 0.5


def _unpack(theta, n_features, hidden):
    h, p = hidden, n_features
    W1 = theta[: h * p].reshape(h, p)
    b1 = theta[h * p: h * p + h]
    w2 = theta[h * p + h: h * p + 2 * h]
    b2 = theta[-1]
    return W1, b1, w2, b2


def n_weights(n_features, hidden):
    return hidden * n_features + 2 * hidden + 1


def forward(theta, X, hidden):
    W1, b1, w2, b2 = _unpack(theta, X.shape[1], hidden)
    H = expit(X @ W1.T + b1)
    return H @ w2 + b2, H


def loss_and_grad(theta, X, t, hidden, decay):
    """Objective and its analytic gradient with respect to the flat parameter vector."""
    out, H = forward(theta, X, hidden)
    e = out - t
    loss = float(e @ e + decay * (theta @ theta))
    W1, b1, w2, b2 = _unpack(theta, X.shape[1], hidden)
    g_out = 2.0 * e
    dZ = np.outer(g_out, w2) * H * (1.0 - H)
    grad = np.concatenate([
        (dZ.T @ X).ravel(),
        dZ.sum(0),
        H.T @ g_out,
        [g_out.sum()],
    ])
    grad += 2.0 * decay * theta
    return loss, grad


def numerical_grad(fun, theta, step=1e-6):
    g = np.empty_like(theta)
    for k in range(theta.size):
        tp = theta.copy()
        tm = theta.copy()
        tp[k] += step
        tm[k] -= step
        g[k] = (fun(tp) - fun(tm)) / (2.0 * step)
    return g


def relative_error(a, b, floor=1e-8):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


class NeuralNet(ChlRegressor):
    """One hidden layer of ``hidden_units`` sigmoid units; see module docstring.

    ``learning_rate`` is per training row: the step applied is
    ``learning_rate / n_rows`` times the gradient of the summed objective.
    """

    kind = "ann"
    _fitted_attr = "theta_"

    def __init__(self, hidden_units=5, weight_decay=1e-2, max_iterations=2000, learning_rate=0.5, random_state=0):
        self.hidden_units = hidden_units
        self.weight_decay = weight_decay
        self.max_iterations = max_iterations
        self.learning_rate = learning_rate
        self.random_state = random_state

    def init_weights(self, n_features):
        rng = np.random.default_rng(self.random_state)
        return rng.uniform(-INIT_RANGE, INIT_RANGE, n_weights(n_features, self.hidden_units))

    def _scale_target(self, y):
        self.y_min_ = float(y.min())
        span = float(y.max() - y.min())
        self.y_scale_ = span if span > 0 else 1.0
        return (y - self.y_min_) / self.y_scale_

    def _fit(self, X, y):
        if self.hidden_units < 1 or self.weight_decay < 0 or self.learning_rate <= 0 or self.max_iterations < 1:
            raise ValueError("invalid network hyperparameters")
        t = self._scale_target(y)
        theta = self.init_weights(X.shape[1])
        h, decay = self.hidden_units, self.weight_decay
        loss, grad = loss_and_grad(theta, X, t, h, decay)
        step = self.learning_rate / X.shape[0]
        history = [loss]
        it = 0
        for it in range(1, self.max_iterations + 1):
            candidate = theta - step * grad
            new_loss, new_grad = loss_and_grad(candidate, X, t, h, decay)
            if not np.isfinite(new_loss):
                raise ConvergenceError("network objective became non-finite", it, loss)
            if new_loss <= loss:
                theta, loss, grad = candidate, new_loss, new_grad
                history.append(loss)
            else:
                step *= 0.5
                if step < 1e-14:
                    break
            if np.linalg.norm(grad) < 1e-10:
                break
        self.theta_ = theta
        self.n_iter_ = it
        self.loss_curve_ = history
        self.loss_ = loss

    def _predict(self, X):
        out, _ = forward(self.theta_, X, self.hidden_units)
        return out * self.y_scale_ + self.y_min_

    @property
    def output_weights_(self):
        _, _, w2, b2 = _unpack(self.theta_, self.n_features_in_, self.hidden_units)
        return w2, b2

    def _state(self):
        return {"theta": as_list(self.theta_), "y_min": self.y_min_, "y_scale": self.y_scale_}

    def _load_state(self, state):
        self.theta_ = np.asarray(state["theta"], dtype=np.float64)
        self.y_min_ = float(state["y_min"])
        self.y_scale_ = float(state["y_scale"])


def gradient_check(model: NeuralNet, X, y, step=1e-6, theta=None) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    Evaluated at the model's initial weights (or ``theta``) on its scaled target.
    """
    X = np.asarray(X, dtype=np.float64).reshape(len(y), -1) if len(y) else np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n_features = X.shape[1]
    if y.size:
        span = y.max() - y.min()
        t = (y - y.min()) / (span if span > 0 else 1.0)
    else:
        t = y
    theta = model.init_weights(n_features) if theta is None else np.asarray(theta, dtype=np.float64)
    h, decay = model.hidden_units, model.weight_decay
    _, analytic = loss_and_grad(theta, X, t, h, decay)
    numeric = numerical_grad(lambda th: loss_and_grad(th, X, t, h, decay)[0], theta, step)
    return float(relative_error(analytic, numeric).max())
