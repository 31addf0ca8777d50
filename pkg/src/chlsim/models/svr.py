"""epsilon-insensitive support vector regression with an RBF kernel.

The dual is written over ``2n`` bounded variables ``beta = (alpha, alpha*)``
with labels ``s = (+1, ..., -1, ...)``::

    min  0.5 beta' Q beta + p' beta
    s.t. s' beta = 0,   0 <= beta <= C

where ``Q_ij = s_i s_j K(x_i, x_j)`` and ``p = (eps - y, eps + y)``.  It is
solved by sequential two-variable updates, choosing the pair with
second-order working-set selection, until the maximal KKT violation drops
below ``tol``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..exceptions import ConvergenceError
from ._base import ChlRegressor, as_list

TAU = 1e-12


def rbf_kernel(A, B, gamma):
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


@njit(cache=True)
def _smo(K, y, C, eps, tol, max_updates):
    n = y.size
    m = 2 * n
    beta = np.zeros(m)
    s = np.empty(m)
    G = np.empty(m)
    for i in range(n):
        s[i] = 1.0
        s[i + n] = -1.0
        G[i] = eps - y[i]
        G[i + n] = eps + y[i]

    updates = 0
    gap = np.inf
    while True:
        # i: maximal violator in I_up
        gmax = -np.inf
        i = -1
        for t in range(m):
            if s[t] > 0:
                if beta[t] < C and -G[t] >= gmax:
                    gmax = -G[t]
                    i = t
            else:
                if beta[t] > 0 and G[t] >= gmax:
                    gmax = G[t]
                    i = t
        # j: second-order choice in I_low
        gmax2 = -np.inf
        j = -1
        obj_min = np.inf
        if i >= 0:
            for t in range(m):
                ki = K[i % n, t % n]
                if s[t] > 0:
                    if beta[t] > 0:
                        grad_diff = gmax + G[t]
                        if G[t] >= gmax2:
                            gmax2 = G[t]
                        if grad_diff > 0:
                            quad = 2.0 - 2.0 * ki
                            if quad <= 0:
                                quad = TAU
                            val = -(grad_diff * grad_diff) / quad
                            if val <= obj_min:
                                j = t
                                obj_min = val
                else:
                    if beta[t] < C:
                        grad_diff = gmax - G[t]
                        if -G[t] >= gmax2:
                            gmax2 = -G[t]
                        if grad_diff > 0:
                            quad = 2.0 - 2.0 * ki
                            if quad <= 0:
                                quad = TAU
                            val = -(grad_diff * grad_diff) / quad
                            if val <= obj_min:
                                j = t
                                obj_min = val
        gap = gmax + gmax2
        if gap < tol or j == -1:
            break
        if updates >= max_updates:
            return beta, G, updates, gap, False
        updates += 1

        kij = K[i % n, j % n]
        old_bi = beta[i]
        old_bj = beta[j]
        # RBF diagonal is 1, so the pair curvature is 2 - 2K for either label pairing
        if s[i] != s[j]:
            quad = 2.0 - 2.0 * kij
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = beta[i] - beta[j]
            beta[i] += delta
            beta[j] += delta
            if diff > 0:
                if beta[j] < 0:
                    beta[j] = 0.0
                    beta[i] = diff
            else:
                if beta[i] < 0:
                    beta[i] = 0.0
                    beta[j] = -diff
            if diff > 0:
                if beta[i] > C:
                    beta[i] = C
                    beta[j] = C - diff
            else:
                if beta[j] > C:
                    beta[j] = C
                    beta[i] = C + diff
        else:
            quad = 2.0 - 2.0 * kij
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            total = beta[i] + beta[j]
            beta[i] -= delta
            beta[j] += delta
            if total > C:
                if beta[i] > C:
                    beta[i] = C
                    beta[j] = total - C
            else:
                if beta[j] < 0:
                    beta[j] = 0.0
                    beta[i] = total
            if total > C:
                if beta[j] > C:
                    beta[j] = C
                    beta[i] = total - C
            else:
                if beta[i] < 0:
                    beta[i] = 0.0
                    beta[j] = total

        dbi = beta[i] - old_bi
        dbj = beta[j] - old_bj
        for t in range(m):
            G[t] += s[t] * (s[i] * dbi * K[i % n, t % n] + s[j] * dbj * K[j % n, t % n])
    return beta, G, updates, gap, True


def _offset(beta, G, s, C):
    """Intercept: averaged over free variables, else the midpoint of the feasible interval."""
    yG = s * G
    at_upper = beta >= C
    at_lower = beta <= 0
    free = ~(at_upper | at_lower)
    if free.any():
        return float(-yG[free].mean())
    ub_mask = (at_upper & (s < 0)) | (at_lower & (s > 0))
    lb_mask = (at_upper & (s > 0)) | (at_lower & (s < 0))
    ub = yG[ub_mask].min() if ub_mask.any() else np.inf
    lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
    if not np.isfinite(ub):
        return float(-lb)
    if not np.isfinite(lb):
        return float(-ub)
    return float(-(ub + lb) / 2.0)


class EpsilonSVR(ChlRegressor):
    """RBF-kernel epsilon-SVR; ``C`` is the cost, ``gamma`` the kernel width."""

    kind = "svr"
    _fitted_attr = "dual_coef_"

    def __init__(self, C=1.0, gamma=0.1, epsilon=0.1, tol=1e-3, max_updates=1_000_000):
        self.C = C
        self.gamma = gamma
        self.epsilon = epsilon
        self.tol = tol
        self.max_updates = max_updates

    def _fit(self, X, y):
        if not self.C > 0 or not self.gamma > 0 or not self.epsilon >= 0:
            raise ValueError("C and gamma must be > 0, epsilon >= 0")
        n = X.shape[0]
        K = rbf_kernel(X, X, self.gamma)
        beta, G, updates, gap, ok = _smo(K, y, float(self.C), float(self.epsilon), float(self.tol), int(self.max_updates))
        s = np.concatenate([np.ones(n), -np.ones(n)])
        if not ok:
            raise ConvergenceError(
                "SMO hit the update cap before reaching the KKT tolerance",
                updates,
                self._dual_objective(beta, G, s, y),
            )
        self.n_updates_ = int(updates)
        self.kkt_gap_ = float(gap)
        self.alpha_, self.alpha_star_ = beta[:n], beta[n:]
        coef = beta[:n] - beta[n:]
        support = np.flatnonzero(coef != 0)
        self.support_ = support
        self.support_vectors_ = X[support]
        self.dual_coef_ = coef[support]
        self.intercept_ = _offset(beta, G, s, self.C)

    def _dual_objective(self, beta, G, s, y):
        p = np.concatenate([self.epsilon - y, self.epsilon + y])
        return float(0.5 * beta @ (G + p))

    def _predict(self, X):
        if self.dual_coef_.size == 0:
            return np.full(X.shape[0], self.intercept_)
        return rbf_kernel(X, self.support_vectors_, self.gamma) @ self.dual_coef_ + self.intercept_

    def _state(self):
        return {
            "support_vectors": as_list(self.support_vectors_),
            "dual_coef": as_list(self.dual_coef_),
            "intercept": self.intercept_,
        }

    def _load_state(self, state):
        self.support_vectors_ = np.asarray(state["support_vectors"], dtype=np.float64).reshape(
            -1, self.n_features_in_
        )
        self.dual_coef_ = np.asarray(state["dual_coef"], dtype=np.float64)
        self.intercept_ = float(state["intercept"])
