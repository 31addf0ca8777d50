"""Multivariate adaptive regression splines.

Forward pass: starting from the intercept, repeatedly add the reflected
hinge pair ``max(0, x_j - t), max(0, t - x_j)`` (optionally multiplied by an
existing term, up to ``max_degree``) that most reduces the residual sum of
squares.  Knots are the distinct observed values of ``x_j``.

Backward pass: drop terms one at a time, always the one whose removal hurts
least, and keep the subset with the smallest generalised cross-validation
score

    GCV = (RSS / n) / (1 - C(M) / n) ** 2,   C(M) = M + penalty * (M - 1) / 2

where ``M`` counts terms including the intercept.  Ties go to fewer terms.
"""

from __future__ import annotations

import numpy as np

from ._base import ChlRegressor, as_list

# Candidate columns whose residual norm falls below this fraction of their
# raw norm are treated as linearly dependent on the current basis.
_DEPENDENCE_TOL = 1e-8


def gcv(rss: float, n: int, n_terms: int, penalty: float) -> float:
    c = n_terms + penalty * (n_terms - 1) / 2.0
    if c >= n:
        return np.inf
    return (rss / n) / (1.0 - c / n) ** 2


def _hinge(x, knot, sign):
    return np.maximum(0.0, sign * (x - knot))


def _term_column(X, term):
    col = np.ones(X.shape[0])
    for feature, knot, sign in term:
        col = col * _hinge(X[:, feature], knot, sign)
    return col


def _lstsq_rss(B, y):
    coef, *_ = np.linalg.lstsq(B, y, rcond=None)
    r = y - B @ coef
    return float(r @ r), coef


class MARS(ChlRegressor):
    """MARS regression (additive by default).

    ``max_terms`` caps the forward pass, intercept included.  The forward
    pass also stops when a step improves R² by less than
    ``forward_threshold``.
    """

    kind = "mars"
    _fitted_attr = "terms_"

    def __init__(self, max_terms=21, gcv_penalty=2.0, max_degree=1, forward_threshold=1e-3):
        self.max_terms = max_terms
        self.gcv_penalty = gcv_penalty
        self.max_degree = max_degree
        self.forward_threshold = forward_threshold

    # -- forward --------------------------------------------------------

    def _forward(self, X, y):
        n, p = X.shape
        tss = float(((y - y.mean()) ** 2).sum())
        terms = [()]
        basis = [np.ones(n)]
        Q = np.ones((n, 1)) / np.sqrt(n)
        resid = y - y.mean()
        rss = tss
        knots = [np.unique(X[:, j]) for j in range(p)]

        while len(terms) < self.max_terms and tss > 0 and rss > 1e-12 * tss:
            room = self.max_terms - len(terms)
            best = None  # (gain, parent, feature, knot, keep_mask)
            for parent_idx, parent in enumerate(terms):
                if len(parent) >= self.max_degree:
                    continue
                used = {f for f, _, _ in parent}
                parent_col = basis[parent_idx]
                for j in range(p):
                    if j in used:
                        continue
                    t = knots[j]
                    x = X[:, j][:, None]
                    Hp = parent_col[:, None] * np.maximum(0.0, x - t[None, :])
                    Hm = parent_col[:, None] * np.maximum(0.0, t[None, :] - x)
                    gain, keep = _pair_gain(Q, resid, Hp, Hm, single_only=room < 2)
                    k = int(np.argmax(gain))
                    if best is None or gain[k] > best[0]:
                        best = (gain[k], parent_idx, j, t[k], keep[k])
            if best is None or not best[0] > 0:
                break
            gain, parent_idx, j, knot, keep = best
            if gain / tss < self.forward_threshold:
                break
            parent = terms[parent_idx]
            n_before = len(terms)
            for sign, use in ((1.0, keep[0]), (-1.0, keep[1])):
                if not use:
                    continue
                term = parent + ((j, float(knot), sign),)
                col = basis[parent_idx] * _hinge(X[:, j], knot, sign)
                q = col - Q @ (Q.T @ col)
                q = q - Q @ (Q.T @ q)  # second Gram-Schmidt pass
                q_norm = np.linalg.norm(q)
                if q_norm <= _DEPENDENCE_TOL * max(np.linalg.norm(col), 1e-300):
                    continue
                terms.append(term)
                basis.append(col)
                Q = np.column_stack([Q, q / q_norm])
            if len(terms) == n_before:
                break
            resid = y - Q @ (Q.T @ y)
            rss = float(resid @ resid)
        return terms, np.column_stack(basis)

    # -- backward -------------------------------------------------------

    def _backward(self, B, y):
        n = B.shape[0]
        active = list(range(B.shape[1]))
        rss, _ = _lstsq_rss(B, y)
        path = [(gcv(rss, n, len(active), self.gcv_penalty), list(active))]
        while len(active) > 1:
            best = None
            for drop in active[1:]:
                trial = [a for a in active if a != drop]
                trial_rss, _ = _lstsq_rss(B[:, trial], y)
                if best is None or trial_rss < best[0]:
                    best = (trial_rss, trial)
            rss, active = best
            path.append((gcv(rss, n, len(active), self.gcv_penalty), list(active)))
        # smallest GCV; ties toward fewer terms (later entries are smaller)
        chosen = min(range(len(path)), key=lambda i: (path[i][0], len(path[i][1])))
        return path, chosen

    def _fit(self, X, y):
        if self.max_terms < 1 or self.max_degree < 1 or self.gcv_penalty < 0:
            raise ValueError("max_terms and max_degree must be >= 1, gcv_penalty >= 0")
        terms, B = self._forward(X, y)
        path, chosen = self._backward(B, y)
        self.forward_terms_ = len(terms)
        self.forward_gcv_ = float(path[0][0])
        self.gcv_ = float(path[chosen][0])
        self.gcv_path_ = [float(g) for g, _ in path]
        keep = sorted(path[chosen][1])
        self.terms_ = [terms[i] for i in keep]
        _, self.coef_ = _lstsq_rss(B[:, keep], y)

    def _basis(self, X):
        return np.column_stack([_term_column(X, t) for t in self.terms_])

    def _predict(self, X):
        return self._basis(X) @ self.coef_

    def _state(self):
        return {
            "terms": [[list(f) for f in t] for t in self.terms_],
            "coef": as_list(self.coef_),
        }

    def _load_state(self, state):
        self.terms_ = [tuple((int(f), float(k), float(s)) for f, k, s in t) for t in state["terms"]]
        self.coef_ = np.asarray(state["coef"], dtype=np.float64)


def _pair_gain(Q, resid, Hp, Hm, single_only=False):
    """RSS reduction for adding each candidate hinge pair to the basis spanned by ``Q``.

    Returns ``(gain, keep)`` where ``keep[k]`` flags which of the two columns
    of candidate ``k`` are linearly independent of the basis.
    """
    Ap = Hp - Q @ (Q.T @ Hp)
    Am = Hm - Q @ (Q.T @ Hm)
    a = (Ap * Ap).sum(0)
    d = (Am * Am).sum(0)
    b = (Ap * Am).sum(0)
    u = resid @ Ap
    v = resid @ Am
    ok_p = a > (_DEPENDENCE_TOL ** 2) * np.maximum((Hp * Hp).sum(0), 1e-300)
    ok_m = d > (_DEPENDENCE_TOL ** 2) * np.maximum((Hm * Hm).sum(0), 1e-300)

    with np.errstate(divide="ignore", invalid="ignore"):
        gp = np.where(ok_p, u * u / a, 0.0)
        gm = np.where(ok_m, v * v / d, 0.0)
        det = a * d - b * b
        pair_ok = ok_p & ok_m & (det > 1e-10 * a * d)
        gpair = np.where(pair_ok, (d * u * u - 2 * b * u * v + a * v * v) / det, 0.0)

    if single_only:
        gpair = np.zeros_like(gpair)
        pair_ok = np.zeros_like(pair_ok)
    gain = np.maximum(gpair, np.maximum(gp, gm))
    use_pair = pair_ok & (gpair >= np.maximum(gp, gm))
    keep_p = use_pair | (~use_pair & (gp >= gm) & ok_p)
    keep_m = use_pair | (~use_pair & (gm > gp) & ok_m)
    return gain, np.stack([keep_p, keep_m], axis=1)
