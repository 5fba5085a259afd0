"""In-repo regression menu for threshold-indicator nuisances.

All learners map covariates to conditional probabilities of a binary
label, with predictions clipped to [0, 1]. The menu is deliberately
self-contained: zero (no adjustment), constant mean, linear probability
via least squares, ridge-stabilized logistic regression, and
least-squares boosted trees backed by the kernels in _kernels.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import SingularDesignWarning, UnknownLearner

__all__ = ["LearnerSpec", "fit_learner", "LEARNER_KINDS"]

LEARNER_KINDS = ("zero", "constant", "linear", "logistic", "boost")


@dataclass(frozen=True)
class LearnerSpec:
    """Learner choice plus hyperparameters.

    Fields beyond ``kind`` apply only to the learners that read them:
    boosting reads n_rounds, learning_rate, max_depth, min_leaf;
    logistic reads max_iter, tol, ridge.
    """

    kind: str = "boost"
    n_rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 2
    min_leaf: int = 5
    max_iter: int = 25
    tol: float = 1e-8
    ridge: float = 1e-4

    def __post_init__(self):
        if self.kind not in LEARNER_KINDS:
            raise UnknownLearner(
                f"unknown learner {self.kind!r}; choose from {LEARNER_KINDS}"
            )
        if self.n_rounds < 1 or self.max_depth < 1 or self.min_leaf < 1:
            raise ValueError("boost hyperparameters must be positive")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning rate must be in (0, 1]")
        if self.max_iter < 1 or self.tol <= 0.0 or self.ridge < 0.0:
            raise ValueError("logistic hyperparameters out of range")


class _Constant:
    def __init__(self, value):
        self.value = min(1.0, max(0.0, float(value)))

    def predict(self, xq):
        return np.full(xq.shape[0], self.value)


class _Zero:
    def predict(self, xq):
        return np.zeros(xq.shape[0])


class _Linear:
    def __init__(self, beta):
        self.beta = beta

    def predict(self, xq):
        return np.clip(self.beta[0] + xq @ self.beta[1:], 0.0, 1.0)


class _Logistic:
    def __init__(self, beta):
        self.beta = beta

    def predict(self, xq):
        eta = np.clip(self.beta[0] + xq @ self.beta[1:], -35.0, 35.0)
        return 1.0 / (1.0 + np.exp(-eta))


class _Boost:
    def __init__(self, base, trees, nu):
        self.base = base
        self.trees = trees
        self.nu = nu

    def predict(self, xq):
        xq = np.ascontiguousarray(xq, dtype=np.float64)
        raw = _kernels.boost_predict(self.base, self.trees, self.nu, xq)
        return np.clip(raw, 0.0, 1.0)


def _fit_logistic(x, y01, spec):
    m, d = x.shape
    design = np.hstack([np.ones((m, 1)), x])
    beta = np.zeros(d + 1)
    pen = np.full(d + 1, spec.ridge)
    pen[0] = 0.0  # intercept unpenalized
    for _ in range(spec.max_iter):
        eta = np.clip(design @ beta, -35.0, 35.0)
        p = 1.0 / (1.0 + np.exp(-eta))
        grad = design.T @ (p - y01) + pen * beta
        if np.max(np.abs(grad)) <= spec.tol:
            break
        lam = p * (1.0 - p)
        hess = design.T @ (design * lam[:, np.newaxis]) + np.diag(pen)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            hess[np.diag_indices_from(hess)] += 1e-8
            step = np.linalg.solve(hess, grad)
        beta = beta - step
    return _Logistic(beta)


def fit_learner(spec: LearnerSpec, features, labels, order=None):
    """Fit one learner on one training cell.

    Parameters
    ----------
    spec : LearnerSpec
    features : ndarray, shape (m, d)
    labels : ndarray, shape (m,)
        Binary indicator labels; any values in [0, 1] are accepted.
    order : ndarray, optional
        Presorted feature index array from ``_kernels.presort``; reused
        across thresholds when boosting on a fixed training cell.

    Returns
    -------
    object with a ``predict(xq) -> ndarray`` method, outputs in [0, 1].
    """
    if spec.kind == "zero":
        return _Zero()
    x = np.ascontiguousarray(np.asarray(features, dtype=np.float64))
    if x.ndim == 1:
        x = x[:, np.newaxis]
    y01 = np.asarray(labels, dtype=np.float64).ravel()
    m, d = x.shape
    if m == 0:
        raise ValueError("cannot fit on an empty training cell")
    if spec.kind == "constant" or d == 0:
        return _Constant(y01.mean())
    if spec.kind == "linear":
        design = np.hstack([np.ones((m, 1)), x])
        beta, _, rank, _ = np.linalg.lstsq(design, y01, rcond=None)
        if rank < d + 1:
            warnings.warn(
                "rank-deficient design; using the cell mean", SingularDesignWarning
            )
            return _Constant(y01.mean())
        return _Linear(beta)
    if spec.kind == "logistic":
        return _fit_logistic(x, y01, spec)
    # boost
    if order is None:
        order = _kernels.presort(x)
    base, trees = _kernels.boost_fit(
        x,
        order,
        y01,
        spec.n_rounds,
        spec.max_depth,
        spec.learning_rate,
        spec.min_leaf,
    )
    return _Boost(base, trees, spec.learning_rate)
