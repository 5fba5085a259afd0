"""Cross-fitted nuisance estimation for threshold and bin indicators.

For each compared arm w, stratum s, and fold l, a learner is trained on
the units with W = w and S = s outside fold l, using labels 1{Y <= y_j}
(and optionally the bin labels 1{y_{j-1} < Y <= y_j}), then evaluated
for every unit of stratum s inside fold l, whichever arm it was
assigned. No unit's own label ever reaches the model that predicts for
it. One global fold partition is shared by all arms and strata.

``fit_insample`` drops the fold split and trains each cell on itself;
comparing its residuals against the cross-fitted ones measures how much
a learner overfits, but its predictions must not feed point estimation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import Dataset, ThresholdGrid
from .errors import BadFoldCount, DegenerateCell, SmallCellWarning
from .learners import LearnerSpec, fit_learner

__all__ = [
    "FoldPlan",
    "NuisanceFit",
    "make_folds",
    "fit_crossfit",
    "fit_insample",
    "stratum_means",
    "stratum_cdf_fit",
]


@dataclass(frozen=True)
class FoldPlan:
    """Random partition of 0..n-1 into folds of near-equal size."""

    n: int
    n_folds: int
    assignment: np.ndarray
    seed: int = None

    def fold_sizes(self):
        return np.bincount(self.assignment, minlength=self.n_folds)


def make_folds(n: int, n_folds: int, seed=0) -> FoldPlan:
    """Shuffle units and cut into ``n_folds`` blocks; sizes differ by <= 1."""
    if n_folds < 2 or n_folds > n:
        raise BadFoldCount(f"fold count {n_folds} outside 2..{n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    base, rem = divmod(n, n_folds)
    start = 0
    for fold in range(n_folds):
        size = base + (1 if fold < rem else 0)
        assignment[perm[start : start + size]] = fold
        start += size
    return FoldPlan(n=n, n_folds=n_folds, assignment=assignment, seed=seed)


@dataclass
class NuisanceFit:
    """Cross-fitted predictions on the threshold grid.

    Attributes
    ----------
    mu : ndarray, shape (n, J, A)
        Predicted P(Y(w) <= y_j | S, X) per unit, threshold, arm slot.
    rho : ndarray or None, shape (n, J, A)
        Predicted bin probabilities, present when requested.
    arms : tuple
        Arm index per slot.
    fallbacks : list of tuple
        (arm, stratum, fold, reason) for every cell where the requested
        learner was replaced by a constant fit.
    """

    mu: np.ndarray
    rho: np.ndarray
    arms: tuple
    learner: LearnerSpec
    plan: FoldPlan
    fallbacks: list = field(default_factory=list)


def _le_labels(y, grid):
    return (y[:, np.newaxis] <= grid.locations[np.newaxis, :]).astype(np.float64)


def fit_crossfit(
    data: Dataset,
    grid: ThresholdGrid,
    arms,
    learner: LearnerSpec,
    plan: FoldPlan,
    pmf: str = None,
) -> NuisanceFit:
    """Run the cross-fitting loop over (arm, stratum, fold, threshold).

    Parameters
    ----------
    pmf : {None, "direct", "difference"}
        None fits only threshold indicators. "direct" additionally fits
        bin indicators with their own regressions; "difference" derives
        bin predictions as adjacent differences of the threshold
        predictions (these telescope exactly but may be negative).

    Notes
    -----
    Cells smaller than max(5, d_x + 2) are fit with the cell label mean
    instead of the requested learner (recorded in ``fallbacks`` and
    warned once per cell). An empty cell widens to the whole arm outside
    the fold; if that is empty too, 0.5 is used.
    """
    if pmf not in (None, "direct", "difference"):
        raise ValueError("pmf must be None, 'direct', or 'difference'")
    if plan.n != data.n:
        raise ValueError("fold plan built for a different dataset size")
    arms = tuple(int(a) for a in arms)
    n, J, A = data.n, len(grid), len(arms)
    mu = np.zeros((n, J, A))
    rho = np.zeros((n, J, A)) if pmf is not None else None
    fallbacks = []
    if learner.kind == "zero":
        return NuisanceFit(
            mu=mu, rho=rho, arms=arms, learner=learner, plan=plan, fallbacks=fallbacks
        )
    le = _le_labels(data.y, grid)
    if pmf == "direct":
        binlab = np.diff(np.concatenate([np.zeros((n, 1)), le], axis=1), axis=1)
    min_m = max(5, data.d_x + 2)
    constant = LearnerSpec(kind="constant")
    for a_idx, a in enumerate(arms):
        arm_mask = data.w == a
        for s in range(1, data.n_strata + 1):
            s_mask = data.s == s
            for fold in range(plan.n_folds):
                infold = plan.assignment == fold
                query = s_mask & infold
                if not query.any():
                    continue
                train = arm_mask & s_mask & ~infold
                m_tr = int(train.sum())
                eff = learner
                if m_tr == 0:
                    train = arm_mask & ~infold
                    m_tr = int(train.sum())
                    eff = constant
                    fallbacks.append((a, s, fold, "empty cell"))
                    warnings.warn(
                        f"no training units for arm {a}, stratum {s}, fold {fold}; "
                        "using the arm mean",
                        SmallCellWarning,
                    )
                elif m_tr < min_m and learner.kind != "constant":
                    eff = constant
                    fallbacks.append((a, s, fold, "small cell"))
                    warnings.warn(
                        f"{m_tr} training units for arm {a}, stratum {s}, fold {fold} "
                        f"(need {min_m}); using the cell mean",
                        SmallCellWarning,
                    )
                if m_tr == 0:
                    mu[query, :, a_idx] = 0.5
                    if rho is not None:
                        rho[query, :, a_idx] = 0.5
                    continue
                xtr = data.x[train]
                xq = data.x[query]
                order = None
                if eff.kind == "boost" and data.d_x > 0:
                    order = _kernels.presort(xtr)
                le_tr = le[train]
                for j in range(J):
                    model = fit_learner(eff, xtr, le_tr[:, j], order=order)
                    mu[query, j, a_idx] = model.predict(xq)
                if pmf == "direct":
                    bin_tr = binlab[train]
                    for j in range(J):
                        model = fit_learner(eff, xtr, bin_tr[:, j], order=order)
                        rho[query, j, a_idx] = model.predict(xq)
    if pmf == "difference":
        rho[:, 0, :] = mu[:, 0, :]
        rho[:, 1:, :] = mu[:, 1:, :] - mu[:, :-1, :]
    return NuisanceFit(
        mu=mu, rho=rho, arms=arms, learner=learner, plan=plan, fallbacks=fallbacks
    )


def fit_insample(
    data: Dataset,
    grid: ThresholdGrid,
    arms,
    learner: LearnerSpec,
    pmf: str = None,
) -> NuisanceFit:
    """Fit each (arm, stratum) cell on its own units, no fold split.

    Every unit of a stratum receives predictions from models trained on
    the full (arm, stratum) cells of that stratum, so a unit's own label
    can reach the model that predicts for it. A flexible learner tracks
    its training labels more closely here than any held-out fit can, so
    the gap between in-cell and cross-fitted residuals measures how much
    the learner overfits. Use ``fit_crossfit`` whenever predictions feed
    estimation or inference.

    Small- and empty-cell fallbacks follow ``fit_crossfit``: cells below
    max(5, d_x + 2) units fall back to the cell mean, empty cells widen
    to the whole arm, and a fully absent arm predicts 0.5.
    """
    if pmf not in (None, "direct", "difference"):
        raise ValueError("pmf must be None, 'direct', or 'difference'")
    arms = tuple(int(a) for a in arms)
    n, J, A = data.n, len(grid), len(arms)
    mu = np.zeros((n, J, A))
    rho = np.zeros((n, J, A)) if pmf is not None else None
    fallbacks = []
    if learner.kind == "zero":
        return NuisanceFit(
            mu=mu, rho=rho, arms=arms, learner=learner, plan=None, fallbacks=fallbacks
        )
    le = _le_labels(data.y, grid)
    if pmf == "direct":
        binlab = np.diff(np.concatenate([np.zeros((n, 1)), le], axis=1), axis=1)
    min_m = max(5, data.d_x + 2)
    constant = LearnerSpec(kind="constant")
    for a_idx, a in enumerate(arms):
        arm_mask = data.w == a
        for s in range(1, data.n_strata + 1):
            query = data.s == s
            if not query.any():
                continue
            train = arm_mask & query
            m_tr = int(train.sum())
            eff = learner
            if m_tr == 0:
                train = arm_mask
                m_tr = int(train.sum())
                eff = constant
                fallbacks.append((a, s, None, "empty cell"))
                warnings.warn(
                    f"no units for arm {a} in stratum {s}; using the arm mean",
                    SmallCellWarning,
                )
            elif m_tr < min_m and learner.kind != "constant":
                eff = constant
                fallbacks.append((a, s, None, "small cell"))
                warnings.warn(
                    f"{m_tr} units for arm {a}, stratum {s} (need {min_m}); "
                    "using the cell mean",
                    SmallCellWarning,
                )
            if m_tr == 0:
                mu[query, :, a_idx] = 0.5
                if rho is not None:
                    rho[query, :, a_idx] = 0.5
                continue
            xtr = data.x[train]
            xq = data.x[query]
            order = None
            if eff.kind == "boost" and data.d_x > 0:
                order = _kernels.presort(xtr)
            le_tr = le[train]
            for j in range(J):
                model = fit_learner(eff, xtr, le_tr[:, j], order=order)
                mu[query, j, a_idx] = model.predict(xq)
            if pmf == "direct":
                bin_tr = binlab[train]
                for j in range(J):
                    model = fit_learner(eff, xtr, bin_tr[:, j], order=order)
                    rho[query, j, a_idx] = model.predict(xq)
    if pmf == "difference":
        rho[:, 0, :] = mu[:, 0, :]
        rho[:, 1:, :] = mu[:, 1:, :] - mu[:, :-1, :]
    return NuisanceFit(
        mu=mu, rho=rho, arms=arms, learner=learner, plan=None, fallbacks=fallbacks
    )


def stratum_means(fit: NuisanceFit, data: Dataset) -> np.ndarray:
    """Average predictions over all units of each stratum.

    Returns
    -------
    ndarray, shape (A, J, S)
    """
    A = len(fit.arms)
    J = fit.mu.shape[1]
    S = data.n_strata
    out = np.zeros((A, J, S))
    for s in range(1, S + 1):
        mask = data.s == s
        out[:, :, s - 1] = fit.mu[mask].mean(axis=0).T
    return out


def stratum_cdf_fit(data: Dataset, grid: ThresholdGrid, arms, pmf: str = None):
    """Stratum-saturated fit: predictions are within-(arm, stratum) ECDFs.

    Covariates are ignored, so the adjusted estimator built on this fit
    reproduces the unadjusted one exactly, while its influence function
    yields the correct asymptotic variance for that estimator under
    covariate-adaptive assignment.
    """
    arms = tuple(int(a) for a in arms)
    n, J, A = data.n, len(grid), len(arms)
    le = _le_labels(data.y, grid)
    mu = np.zeros((n, J, A))
    for a_idx, a in enumerate(arms):
        for s in range(1, data.n_strata + 1):
            cell = (data.w == a) & (data.s == s)
            if not cell.any():
                raise DegenerateCell(f"arm {a} absent from stratum {s}")
            mu[data.s == s, :, a_idx] = le[cell].mean(axis=0)
    rho = None
    if pmf is not None:
        rho = np.empty_like(mu)
        rho[:, 0, :] = mu[:, 0, :]
        rho[:, 1:, :] = mu[:, 1:, :] - mu[:, :-1, :]
    return NuisanceFit(
        mu=mu,
        rho=rho,
        arms=arms,
        learner=LearnerSpec(kind="constant"),
        plan=None,
        fallbacks=[],
    )
