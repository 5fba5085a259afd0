import numpy as np
import pytest

from stratdte.core import Dataset, explicit_grid, quantile_grid
from stratdte.errors import BadFoldCount, DegenerateCell, SmallCellWarning
from stratdte.learners import LearnerSpec
from stratdte.nuisance import (
    fit_crossfit,
    fit_insample,
    make_folds,
    stratum_cdf_fit,
    stratum_means,
)


def balanced_dataset(n=80, seed=0, d_x=3, n_strata=2):
    rng = np.random.default_rng(seed)
    s = rng.integers(1, n_strata + 1, size=n)
    w = rng.integers(1, 3, size=n)
    x = rng.normal(size=(n, d_x))
    y = x[:, 0] + 0.5 * (w == 2) + 0.2 * s + rng.normal(size=n)
    return Dataset(y=y, w=w, s=s, x=x)


def test_fold_sizes_balanced():
    assert sorted(make_folds(10, 2, seed=1).fold_sizes()) == [5, 5]
    assert sorted(make_folds(11, 2, seed=1).fold_sizes()) == [5, 6]
    sizes = sorted(make_folds(611, 10, seed=3).fold_sizes())
    assert sizes == [61] * 9 + [62]


def test_fold_plan_is_deterministic_partition():
    p1 = make_folds(100, 5, seed=7)
    p2 = make_folds(100, 5, seed=7)
    p3 = make_folds(100, 5, seed=8)
    np.testing.assert_array_equal(p1.assignment, p2.assignment)
    assert not np.array_equal(p1.assignment, p3.assignment)
    assert set(np.unique(p1.assignment)) == {0, 1, 2, 3, 4}


def test_make_folds_rejects_bad_counts():
    with pytest.raises(BadFoldCount):
        make_folds(10, 1)
    with pytest.raises(BadFoldCount):
        make_folds(10, 11)


def test_crossfit_zero_learner_short_circuits():
    data = balanced_dataset()
    grid = quantile_grid(data.y, [0.25, 0.75])
    plan = make_folds(data.n, 2, seed=0)
    fit = fit_crossfit(data, grid, (1, 2), LearnerSpec(kind="zero"), plan, pmf="difference")
    assert fit.mu.shape == (80, 2, 2)
    np.testing.assert_array_equal(fit.mu, 0.0)
    np.testing.assert_array_equal(fit.rho, 0.0)
    assert fit.fallbacks == []


def test_crossfit_constant_honesty_by_hand():
    # prediction for a unit must equal the label mean of (same arm,
    # same stratum, other folds), never touching the unit's own fold
    data = balanced_dataset(n=120, seed=2)
    grid = quantile_grid(data.y, [0.3, 0.6])
    plan = make_folds(data.n, 3, seed=4)
    fit = fit_crossfit(data, grid, (1, 2), LearnerSpec(kind="constant"), plan)
    le = data.y[:, np.newaxis] <= grid.locations[np.newaxis, :]
    for i in [0, 17, 55, 119]:
        fold = plan.assignment[i]
        s = data.s[i]
        for a_idx, a in enumerate((1, 2)):
            train = (data.w == a) & (data.s == s) & (plan.assignment != fold)
            expected = le[train].mean(axis=0)
            np.testing.assert_allclose(fit.mu[i, :, a_idx], expected, rtol=0, atol=1e-15)


def test_crossfit_predictions_clipped_to_unit_interval():
    data = balanced_dataset(n=200, seed=5)
    grid = quantile_grid(data.y, [0.2, 0.5, 0.8])
    plan = make_folds(data.n, 2, seed=1)
    for kind in ("linear", "logistic", "boost"):
        fit = fit_crossfit(data, grid, (1, 2), LearnerSpec(kind=kind), plan)
        assert fit.mu.min() >= 0.0
        assert fit.mu.max() <= 1.0


def test_crossfit_small_cell_falls_back_to_mean():
    # 14 units per (arm, stratum) cell; leave-one-fold-out training cells
    # have ~7 < d_x + 2 = 22 units, so every cell must fall back
    rng = np.random.default_rng(6)
    n = 56
    w = np.tile([1, 2], n // 2)
    s = np.repeat([1, 2], n // 2)
    x = rng.normal(size=(n, 20))
    y = rng.normal(size=n)
    data = Dataset(y=y, w=w, s=s, x=x)
    grid = explicit_grid([0.0])
    plan = make_folds(n, 2, seed=0)
    with pytest.warns(SmallCellWarning):
        fit = fit_crossfit(data, grid, (1, 2), LearnerSpec(kind="linear"), plan)
    assert len(fit.fallbacks) == 8  # 2 arms x 2 strata x 2 folds
    assert all(reason == "small cell" for (_, _, _, reason) in fit.fallbacks)


def test_crossfit_empty_cell_widens_to_arm():
    # stratum 2 has arm-2 units only inside fold 0, so training for
    # (arm 2, stratum 2, fold 0) is empty and widens to the whole arm
    y = np.arange(12.0)
    w = np.array([1, 2, 1, 2, 1, 2, 1, 1, 1, 2, 1, 1])
    s = np.array([1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2])
    assignment = np.array([0, 0, 1, 1, 1, 1, 0, 0, 1, 0, 1, 1])
    from stratdte.nuisance import FoldPlan

    plan = FoldPlan(n=12, n_folds=2, assignment=assignment)
    data = Dataset(y=y, w=w, s=s, x=np.zeros((12, 0)))
    grid = explicit_grid([5.5])
    with pytest.warns(SmallCellWarning):
        fit = fit_crossfit(data, grid, (1, 2), LearnerSpec(kind="constant"), plan)
    assert (2, 2, 0, "empty cell") in fit.fallbacks
    # widened training set: arm 2 outside fold 0 -> units 3, 5
    expected = np.mean(y[[3, 5]] <= 5.5)
    q = (s == 2) & (assignment == 0)
    np.testing.assert_allclose(fit.mu[q, 0, 1], expected)


def test_crossfit_pmf_difference_telescopes():
    data = balanced_dataset(n=150, seed=9)
    grid = quantile_grid(data.y, [0.25, 0.5, 0.75])
    plan = make_folds(data.n, 2, seed=2)
    fit = fit_crossfit(data, grid, (1, 2), LearnerSpec(kind="boost"), plan, pmf="difference")
    np.testing.assert_allclose(fit.rho.cumsum(axis=1), fit.mu, atol=1e-12)


def test_crossfit_pmf_direct_fits_bins():
    data = balanced_dataset(n=150, seed=9)
    grid = quantile_grid(data.y, [0.25, 0.5, 0.75])
    plan = make_folds(data.n, 2, seed=2)
    fit = fit_crossfit(data, grid, (1, 2), LearnerSpec(kind="constant"), plan, pmf="direct")
    # for the constant learner both routes agree: mean of bin indicator
    # equals difference of threshold means on the same training cell
    np.testing.assert_allclose(fit.rho.cumsum(axis=1), fit.mu, atol=1e-12)
    with pytest.raises(ValueError):
        fit_crossfit(data, grid, (1, 2), LearnerSpec(kind="constant"), plan, pmf="bins")


def test_crossfit_rejects_foreign_fold_plan():
    data = balanced_dataset(n=40)
    plan = make_folds(39, 2, seed=0)
    with pytest.raises(ValueError):
        fit_crossfit(data, explicit_grid([0.0]), (1, 2), LearnerSpec(kind="zero"), plan)


def test_stratum_means_hand_example():
    data = balanced_dataset(n=60, seed=3)
    grid = quantile_grid(data.y, [0.5])
    plan = make_folds(data.n, 2, seed=1)
    fit = fit_crossfit(data, grid, (1, 2), LearnerSpec(kind="constant"), plan)
    sm = stratum_means(fit, data)
    assert sm.shape == (2, 1, 2)
    for s in (1, 2):
        mask = data.s == s
        np.testing.assert_allclose(sm[0, 0, s - 1], fit.mu[mask, 0, 0].mean())
        np.testing.assert_allclose(sm[1, 0, s - 1], fit.mu[mask, 0, 1].mean())


def test_insample_constant_equals_cell_ecdf():
    # constant learner trained on the full cell predicts the cell label
    # mean for every stratum unit, which is the saturated fit exactly
    data = balanced_dataset(n=100, seed=11)
    grid = quantile_grid(data.y, [0.25, 0.5, 0.75])
    fit = fit_insample(data, grid, (1, 2), LearnerSpec(kind="constant"))
    sat = stratum_cdf_fit(data, grid, (1, 2))
    np.testing.assert_allclose(fit.mu, sat.mu, rtol=0, atol=1e-15)
    assert fit.plan is None
    assert fit.fallbacks == []


def test_insample_boost_tracks_own_labels_closer_than_crossfit():
    # the in-cell fit sees each unit's own label during training, so its
    # residuals on the training labels shrink relative to the honest fit
    data = balanced_dataset(n=160, seed=12)
    grid = quantile_grid(data.y, [0.5])
    learner = LearnerSpec(kind="boost")
    plan = make_folds(data.n, 2, seed=3)
    honest = fit_crossfit(data, grid, (1, 2), learner, plan)
    greedy = fit_insample(data, grid, (1, 2), learner)
    le = (data.y <= grid.locations[0]).astype(float)
    for a_idx, a in enumerate((1, 2)):
        own = data.w == a
        r_honest = np.mean((le[own] - honest.mu[own, 0, a_idx]) ** 2)
        r_greedy = np.mean((le[own] - greedy.mu[own, 0, a_idx]) ** 2)
        assert r_greedy < r_honest


def test_insample_small_cell_fallback_has_no_fold_slot():
    rng = np.random.default_rng(13)
    n = 24
    w = np.tile([1, 2], n // 2)
    s = np.repeat([1, 2], n // 2)
    x = rng.normal(size=(n, 20))
    y = rng.normal(size=n)
    data = Dataset(y=y, w=w, s=s, x=x)
    grid = explicit_grid([0.0])
    with pytest.warns(SmallCellWarning):
        fit = fit_insample(data, grid, (1, 2), LearnerSpec(kind="linear"))
    assert len(fit.fallbacks) == 4  # 2 arms x 2 strata, 6 < d_x + 2 = 22
    assert all(fb[2] is None for fb in fit.fallbacks)
    assert all(reason == "small cell" for (_, _, _, reason) in fit.fallbacks)


def test_insample_pmf_difference_telescopes():
    data = balanced_dataset(n=140, seed=14)
    grid = quantile_grid(data.y, [0.3, 0.6, 0.9])
    fit = fit_insample(data, grid, (1, 2), LearnerSpec(kind="boost"), pmf="difference")
    np.testing.assert_allclose(fit.rho.cumsum(axis=1), fit.mu, atol=1e-12)
    with pytest.raises(ValueError):
        fit_insample(data, grid, (1, 2), LearnerSpec(kind="boost"), pmf="bins")


def test_stratum_cdf_fit_matches_cell_ecdf():
    data = balanced_dataset(n=90, seed=8)
    grid = quantile_grid(data.y, [0.2, 0.6])
    fit = stratum_cdf_fit(data, grid, (1, 2), pmf="difference")
    for a_idx, a in enumerate((1, 2)):
        for s in (1, 2):
            cell = (data.w == a) & (data.s == s)
            ecdf = (data.y[cell][:, np.newaxis] <= grid.locations).mean(axis=0)
            rows = np.flatnonzero(data.s == s)
            for i in rows[:3]:
                np.testing.assert_allclose(fit.mu[i, :, a_idx], ecdf)
    np.testing.assert_allclose(fit.rho.cumsum(axis=1), fit.mu, atol=1e-14)
    assert fit.plan is None


def test_stratum_cdf_fit_requires_every_cell():
    data = Dataset(y=[1.0, 2.0, 3.0], w=[1, 1, 2], s=[1, 1, 1], n_strata=1)
    fit = stratum_cdf_fit(data, explicit_grid([2.5]), (1, 2))
    assert fit.mu.shape == (3, 1, 2)
    bad = Dataset(y=[1.0, 2.0, 3.0], w=[1, 1, 1], s=[1, 1, 1])
    with pytest.raises(DegenerateCell):
        stratum_cdf_fit(bad, explicit_grid([2.5]), (1, 2))
