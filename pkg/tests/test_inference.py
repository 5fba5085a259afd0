import numpy as np
import pytest

from stratdte.core import Dataset, explicit_grid, quantile_grid, validate_dataset
from stratdte.errors import BadLevel, BadRepetitions, MissingNuisance
from stratdte.estimators import EffectCurve, adjusted_cdf, dte
from stratdte.inference import (
    CovKernelEstimate,
    classical_variance,
    influence,
    moment_variance,
    multiplier_bootstrap,
    pointwise_ci,
    variance,
    variance_decomposition,
    with_band,
)
from stratdte.learners import LearnerSpec
from stratdte.nuisance import (
    NuisanceFit,
    fit_crossfit,
    fit_insample,
    make_folds,
    stratum_cdf_fit,
)


def rand_dataset(n=240, seed=0, n_strata=3):
    rng = np.random.default_rng(seed)
    s = rng.integers(1, n_strata + 1, size=n)
    w = rng.integers(1, 3, size=n)
    x = rng.normal(size=(n, 2))
    y = rng.normal(size=n) + 0.4 * (w == 2) + 0.15 * s
    return Dataset(y=y, w=w, s=s, x=x)


def zero_fit(data, grid, pmf=None):
    plan = make_folds(data.n, 2, seed=0)
    return fit_crossfit(data, grid, (1, 2), LearnerSpec(kind="zero"), plan, pmf=pmf)


def test_influence_hand_formula_single_stratum():
    # one stratum, equal arms, zero predictions: the influence value is
    # 2 1{W=w} L - 2 1{W=w'} L - delta
    y = np.array([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8])
    w = np.array([1, 2, 1, 2, 1, 2, 1, 2])
    data = Dataset(y=y, w=w, s=np.ones(8, dtype=int))
    table = validate_dataset(data)
    grid = explicit_grid([0.45])
    fit = zero_fit(data, grid)
    infl = influence(data, table, grid, (2, 1), fit)
    le = (y <= 0.45).astype(float)
    delta = (2 * (w == 2) * le - 2 * (w == 1) * le).mean()
    expected = 2 * (w == 2) * le - 2 * (w == 1) * le - delta
    np.testing.assert_allclose(infl.psi[:, 0], expected, atol=1e-14)
    np.testing.assert_allclose(infl.delta[0], delta, atol=1e-14)
    assert infl.arms == (2, 1)


def test_influence_mean_is_zero_when_self_centered():
    data = rand_dataset(seed=1)
    table = validate_dataset(data)
    grid = quantile_grid(data.y, [0.2, 0.5, 0.8])
    plan = make_folds(data.n, 2, seed=3)
    fit = fit_crossfit(data, grid, (1, 2), LearnerSpec(kind="boost"), plan)
    infl = influence(data, table, grid, (2, 1), fit)
    np.testing.assert_allclose(infl.psi.mean(axis=0), 0.0, atol=1e-10)
    # and the internal centering value reproduces the adjusted contrast
    curve = dte(
        adjusted_cdf(data, table, grid, 2, fit), adjusted_cdf(data, table, grid, 1, fit)
    )
    np.testing.assert_allclose(infl.delta, curve.estimate, atol=1e-12)


def test_influence_accepts_curve_or_vector_for_delta():
    data = rand_dataset(seed=2)
    table = validate_dataset(data)
    grid = quantile_grid(data.y, [0.5])
    fit = zero_fit(data, grid)
    curve = dte(
        adjusted_cdf(data, table, grid, 2, fit), adjusted_cdf(data, table, grid, 1, fit)
    )
    a = influence(data, table, grid, (2, 1), fit, delta=curve)
    b = influence(data, table, grid, (2, 1), fit, delta=curve.estimate)
    np.testing.assert_array_equal(a.psi, b.psi)


def test_influence_pte_requires_bin_predictions():
    data = rand_dataset(seed=3)
    table = validate_dataset(data)
    grid = quantile_grid(data.y, [0.3, 0.7])
    fit = zero_fit(data, grid)
    with pytest.raises(MissingNuisance):
        influence(data, table, grid, (2, 1), fit, kind="pte")
    with pytest.raises(ValueError):
        influence(data, table, grid, (2, 1), fit, kind="cdf")


def test_pte_influence_telescopes_to_dte():
    data = rand_dataset(seed=4)
    table = validate_dataset(data)
    grid = quantile_grid(data.y, [0.25, 0.5, 0.75])
    fit = stratum_cdf_fit(data, grid, (1, 2), pmf="difference")
    infl_d = influence(data, table, grid, (2, 1), fit, kind="dte")
    infl_p = influence(data, table, grid, (2, 1), fit, kind="pte")
    np.testing.assert_allclose(
        infl_p.psi.cumsum(axis=1), infl_d.psi, atol=1e-12
    )


def test_variance_is_second_moment_of_psi():
    data = rand_dataset(seed=5)
    table = validate_dataset(data)
    grid = quantile_grid(data.y, [0.4, 0.6])
    infl = influence(data, table, grid, (2, 1), zero_fit(data, grid))
    varest = variance(infl)
    manual = infl.psi.T @ infl.psi / data.n
    np.testing.assert_allclose(varest.kernel, manual, atol=1e-12)
    np.testing.assert_allclose(varest.diag, np.diag(manual), atol=1e-12)
    np.testing.assert_allclose(varest.se, np.sqrt(np.diag(manual) / data.n), atol=1e-12)


def test_variance_decomposition_adds_back_exactly():
    for seed, learner in [(6, "zero"), (7, "boost"), (8, "linear")]:
        data = rand_dataset(seed=seed)
        table = validate_dataset(data)
        grid = quantile_grid(data.y, [0.2, 0.5, 0.8])
        plan = make_folds(data.n, 2, seed=seed)
        fit = fit_crossfit(data, grid, (1, 2), LearnerSpec(kind=learner), plan)
        infl = influence(data, table, grid, (2, 1), fit)
        dec = variance_decomposition(infl)
        np.testing.assert_allclose(dec.total, variance(infl).kernel, atol=1e-13)
        # each piece is a positive semidefinite kernel
        for piece in (dec.omega1_w, dec.omega1_wprime, dec.omega2):
            eigs = np.linalg.eigvalsh(piece)
            assert eigs.min() > -1e-10


def test_classical_variance_equals_psi_variance_for_saturated_fit():
    # saturated predictions have zero cell-mean residuals, so the
    # component-sum kernel and the squared-influence kernel coincide
    data = rand_dataset(seed=14)
    table = validate_dataset(data)
    grid = quantile_grid(data.y, [0.25, 0.5, 0.75])
    fit = stratum_cdf_fit(data, grid, (1, 2))
    infl = influence(data, table, grid, (2, 1), fit)
    cls = classical_variance(infl)
    np.testing.assert_allclose(cls.kernel, variance(infl).kernel, atol=1e-12)
    np.testing.assert_allclose(cls.se, np.sqrt(cls.diag / data.n), atol=1e-14)
    assert cls.n == data.n


def test_classical_variance_cross_term_identity():
    # for any fit the two kernels differ by a symmetrized product of the
    # per-stratum cell-mean residual contrast with the centered stratum
    # prediction contrast; build that correction by hand and add it back
    data = rand_dataset(n=300, seed=15)
    table = validate_dataset(data)
    grid = quantile_grid(data.y, [0.2, 0.5, 0.8])
    plan = make_folds(data.n, 2, seed=6)
    fit = fit_crossfit(data, grid, (1, 2), LearnerSpec(kind="boost"), plan)
    infl = influence(data, table, grid, (2, 1), fit)
    le = (data.y[:, np.newaxis] <= grid.locations[np.newaxis, :]).astype(float)
    slot_w = fit.arms.index(2)
    slot_wp = fit.arms.index(1)
    J = len(grid)
    corr = np.zeros((J, J))
    for s in (1, 2, 3):
        in_s = data.s == s
        cell_w = in_s & (data.w == 2)
        cell_wp = in_s & (data.w == 1)
        r_w = (le[cell_w] - fit.mu[cell_w, :, slot_w]).mean(axis=0)
        r_wp = (le[cell_wp] - fit.mu[cell_wp, :, slot_wp]).mean(axis=0)
        xi_s = infl.zeta[in_s][0] - infl.delta
        corr += in_s.sum() * np.outer(r_w - r_wp, xi_s)
    expected = classical_variance(infl).kernel + (corr + corr.T) / data.n
    np.testing.assert_allclose(variance(infl).kernel, expected, atol=1e-12)


def test_classical_variance_symmetric_psd():
    data = rand_dataset(n=260, seed=16)
    table = validate_dataset(data)
    grid = quantile_grid(data.y, [0.3, 0.5, 0.7])
    fit = fit_insample(data, grid, (1, 2), LearnerSpec(kind="boost"))
    infl = influence(data, table, grid, (2, 1), fit)
    cls = classical_variance(infl)
    np.testing.assert_allclose(cls.kernel, cls.kernel.T, atol=1e-14)
    assert np.linalg.eigvalsh(cls.kernel).min() > -1e-10
    assert cls.diag.min() >= 0.0


def test_moment_variance_matches_variance_for_saturated_fit():
    # saturated predictions are cell constants matching the cell label
    # means, so the implied label moments reproduce the realized ones
    # and the moment kernel reduces to the squared-influence one
    data = rand_dataset(seed=20)
    table = validate_dataset(data)
    grid = quantile_grid(data.y, [0.2, 0.5, 0.8])
    fit = stratum_cdf_fit(data, grid, (1, 2))
    infl = influence(data, table, grid, (2, 1), fit)
    mom = moment_variance(data, table, grid, (2, 1), fit, delta=infl.delta)
    np.testing.assert_allclose(mom.kernel, variance(infl).kernel, atol=1e-12)
    np.testing.assert_allclose(mom.se, variance(infl).se, atol=1e-12)


def test_moment_variance_hand_formula_single_stratum():
    y = np.array([0.05, 0.35, 0.25, 0.55, 0.45, 0.95, 0.15, 0.85])
    w = np.array([1, 2, 1, 2, 1, 2, 1, 2])
    data = Dataset(y=y, w=w, s=np.ones(8, dtype=int), x=np.zeros((8, 0)))
    table = validate_dataset(data)
    grid = explicit_grid([0.5])
    mu = np.zeros((8, 1, 2))
    mu[:, 0, 0] = [0.9, 0.8, 0.7, 0.3, 0.6, 0.1, 0.8, 1.2]
    mu[:, 0, 1] = [0.7, 0.9, 0.6, 0.4, -0.1, 0.2, 0.7, 0.1]
    fit = NuisanceFit(
        mu=mu, rho=None, arms=(1, 2), learner=LearnerSpec(kind="zero"), plan=None
    )
    delta = np.array([-0.25])
    got = moment_variance(data, table, grid, (2, 1), fit, delta=delta)
    m1 = mu[:, 0, 0]
    m2 = mu[:, 0, 1]
    g1 = np.clip(m1 * (1.0 - m1), 0.0, None).sum()
    g2 = np.clip(m2 * (1.0 - m2), 0.0, None).sum()
    d = (m2 - m2.mean()) - (m1 - m1.mean())
    xi = m2.mean() - m1.mean() - delta[0]
    expected = (2.0 * g2 + 2.0 * g1 + (d**2).sum() + 8.0 * xi**2) / 8.0
    np.testing.assert_allclose(got.kernel[0, 0], expected, atol=1e-14)
    np.testing.assert_allclose(got.se[0], np.sqrt(expected / 8.0), atol=1e-14)


def test_moment_variance_dispersion_deficit_is_conservative():
    # within a cell the average implied variance is exactly the cell
    # mean's binary variance minus the prediction spread, billed at the
    # inverse share; halving the spread must therefore widen the kernel
    data = rand_dataset(n=200, seed=21)
    table = validate_dataset(data)
    grid = explicit_grid([-0.5, 0.6])
    rng = np.random.default_rng(7)
    mu = np.zeros((200, 2, 2))
    mu[:, :, 0] = 0.4
    mu[:, :, 1] = rng.uniform(0.1, 0.9, size=(200, 2))
    spread = NuisanceFit(
        mu=mu, rho=None, arms=(1, 2), learner=LearnerSpec(kind="zero"), plan=None
    )
    shrunk_mu = mu.copy()
    for s in (1, 2, 3):
        cell = data.s == s
        mean_s = mu[cell, :, 1].mean(axis=0)
        shrunk_mu[cell, :, 1] = mean_s + 0.5 * (mu[cell, :, 1] - mean_s)
    shrunk = NuisanceFit(
        mu=shrunk_mu, rho=None, arms=(1, 2), learner=LearnerSpec(kind="zero"), plan=None
    )
    delta = np.array([0.1, 0.1])
    v_spread = moment_variance(data, table, grid, (2, 1), spread, delta=delta)
    v_shrunk = moment_variance(data, table, grid, (2, 1), shrunk, delta=delta)
    assert np.all(v_shrunk.diag > v_spread.diag)


def test_moment_variance_pte_and_validation():
    data = rand_dataset(seed=19)
    table = validate_dataset(data)
    grid = quantile_grid(data.y, [0.4, 0.8])
    fit = zero_fit(data, grid)
    with pytest.raises(MissingNuisance):
        moment_variance(data, table, grid, (2, 1), fit, kind="pte")
    with pytest.raises(ValueError):
        moment_variance(data, table, grid, (2, 1), fit, kind="cdf")
    with pytest.raises(MissingNuisance):
        moment_variance(data, table, grid, (3, 1), fit)
    # disjoint bin indicators on the saturated fit: implied multinomial
    # moments equal the realized ones, matching the influence kernel
    pfit = stratum_cdf_fit(data, grid, (1, 2), pmf="difference")
    infl = influence(data, table, grid, (2, 1), pfit, kind="pte")
    got = moment_variance(data, table, grid, (2, 1), pfit, delta=infl.delta, kind="pte")
    np.testing.assert_allclose(got.kernel, variance(infl).kernel, atol=1e-12)
    assert got.diag.shape == (2,)
    assert got.diag.min() >= 0.0


def test_pointwise_ci_frozen_normal_quantiles():
    grid = explicit_grid([0.0])
    curve = EffectCurve(
        grid=grid, kind="dte", arms=(2, 1), variant="adjusted", estimate=np.array([-0.10])
    )
    n = 1000
    se = 0.046
    varest = CovKernelEstimate(
        kernel=np.array([[se**2 * n]]),
        diag=np.array([se**2 * n]),
        se=np.array([se]),
        n=n,
    )
    out = pointwise_ci(curve, varest, alpha=0.05)
    np.testing.assert_allclose(out.ci_lo, [-0.19015834], atol=1e-6)
    np.testing.assert_allclose(out.ci_hi, [-0.00984166], atol=1e-6)
    np.testing.assert_allclose(out.se, [0.046])
    with pytest.raises(BadLevel):
        pointwise_ci(curve, varest, alpha=1.5)


def test_wider_level_means_wider_interval():
    data = rand_dataset(seed=9)
    table = validate_dataset(data)
    grid = quantile_grid(data.y, [0.5])
    fit = zero_fit(data, grid)
    curve = dte(
        adjusted_cdf(data, table, grid, 2, fit), adjusted_cdf(data, table, grid, 1, fit)
    )
    varest = variance(influence(data, table, grid, (2, 1), fit, delta=curve))
    at95 = pointwise_ci(curve, varest, alpha=0.05)
    at99 = pointwise_ci(curve, varest, alpha=0.01)
    assert (at99.ci_hi - at99.ci_lo)[0] > (at95.ci_hi - at95.ci_lo)[0]


def test_bootstrap_zero_multiplier_collapses():
    data = rand_dataset(seed=10)
    table = validate_dataset(data)
    grid = quantile_grid(data.y, [0.3, 0.7])
    infl = influence(data, table, grid, (2, 1), zero_fit(data, grid))
    band = multiplier_bootstrap(infl, 50, multiplier="zero")
    np.testing.assert_allclose(band.lo, infl.delta, atol=1e-14)
    np.testing.assert_allclose(band.hi, infl.delta, atol=1e-14)
    uni = multiplier_bootstrap(infl, 50, mode="uniform", multiplier="zero")
    assert uni.sup_quantile == 0.0


def test_bootstrap_seeded_and_validated():
    data = rand_dataset(seed=11)
    table = validate_dataset(data)
    grid = quantile_grid(data.y, [0.5])
    infl = influence(data, table, grid, (2, 1), zero_fit(data, grid))
    b1 = multiplier_bootstrap(infl, 200, seed=4)
    b2 = multiplier_bootstrap(infl, 200, seed=4)
    b3 = multiplier_bootstrap(infl, 200, seed=5)
    np.testing.assert_array_equal(b1.lo, b2.lo)
    assert not np.array_equal(b1.lo, b3.lo)
    with pytest.raises(BadRepetitions):
        multiplier_bootstrap(infl, 0)
    with pytest.raises(BadLevel):
        multiplier_bootstrap(infl, 10, alpha=0.0)
    with pytest.raises(ValueError):
        multiplier_bootstrap(infl, 10, multiplier="poisson")
    with pytest.raises(ValueError):
        multiplier_bootstrap(infl, 10, mode="simultaneous")


def test_uniform_band_contains_pointwise_interval():
    data = rand_dataset(n=400, seed=12)
    table = validate_dataset(data)
    grid = quantile_grid(data.y, [0.2, 0.4, 0.6, 0.8])
    fit = zero_fit(data, grid)
    curve = dte(
        adjusted_cdf(data, table, grid, 2, fit), adjusted_cdf(data, table, grid, 1, fit)
    )
    infl = influence(data, table, grid, (2, 1), fit, delta=curve)
    varest = variance(infl)
    curve = pointwise_ci(curve, varest, alpha=0.05)
    band = multiplier_bootstrap(infl, 3000, seed=0, mode="uniform", alpha=0.05)
    assert np.all(band.lo <= curve.ci_lo + 1e-12)
    assert np.all(band.hi >= curve.ci_hi - 1e-12)
    got = with_band(curve, band)
    np.testing.assert_array_equal(got.band_lo, band.lo)
    np.testing.assert_array_equal(got.band_hi, band.hi)


def test_rademacher_multiplier_runs():
    data = rand_dataset(seed=13)
    table = validate_dataset(data)
    grid = quantile_grid(data.y, [0.5])
    infl = influence(data, table, grid, (2, 1), zero_fit(data, grid))
    band = multiplier_bootstrap(infl, 500, seed=1, multiplier="rademacher")
    assert band.lo[0] < infl.delta[0] < band.hi[0]
