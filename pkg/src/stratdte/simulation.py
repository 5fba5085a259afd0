"""Synthetic experiments and the Monte Carlo evaluation harness.

The continuous design draws a uniform stratification score Z, strata as
its S equal intervals, independent standard normal covariates, Bernoulli
assignment within strata, and

    Y = b(X) + c(X) W + gamma Z + u,       u ~ N(0, 1)

with b(x) = sin(pi x1 x2) + 2 (x3 - 1/2)^2 + x4 + x5 / 2 and
c(x) = (x1 + log(1 + exp(x2))) / 10. The discrete design replaces the
outcome by Poisson with rate 0.2 |b + c W + gamma Z|. Arm 1 is control,
arm 2 treated, and reported contrasts are treated minus control.

Ground truth comes from one large coupled draw of both potential
outcomes. The harness reruns the estimators over independent
replications, evaluating each on its own pooled-decile grid, and
aggregates RMSE, bias, CI coverage, and CI length per grid position.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, pdtr

from .core import Dataset, ThresholdGrid, quantile_grid, validate_dataset
from .errors import BadRepetitions, GridMismatch, ZeroBaseline
from .estimators import adjusted_cdf, dte, empirical_cdf
from .inference import influence, pointwise_ci, variance
from .learners import LearnerSpec
from .nuisance import NuisanceFit, fit_crossfit, make_folds, stratum_cdf_fit

__all__ = [
    "DgpSpec",
    "EstimatorConfig",
    "EstimatorMetrics",
    "McReport",
    "GroundTruth",
    "dgp_baseline",
    "dgp_shift",
    "gen_continuous",
    "gen_discrete",
    "ground_truth",
    "oracle_fit",
    "run_monte_carlo",
    "rmse_reduction",
    "default_configs",
]

DECILES = tuple(np.round(np.arange(1, 10) * 0.1, 1))


@dataclass(frozen=True)
class DgpSpec:
    """Synthetic design parameters."""

    kind: str = "continuous"
    n: int = 1000
    n_strata: int = 4
    d_x: int = 20
    gamma: float = 0.1
    pi: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("continuous", "discrete"):
            raise ValueError("kind must be 'continuous' or 'discrete'")
        if self.n < 1 or self.n_strata < 1 or self.d_x < 5:
            raise ValueError("need n >= 1, strata >= 1, and at least 5 covariates")
        if not 0.0 < self.pi < 1.0:
            raise ValueError("assignment share must lie in (0, 1)")


def dgp_baseline(x):
    """b(x): nonlinear baseline using the first five covariates."""
    x = np.atleast_2d(x)
    return (
        np.sin(np.pi * x[:, 0] * x[:, 1])
        + 2.0 * (x[:, 2] - 0.5) ** 2
        + x[:, 3]
        + 0.5 * x[:, 4]
    )


def dgp_shift(x):
    """c(x): heterogeneous treatment shift."""
    x = np.atleast_2d(x)
    return 0.1 * (x[:, 0] + np.logaddexp(0.0, x[:, 1]))


def _strata_from_score(z, n_strata):
    return np.minimum((z * n_strata).astype(np.int64) + 1, n_strata)


def _draw_common(spec: DgpSpec, rng, d_x):
    z = rng.random(spec.n)
    s = _strata_from_score(z, spec.n_strata)
    x = rng.standard_normal((spec.n, d_x))
    treated = rng.random(spec.n) < spec.pi
    return z, s, x, treated


def gen_continuous(spec: DgpSpec, seed=None) -> Dataset:
    """One continuous-outcome experiment; arm 2 is treated."""
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    z, s, x, treated = _draw_common(spec, rng, spec.d_x)
    u = rng.standard_normal(spec.n)
    y = dgp_baseline(x) + dgp_shift(x) * treated + spec.gamma * z + u
    return Dataset(y=y, w=treated.astype(np.int64) + 1, s=s, x=x)


def gen_discrete(spec: DgpSpec, seed=None) -> Dataset:
    """One count-outcome experiment; arm 2 is treated."""
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    z, s, x, treated = _draw_common(spec, rng, spec.d_x)
    rate = 0.2 * np.abs(dgp_baseline(x) + dgp_shift(x) * treated + spec.gamma * z)
    y = rng.poisson(rate).astype(np.float64)
    return Dataset(y=y, w=treated.astype(np.int64) + 1, s=s, x=x)


@dataclass(frozen=True)
class GroundTruth:
    """Sorted potential-outcome draws from one large simulation."""

    y_control: np.ndarray = field(repr=False)
    y_treated: np.ndarray = field(repr=False)
    pooled: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.y_control.size

    def cdf(self, arm: int, locations) -> np.ndarray:
        ys = self.y_treated if arm == 2 else self.y_control
        locs = np.asarray(locations, dtype=np.float64)
        return np.searchsorted(ys, locs, side="right") / ys.size

    def dte(self, locations) -> np.ndarray:
        return self.cdf(2, locations) - self.cdf(1, locations)

    def pooled_quantiles(self, probs) -> np.ndarray:
        return np.quantile(self.pooled, np.asarray(probs), method="inverted_cdf")


def ground_truth(spec: DgpSpec, size: int = 10**6, seed=None) -> GroundTruth:
    """Draw both potential outcomes for ``size`` units.

    Only the five covariates entering the outcome are generated, so the
    draw stays cheap at a million units. The pooled sample holds the
    observed outcome under the design's assignment share.
    """
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    big = DgpSpec(
        kind=spec.kind,
        n=size,
        n_strata=spec.n_strata,
        d_x=5,
        gamma=spec.gamma,
        pi=spec.pi,
        seed=0,
    )
    z, _, x, treated = _draw_common(big, rng, 5)
    b = dgp_baseline(x)
    c = dgp_shift(x)
    if spec.kind == "continuous":
        u = rng.standard_normal(size)
        y0 = b + spec.gamma * z + u
        y1 = y0 + c
    else:
        y0 = rng.poisson(0.2 * np.abs(b + spec.gamma * z)).astype(np.float64)
        y1 = rng.poisson(0.2 * np.abs(b + c + spec.gamma * z)).astype(np.float64)
    pooled = np.where(treated, y1, y0)
    return GroundTruth(
        y_control=np.sort(y0), y_treated=np.sort(y1), pooled=np.sort(pooled)
    )


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def oracle_fit(
    spec: DgpSpec, data: Dataset, grid: ThresholdGrid, arms=(1, 2), pmf=None
) -> NuisanceFit:
    """True conditional threshold probabilities for the synthetic designs.

    mu_w(y, s, x) integrates the outcome CDF over the stratum's uniform
    score interval with an 8-node Gauss-Legendre rule; the integrand is
    nearly linear there, so the rule is exact to roundoff.
    """
    arms = tuple(int(a) for a in arms)
    n, J, A = data.n, len(grid), len(arms)
    b = dgp_baseline(data.x)
    c = dgp_shift(data.x)
    lo = (data.s - 1) / spec.n_strata
    hi = data.s / spec.n_strata
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    mu = np.zeros((n, J, A))
    for a_idx, a in enumerate(arms):
        loc = b + (c if a == 2 else 0.0)
        for q in range(_GL_NODES.size):
            zq = mid + half * _GL_NODES[q]
            wq = 0.5 * _GL_WEIGHTS[q]
            shift = loc + spec.gamma * zq
            if spec.kind == "continuous":
                probs = ndtr(grid.locations[np.newaxis, :] - shift[:, np.newaxis])
            else:
                rate = 0.2 * np.abs(shift)
                ks = np.floor(grid.locations)
                probs = np.where(
                    grid.locations[np.newaxis, :] < 0.0,
                    0.0,
                    pdtr(ks[np.newaxis, :], rate[:, np.newaxis]),
                )
            mu[:, :, a_idx] += wq * probs
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


@dataclass(frozen=True)
class EstimatorConfig:
    """One estimator variant evaluated by the harness.

    kind "empirical" ignores covariates; "crossfit" adjusts with the
    given learner; "oracle" adjusts with the true conditional
    probabilities (no fitting, no folds).
    """

    name: str
    kind: str = "crossfit"
    learner: LearnerSpec | None = None

    def __post_init__(self):
        if self.kind not in ("empirical", "crossfit", "oracle"):
            raise ValueError("kind must be empirical, crossfit, or oracle")
        if self.kind == "crossfit" and self.learner is None:
            raise ValueError("crossfit estimator needs a learner")


def default_configs():
    """The trio used throughout: unadjusted, linear, boosted trees."""
    return (
        EstimatorConfig(name="empirical", kind="empirical"),
        EstimatorConfig(name="linear", learner=LearnerSpec(kind="linear")),
        EstimatorConfig(name="ml", learner=LearnerSpec(kind="boost")),
    )


@dataclass
class EstimatorMetrics:
    """Per-replication results for one estimator, one row per grid slot."""

    name: str
    errors: np.ndarray
    ci_length: np.ndarray
    covered: np.ndarray
    omega_diag: np.ndarray

    @property
    def n_reps(self) -> int:
        return self.errors.shape[0]

    @property
    def rmse(self) -> np.ndarray:
        return np.sqrt((self.errors**2).mean(axis=0))

    @property
    def bias(self) -> np.ndarray:
        return self.errors.mean(axis=0)

    @property
    def coverage(self) -> np.ndarray:
        return self.covered.mean(axis=0)

    @property
    def mean_ci_length(self) -> np.ndarray:
        return self.ci_length.mean(axis=0)

    @property
    def mean_omega(self) -> np.ndarray:
        return self.omega_diag.mean(axis=0)

    @property
    def mc_se_omega(self) -> np.ndarray:
        r = self.omega_diag.shape[0]
        return self.omega_diag.std(axis=0, ddof=1) / np.sqrt(r)


@dataclass
class McReport:
    """Aggregated Monte Carlo results for a set of estimators."""

    spec: DgpSpec
    probs: tuple
    locations: tuple
    n_reps: int
    folds: int
    alpha: float
    seed: int
    metrics: dict

    def summary_rows(self):
        rows = []
        for name, m in self.metrics.items():
            rmse, bias = m.rmse, m.bias
            cov, length = m.coverage, m.mean_ci_length
            for j in range(rmse.size):
                slot = self.probs[j] if self.probs else self.locations[j]
                rows.append(
                    {
                        "estimator": name,
                        "grid": slot,
                        "rmse": rmse[j],
                        "bias": bias[j],
                        "coverage": cov[j],
                        "mean_ci_length": length[j],
                    }
                )
        return rows


def _estimate_once(config, spec, data, table, grid, folds, fold_seed, alpha):
    """One estimator on one dataset: contrast, CI bounds, variance diag.

    Point estimates come from honest (cross-fitted or exact)
    predictions. Standard errors use the squared-influence kernel of
    the same fit, which tracks the variance the estimator actually
    achieves with estimated predictions.
    """
    arms = (2, 1)
    if config.kind == "empirical":
        fit = stratum_cdf_fit(data, grid, arms)
        curve = dte(
            empirical_cdf(data, table, grid, 2), empirical_cdf(data, table, grid, 1)
        )
    elif config.kind == "oracle":
        fit = oracle_fit(spec, data, grid, arms=arms)
        curve = dte(
            adjusted_cdf(data, table, grid, 2, fit),
            adjusted_cdf(data, table, grid, 1, fit),
        )
    else:
        plan = make_folds(data.n, folds, seed=fold_seed)
        fit = fit_crossfit(data, grid, arms, config.learner, plan)
        curve = dte(
            adjusted_cdf(data, table, grid, 2, fit),
            adjusted_cdf(data, table, grid, 1, fit),
        )
    infl = influence(data, table, grid, arms, fit, delta=curve.estimate)
    varest = variance(infl)
    curve = pointwise_ci(curve, varest, alpha=alpha)
    return curve, varest


def run_monte_carlo(
    spec: DgpSpec,
    n_reps: int,
    configs=None,
    probs=DECILES,
    locations=None,
    folds: int = 2,
    alpha: float = 0.05,
    seed: int = 0,
    truth_size: int = 10**6,
) -> McReport:
    """Replicate the design, estimate every configured variant, compare
    to the large-sample truth.

    Each replication gets its own dataset and its own grid at the pooled
    sample deciles (or the fixed ``locations`` when given; required for
    the discrete design, whose decile grids change length across
    replications as atoms collide).
    """
    if n_reps < 1:
        raise BadRepetitions("need at least one replication")
    if configs is None:
        configs = default_configs()
    if locations is None and spec.kind == "discrete":
        raise ValueError("discrete outcomes need explicit grid locations")
    gen = gen_continuous if spec.kind == "continuous" else gen_discrete
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = root.spawn(n_reps + 1)
    gt = ground_truth(spec, size=truth_size, seed=children[n_reps])
    fixed_grid = ThresholdGrid(np.asarray(locations, dtype=np.float64)) if locations is not None else None
    J = len(fixed_grid) if fixed_grid is not None else len(probs)
    store = {
        c.name: {
            "errors": np.zeros((n_reps, J)),
            "ci_length": np.zeros((n_reps, J)),
            "covered": np.zeros((n_reps, J), dtype=bool),
            "omega_diag": np.zeros((n_reps, J)),
        }
        for c in configs
    }
    loc_sum = np.zeros(J)
    for rep in range(n_reps):
        sub = children[rep].spawn(2)
        data = gen(spec, seed=sub[0])
        table = validate_dataset(data, arms=(1, 2))
        if fixed_grid is not None:
            grid = fixed_grid
        else:
            grid = quantile_grid(data.y, probs)
            if len(grid) != J:
                raise GridMismatch(
                    "duplicate quantiles collapsed the grid; pass explicit locations"
                )
        truth = gt.dte(grid.locations)
        loc_sum += grid.locations
        fold_seeds = sub[1].spawn(len(configs))
        for cfg_i, config in enumerate(configs):
            curve, varest = _estimate_once(
                config, spec, data, table, grid, folds, fold_seeds[cfg_i], alpha
            )
            slot = store[config.name]
            slot["errors"][rep] = curve.estimate - truth
            slot["ci_length"][rep] = curve.ci_hi - curve.ci_lo
            slot["covered"][rep] = (curve.ci_lo <= truth) & (truth <= curve.ci_hi)
            slot["omega_diag"][rep] = varest.diag
    metrics = {
        c.name: EstimatorMetrics(name=c.name, **store[c.name]) for c in configs
    }
    return McReport(
        spec=spec,
        probs=tuple(probs) if locations is None else None,
        locations=tuple(np.asarray(locations, dtype=float)) if locations is not None
        else tuple(loc_sum / n_reps),
        n_reps=n_reps,
        folds=folds,
        alpha=alpha,
        seed=seed,
        metrics=metrics,
    )


def rmse_reduction(metrics_adjusted: EstimatorMetrics, metrics_empirical: EstimatorMetrics):
    """Percentage RMSE reduction of the adjusted estimator, per grid slot."""
    rmse_adj = metrics_adjusted.rmse
    rmse_emp = metrics_empirical.rmse
    if rmse_adj.size != rmse_emp.size:
        raise GridMismatch("metrics cover different grids")
    if np.any(rmse_emp == 0.0):
        raise ZeroBaseline("baseline RMSE is zero at some grid point")
    return 100.0 * (1.0 - rmse_adj / rmse_emp)
