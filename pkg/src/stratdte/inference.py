"""Influence functions, variance kernels, and confidence statements.

The estimated influence function for the contrast between arms w and w'
at threshold y is

    psi_i(y) = 1{W_i = w} (L_i(y) - m_w(y, S_i, X_i)) / pi_w(S_i)
             - 1{W_i = w'} (L_i(y) - m_w'(y, S_i, X_i)) / pi_w'(S_i)
             + m_w(y, S_i, X_i) - m_w'(y, S_i, X_i) - delta(y)

with L the threshold (or bin) indicator, m the fitted predictions, and
pi the empirical shares. The covariance kernel is the second moment of
psi; pointwise intervals use normal quantiles, and bands come from a
multiplier bootstrap on psi.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtri

from .core import Dataset, StratumTable, ThresholdGrid
from .errors import BadLevel, BadRepetitions, MissingNuisance
from .estimators import EffectCurve, _bin_matrix, _le_matrix
from .nuisance import NuisanceFit
from .nuisance import stratum_means as _stratum_means_op

__all__ = [
    "InfluenceTable",
    "CovKernelEstimate",
    "VarianceDecomposition",
    "BootstrapBand",
    "influence",
    "variance",
    "classical_variance",
    "moment_variance",
    "variance_decomposition",
    "pointwise_ci",
    "multiplier_bootstrap",
    "with_band",
]


@dataclass
class InfluenceTable:
    """Per-unit influence values and their diagnostic components.

    ``psi`` drives all inference. ``phi_w`` and ``phi_wprime`` hold the
    within-arm residual components (zero off-arm), ``zeta`` the
    stratum-level prediction contrast; both are centered with all-units
    stratum means of the predictions and are diagnostic only.
    """

    psi: np.ndarray
    phi_w: np.ndarray
    phi_wprime: np.ndarray
    zeta: np.ndarray
    delta: np.ndarray
    arms: tuple
    kind: str
    w: np.ndarray
    s: np.ndarray

    @property
    def n(self) -> int:
        return self.psi.shape[0]


@dataclass(frozen=True)
class CovKernelEstimate:
    """Covariance kernel of the limiting process, divided by n for SEs."""

    kernel: np.ndarray
    diag: np.ndarray
    se: np.ndarray
    n: int


@dataclass(frozen=True)
class VarianceDecomposition:
    """Exact split of the kernel into two within-arm residual terms and
    a between-cell term.

    Within each (compared arm, stratum) cell, psi is separated into its
    cell mean and the deviation from it; the deviations are orthogonal
    to everything cell-constant, so the three pieces add back to the
    full kernel up to roundoff.
    """

    omega1_w: np.ndarray
    omega1_wprime: np.ndarray
    omega2: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.omega1_w + self.omega1_wprime + self.omega2


@dataclass(frozen=True)
class BootstrapBand:
    mode: str
    alpha: float
    lo: np.ndarray
    hi: np.ndarray
    n_draws: int
    multiplier: str
    sup_quantile: float = None
    draw_sd: np.ndarray = None


def influence(
    data: Dataset,
    table: StratumTable,
    grid: ThresholdGrid,
    arms,
    fit: NuisanceFit,
    stratum_mean_values=None,
    delta=None,
    kind: str = "dte",
) -> InfluenceTable:
    """Build the influence table for the contrast of ``arms`` = (w, w').

    Parameters
    ----------
    stratum_mean_values : ndarray, optional
        Precomputed (A, J, S) output of ``stratum_means``; recomputed
        when omitted. Only the diagnostic components use it.
    delta : ndarray or EffectCurve, optional
        Contrast estimate used for centering. When omitted, the mean of
        the uncentered influence contributions is used, which centers
        psi exactly and reproduces the adjusted-estimator contrast.
    kind : {"dte", "pte"}
        Threshold indicators with ``fit.mu`` or bin indicators with
        ``fit.rho``.
    """
    w, wp = (int(a) for a in arms)
    if kind == "dte":
        lab = _le_matrix(data, grid)
        preds = fit.mu
    elif kind == "pte":
        if fit.rho is None:
            raise MissingNuisance("fit carries no bin predictions; refit with pmf mode")
        lab = _bin_matrix(data, grid)
        preds = fit.rho
    else:
        raise ValueError("kind must be 'dte' or 'pte'")
    slot_w = fit.arms.index(w) if w in fit.arms else None
    slot_wp = fit.arms.index(wp) if wp in fit.arms else None
    if slot_w is None or slot_wp is None:
        raise MissingNuisance(f"fit lacks predictions for arms {w} and {wp}")
    mu_w = preds[:, :, slot_w]
    mu_wp = preds[:, :, slot_wp]
    in_w = (data.w == w).astype(np.float64)
    in_wp = (data.w == wp).astype(np.float64)
    inv_w = 1.0 / table.pi_hat[w - 1, data.s - 1]
    inv_wp = 1.0 / table.pi_hat[wp - 1, data.s - 1]
    raw = (
        (lab - mu_w) * (in_w * inv_w)[:, np.newaxis]
        - (lab - mu_wp) * (in_wp * inv_wp)[:, np.newaxis]
        + mu_w
        - mu_wp
    )
    if delta is None:
        delta_vec = raw.mean(axis=0)
    elif isinstance(delta, EffectCurve):
        delta_vec = np.asarray(delta.estimate, dtype=np.float64)
    else:
        delta_vec = np.asarray(delta, dtype=np.float64)
    psi = raw - delta_vec[np.newaxis, :]

    if stratum_mean_values is None:
        if kind == "dte":
            stratum_mean_values = _stratum_means_op(fit, data)
        else:
            rho_fit = NuisanceFit(
                mu=fit.rho, rho=None, arms=fit.arms, learner=fit.learner, plan=fit.plan
            )
            stratum_mean_values = _stratum_means_op(rho_fit, data)
    sm_w = stratum_mean_values[slot_w][:, data.s - 1].T
    sm_wp = stratum_mean_values[slot_wp][:, data.s - 1].T
    phi_w = in_w[:, np.newaxis] * (
        (lab - sm_w) * inv_w[:, np.newaxis]
        + (1.0 - inv_w)[:, np.newaxis] * (mu_w - sm_w)
        - (mu_wp - sm_wp)
    )
    phi_wp = in_wp[:, np.newaxis] * (
        (lab - sm_wp) * inv_wp[:, np.newaxis]
        + (1.0 - inv_wp)[:, np.newaxis] * (mu_wp - sm_wp)
        - (mu_w - sm_w)
    )
    zeta = sm_w - sm_wp
    return InfluenceTable(
        psi=psi,
        phi_w=phi_w,
        phi_wprime=phi_wp,
        zeta=zeta,
        delta=delta_vec,
        arms=(w, wp),
        kind=kind,
        w=data.w,
        s=data.s,
    )


def variance(infl: InfluenceTable) -> CovKernelEstimate:
    """Second-moment kernel of psi; standard errors are sqrt(diag / n)."""
    n = infl.n
    kernel = infl.psi.T @ infl.psi / n
    diag = np.diag(kernel).copy()
    return CovKernelEstimate(kernel=kernel, diag=diag, se=np.sqrt(diag / n), n=n)


def classical_variance(infl: InfluenceTable) -> CovKernelEstimate:
    """Three-term kernel from the component sums of squares.

    Adds the raw Gram matrices of the two within-arm components and the
    centered stratum-level contrast, without the cross products that
    ``variance`` picks up through psi. The two kernels agree exactly
    when predictions are constant within each (arm, stratum) cell and
    match the cell label means, as the saturated within-stratum fit
    guarantees; for fitted predictions they differ by cell-mean residual
    cross terms.
    """
    n = infl.n
    xi = infl.zeta - infl.delta[np.newaxis, :]
    kernel = (
        infl.phi_w.T @ infl.phi_w
        + infl.phi_wprime.T @ infl.phi_wprime
        + xi.T @ xi
    ) / n
    diag = np.diag(kernel).copy()
    return CovKernelEstimate(kernel=kernel, diag=diag, se=np.sqrt(diag / n), n=n)


def moment_variance(
    data: Dataset,
    table: StratumTable,
    grid: ThresholdGrid,
    arms,
    fit: NuisanceFit,
    delta=None,
    kind: str = "dte",
) -> CovKernelEstimate:
    """Kernel from predicted label moments instead of realized residuals.

    Evaluates the covariance kernel by replacing each unit's conditional
    label covariance with the binary-outcome form implied by its own
    predictions (inverse-share weighted per compared arm), then adding
    the spread of the centered prediction contrast and of the
    stratum-level contrast around ``delta``. Within a cell the average
    implied variance equals the cell label variance minus the prediction
    spread exactly, so predictions that miss part of the outcome's
    spread are billed for the missing part at the inverse-share rate:
    the rougher the fit, the closer its standard errors sit to the
    unadjusted ones. For the saturated within-stratum fit the kernel
    coincides with ``variance`` exactly.

    Parameters
    ----------
    delta : ndarray or EffectCurve, optional
        Contrast used to center the stratum-level term; when omitted the
        mean influence contribution is used, as in ``influence``.
    kind : {"dte", "pte"}
        Threshold indicators with ``fit.mu`` or bin indicators with
        ``fit.rho``.
    """
    w, wp = (int(a) for a in arms)
    if kind == "dte":
        preds = fit.mu
    elif kind == "pte":
        if fit.rho is None:
            raise MissingNuisance("fit carries no bin predictions; refit with pmf mode")
        preds = fit.rho
    else:
        raise ValueError("kind must be 'dte' or 'pte'")
    slot_w = fit.arms.index(w) if w in fit.arms else None
    slot_wp = fit.arms.index(wp) if wp in fit.arms else None
    if slot_w is None or slot_wp is None:
        raise MissingNuisance(f"fit lacks predictions for arms {w} and {wp}")
    mu_w = preds[:, :, slot_w]
    mu_wp = preds[:, :, slot_wp]
    n, J = mu_w.shape
    if delta is None:
        lab = _le_matrix(data, grid) if kind == "dte" else _bin_matrix(data, grid)
        in_w = (data.w == w).astype(np.float64)
        in_wp = (data.w == wp).astype(np.float64)
        inv_w_full = 1.0 / table.pi_hat[w - 1, data.s - 1]
        inv_wp_full = 1.0 / table.pi_hat[wp - 1, data.s - 1]
        raw = (
            (lab - mu_w) * (in_w * inv_w_full)[:, np.newaxis]
            - (lab - mu_wp) * (in_wp * inv_wp_full)[:, np.newaxis]
            + mu_w
            - mu_wp
        )
        delta_vec = raw.mean(axis=0)
    elif isinstance(delta, EffectCurve):
        delta_vec = np.asarray(delta.estimate, dtype=np.float64)
    else:
        delta_vec = np.asarray(delta, dtype=np.float64)
    idx = np.arange(J)
    lower = np.minimum.outer(idx, idx)
    kernel = np.zeros((J, J))
    for s_idx in range(table.n_strata):
        q = data.s == s_idx + 1
        n_s = int(q.sum())
        if n_s == 0:
            continue
        part = np.zeros((J, J))
        centered = []
        for slot_arm, block in ((w, mu_w[q]), (wp, mu_wp[q])):
            mean_s = block.mean(axis=0)
            centered.append(block - mean_s)
            if kind == "dte":
                implied = block.sum(axis=0)[lower] - block.T @ block
            else:
                implied = np.diag(block.sum(axis=0)) - block.T @ block
            # a predicted probability outside [0, 1] implies a negative
            # variance; bill those units at zero instead
            np.fill_diagonal(
                implied, np.clip(block * (1.0 - block), 0.0, None).sum(axis=0)
            )
            part += implied / table.pi_hat[slot_arm - 1, s_idx]
        contrast = centered[0] - centered[1]
        xi = mu_w[q].mean(axis=0) - mu_wp[q].mean(axis=0) - delta_vec
        part += contrast.T @ contrast + n_s * np.outer(xi, xi)
        kernel += part / n
    diag = np.maximum(np.diag(kernel).copy(), 0.0)
    return CovKernelEstimate(kernel=kernel, diag=diag, se=np.sqrt(diag / n), n=n)


def variance_decomposition(infl: InfluenceTable) -> VarianceDecomposition:
    """Split the kernel exactly into within-arm and between-cell terms."""
    psi = infl.psi
    n = infl.n
    w, wp = infl.arms
    dev = np.zeros_like(psi)
    for arm in (w, wp):
        for s in np.unique(infl.s):
            cell = (infl.w == arm) & (infl.s == s)
            if cell.any():
                dev[cell] = psi[cell] - psi[cell].mean(axis=0)
    between = psi - dev
    dev_w = dev * (infl.w == w)[:, np.newaxis]
    dev_wp = dev * (infl.w == wp)[:, np.newaxis]
    return VarianceDecomposition(
        omega1_w=dev_w.T @ dev_w / n,
        omega1_wprime=dev_wp.T @ dev_wp / n,
        omega2=between.T @ between / n,
    )


def pointwise_ci(curve: EffectCurve, varest: CovKernelEstimate, alpha: float = 0.05):
    """Attach normal-quantile pointwise intervals at level alpha."""
    if not 0.0 < alpha < 1.0:
        raise BadLevel(f"alpha {alpha} outside (0, 1)")
    if varest.se.size != curve.estimate.size:
        raise ValueError("variance estimate does not match the curve grid")
    z = ndtri(1.0 - alpha / 2.0)
    half = z * varest.se
    return replace(
        curve,
        se=varest.se,
        ci_lo=curve.estimate - half,
        ci_hi=curve.estimate + half,
    )


def multiplier_bootstrap(
    infl: InfluenceTable,
    n_draws: int,
    seed=0,
    mode: str = "pointwise",
    alpha: float = 0.05,
    multiplier: str = "normal",
) -> BootstrapBand:
    """Perturb the estimate with weighted influence sums and read bands
    off the draw distribution.

    Draw b replaces the estimate by delta + mean_i(xi_bi * psi_i) with
    i.i.d. multipliers xi. Pointwise bands take per-threshold quantiles
    of the draws; uniform bands scale the standard errors by the
    (1 - alpha) quantile of the studentized sup statistic.

    ``multiplier`` is "normal", "rademacher", or "zero" (a degenerate
    stream that collapses every draw onto the estimate; test use only).
    """
    if n_draws < 1:
        raise BadRepetitions("bootstrap needs at least one draw")
    if not 0.0 < alpha < 1.0:
        raise BadLevel(f"alpha {alpha} outside (0, 1)")
    n = infl.n
    rng = np.random.default_rng(seed)
    if multiplier == "normal":
        xi = rng.standard_normal((n_draws, n))
    elif multiplier == "rademacher":
        xi = rng.integers(0, 2, size=(n_draws, n)).astype(np.float64) * 2.0 - 1.0
    elif multiplier == "zero":
        xi = np.zeros((n_draws, n))
    else:
        raise ValueError("multiplier must be 'normal', 'rademacher', or 'zero'")
    draws = infl.delta[np.newaxis, :] + (xi @ infl.psi) / n
    draw_sd = draws.std(axis=0)
    if mode == "pointwise":
        lo = np.quantile(draws, alpha / 2.0, axis=0)
        hi = np.quantile(draws, 1.0 - alpha / 2.0, axis=0)
        return BootstrapBand(
            mode=mode,
            alpha=alpha,
            lo=lo,
            hi=hi,
            n_draws=n_draws,
            multiplier=multiplier,
            draw_sd=draw_sd,
        )
    if mode == "uniform":
        se = variance(infl).se
        safe = np.where(se > 0.0, se, 1.0)
        stud = np.abs(draws - infl.delta[np.newaxis, :]) / safe[np.newaxis, :]
        stud[:, se == 0.0] = 0.0
        q = float(np.quantile(stud.max(axis=1), 1.0 - alpha))
        return BootstrapBand(
            mode=mode,
            alpha=alpha,
            lo=infl.delta - q * se,
            hi=infl.delta + q * se,
            n_draws=n_draws,
            multiplier=multiplier,
            sup_quantile=q,
            draw_sd=draw_sd,
        )
    raise ValueError("mode must be 'pointwise' or 'uniform'")


def with_band(curve: EffectCurve, band: BootstrapBand) -> EffectCurve:
    """Attach bootstrap band bounds to a curve."""
    return replace(curve, band_lo=band.lo, band_hi=band.hi)
