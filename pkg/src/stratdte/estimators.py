"""Distribution and bin-probability estimators and their contrasts.

Two estimators per curve: an unadjusted one weighting each treated
indicator by the inverse empirical assignment share of its stratum, and
an augmented one that adds cross-fitted regression predictions and
weights only the residuals. Contrasts between two arms give the
distributional (CDF scale) and probability (bin scale) treatment
effects. Estimates are reported as computed; nothing is clipped or
monotonized unless the presentation clamp is requested explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, StratumTable, ThresholdGrid
from .errors import GridMismatch, MissingNuisance
from .nuisance import NuisanceFit

__all__ = [
    "CdfEstimate",
    "PmfEstimate",
    "EffectCurve",
    "empirical_cdf",
    "adjusted_cdf",
    "empirical_pmf",
    "adjusted_pmf",
    "dte",
    "pte",
]


@dataclass(frozen=True)
class CdfEstimate:
    """One arm's estimated outcome CDF on a threshold grid."""

    grid: ThresholdGrid
    arm: int
    values: np.ndarray
    variant: str


@dataclass(frozen=True)
class PmfEstimate:
    """One arm's estimated bin probabilities; bin j is (y_{j-1}, y_j]."""

    grid: ThresholdGrid
    arm: int
    values: np.ndarray
    variant: str


@dataclass(frozen=True)
class EffectCurve:
    """Contrast between two arms on a common grid.

    ``estimate`` is F_w - F_w' (kind "dte") or the bin-probability
    difference (kind "pte"). Inference fields are filled by the
    inference module and stay None until then.
    """

    grid: ThresholdGrid
    kind: str
    arms: tuple
    variant: str
    estimate: np.ndarray
    se: np.ndarray = None
    ci_lo: np.ndarray = None
    ci_hi: np.ndarray = None
    band_lo: np.ndarray = None
    band_hi: np.ndarray = None


def _inv_share_weights(data: Dataset, table: StratumTable, arm: int):
    mask = data.w == arm
    return mask, 1.0 / table.pi_hat[arm - 1, data.s - 1]


def _le_matrix(data: Dataset, grid: ThresholdGrid):
    return (data.y[:, np.newaxis] <= grid.locations[np.newaxis, :]).astype(np.float64)


def _bin_matrix(data: Dataset, grid: ThresholdGrid):
    le = _le_matrix(data, grid)
    out = np.empty_like(le)
    out[:, 0] = le[:, 0]
    out[:, 1:] = le[:, 1:] - le[:, :-1]
    return out


def _arm_slot(fit: NuisanceFit, arm: int) -> int:
    try:
        return fit.arms.index(arm)
    except ValueError:
        raise MissingNuisance(f"no fitted predictions for arm {arm}") from None


def empirical_cdf(
    data: Dataset, table: StratumTable, grid: ThresholdGrid, arm: int
) -> CdfEstimate:
    """Inverse-share weighted CDF of the outcome under ``arm``.

    Equals the stratum-share weighted average of within-stratum arm
    ECDFs exactly, and reaches 1 at any threshold above the sample
    maximum.
    """
    mask, invw = _inv_share_weights(data, table, arm)
    le = _le_matrix(data, grid)
    values = (le * (mask * invw)[:, np.newaxis]).sum(axis=0) / data.n
    return CdfEstimate(grid=grid, arm=int(arm), values=values, variant="empirical")


def adjusted_cdf(
    data: Dataset,
    table: StratumTable,
    grid: ThresholdGrid,
    arm: int,
    fit: NuisanceFit,
    clamp: bool = False,
) -> CdfEstimate:
    """Augmented CDF estimate: predictions plus inverse-share weighted
    residuals.

    With predictions identically zero this collapses to the unadjusted
    estimator, and adding any stratum-constant shift to the predictions
    leaves it unchanged. ``clamp`` clips the reported values to [0, 1]
    for presentation; estimation and inference never clamp.
    """
    slot = _arm_slot(fit, arm)
    mu = fit.mu[:, :, slot]
    mask, invw = _inv_share_weights(data, table, arm)
    le = _le_matrix(data, grid)
    contrib = (le - mu) * (mask * invw)[:, np.newaxis] + mu
    values = contrib.sum(axis=0) / data.n
    if clamp:
        values = np.clip(values, 0.0, 1.0)
    return CdfEstimate(grid=grid, arm=int(arm), values=values, variant="adjusted")


def empirical_pmf(
    data: Dataset, table: StratumTable, grid: ThresholdGrid, arm: int
) -> PmfEstimate:
    """Inverse-share weighted bin probabilities; bin j is (y_{j-1}, y_j]
    with y_0 = -inf. Identical to adjacent differences of the CDF
    estimate."""
    mask, invw = _inv_share_weights(data, table, arm)
    bins = _bin_matrix(data, grid)
    values = (bins * (mask * invw)[:, np.newaxis]).sum(axis=0) / data.n
    return PmfEstimate(grid=grid, arm=int(arm), values=values, variant="empirical")


def adjusted_pmf(
    data: Dataset,
    table: StratumTable,
    grid: ThresholdGrid,
    arm: int,
    fit: NuisanceFit,
    clamp: bool = False,
) -> PmfEstimate:
    """Augmented bin probabilities using the fitted bin predictions."""
    if fit.rho is None:
        raise MissingNuisance("fit carries no bin predictions; refit with pmf mode")
    slot = _arm_slot(fit, arm)
    rho = fit.rho[:, :, slot]
    mask, invw = _inv_share_weights(data, table, arm)
    bins = _bin_matrix(data, grid)
    contrib = (bins - rho) * (mask * invw)[:, np.newaxis] + rho
    values = contrib.sum(axis=0) / data.n
    if clamp:
        values = np.clip(values, 0.0, 1.0)
    return PmfEstimate(grid=grid, arm=int(arm), values=values, variant="adjusted")


def dte(curve_w: CdfEstimate, curve_wprime: CdfEstimate) -> EffectCurve:
    """Distributional treatment effect F_w(y) - F_w'(y) on a shared grid."""
    if not curve_w.grid.same_as(curve_wprime.grid):
        raise GridMismatch("CDF estimates evaluated on different grids")
    if curve_w.variant != curve_wprime.variant:
        raise GridMismatch("cannot contrast empirical against adjusted values")
    return EffectCurve(
        grid=curve_w.grid,
        kind="dte",
        arms=(curve_w.arm, curve_wprime.arm),
        variant=curve_w.variant,
        estimate=curve_w.values - curve_wprime.values,
    )


def pte(pmf_w: PmfEstimate, pmf_wprime: PmfEstimate) -> EffectCurve:
    """Probability treatment effect on bin probabilities."""
    if not pmf_w.grid.same_as(pmf_wprime.grid):
        raise GridMismatch("bin estimates evaluated on different grids")
    if pmf_w.variant != pmf_wprime.variant:
        raise GridMismatch("cannot contrast empirical against adjusted values")
    return EffectCurve(
        grid=pmf_w.grid,
        kind="pte",
        arms=(pmf_w.arm, pmf_wprime.arm),
        variant=pmf_w.variant,
        estimate=pmf_w.values - pmf_wprime.values,
    )
