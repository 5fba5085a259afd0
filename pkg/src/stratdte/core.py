"""Core data model: experiment datasets, stratum tables, threshold grids.

A dataset holds one unit per row: a real outcome, an arm index, a stratum
index, and an optional covariate block. Arm and stratum indices are dense
1-based integers; string labels from an input file live in sidecar tuples
so results can be reported in the caller's vocabulary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCell, EmptyProbs, EmptyStratum, NotIncreasing

__all__ = [
    "Dataset",
    "StratumTable",
    "ThresholdGrid",
    "validate_dataset",
    "quantile_grid",
    "explicit_grid",
]


@dataclass(frozen=True)
class Dataset:
    """One randomized experiment: outcomes, arms, strata, covariates.

    Parameters
    ----------
    y : ndarray, shape (n,)
        Observed outcomes. Must be finite.
    w : ndarray, shape (n,)
        Arm index per unit, integers in 1..n_arms.
    s : ndarray, shape (n,)
        Stratum index per unit, integers in 1..n_strata.
    x : ndarray, shape (n, d_x)
        Covariates used for regression adjustment. d_x may be 0.
    arm_labels, stratum_labels : tuple of str, optional
        Original labels, position k holding the label for index k+1.
    """

    y: np.ndarray
    w: np.ndarray
    s: np.ndarray
    x: np.ndarray = None
    arm_labels: tuple = None
    stratum_labels: tuple = None
    n_arms: int = field(default=None)
    n_strata: int = field(default=None)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64).ravel()
        w = np.asarray(self.w, dtype=np.int64).ravel()
        s = np.asarray(self.s, dtype=np.int64).ravel()
        if y.size == 0:
            raise ValueError("dataset needs at least one unit")
        if not (w.size == y.size and s.size == y.size):
            raise ValueError("y, w, s must have equal length")
        if not np.all(np.isfinite(y)):
            raise ValueError("outcomes must be finite")
        if w.min() < 1 or s.min() < 1:
            raise ValueError("arm and stratum indices are 1-based")
        x = self.x
        if x is None:
            x = np.empty((y.size, 0), dtype=np.float64)
        x = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
        if x.ndim != 2 or x.shape[0] != y.size:
            raise ValueError("covariates must be (n, d_x)")
        if x.size and not np.all(np.isfinite(x)):
            raise ValueError("covariates must be finite")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "x", x)
        if self.n_arms is None:
            object.__setattr__(self, "n_arms", int(w.max()))
        if self.n_strata is None:
            object.__setattr__(self, "n_strata", int(s.max()))
        if w.max() > self.n_arms:
            raise ValueError("arm index exceeds declared arm count")
        if s.max() > self.n_strata:
            raise ValueError("stratum index exceeds declared stratum count")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def d_x(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class StratumTable:
    """Observed stratum composition of a dataset.

    Attributes
    ----------
    n_s : ndarray, shape (S,)
        Units per stratum.
    p_hat : ndarray, shape (S,)
        Stratum shares n(s) / n.
    n_ws : ndarray, shape (n_arms, S)
        Units per (arm, stratum) cell.
    pi_hat : ndarray, shape (n_arms, S)
        Empirical assignment shares n_w(s) / n(s).
    """

    n: int
    arms: tuple
    n_s: np.ndarray
    p_hat: np.ndarray
    n_ws: np.ndarray
    pi_hat: np.ndarray

    @property
    def n_strata(self) -> int:
        return self.n_s.size


def validate_dataset(data: Dataset, arms=None) -> StratumTable:
    """Check that the arms under comparison are identified in every stratum.

    Every declared stratum must be non-empty, and each requested arm must
    have an empirical assignment share strictly inside (0, 1) in every
    stratum. Inverse-share weighting is undefined otherwise.

    Parameters
    ----------
    data : Dataset
    arms : sequence of int, optional
        Arm indices whose cells must be identified. Defaults to all arms.

    Returns
    -------
    StratumTable

    Raises
    ------
    EmptyStratum
        If a declared stratum has no units.
    DegenerateCell
        If a requested (arm, stratum) cell is empty or fills its stratum.
    """
    K, S = data.n_arms, data.n_strata
    if arms is None:
        arms = tuple(range(1, K + 1))
    arms = tuple(int(a) for a in arms)
    for a in arms:
        if not 1 <= a <= K:
            raise ValueError(f"arm {a} outside 1..{K}")
    n_ws = np.zeros((K, S), dtype=np.int64)
    np.add.at(n_ws, (data.w - 1, data.s - 1), 1)
    n_s = n_ws.sum(axis=0)
    for s in range(S):
        if n_s[s] == 0:
            raise EmptyStratum(f"stratum {s + 1} has no units")
    pi_hat = n_ws / n_s[np.newaxis, :]
    for a in arms:
        for s in range(S):
            if n_ws[a - 1, s] == 0 or n_ws[a - 1, s] == n_s[s]:
                raise DegenerateCell(
                    f"arm {a} has share {pi_hat[a - 1, s]:g} in stratum {s + 1}"
                )
    return StratumTable(
        n=data.n,
        arms=arms,
        n_s=n_s,
        p_hat=n_s / data.n,
        n_ws=n_ws,
        pi_hat=pi_hat,
    )


@dataclass(frozen=True)
class ThresholdGrid:
    """Strictly increasing outcome thresholds where curves are evaluated."""

    locations: np.ndarray

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=np.float64).ravel()
        if loc.size == 0:
            raise NotIncreasing("grid needs at least one threshold")
        if loc.size > 1 and not np.all(np.diff(loc) > 0):
            raise NotIncreasing("grid thresholds must be strictly increasing")
        object.__setattr__(self, "locations", loc)

    def __len__(self) -> int:
        return self.locations.size

    def same_as(self, other: "ThresholdGrid") -> bool:
        return self.locations.size == other.locations.size and bool(
            np.all(self.locations == other.locations)
        )


def quantile_grid(data, probs) -> ThresholdGrid:
    """Grid at pooled-outcome quantiles.

    Quantiles follow the left-continuous order-statistic convention: the
    p-quantile of n sorted values is the ceil(n * p)-th order statistic.
    Duplicate locations (outcome atoms spanning several probabilities)
    are dropped, so the grid may be shorter than ``probs``.

    Parameters
    ----------
    data : Dataset or ndarray
        Pooled outcomes, both arms together.
    probs : sequence of float
        Strictly increasing probabilities in (0, 1).
    """
    y = data.y if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    p = np.asarray(probs, dtype=np.float64).ravel()
    if p.size == 0:
        raise EmptyProbs("no quantile probabilities given")
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise EmptyProbs("quantile probabilities must lie in (0, 1)")
    if p.size > 1 and not np.all(np.diff(p) > 0):
        raise EmptyProbs("quantile probabilities must be strictly increasing")
    locs = np.quantile(y, p, method="inverted_cdf")
    keep = np.concatenate([[True], np.diff(locs) > 0])
    return ThresholdGrid(locations=locs[keep])


def explicit_grid(values) -> ThresholdGrid:
    """Grid at caller-chosen thresholds; must be strictly increasing."""
    return ThresholdGrid(locations=np.asarray(values, dtype=np.float64))
