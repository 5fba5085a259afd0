"""Covariate-adaptive assignment schemes and a convergence checker.

Four schemes, all respecting stratum-level target shares:

* srs: independent draws per unit at its stratum's targets.
* stratified_block: exact within-stratum counts, floor(n_s * pi) per
  arm, the remainder going to arms chosen by a uniform shuffle; the
  stratum's units are then shuffled and cut.
* efron: two arms, sequential biased coin. The arm currently under its
  target share is picked with probability gamma (default 2/3); at exact
  balance the coin uses the target share itself.
* wei: two arms, sequential adaptive coin with assignment probability
  linear in the running imbalance, p1 = clip(2 pi_1 - n_1 / k, 0, 1)
  over the k units seen so far in the stratum (p1 = pi_1 when k = 0).
  At pi_1 = 1/2 this is the classic (1 - imbalance) / 2 rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadRepetitions, UnknownScheme, UnsupportedArms

__all__ = ["SchemeSpec", "ConvergenceReport", "assign", "check_convergence", "SCHEMES"]

SCHEMES = ("srs", "stratified_block", "efron", "wei")


@dataclass(frozen=True)
class SchemeSpec:
    """Assignment scheme plus per-stratum target shares.

    ``targets`` has shape (n_arms, n_strata); each column sums to 1 and
    every entry lies strictly inside (0, 1).
    """

    scheme: str
    targets: np.ndarray
    gamma: float = 2.0 / 3.0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise UnknownScheme(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        t = np.atleast_2d(np.asarray(self.targets, dtype=np.float64))
        if t.shape[0] < 2:
            raise UnsupportedArms("need at least two arms")
        if np.any(t <= 0.0) or np.any(t >= 1.0):
            raise ValueError("target shares must lie strictly inside (0, 1)")
        if not np.allclose(t.sum(axis=0), 1.0, atol=1e-12):
            raise ValueError("target shares must sum to 1 within each stratum")
        if self.scheme in ("efron", "wei") and t.shape[0] != 2:
            raise UnsupportedArms(f"{self.scheme} is defined for two arms")
        if not 0.5 <= self.gamma < 1.0:
            raise ValueError("efron bias must lie in [0.5, 1)")
        object.__setattr__(self, "targets", t)

    @property
    def n_arms(self) -> int:
        return self.targets.shape[0]

    @property
    def n_strata(self) -> int:
        return self.targets.shape[1]

    @classmethod
    def balanced(cls, scheme: str, n_strata: int, n_arms: int = 2, gamma: float = 2.0 / 3.0):
        """Equal target shares across arms in every stratum."""
        t = np.full((n_arms, n_strata), 1.0 / n_arms)
        return cls(scheme=scheme, targets=t, gamma=gamma)


@dataclass(frozen=True)
class ConvergenceReport:
    """Deviations |pi_hat - pi| per replication, arm, and stratum."""

    deviations: np.ndarray = field(repr=False)
    scheme: str = None
    n: int = None

    @property
    def max_by_cell(self) -> np.ndarray:
        return np.nanmax(self.deviations, axis=0)

    @property
    def per_rep_max(self) -> np.ndarray:
        return np.nanmax(self.deviations, axis=(1, 2))


def _as_rng(seed):
    return np.random.default_rng(seed)


def _efron_prob(d: float, pi1: float, gamma: float) -> float:
    """Next-assignment probability of arm 1 given signed imbalance d."""
    if d == 0.0:
        return pi1
    return gamma if d < 0.0 else 1.0 - gamma


def _wei_prob(n1: int, k: int, pi1: float) -> float:
    """Next-assignment probability of arm 1 after k units, n1 in arm 1."""
    if k == 0:
        return pi1
    return min(1.0, max(0.0, 2.0 * pi1 - n1 / k))


def assign(spec: SchemeSpec, strata, seed=0) -> np.ndarray:
    """Assign arms to units given their stratum sequence.

    Units are processed in the order given, which is the arrival order
    for the sequential schemes. Returns 1-based arm indices.
    """
    strata = np.asarray(strata, dtype=np.int64).ravel()
    n = strata.size
    if n == 0:
        raise ValueError("no units to assign")
    if strata.min() < 1 or strata.max() > spec.n_strata:
        raise ValueError("stratum indices outside the scheme's range")
    rng = _as_rng(seed)
    K, S = spec.n_arms, spec.n_strata
    w = np.zeros(n, dtype=np.int64)

    if spec.scheme == "srs":
        cum = np.cumsum(spec.targets, axis=0).T  # (S, K)
        u = rng.random(n)
        w = (u[:, np.newaxis] >= cum[strata - 1]).sum(axis=1) + 1
        return w

    if spec.scheme == "stratified_block":
        for s in range(1, S + 1):
            idx = np.flatnonzero(strata == s)
            n_s = idx.size
            if n_s == 0:
                continue
            base = np.floor(n_s * spec.targets[:, s - 1]).astype(np.int64)
            rem = n_s - int(base.sum())
            counts = base.copy()
            if rem > 0:
                counts[rng.permutation(K)[:rem]] += 1
            arms = np.repeat(np.arange(1, K + 1), counts)
            rng.shuffle(arms)
            w[idx] = arms
        return w

    # sequential two-arm coins
    pi1 = spec.targets[0]
    u = rng.random(n)
    n1 = np.zeros(S, dtype=np.int64)
    n2 = np.zeros(S, dtype=np.int64)
    for i in range(n):
        s = strata[i] - 1
        p = pi1[s]
        if spec.scheme == "efron":
            d = n1[s] * (1.0 - p) - n2[s] * p
            p1 = _efron_prob(d, p, spec.gamma)
        else:  # wei
            p1 = _wei_prob(int(n1[s]), int(n1[s] + n2[s]), p)
        if u[i] < p1:
            w[i] = 1
            n1[s] += 1
        else:
            w[i] = 2
            n2[s] += 1
    return w


def check_convergence(
    spec: SchemeSpec, n: int, replications: int, seed=0
) -> ConvergenceReport:
    """Monte Carlo check that empirical shares approach the targets.

    Each replication draws n stratum labels uniformly, runs the scheme,
    and records |pi_hat_w(s) - pi_w(s)| per (arm, stratum). Cells whose
    stratum came up empty are recorded as NaN and ignored by the report
    maxima.
    """
    if replications < 1:
        raise BadRepetitions("need at least one replication")
    if n < 1:
        raise BadRepetitions("need at least one unit per replication")
    K, S = spec.n_arms, spec.n_strata
    dev = np.full((replications, K, S), np.nan)
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = root.spawn(replications)
    for rep in range(replications):
        rng = np.random.default_rng(children[rep])
        strata = rng.integers(1, S + 1, size=n)
        w = assign(spec, strata, seed=rng)
        for s in range(1, S + 1):
            mask = strata == s
            n_s = int(mask.sum())
            if n_s == 0:
                continue
            for a in range(1, K + 1):
                share = (w[mask] == a).sum() / n_s
                dev[rep, a - 1, s - 1] = abs(share - spec.targets[a - 1, s - 1])
    return ConvergenceReport(deviations=dev, scheme=spec.scheme, n=n)
