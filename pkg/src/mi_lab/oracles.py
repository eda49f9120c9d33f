"""Exact and brute-force reference quantities.

Discrete KL / entropy / mutual information by direct summation, the optimal
Donsker-Varadhan critic, plug-in binned mutual information, count-of-counts
type statistics, the outlier no-hit probability, and the closed-form
ceilings and confidence bounds.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .distributions import Categorical
from .errors import InfiniteDivergenceError, UsageError


def _probs(p) -> np.ndarray:
    return p.probs if isinstance(p, Categorical) else np.asarray(p, dtype=np.float64)


def exact_kl(p, q) -> float:
    """KL(p || q) in nats. Atoms with p = 0 contribute nothing."""
    pp, qq = _probs(p), _probs(q)
    if pp.shape != qq.shape:
        raise UsageError("p and q must share a support")
    live = pp > 0
    if np.any(qq[live] <= 0):
        raise InfiniteDivergenceError("q has zero mass where p is positive")
    return float(np.sum(pp[live] * (np.log(pp[live]) - np.log(qq[live]))))


def exact_entropy(p) -> float:
    pp = _probs(p)
    nz = pp[pp > 0]
    return float(-np.sum(nz * np.log(nz)))


def _check_joint(joint) -> np.ndarray:
    j = np.asarray(joint, dtype=np.float64)
    if j.ndim != 2 or np.any(j < 0) or abs(j.sum() - 1.0) > 1e-9:
        raise UsageError("joint must be a nonnegative matrix summing to 1")
    return j


def mi_as_kl(joint) -> float:
    """I(X, Y) as KL(p_XY || p_X p_Y)."""
    j = _check_joint(joint)
    prod = np.outer(j.sum(axis=1), j.sum(axis=0))
    live = j > 0
    return float(np.sum(j[live] * (np.log(j[live]) - np.log(prod[live]))))


def mi_as_entropy_difference(joint) -> float:
    """I(X, Y) as H(X) - H(X | Y)."""
    j = _check_joint(joint)
    py = j.sum(axis=0)
    h_x = exact_entropy(j.sum(axis=1))
    live = j > 0
    cond = j / np.where(py > 0, py, 1.0)[None, :]
    h_x_given_y = float(-np.sum(j[live] * np.log(cond[live])))
    return h_x - h_x_given_y


def exact_mi(joint) -> float:
    return mi_as_kl(joint)


def optimal_dv_critic(p, q) -> np.ndarray:
    """Per-atom ln(p/q), translated so its minimum is 0."""
    pp, qq = _probs(p), _probs(q)
    if pp.shape != qq.shape:
        raise UsageError("p and q must share a support")
    if np.any(pp <= 0) or np.any(qq <= 0):
        raise UsageError("optimal critic needs a shared full support")
    f = np.log(pp) - np.log(qq)
    return f - f.min()


# ---------------------------------------------------------------------------
# Binning
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BinningSpec:
    """Sorted finite edges; values below the first or at/above the last edge
    land in the two overflow bins. ``m`` edges give ``m + 1`` bins."""

    edges: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.float64)
        if e.ndim != 1 or not np.all(np.isfinite(e)) or np.any(np.diff(e) <= 0):
            raise UsageError("bin edges must be finite and strictly increasing")
        object.__setattr__(self, "edges", e)

    @property
    def n_bins(self) -> int:
        return self.edges.size + 1

    def assign(self, values) -> np.ndarray:
        return np.searchsorted(self.edges, np.asarray(values, dtype=np.float64), side="right")


def equal_mass_binning(values, n_bins: int) -> BinningSpec:
    """Edges at the empirical quantiles, so every bin holds ~n / n_bins points."""
    if n_bins < 1:
        raise UsageError("n_bins must be positive")
    qs = np.arange(1, n_bins) / n_bins
    return BinningSpec(np.unique(np.quantile(np.asarray(values, dtype=np.float64), qs)))


def uniform_binning(lo: float, hi: float, width: float) -> BinningSpec:
    """Edges on the grid lo, lo + width, ..., up to hi."""
    if not width > 0 or not hi > lo:
        raise UsageError("need hi > lo and width > 0")
    n = int(math.floor((hi - lo) / width + 1e-9))
    return BinningSpec(lo + width * np.arange(n + 1))


def binning_mi(x, y, spec_x: BinningSpec, spec_y: BinningSpec) -> float:
    """Plug-in mutual information of the joint histogram over the bin grid."""
    x = np.asarray(x).ravel()
    y = np.asarray(y).ravel()
    if x.size != y.size or x.size < 2:
        raise UsageError("need at least two paired samples")
    ix, iy = spec_x.assign(x), spec_y.assign(y)
    counts = np.zeros((spec_x.n_bins, spec_y.n_bins))
    np.add.at(counts, (ix, iy), 1.0)
    return mi_as_kl(counts / x.size)


# ---------------------------------------------------------------------------
# Type statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TypeStatistics:
    """Count-of-counts: ``counts[i]`` distinct elements occur exactly i times."""

    counts: dict

    @property
    def sample_size(self) -> int:
        return sum(i * c for i, c in self.counts.items())

    def __getitem__(self, i: int) -> int:
        return self.counts.get(i, 0)


def type_statistics(multiset) -> TypeStatistics:
    arr = np.asarray(multiset)
    if arr.dtype.kind in "iub" and arr.ndim == 1:
        _, mult = np.unique(arr, return_counts=True)
        vals, freq = np.unique(mult, return_counts=True)
        return TypeStatistics({int(v): int(f) for v, f in zip(vals, freq)})
    per_element = Counter(multiset)
    return TypeStatistics(dict(sorted(Counter(per_element.values()).items())))


# ---------------------------------------------------------------------------
# Outlier risk, ceilings, confidence bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OutlierRisk:
    analytic: float
    empirical: float | None = None
    trials: int = 0


def outlier_no_hit_prob(N: int, phi_prob: float, trials: int | None = None,
                        rng: np.random.Generator | None = None) -> OutlierRisk:
    """Probability that N draws all miss an event of probability ``phi_prob``.

    With ``trials``, also the Monte Carlo fraction of trial-sets with no hit
    (the hit count of N Bernoulli draws is sampled as a binomial).
    """
    if N < 2:
        raise UsageError("N must be at least 2")
    if not 0.0 < phi_prob <= 1.0:
        raise UsageError("phi_prob must lie in (0, 1]")
    analytic = math.exp(N * math.log1p(-phi_prob)) if phi_prob < 1.0 else 0.0
    if trials is None:
        return OutlierRisk(analytic)
    if rng is None:
        raise UsageError("Monte Carlo needs an rng")
    hits = rng.binomial(N, phi_prob, size=trials)
    return OutlierRisk(analytic, float(np.mean(hits == 0)), trials)


@dataclass(frozen=True)
class Ceilings:
    ln_N: float
    two_ln_n_plus_5: float
    entropy_ceiling: float


def ceilings(N: int, k: int = 2) -> Ceilings:
    """ln N, the 2 ln N + 5 mutual-information ceiling, and ln(2 k N^2)."""
    if N < 2 or k < 2:
        raise UsageError("need N >= 2 and k >= 2")
    ln_n = math.log(N)
    return Ceilings(ln_n, 2.0 * ln_n + 5.0, math.log(2 * k * N * N))


@dataclass(frozen=True)
class BoundQuery:
    N: int
    delta: float
    F_max: float
    k: int = 2
    lam: float = 5.0
    sigma: float = 1.0
    theta_norm_sq: float = 0.0

    def __post_init__(self):
        if self.N < 1 or not 0.0 < self.delta < 1.0:
            raise UsageError("need N >= 1 and delta in (0, 1)")
        if not (self.F_max > 0 and self.sigma > 0 and self.lam > 0):
            raise UsageError("F_max, sigma and lam must be positive")
        if self.theta_norm_sq < 0:
            raise UsageError("theta_norm_sq must be nonnegative")


def chernoff_halfwidth(query: BoundQuery) -> float:
    return query.F_max * math.sqrt(math.log(2.0 / query.delta) / (2.0 * query.N))


def chernoff_ci(query: BoundQuery, empirical_mean: float) -> tuple[float, float]:
    """Two-sided interval for the mean of a variable bounded in [0, F_max]."""
    w = chernoff_halfwidth(query)
    return empirical_mean - w, empirical_mean + w


def pac_bayes_prefactor(lam: float) -> float:
    if not lam > 0.5:
        raise UsageError("PAC-Bayes bound needs lambda > 1/2")
    return 2.0 * lam / (2.0 * lam - 1.0)


def pac_bayes_bound(query: BoundQuery, empirical_smoothed_loss: float) -> float:
    """L2 PAC-Bayes upper bound on the smoothed population cross-entropy."""
    pre = pac_bayes_prefactor(query.lam)
    complexity = query.theta_norm_sq / (2.0 * query.sigma**2) + math.log(1.0 / query.delta)
    return pre * (empirical_smoothed_loss + query.lam * query.F_max / query.N * complexity)
