"""Samplers and exact densities.

Correlated Gaussian pairs with closed-form mutual information, diagonal
density models used by the difference-of-entropies estimator, discrete
categoricals, and the two adversarial constructions (the 1/N mixture and the
tail-flattened distribution).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import UsageError

FAMILIES = ("gaussian_diag", "logistic_diag")
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Correlated Gaussian pairs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianPairSpec:
    d: int
    rho: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise UsageError(f"d must be a positive integer, got {self.d}")
        if not abs(self.rho) < 1.0:
            raise UsageError(f"rho must lie in (-1, 1), got {self.rho}")


def standard_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Box-Muller transform of the generator's uniform stream."""
    size = int(np.prod(shape))
    half = (size + 1) // 2
    u1 = rng.random(half)
    u2 = rng.random(half)
    r = np.sqrt(-2.0 * np.log1p(-u1))  # 1 - u1 lies in (0, 1]
    theta = 2.0 * math.pi * u2
    z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:size]
    return z.reshape(shape)


def sample_correlated_gaussian(spec: GaussianPairSpec, n: int, rng: np.random.Generator):
    """Draw ``n`` pairs with x ~ N(0, I) and y = rho x + sqrt(1 - rho^2) eps."""
    if n < 1:
        raise UsageError("n must be at least 1")
    z = standard_normal(rng, (2, n, spec.d))
    x = z[0]
    y = spec.rho * x + math.sqrt(1.0 - spec.rho**2) * z[1]
    return x, y


def gaussian_mi(spec: GaussianPairSpec) -> float:
    """Exact mutual information in nats: -(d/2) ln(1 - rho^2)."""
    return -0.5 * spec.d * math.log1p(-spec.rho**2)


def rho_for_mi(mi: float, d: int) -> float:
    """Inverse of :func:`gaussian_mi` for rho >= 0."""
    return math.sqrt(-math.expm1(-2.0 * mi / d))


# ---------------------------------------------------------------------------
# Categoricals
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Categorical:
    """Discrete distribution over ``0 .. len(probs) - 1``.

    Full support is required unless ``full_support=False``.
    """

    probs: np.ndarray
    full_support: bool = True

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise UsageError("probs must be a non-empty vector")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise UsageError("probs must be finite and nonnegative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise UsageError(f"probs sum to {p.sum()!r}, not 1")
        if self.full_support and np.any(p == 0):
            raise UsageError("zero-probability atom in a full-support categorical")
        object.__setattr__(self, "probs", p)

    @property
    def size(self) -> int:
        return self.probs.size

    @classmethod
    def normalized(cls, weights, full_support: bool = True) -> "Categorical":
        w = np.asarray(weights, dtype=np.float64)
        return cls(w / w.sum(), full_support)


def uniform_categorical(m: int) -> Categorical:
    return Categorical(np.full(m, 1.0 / m))


def zipf_categorical(s: float, n_atoms: int) -> Categorical:
    """Zipf law p(i) proportional to (i + 1)^-s over a finite support."""
    return Categorical.normalized(np.arange(1, n_atoms + 1, dtype=np.float64) ** -s)


def categorical_sample_logprob(cat: Categorical, n: int, rng: np.random.Generator):
    """Inverse-CDF sampling. Returns ``(indices, log_probs)``."""
    idx = inverse_cdf_sample(np.cumsum(cat.probs), n, rng)
    with np.errstate(divide="ignore"):
        return idx, np.log(cat.probs[idx])


def inverse_cdf_sample(cdf: np.ndarray, size, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(size) * cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, cdf.size - 1)


def mix_adversarial(q: Categorical, p: Categorical, N: int) -> Categorical:
    """The 1/N mixture (1 - 1/N) q + (1/N) p, which satisfies KL(p || mix) <= ln N."""
    if q.size != p.size:
        raise UsageError("p and q must share a support")
    if N < 2:
        raise UsageError("N must be at least 2")
    return Categorical((1.0 - 1.0 / N) * q.probs + p.probs / N, full_support=False)


# ---------------------------------------------------------------------------
# Tail-flattening adversary
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TailAdversary:
    """p with everything past its k N^2 most probable atoms flattened.

    ``head`` holds p's top k N^2 probabilities in non-increasing order and
    ``order`` the matching atom indices of p; the k N^2 synthetic tail atoms
    each carry ``tail_mass / (k N^2)``.
    """

    head: np.ndarray
    order: np.ndarray
    tail_mass: float
    k: int
    N: int

    @property
    def head_size(self) -> int:
        return self.k * self.N**2

    @property
    def support_size(self) -> int:
        return 2 * self.head_size

    @property
    def tail_prob(self) -> float:
        return self.tail_mass / self.head_size

    def probs(self) -> np.ndarray:
        return np.concatenate([self.head, np.full(self.head_size, self.tail_prob)])

    def to_categorical(self) -> Categorical:
        return Categorical(self.probs(), full_support=False)


@dataclass(frozen=True)
class VacuousTheorem:
    """Marker: p's support is smaller than 2 k N^2, so H(p) < ln 2kN^2 already."""

    support_size: int
    entropy: float
    ceiling: float


def truncate_tail_adversary(p: Categorical, k: int, N: int):
    """Build the flattened-tail distribution, or a :class:`VacuousTheorem`."""
    if k < 2 or N < 50:
        raise UsageError("requires k >= 2 and N >= 50")
    head_size = k * N * N
    ceiling = math.log(2 * head_size)
    if p.size < 2 * head_size:
        nz = p.probs[p.probs > 0]
        return VacuousTheorem(p.size, float(-(nz * np.log(nz)).sum()), ceiling)
    order = np.argsort(-p.probs, kind="stable")
    head_idx = order[:head_size]
    head = p.probs[head_idx]
    tail_mass = float(p.probs[order[head_size:]].sum())
    return TailAdversary(head, head_idx, tail_mass, k, N)


# ---------------------------------------------------------------------------
# Diagonal density models
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DensityModel:
    """Factorised Gaussian or logistic density over R^d.

    Unconditional: location ``loc``. Conditional: location ``slope * y + loc``
    (coordinate-wise affine in the matched y coordinate). ``log_scale`` has
    length d, or length 1 when the scale is tied across dimensions.
    """

    family: str
    loc: np.ndarray
    log_scale: np.ndarray
    slope: np.ndarray | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise UsageError(f"unknown family {self.family!r}")
        if self.log_scale.size not in (1, self.loc.size):
            raise UsageError("log_scale must have length 1 (tied) or d")
        if self.slope is not None and self.slope.shape != self.loc.shape:
            raise UsageError("slope must match loc")

    @property
    def conditional(self) -> bool:
        return self.slope is not None

    @property
    def d(self) -> int:
        return self.loc.size

    def params(self) -> list[np.ndarray]:
        out = [self.loc, self.log_scale]
        return out + [self.slope] if self.conditional else out

    def with_params(self, params) -> "DensityModel":
        slope = params[2] if self.conditional else None
        return replace(self, loc=params[0], log_scale=params[1], slope=slope)


def init_density_model(family: str, d: int, conditional: bool = False,
                       tied_scale: bool = False) -> DensityModel:
    """Location 0, unit scale, zero slope: the standard-density starting point."""
    return DensityModel(
        family,
        np.zeros(d),
        np.zeros(1 if tied_scale else d),
        np.zeros(d) if conditional else None,
    )


def _standardize(model: DensityModel, x, y):
    x = np.asarray(x, dtype=np.float64)
    if model.conditional:
        if y is None:
            raise UsageError("conditional model needs y")
        mu = model.slope * np.asarray(y, dtype=np.float64) + model.loc
    else:
        mu = model.loc
    scale = np.exp(model.log_scale)
    return x, (x - mu) / scale


def _log_density_terms(model: DensityModel, z: np.ndarray) -> np.ndarray:
    ls = np.broadcast_to(model.log_scale, z.shape[-1:])
    if model.family == "gaussian_diag":
        return -0.5 * z * z - ls - _HALF_LOG_2PI
    # logistic: -z - 2 ln(1 + e^-z) - ln s, written symmetrically in |z|
    a = np.abs(z)
    return -a - 2.0 * np.log1p(np.exp(-a)) - ls


def model_log_density(model: DensityModel, x, y=None):
    """Log-density summed over dimensions; float for one point, array for rows."""
    _, z = _standardize(model, x, y)
    out = _log_density_terms(model, z).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def model_log_density_grads(model: DensityModel, x, y=None, weights=None) -> list[np.ndarray]:
    """Gradient of ``sum_i weights[i] * log q(x_i | y_i)`` in params() order."""
    x2 = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y2 = None if y is None else np.atleast_2d(np.asarray(y, dtype=np.float64))
    _, z = _standardize(model, x2, y2)
    w = np.ones(x2.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    scale = np.exp(model.log_scale)
    if model.family == "gaussian_diag":
        dz = -z  # d logp / dz
    else:
        dz = -np.tanh(0.5 * z)
    wdz = w[:, None] * dz
    g_loc = -(wdz / scale).sum(axis=0)
    g_ls = (wdz * (-z)).sum(axis=0) - w.sum()
    if model.log_scale.size == 1:
        g_ls = np.array([g_ls.sum()])
    grads = [g_loc, g_ls]
    if model.conditional:
        grads.append(-(wdz / scale * y2).sum(axis=0))
    return grads
