"""Benchmark runs and Monte Carlo demonstrations.

The benchmark trains one estimator on correlated Gaussian pairs for a fixed
number of steps, drawing a fresh batch per step. The three demonstrations
sample the adversarial constructions directly and report event frequencies
next to their analytic bounds.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.stats import chi2_contingency

from . import distributions as dist
from . import estimators as est
from . import oracles
from .errors import NumericError, UsageError

DEFAULT_LRS = (1e-4, 5e-4, 1e-3)
DEFAULT_HIDDENS = (256,)
DEFAULT_DEPTHS = (2,)
_CHUNK_DRAWS = 2_000_000  # cap on samples held in memory at once


def derive_seed(master_seed: int, run_index: int, grid_index: int) -> int:
    """Stable 64-bit seed for one grid cell: blake2b over the three integers."""
    payload = b"".join(int(v).to_bytes(8, "little", signed=False)
                       for v in (master_seed & (2**64 - 1), run_index, grid_index))
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


# ---------------------------------------------------------------------------
# Benchmark
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchConfig:
    spec: dist.GaussianPairSpec
    kind: est.EstimatorKind
    N: int = 128
    steps: int = 3000
    seed: int = 0
    lr: float = 5e-4
    hidden: int = 256
    depth: int = 2
    activation: str = "relu"
    mine_decay: float = 0.9
    interp_alpha: float = 0.5
    tied_scale: bool = False

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", est.EstimatorKind(self.kind))
        except ValueError as exc:
            names = ", ".join(k.value for k in est.EstimatorKind)
            raise UsageError(f"unknown estimator {self.kind!r}; choose one of: {names}") from exc
        if self.steps < 1:
            raise UsageError("steps must be at least 1")
        if self.N < 2:
            raise UsageError("N must be at least 2")
        if self.lr < 0:
            raise UsageError("learning rate must be nonnegative")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["spec"] = {"d": self.spec.d, "rho": self.spec.rho}
        out["kind"] = self.kind.value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "BenchConfig":
        data = dict(data)
        data["spec"] = dist.GaussianPairSpec(**data["spec"])
        return cls(**data)

    @property
    def run_id(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.blake2b(canon, digest_size=8).hexdigest()


@dataclass(frozen=True, eq=False)
class RunRecord:
    config: BenchConfig
    per_step_estimates: np.ndarray
    flagged: np.ndarray
    final_estimate: float
    ground_truth: float
    ln_N: float
    wall_time_seconds: float

    def tail_median(self, last: int = 500) -> float:
        """Median of the last ``last`` finite estimates."""
        tail = self.per_step_estimates[-last:]
        tail = tail[np.isfinite(tail)]
        return float(np.median(tail)) if tail.size else math.nan

    @property
    def error(self) -> float:
        e = abs(self.final_estimate - self.ground_truth)
        return e if math.isfinite(e) else math.inf


def _finite_state(state: est.TrainState) -> bool:
    return all(np.all(np.isfinite(p)) for p in state.params())


def run_benchmark(config: BenchConfig) -> RunRecord:
    """Train one estimator, recording the pre-update estimate of every step.

    A step whose estimate or updated parameters are non-finite is flagged and
    discarded: training continues from the last finite parameters.
    """
    rng = np.random.default_rng(config.seed)
    state = est.init_train_state(
        config.kind, config.spec.d, rng, lr=config.lr, hidden=config.hidden,
        depth=config.depth, activation=config.activation, mine_decay=config.mine_decay,
        interp_alpha=config.interp_alpha, tied_scale=config.tied_scale,
    )
    estimates = np.empty(config.steps)
    flagged = np.zeros(config.steps, dtype=bool)
    start = time.perf_counter()
    for t in range(config.steps):
        batch = est.draw_batch(config.spec, config.N, rng)
        try:
            with np.errstate(all="ignore"):
                value, new_state = est.train_step(state, batch)
            ok = math.isfinite(value) and _finite_state(new_state)
        except (OverflowError, FloatingPointError, NumericError):
            value, ok = math.nan, False
        estimates[t] = value
        if ok:
            state = new_state
        else:
            flagged[t] = True
            state = replace(state, step=state.step + 1)
    return RunRecord(
        config=config,
        per_step_estimates=estimates,
        flagged=flagged,
        final_estimate=float(estimates[-1]),
        ground_truth=dist.gaussian_mi(config.spec),
        ln_N=math.log(config.N),
        wall_time_seconds=time.perf_counter() - start,
    )


def grid_configs(base: BenchConfig, lrs=DEFAULT_LRS, hiddens=DEFAULT_HIDDENS,
                 depths=DEFAULT_DEPTHS, master_seed: int = 0, run_index: int = 0):
    """One config per (lr, hidden, depth) cell, each with its own derived seed."""
    cells = [(lr, h, dp) for lr in lrs for h in hiddens for dp in depths]
    return [replace(base, lr=lr, hidden=h, depth=dp,
                    seed=derive_seed(master_seed, run_index, i))
            for i, (lr, h, dp) in enumerate(cells)]


def run_grid(base: BenchConfig, lrs=DEFAULT_LRS, hiddens=DEFAULT_HIDDENS,
             depths=DEFAULT_DEPTHS, master_seed: int = 0, run_index: int = 0,
             workers: int = 1) -> list[RunRecord]:
    configs = grid_configs(base, lrs, hiddens, depths, master_seed, run_index)
    if workers <= 1:
        return [run_benchmark(c) for c in configs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_benchmark, configs))


def best_run(records) -> RunRecord:
    """The run with the smallest |final - truth|; non-finite finals rank last."""
    if not records:
        raise UsageError("no records")
    return min(records, key=lambda r: r.error)


# ---------------------------------------------------------------------------
# Adversary reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdversaryReport:
    """Monte Carlo event frequencies next to their analytic counterparts.

    ``statistics`` holds auxiliary named values (exact divergences, quantiles,
    sanity-test p-values).
    """

    trials: int
    pure_frequency: float
    event_frequencies: dict = field(default_factory=dict)
    analytic_bounds: dict = field(default_factory=dict)
    statistics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trials < 1:
            raise UsageError("trials must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)


def _chunks(trials: int, per_trial: int):
    size = max(1, _CHUNK_DRAWS // max(per_trial, 1))
    for lo in range(0, trials, size):
        yield min(size, trials - lo)


def _sanity_pvalue(a, b) -> float:
    """Chi-square homogeneity p-value of two integer samples.

    Values with fewer than 10 pooled observations are merged into one
    category so expected counts stay reasonable.
    """
    a, b = np.asarray(a), np.asarray(b)
    values = np.union1d(a, b)
    table = np.array([[np.sum(a == v) for v in values], [np.sum(b == v) for v in values]])
    rare = table.sum(axis=0) < 10
    if rare.any():
        table = np.column_stack([table[:, ~rare], table[:, rare].sum(axis=1)])
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        return 1.0
    return float(chi2_contingency(table)[1])


def heavy_ratio_pair(target_kl: float = 8.0, eps: float = 1e-6):
    """p = (1 - eps (m - 1), eps, ..., eps) against q uniform over m atoms.

    KL(p || q) rises with m, peaks, then falls to 0 at m = 1/eps. m is chosen
    on the rising side so that the divergence is as close as possible to
    ``target_kl``.
    """
    if not 0.0 < eps < 0.5:
        raise UsageError("eps must lie in (0, 1/2)")

    def probs(m):
        p = np.full(m, eps)
        p[0] = 1.0 - eps * (m - 1)
        return p

    def kl_for(m):
        return oracles.exact_kl(probs(m), np.full(m, 1.0 / m))

    lo, hi = 2, int(1.0 / eps)
    while hi - lo > 2:  # ternary search for the peak of a unimodal sequence
        a, b = lo + (hi - lo) // 3, hi - (hi - lo) // 3
        if kl_for(a) < kl_for(b):
            lo = a + 1
        else:
            hi = b
    peak = max(range(lo, hi + 1), key=kl_for)
    if kl_for(peak) < target_kl:
        raise UsageError(f"eps={eps} cannot reach KL {target_kl} (max {kl_for(peak):.3f})")
    lo, hi = 2, peak
    while lo < hi:
        mid = (lo + hi) // 2
        if kl_for(mid) < target_kl:
            lo = mid + 1
        else:
            hi = mid
    best = min((m for m in (lo - 1, lo) if m >= 2), key=lambda m: abs(kl_for(m) - target_kl))
    return dist.Categorical(probs(best)), dist.uniform_categorical(best)


def run_dv_saturation(p: dist.Categorical, q: dist.Categorical, N: int, trials: int,
                      rng: np.random.Generator) -> AdversaryReport:
    """Empirical DV with the optimal critic, from N draws of each of p and q.

    The outlier event is that the q-sample misses every atom where the critic
    attains its maximum F_max.
    """
    if N < 2:
        raise UsageError("N must be at least 2")
    kl = oracles.exact_kl(p, q)
    f = oracles.optimal_dv_critic(p, q)
    f_max = float(f.max())
    top = f == f_max
    cdf_p, cdf_q = np.cumsum(p.probs), np.cumsum(q.probs)
    values = []
    unseen = 0
    for n_trials in _chunks(trials, 2 * N):
        xp = dist.inverse_cdf_sample(cdf_p, (n_trials, N), rng)
        xq = dist.inverse_cdf_sample(cdf_q, (n_trials, N), rng)
        fq = f[xq]
        m = fq.max(axis=1, keepdims=True)
        log_mean = m[:, 0] + np.log(np.mean(np.exp(fq - m), axis=1))
        values.append(f[xp].mean(axis=1) - log_mean)
        unseen += int(np.sum(~top[xq].any(axis=1)))
    dv = np.concatenate(values)
    q_top = float(q.probs[top].sum())
    qs = np.quantile(dv, [0.05, 0.25, 0.5, 0.75, 0.95])
    return AdversaryReport(
        trials=trials,
        pure_frequency=unseen / trials,
        event_frequencies={"overshoot": float(np.mean(dv > kl)), "outlier_unseen": unseen / trials},
        analytic_bounds={"outlier_unseen": oracles.outlier_no_hit_prob(N, q_top).analytic
                         if q_top < 1.0 else 0.0,
                         "ln_N": math.log(N), "F_max": f_max},
        statistics={"exact_kl": kl, "mean": float(dv.mean()),
                    **{f"q{int(100 * a):02d}": float(v) for a, v in zip((.05, .25, .5, .75, .95), qs)}},
    )


def run_kl_adversary_demo(p: dist.Categorical, q: dist.Categorical, N: int, trials: int,
                          rng: np.random.Generator) -> AdversaryReport:
    """Sample the 1/N mixture through its coin coupling and count pure sets."""
    q_mix = dist.mix_adversarial(q, p, N)
    kl = oracles.exact_kl(p, q_mix)
    cdf_p, cdf_q = np.cumsum(p.probs), np.cumsum(q.probs)
    pure = 0
    pure_atoms = np.zeros(q.size, dtype=np.int64)
    for n_trials in _chunks(trials, N):
        coins = rng.random((n_trials, N)) < 1.0 / N
        from_q = dist.inverse_cdf_sample(cdf_q, (n_trials, N), rng)
        from_p = dist.inverse_cdf_sample(cdf_p, (n_trials, N), rng)
        draws = np.where(coins, from_p, from_q)
        is_pure = ~coins.any(axis=1)
        pure += int(is_pure.sum())
        pure_atoms += np.bincount(draws[is_pure].ravel(), minlength=q.size)
    # conditional law check: pooled draws of pure sets against fresh q draws
    reference = np.bincount(dist.inverse_cdf_sample(cdf_q, int(pure_atoms.sum()), rng),
                            minlength=q.size)
    table = np.vstack([pure_atoms, reference])
    table = table[:, table.sum(axis=0) > 0]
    pvalue = float(chi2_contingency(table)[1]) if table.shape[1] > 1 and pure else 1.0
    return AdversaryReport(
        trials=trials,
        pure_frequency=pure / trials,
        event_frequencies={"pure": pure / trials},
        analytic_bounds={"pure": (1.0 - 1.0 / N) ** N, "quarter_floor": 0.25, "ln_N": math.log(N)},
        statistics={"exact_kl_mixture": kl, "kl_within_ln_N": float(kl <= math.log(N)),
                    "conditional_law_pvalue": pvalue},
    )


def _tail_repeat(samples: np.ndarray, threshold: int) -> np.ndarray:
    """Per row: does any value >= threshold occur at least twice?"""
    s = np.sort(samples, axis=1)
    dup = (s[:, 1:] == s[:, :-1]) & (s[:, 1:] >= threshold)
    return dup.any(axis=1)


def _head_distinct(samples: np.ndarray, threshold: int) -> np.ndarray:
    """Per row: number of distinct head atoms (values below threshold)."""
    s = np.sort(samples, axis=1)
    first = np.ones_like(s, dtype=bool)
    first[:, 1:] = s[:, 1:] != s[:, :-1]
    return (first & (s < threshold)).sum(axis=1)


def run_entropy_adversary_demo(p: dist.Categorical, k: int, N: int, trials: int,
                               rng: np.random.Generator):
    """Pure frequencies under p and its flattened-tail adversary.

    Atoms are indexed by rank in p's non-increasing order, so indices at or
    above k N^2 form the tail in both distributions. Returns a
    :class:`~mi_lab.distributions.VacuousTheorem` when p's support is too
    small for the construction.
    """
    adv = dist.truncate_tail_adversary(p, k, N)
    if isinstance(adv, dist.VacuousTheorem):
        return adv
    head = adv.head_size
    p_tilde = adv.probs()
    h_tilde = oracles.exact_entropy(p_tilde)
    ceiling = math.log(adv.support_size)
    cdf_tilde = np.cumsum(p_tilde)
    cdf_sorted = np.cumsum(np.sort(p.probs)[::-1])
    pure_tilde = pure_p = 0
    distinct_p, distinct_tilde = [], []
    for n_trials in _chunks(trials, 2 * N):
        s_tilde = dist.inverse_cdf_sample(cdf_tilde, (n_trials, N), rng)
        s_p = dist.inverse_cdf_sample(cdf_sorted, (n_trials, N), rng)
        pure_tilde += int(np.sum(~_tail_repeat(s_tilde, head)))
        pure_p += int(np.sum(~_tail_repeat(s_p, head)))
        distinct_tilde.append(_head_distinct(s_tilde, head))
        distinct_p.append(_head_distinct(s_p, head))
    bound = math.exp(-0.505 / k)
    return AdversaryReport(
        trials=trials,
        pure_frequency=pure_tilde / trials,
        event_frequencies={"pure_tilde": pure_tilde / trials, "pure_p": pure_p / trials},
        analytic_bounds={"pure": bound, "pure_relaxed": 1.0 - 0.505 / k,
                         "entropy_ceiling": ceiling},
        statistics={
            "support_size": float(adv.support_size),
            "entropy_tilde": h_tilde,
            "entropy_p": oracles.exact_entropy(p),
            "entropy_within_ceiling": float(h_tilde <= ceiling),
            "tail_mass": adv.tail_mass,
            "head_type_pvalue": _sanity_pvalue(np.concatenate(distinct_p),
                                               np.concatenate(distinct_tilde)),
        },
    )
