"""Fast invariant suite behind ``mi-lab selftest``.

Each check is a small, seeded computation returning True on success. Checks
are grouped by module; a failing check is reported by name.
"""

from __future__ import annotations

import math
import tempfile
from dataclasses import replace

import numpy as np

from . import distributions as dist
from . import estimators as est
from . import experiments as exp
from . import io
from . import numerics as nm
from . import oracles

CHECKS = []


def check(name):
    def register(fn):
        CHECKS.append((name, fn))
        return fn
    return register


def _rng(tag: int = 0):
    return np.random.default_rng(1234 + tag)


# numerics ------------------------------------------------------------------


@check("numerics: logsumexp equals max plus shifted logsumexp")
def _lse():
    v = _rng().uniform(-1e6, 1e6, 20)
    return nm.logsumexp(v) == v.max() + nm.logsumexp(v - v.max()) and math.isfinite(nm.logsumexp(v))


@check("numerics: adam_step is a pure function")
def _adam_pure():
    p = [_rng().normal(size=(3, 2))]
    g = [_rng(1).normal(size=(3, 2))]
    s = nm.adam_init(p, 1e-2)
    a, b = nm.adam_step(s, p, g), nm.adam_step(s, p, g)
    return np.array_equal(a[0][0], b[0][0]) and a[1].step_count == 1


@check("numerics: clipped critic output stays in [0, F_max]")
def _clip():
    c = nm.init_critic([4, 8, 1], _rng(), "tanh", (0.0, 2.0))
    c = c.with_params([10 * p + 1 for p in c.params()])
    out = nm.mlp_forward(c, _rng(1).normal(size=(50, 4)) * 5)
    return bool(np.all((out >= 0) & (out <= 2)))


@check("numerics: MLP gradients agree with finite differences")
def _mlp_grad():
    rng = _rng()
    c = nm.init_critic([3, 6, 5, 1], rng, "tanh")
    x, g = rng.normal(size=(7, 3)), rng.normal(size=7)
    loss = lambda flat: float(g @ nm.mlp_forward(c.with_params(nm.unflatten(flat, c.params())), x))
    num = nm.finite_diff_check(loss, nm.flatten(c.params()))
    return nm.grad_close(nm.flatten(nm.mlp_backward(c, x, g)), num)


# distributions -------------------------------------------------------------


@check("distributions: gaussian_mi is zero at rho 0 and monotone")
def _gmi():
    mi = [dist.gaussian_mi(dist.GaussianPairSpec(8, r)) for r in (0.0, 0.3, 0.6, 0.9)]
    return mi[0] == 0.0 and all(a < b for a, b in zip(mi, mi[1:]))


@check("distributions: samplers are deterministic given the seed")
def _det():
    spec = dist.GaussianPairSpec(5, 0.4)
    a = dist.sample_correlated_gaussian(spec, 20, _rng())
    b = dist.sample_correlated_gaussian(spec, 20, _rng())
    return np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


@check("distributions: mixture dominates p/N pointwise and KL <= ln N")
def _mix():
    rng = _rng()
    for _ in range(20):
        m, N = int(rng.integers(2, 30)), int(rng.integers(2, 500))
        p, q = dist.Categorical.normalized(rng.random(m) + 1e-3), dist.Categorical.normalized(rng.random(m) + 1e-3)
        mix = dist.mix_adversarial(q, p, N)
        if not (np.all(mix.probs >= p.probs / N * (1 - 1e-12)) and oracles.exact_kl(p, mix) <= math.log(N)):
            return False
    return True


@check("distributions: tail adversary keeps p's head and flattens the tail")
def _tail():
    p = dist.zipf_categorical(1.1, 30000)
    adv = dist.truncate_tail_adversary(p, 2, 50)
    probs = adv.probs()
    return (np.array_equal(adv.head, np.sort(p.probs)[::-1][:adv.head_size])
            and np.all(probs[adv.head_size:] == probs[-1])
            and abs(probs.sum() - 1) < 1e-12 and probs.size == 2 * 2 * 50**2)


# estimators ----------------------------------------------------------------


@check("estimators: CPC never exceeds ln N")
def _cpc():
    rng = _rng()
    S = rng.normal(size=(16, 16)) * 30
    return est.cpc_from_scores(S) <= math.log(16) + 1e-9


@check("estimators: DV is invariant to constant shifts")
def _shift():
    rng = _rng()
    a, b = rng.normal(size=40), rng.normal(size=40)
    return abs(est.dv_from_scores(a, b) - est.dv_from_scores(a + 7.3, b + 7.3)) < 1e-9


@check("estimators: population DV and NWJ with optimal critics equal exact KL")
def _pop():
    rng = _rng()
    p, q = dist.Categorical.normalized(rng.random(12) + 0.01), dist.Categorical.normalized(rng.random(12) + 0.01)
    kl = oracles.exact_kl(p, q)
    f = oracles.optimal_dv_critic(p, q)
    g = 1.0 + np.log(p.probs / q.probs)
    return (abs(est.dv_from_scores(f, f, p.probs, q.probs) - kl) < 1e-10
            and abs(est.nwj_from_scores(g, g, p.probs, q.probs) - kl) < 1e-10)


@check("estimators: every kind's gradient agrees with finite differences")
def _grads():
    rng = _rng()
    batch = est.draw_batch(dist.GaussianPairSpec(2, 0.5), 5, rng)
    for kind in est.EstimatorKind:
        st = est.init_train_state(kind, 2, rng, hidden=4, activation="tanh")
        st = st.with_params([p + rng.normal(0, 0.2, p.shape) for p in st.params()])
        obj = est.objective(st, batch)
        num = nm.finite_diff_check(est.loss_function(st, batch), nm.flatten(st.params()))
        if not nm.grad_close(nm.flatten(obj.grads), num):
            return False
    return True


# oracles -------------------------------------------------------------------


@check("oracles: MI as KL equals MI as entropy difference")
def _mi():
    rng = _rng()
    for shape in [(2, 3), (7, 5), (20, 20)]:
        j = rng.random(shape)
        j /= j.sum()
        if abs(oracles.mi_as_kl(j) - oracles.mi_as_entropy_difference(j)) > 1e-12:
            return False
    return True


@check("oracles: KL is nonnegative and zero on the diagonal")
def _kl():
    rng = _rng()
    p, q = dist.Categorical.normalized(rng.random(9) + 0.01), dist.Categorical.normalized(rng.random(9) + 0.01)
    return oracles.exact_kl(p, q) > 0 and oracles.exact_kl(p, p) == 0.0


@check("oracles: no-hit probability is at least 1/4 when phi <= 1/N")
def _outlier():
    return all(oracles.outlier_no_hit_prob(N, 1.0 / N).analytic >= 0.25 for N in (2, 3, 10, 1000))


@check("oracles: 2 ln N + 5 exceeds ln N")
def _ceil():
    return all(oracles.ceilings(N).two_ln_n_plus_5 > oracles.ceilings(N).ln_N for N in (2, 50, 128, 10**6))


# experiments / io ----------------------------------------------------------


@check("experiments: entropy adversary support and ceiling")
def _entropy_demo():
    rep = exp.run_entropy_adversary_demo(dist.zipf_categorical(1.1, 20000), 2, 50, 200, _rng())
    s = rep.statistics
    return s["support_size"] == 10000 and s["entropy_tilde"] <= rep.analytic_bounds["entropy_ceiling"]


@check("experiments: benchmark runs are reproducible")
def _repro():
    cfg = exp.BenchConfig(dist.GaussianPairSpec(3, 0.5), "mine", N=8, steps=5, seed=9, hidden=8)
    a, b = exp.run_benchmark(cfg), exp.run_benchmark(cfg)
    return np.array_equal(a.per_step_estimates, b.per_step_estimates)


@check("io: records round-trip exactly")
def _roundtrip():
    cfg = exp.BenchConfig(dist.GaussianPairSpec(3, 0.5), "doe_logistic", N=8, steps=4, seed=2)
    rec = exp.run_benchmark(cfg)
    rec = replace(rec, per_step_estimates=rec.per_step_estimates * math.pi)
    with tempfile.TemporaryDirectory() as tmp:
        io.write_records([rec], tmp)
        back = io.read_records(tmp)[0]
    return (np.array_equal(back.per_step_estimates, rec.per_step_estimates)
            and back.config == rec.config and back.final_estimate == rec.final_estimate)


def run_selftest(report=print) -> list[tuple[str, bool]]:
    results = []
    for name, fn in CHECKS:
        try:
            with np.errstate(all="ignore"):
                ok = bool(fn())
        except Exception as exc:  # a crash is a failed invariant
            ok = False
            name = f"{name} ({type(exc).__name__}: {exc})"
        results.append((name, ok))
        report(f"{'PASS' if ok else 'FAIL'}  {name}")
    return results
