"""Trainable mutual-information estimators.

Variational lower bounds (DV, MINE, NWJ, NWJ trained through the
Jensen-Shannon loss, CPC/InfoNCE, and an NWJ/CPC interpolation) driven by an
MLP critic, and the difference-of-entropies estimator driven by two density
models fitted by cross-entropy.

Each estimator is exposed at two levels: ``*_from_scores`` functions work on
raw critic outputs (and accept population weights, so discrete expectations
can be evaluated exactly), and ``*_estimate`` functions evaluate a critic on
a :class:`Batch`. :func:`train_step` reports the estimate on the incoming batch
and then applies one Adam update.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from . import distributions as dist
from . import numerics as nm
from .errors import UsageError


class EstimatorKind(str, enum.Enum):
    DV = "dv"
    MINE = "mine"
    NWJ = "nwj"
    NWJ_JS = "nwj_js"
    CPC = "cpc"
    INTERP = "interp"
    DOE_GAUSSIAN = "doe_gaussian"
    DOE_LOGISTIC = "doe_logistic"

    @property
    def is_doe(self) -> bool:
        return self in (EstimatorKind.DOE_GAUSSIAN, EstimatorKind.DOE_LOGISTIC)

    @property
    def family(self) -> str:
        return {"doe_gaussian": "gaussian_diag", "doe_logistic": "logistic_diag"}[self.value]


LOWER_BOUND_KINDS = tuple(k for k in EstimatorKind if not k.is_doe)
DOE_KINDS = tuple(k for k in EstimatorKind if k.is_doe)


@dataclass(frozen=True, eq=False)
class Batch:
    """Joint pairs ``(x, y)`` and product-of-marginals pairs ``(x_marg, y_marg)``."""

    x: np.ndarray
    y: np.ndarray
    x_marg: np.ndarray
    y_marg: np.ndarray

    def __post_init__(self):
        if not (len(self.x) == len(self.y) == len(self.x_marg) == len(self.y_marg)):
            raise UsageError("joint and marginal halves must have equal counts")
        if len(self.x) == 0:
            raise UsageError("empty batch")

    @property
    def n(self) -> int:
        return len(self.x)

    def joint_rows(self) -> np.ndarray:
        return np.hstack([self.x, self.y])

    def marginal_rows(self) -> np.ndarray:
        return np.hstack([self.x_marg, self.y_marg])


def draw_batch(spec: dist.GaussianPairSpec, n: int, rng: np.random.Generator) -> Batch:
    """Fresh joint draw, plus a second joint draw with its y's permuted."""
    x, y = dist.sample_correlated_gaussian(spec, n, rng)
    xm, ym = dist.sample_correlated_gaussian(spec, n, rng)
    return Batch(x, y, xm, ym[rng.permutation(n)])


# ---------------------------------------------------------------------------
# Score-level estimates
# ---------------------------------------------------------------------------


def _mean(values, weights):
    if weights is None:
        return float(np.mean(values))
    w = np.asarray(weights, dtype=np.float64)
    return float(np.dot(w, values) / w.sum())


def _log_mean_exp(values, weights=None) -> float:
    v = np.asarray(values, dtype=np.float64)
    if weights is None:
        m = float(v.max())
        return m + math.log(float(np.mean(np.exp(v - m))))
    w = np.asarray(weights, dtype=np.float64)
    live = w > 0
    return nm.logsumexp(v[live] + np.log(w[live])) - math.log(w.sum())


def dv_from_scores(joint, marginal, joint_weights=None, marginal_weights=None) -> float:
    """E_p[f] - ln E_q[e^f], sample means unless weights are given.

    Both terms are centred on max(marginal), so a constant critic gives 0
    exactly.
    """
    m = float(np.max(marginal))
    j = np.asarray(joint, dtype=np.float64) - m
    return _mean(j, joint_weights) - _log_mean_exp(np.asarray(marginal, dtype=np.float64) - m,
                                                   marginal_weights)


def nwj_from_scores(joint, marginal, joint_weights=None, marginal_weights=None) -> float:
    """E_p[g] - E_q[e^(g - 1)]."""
    m = np.asarray(marginal, dtype=np.float64)
    return _mean(joint, joint_weights) - _mean(np.exp(m - 1.0), marginal_weights)


def cpc_from_scores(scores) -> float:
    """InfoNCE with in-batch negatives; never exceeds ln N."""
    S = np.asarray(scores, dtype=np.float64)
    n = S.shape[0]
    if S.ndim != 2 or S.shape[1] != n or n < 2:
        raise UsageError("CPC needs a square score matrix with N >= 2")
    m = S.max(axis=1)
    log_mean = m + np.log(np.mean(np.exp(S - m[:, None]), axis=1))
    return float(np.mean(np.diag(S) - log_mean))


def _check_alpha(alpha):
    if not 0.0 <= alpha <= 1.0:
        raise UsageError(f"interpolation weight must lie in [0, 1], got {alpha}")


def _interp_terms(S, marginal, alpha):
    n = S.shape[0]
    log_m = nm.logsumexp_rows(S) - math.log(n)
    log_alpha, log_rest = math.log(alpha), math.log1p(-alpha)
    log_a = np.logaddexp(log_alpha + log_m, log_rest + 1.0)
    r = np.exp(log_alpha + log_m - log_a)
    u = np.exp(log_rest + np.asarray(marginal) - log_a)
    return log_a, r, u


def interp_from_scores(scores, marginal, alpha: float) -> float:
    """Interpolation between NWJ (alpha = 0) and CPC (alpha = 1).

    Row i uses the baseline ``a_i = alpha * mean_j e^S[i, j] + (1 - alpha) * e``
    and the estimate is

        1 + mean_i(S[i, i] - ln a_i)
          - mean_i((alpha * mean_j e^S[i, j] + (1 - alpha) * e^g'_i) / a_i)

    where ``g'`` are critic scores on the product-of-marginals pairs. At the
    endpoints the exact NWJ and CPC computations are used.
    """
    _check_alpha(alpha)
    S = np.asarray(scores, dtype=np.float64)
    if alpha == 1.0:
        return cpc_from_scores(S)
    if alpha == 0.0:
        return nwj_from_scores(np.diag(S), marginal)
    log_a, r, u = _interp_terms(S, marginal, alpha)
    return float(1.0 + np.mean(np.diag(S) - log_a) - np.mean(r + u))


# ---------------------------------------------------------------------------
# Critic-level estimates
# ---------------------------------------------------------------------------


def dv_estimate(critic: nm.Critic, batch: Batch) -> float:
    return dv_from_scores(nm.mlp_forward(critic, batch.joint_rows()),
                          nm.mlp_forward(critic, batch.marginal_rows()))


def nwj_estimate(critic: nm.Critic, batch: Batch) -> float:
    return nwj_from_scores(nm.mlp_forward(critic, batch.joint_rows()),
                           nm.mlp_forward(critic, batch.marginal_rows()))


def js_plugin_estimate(critic: nm.Critic, batch: Batch) -> float:
    """NWJ evaluated on the shifted critic g + 1 of a JS-trained critic."""
    return nwj_from_scores(nm.mlp_forward(critic, batch.joint_rows()) + 1.0,
                           nm.mlp_forward(critic, batch.marginal_rows()) + 1.0)


def cpc_estimate(critic: nm.Critic, x, y) -> float:
    return cpc_from_scores(nm.pair_scores(critic, x, y))


def interp_estimate(state: "TrainState", batch: Batch) -> float:
    if state.kind is not EstimatorKind.INTERP:
        raise UsageError("interp_estimate needs an INTERP state")
    alpha = state.interp_alpha
    _check_alpha(alpha)
    if alpha == 0.0:
        return nwj_estimate(state.critic, batch)
    if alpha == 1.0:
        return cpc_estimate(state.critic, batch.x, batch.y)
    S = nm.pair_scores(state.critic, batch.x, batch.y)
    return interp_from_scores(S, nm.mlp_forward(state.critic, batch.marginal_rows()), alpha)


def js_loss_from_scores(joint, marginal) -> float:
    """Logistic (GAN discriminator) loss: joint labelled 1, marginal labelled 0."""
    return float(np.mean(nm.softplus(-np.asarray(joint))) + np.mean(nm.softplus(marginal)))


def doe_entropies(models, batch: Batch) -> tuple[float, float]:
    """Cross-entropy estimates (H_X, H_{X|Y}) on the batch's joint half."""
    marg, cond = models
    h_x = -float(np.mean(dist.model_log_density(marg, batch.x)))
    h_xy = -float(np.mean(dist.model_log_density(cond, batch.x, batch.y)))
    return h_x, h_xy


def doe_estimate(models, batch: Batch) -> float:
    h_x, h_xy = doe_entropies(models, batch)
    return h_x - h_xy


# ---------------------------------------------------------------------------
# Training state
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TrainState:
    """Parameters and optimizer state of one estimator.

    Lower-bound kinds carry ``critic`` and a one-element ``adam`` tuple; DoE
    kinds carry ``models = (q_X, q_X|Y)`` and one Adam state per model.
    ``log_ema`` is MINE's moving average of the batch mean-exponential, kept
    in log space.
    """

    kind: EstimatorKind
    adam: tuple
    critic: nm.Critic | None = None
    models: tuple | None = None
    log_ema: float | None = None
    ema_decay: float = 0.9
    interp_alpha: float = 0.5
    step: int = 0

    @property
    def ema_denominator(self) -> float | None:
        return None if self.log_ema is None else math.exp(self.log_ema)

    def params(self) -> list[np.ndarray]:
        if self.kind.is_doe:
            return self.models[0].params() + self.models[1].params()
        return self.critic.params()

    def with_params(self, params) -> "TrainState":
        if self.kind.is_doe:
            k = len(self.models[0].params())
            return replace(self, models=(self.models[0].with_params(params[:k]),
                                         self.models[1].with_params(params[k:])))
        return replace(self, critic=self.critic.with_params(params))


def critic_dims(d: int, hidden: int, depth: int) -> list[int]:
    """``depth`` counts weight layers: depth 2 is input -> hidden -> 1."""
    if depth < 1:
        raise UsageError("depth must be at least 1")
    return [2 * d] + [hidden] * (depth - 1) + [1]


def init_train_state(
    kind,
    d: int,
    rng: np.random.Generator,
    *,
    lr: float = 1e-3,
    hidden: int = 256,
    depth: int = 2,
    activation: str = "relu",
    mine_decay: float = 0.9,
    interp_alpha: float = 0.5,
    tied_scale: bool = False,
    output_clip: tuple[float, float] | None = None,
) -> TrainState:
    try:
        kind = EstimatorKind(kind)
    except ValueError as exc:
        raise UsageError(f"unknown estimator {kind!r}") from exc
    if kind is EstimatorKind.INTERP:
        _check_alpha(interp_alpha)
    if not 0.0 <= mine_decay < 1.0:
        raise UsageError("MINE decay must lie in [0, 1)")
    if kind.is_doe:
        marg = dist.init_density_model(kind.family, d, conditional=False, tied_scale=tied_scale)
        cond = dist.init_density_model(kind.family, d, conditional=True, tied_scale=tied_scale)
        return TrainState(kind, (nm.adam_init(marg.params(), lr), nm.adam_init(cond.params(), lr)),
                          models=(marg, cond))
    critic = nm.init_critic(critic_dims(d, hidden, depth), rng, activation, output_clip)
    return TrainState(kind, (nm.adam_init(critic.params(), lr),), critic=critic,
                      ema_decay=mine_decay, interp_alpha=interp_alpha)


# ---------------------------------------------------------------------------
# Objectives: (estimate, loss, gradient of loss w.r.t. params)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Objective:
    estimate: float
    loss: float
    grads: list
    log_ema: float | None = None


def _joint_marginal_pass(critic, batch):
    rows = np.vstack([batch.joint_rows(), batch.marginal_rows()])
    scores, backward = nm.mlp_vjp(critic, rows)
    return backward, scores[:batch.n], scores[batch.n:]


def _add(a, b):
    return [u + v for u, v in zip(a, b)]


def _mine_log_ema(state: TrainState, log_m: float) -> float:
    if state.log_ema is None:
        return log_m
    beta = state.ema_decay
    if beta == 0.0:
        return log_m
    return float(np.logaddexp(math.log(beta) + state.log_ema, math.log1p(-beta) + log_m))


def objective(state: TrainState, batch: Batch) -> Objective:
    """Estimate on ``batch`` and the gradient the optimizer will follow.

    For MINE the returned loss is the surrogate whose gradient replaces the
    batch mean-exponential with the updated moving average; with the moving
    average equal to the batch mean it coincides with the DV gradient.
    """
    kind = state.kind
    _check_state(state)
    n = batch.n
    if kind.is_doe:
        marg, cond = state.models
        h_x, h_xy = doe_entropies(state.models, batch)
        w = np.full(n, -1.0 / n)
        grads = (dist.model_log_density_grads(marg, batch.x, None, w)
                 + dist.model_log_density_grads(cond, batch.x, batch.y, w))
        return Objective(h_x - h_xy, h_x + h_xy, grads)

    critic = state.critic
    if kind is EstimatorKind.CPC or (kind is EstimatorKind.INTERP and state.interp_alpha == 1.0):
        S = nm.pair_scores(critic, batch.x, batch.y)
        est = cpc_from_scores(S)
        G = (nm.softmax_rows(S) - np.eye(n)) / n
        return Objective(est, -est, nm.pair_backward(critic, batch.x, batch.y, G))

    if kind is EstimatorKind.INTERP and state.interp_alpha > 0.0:
        alpha = state.interp_alpha
        S = nm.pair_scores(critic, batch.x, batch.y)
        sm, marg_backward = nm.mlp_vjp(critic, batch.marginal_rows())
        est = interp_from_scores(S, sm, alpha)
        _, r, u = _interp_terms(S, sm, alpha)
        P = nm.softmax_rows(S)
        G = (P * (r * (2.0 - r - u))[:, None] - np.eye(n)) / n
        grads = _add(nm.pair_backward(critic, batch.x, batch.y, G),
                     marg_backward(u / n))
        return Objective(est, -est, grads)

    backward, sj, sm = _joint_marginal_pass(critic, batch)
    if kind is EstimatorKind.DV:
        est = dv_from_scores(sj, sm)
        gm = np.exp(sm - nm.logsumexp(sm))
        loss, log_ema = -est, None
    elif kind is EstimatorKind.MINE:
        est = dv_from_scores(sj, sm)
        log_m = nm.logsumexp(sm) - math.log(n)
        log_ema = _mine_log_ema(state, log_m)
        gm = np.exp(sm - log_ema) / n
        loss = -float(np.mean(sj)) + math.exp(log_m - log_ema)
    elif kind is EstimatorKind.NWJ_JS:
        est = nwj_from_scores(sj + 1.0, sm + 1.0)
        loss = js_loss_from_scores(sj, sm)
        gj = -nm.sigmoid(-sj) / n
        gm = nm.sigmoid(sm) / n
        grads = backward(np.concatenate([gj, gm]))
        return Objective(est, loss, grads)
    else:  # NWJ, or INTERP at alpha = 0
        est = nwj_from_scores(sj, sm)
        gm = np.exp(sm - 1.0) / n
        loss, log_ema = -est, None
    gj = np.full(n, -1.0 / n)
    grads = backward(np.concatenate([gj, gm]))
    return Objective(est, loss, grads, log_ema)


def loss_function(state: TrainState, batch: Batch):
    """``flat_params -> loss`` for finite-difference checks of :func:`objective`.

    MINE's moving average is frozen at the value the analytic step would use.
    """
    log_ema = objective(state, batch).log_ema
    like = state.params()

    def loss(flat):
        s = state.with_params(nm.unflatten(flat, like))
        if s.kind is EstimatorKind.MINE:
            _, sj, sm = _joint_marginal_pass(s.critic, batch)
            log_m = nm.logsumexp(sm) - math.log(batch.n)
            return -float(np.mean(sj)) + math.exp(log_m - log_ema)
        return objective(s, batch).loss

    return loss


def _check_state(state: TrainState):
    if state.kind.is_doe:
        if state.models is None or len(state.adam) != 2:
            raise UsageError(f"{state.kind.value} state needs two density models and two optimizers")
    elif state.critic is None or len(state.adam) != 1:
        raise UsageError(f"{state.kind.value} state needs a critic and one optimizer")


# ---------------------------------------------------------------------------
# Training steps
# ---------------------------------------------------------------------------


def train_step(state: TrainState, batch: Batch):
    """Report the estimate on ``batch``, then apply exactly one Adam update.

    Returns ``(estimate, new_state)``; ``state`` is not modified.
    """
    obj = objective(state, batch)
    if state.kind.is_doe:
        k = len(state.models[0].params())
        params = state.params()
        p_x, a_x = nm.adam_step(state.adam[0], params[:k], obj.grads[:k])
        p_xy, a_xy = nm.adam_step(state.adam[1], params[k:], obj.grads[k:])
        new = state.with_params(p_x + p_xy)
        new = replace(new, adam=(a_x, a_xy), step=state.step + 1)
        return obj.estimate, new
    params, adam = nm.adam_step(state.adam[0], state.params(), obj.grads)
    new = replace(state.with_params(params), adam=(adam,), step=state.step + 1)
    if state.kind is EstimatorKind.MINE:
        new = replace(new, log_ema=obj.log_ema)
    return obj.estimate, new


def _require(state: TrainState, *kinds):
    if state.kind not in kinds:
        raise UsageError(f"expected a {'/'.join(k.value for k in kinds)} state, got {state.kind.value}")


def mine_train_step(state: TrainState, batch: Batch):
    _require(state, EstimatorKind.MINE)
    return train_step(state, batch)


def js_critic_step(state: TrainState, batch: Batch):
    _require(state, EstimatorKind.NWJ_JS)
    return train_step(state, batch)


def doe_train_step(state: TrainState, batch: Batch):
    _require(state, *DOE_KINDS)
    return train_step(state, batch)
