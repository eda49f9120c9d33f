"""Dense numeric kernel: stable reductions, a small MLP critic, Adam, and a
central-difference gradient oracle.

Everything here is float64 and side-effect free: functions take their inputs
explicitly and return new arrays/states rather than mutating arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import NumericError, UsageError

ACTIVATIONS = ("relu", "tanh")


def logsumexp(values) -> float:
    """ln sum(exp(values)), shifted by the max so it never overflows."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise UsageError("logsumexp of an empty list")
    m = float(v.max())
    if not math.isfinite(m):
        return m
    return m + math.log(float(np.exp(v - m).sum()))


def logsumexp_rows(a: np.ndarray) -> np.ndarray:
    """Row-wise logsumexp of a 2-D array."""
    m = a.max(axis=1)
    return m + np.log(np.exp(a - m[:, None]).sum(axis=1))


def softmax_rows(a: np.ndarray) -> np.ndarray:
    e = np.exp(a - a.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(z):
    z = np.asarray(z, dtype=np.float64)
    return np.logaddexp(0.0, z)


# ---------------------------------------------------------------------------
# Critic
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Critic:
    """Fully connected network mapping an input row to one scalar score.

    ``weights[l]`` has shape ``(fan_in, fan_out)``; hidden layers use
    ``activation`` and the output layer is linear. If ``output_clip`` is set
    to ``(lo, hi)`` the output is hard-clamped to that interval.
    """

    weights: tuple
    biases: tuple
    activation: str = "relu"
    output_clip: tuple[float, float] | None = None

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise UsageError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise UsageError("critic needs one bias per weight matrix")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise UsageError(f"layer {l}: weight/bias shapes disagree")
            if l and w.shape[0] != self.weights[l - 1].shape[1]:
                raise UsageError(f"layer {l}: input dim does not match previous layer")
        if self.weights[-1].shape[1] != 1:
            raise UsageError("final layer must have one output")
        if self.output_clip is not None and not self.output_clip[0] <= self.output_clip[1]:
            raise UsageError("output_clip must be an interval lo <= hi")

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_params(self, params: Sequence[np.ndarray]) -> "Critic":
        return replace(self, weights=tuple(params[0::2]), biases=tuple(params[1::2]))


def init_critic(
    layer_dims: Sequence[int],
    rng: np.random.Generator,
    activation: str = "relu",
    output_clip: tuple[float, float] | None = None,
) -> Critic:
    """Glorot-uniform weights, zero biases, drawn from ``rng``."""
    if len(layer_dims) < 2 or layer_dims[-1] != 1:
        raise UsageError("layer_dims must run input -> ... -> 1")
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Critic(tuple(weights), tuple(biases), activation, output_clip)


def _act(z, name):
    return np.maximum(z, 0.0) if name == "relu" else np.tanh(z)


def _act_grad(z, a, name):
    return (z > 0.0).astype(np.float64) if name == "relu" else 1.0 - a * a


def _check_inputs(critic: Critic, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != critic.layer_dims[0]:
        raise UsageError(
            f"inputs must have shape (rows, {critic.layer_dims[0]}), got {x.shape}"
        )
    return x


def _forward(critic: Critic, x: np.ndarray):
    pre, post = [], [x]
    h = x
    last = len(critic.weights) - 1
    for l, (w, b) in enumerate(zip(critic.weights, critic.biases)):
        z = h @ w + b
        pre.append(z)
        h = z if l == last else _act(z, critic.activation)
        post.append(h)
    return pre, post


def _clip(critic: Critic, raw: np.ndarray) -> np.ndarray:
    if critic.output_clip is None:
        return raw
    lo, hi = critic.output_clip
    return np.clip(raw, lo, hi)


def _clip_mask(critic: Critic, raw: np.ndarray) -> np.ndarray | None:
    if critic.output_clip is None:
        return None
    lo, hi = critic.output_clip
    return ((raw >= lo) & (raw <= hi)).astype(np.float64)


def mlp_forward(critic: Critic, inputs) -> np.ndarray:
    """One score per input row."""
    x = _check_inputs(critic, inputs)
    _, post = _forward(critic, x)
    return _clip(critic, post[-1][:, 0])


def _backprop(critic: Critic, pre, post, delta: np.ndarray, input_grad: bool = True):
    """Backpropagate ``delta`` (grad w.r.t. the output, shape (rows, 1)).

    Returns parameter grads in params() order and the grad w.r.t. the input
    (None unless ``input_grad``).
    """
    grads = [None] * (2 * len(critic.weights))
    for l in range(len(critic.weights) - 1, -1, -1):
        grads[2 * l] = post[l].T @ delta
        grads[2 * l + 1] = delta.sum(axis=0)
        if l == 0 and not input_grad:
            return grads, None
        delta = delta @ critic.weights[l].T
        if l:
            delta = delta * _act_grad(pre[l - 1], post[l], critic.activation)
    return grads, delta


def mlp_backward(critic: Critic, inputs, output_grads) -> list[np.ndarray]:
    """Gradients of ``sum_i output_grads[i] * f(inputs[i])``.

    Returned in ``critic.params()`` order: ``[W0, b0, W1, b1, ...]``. Rows
    whose output was clamped contribute nothing.
    """
    scores, backward = mlp_vjp(critic, inputs)
    return backward(output_grads)


def mlp_vjp(critic: Critic, inputs):
    """Scores plus a function mapping output grads to parameter grads.

    Shares one forward pass between evaluation and backpropagation.
    """
    x = _check_inputs(critic, inputs)
    pre, post = _forward(critic, x)
    raw = post[-1][:, 0]
    mask = _clip_mask(critic, raw)

    def backward(output_grads) -> list[np.ndarray]:
        g = np.asarray(output_grads, dtype=np.float64)
        if g.shape != (x.shape[0],):
            raise UsageError(f"output_grads must have length {x.shape[0]}")
        if mask is not None:
            g = g * mask
        return _backprop(critic, pre, post, g[:, None], input_grad=False)[0]

    return _clip(critic, raw), backward


# ---------------------------------------------------------------------------
# Pairwise evaluation: S[i, j] = f([x_i, y_j])
# ---------------------------------------------------------------------------


def _split_first_layer(critic: Critic, x: np.ndarray, y: np.ndarray):
    dx = x.shape[1]
    if dx + y.shape[1] != critic.layer_dims[0]:
        raise UsageError("x and y widths must add up to the critic input width")
    w0, b0 = critic.weights[0], critic.biases[0]
    A = x @ w0[:dx] + b0
    B = y @ w0[dx:]
    return A, B


def pair_scores(critic: Critic, x, y) -> np.ndarray:
    """Score matrix over every (x_i, y_j) combination of two batches."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    raw = _pair_raw(critic, x, y)
    return _clip(critic, raw)


def _pair_raw(critic, x, y):
    A, B = _split_first_layer(critic, x, y)
    n, m = A.shape[0], B.shape[0]
    if len(critic.weights) == 1:
        return A[:, 0][:, None] + B[:, 0][None, :]
    if len(critic.weights) == 2:
        w = np.ascontiguousarray(critic.weights[1][:, 0])
        return kernels.pair_forward(
            np.ascontiguousarray(A), np.ascontiguousarray(B), w,
            float(critic.biases[1][0]), kernels.ACT_CODES[critic.activation],
        )
    z = (A[:, None, :] + B[None, :, :]).reshape(n * m, -1)
    h = _act(z, critic.activation)
    rest = Critic(critic.weights[1:], critic.biases[1:], critic.activation)
    _, post = _forward(rest, h)
    return post[-1][:, 0].reshape(n, m)


def pair_backward(critic: Critic, x, y, grad_scores) -> list[np.ndarray]:
    """Gradients of ``sum_ij grad_scores[i, j] * S[i, j]`` in params() order."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    G = np.asarray(grad_scores, dtype=np.float64)
    A, B = _split_first_layer(critic, x, y)
    n, m = A.shape[0], B.shape[0]
    if G.shape != (n, m):
        raise UsageError(f"grad_scores must have shape {(n, m)}")
    if critic.output_clip is not None:
        G = G * _clip_mask(critic, _pair_raw(critic, x, y))
    dx = x.shape[1]
    if len(critic.weights) == 1:
        dA, dB = G.sum(axis=1)[:, None], G.sum(axis=0)[:, None]
        tail = []
    elif len(critic.weights) == 2:
        G = np.ascontiguousarray(G)
        dA, dB, dw = kernels.pair_backward(
            np.ascontiguousarray(A), np.ascontiguousarray(B),
            np.ascontiguousarray(critic.weights[1][:, 0]), G,
            kernels.ACT_CODES[critic.activation],
        )
        tail = [dw[:, None], np.array([G.sum()])]
    else:
        z = (A[:, None, :] + B[None, :, :]).reshape(n * m, -1)
        h = _act(z, critic.activation)
        rest = Critic(critic.weights[1:], critic.biases[1:], critic.activation)
        pre, post = _forward(rest, h)
        tail, dh = _backprop(rest, pre, post, G.reshape(-1, 1))
        dz = (dh * _act_grad(z, h, critic.activation)).reshape(n, m, -1)
        dA, dB = dz.sum(axis=1), dz.sum(axis=0)
    dW0 = np.vstack([x.T @ dA, y.T @ dB])
    return [dW0, dA.sum(axis=0)] + tail


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdamState:
    first_moment: tuple
    second_moment: tuple
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_init(params: Sequence[np.ndarray], learning_rate: float = 1e-3, **kw) -> AdamState:
    zeros = tuple(np.zeros_like(p, dtype=np.float64) for p in params)
    return AdamState(zeros, tuple(z.copy() for z in zeros), 0, learning_rate, **kw)


def adam_step(state: AdamState, params, grads):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``."""
    if not (len(params) == len(grads) == len(state.first_moment)):
        raise UsageError("params, grads and optimizer moments differ in length")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if np.shape(p) != np.shape(g) or np.shape(g) != m.shape:
            raise UsageError(f"shape mismatch: param {np.shape(p)} vs grad {np.shape(g)}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        step = state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
        new_p.append(p - step)
        new_m.append(m)
        new_v.append(v)
    return new_p, replace(state, first_moment=tuple(new_m), second_moment=tuple(new_v), step_count=t)


# ---------------------------------------------------------------------------
# Flat parameter helpers and the finite-difference oracle
# ---------------------------------------------------------------------------


def flatten(arrays: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.ravel(a) for a in arrays]) if arrays else np.zeros(0)


def unflatten(flat: np.ndarray, like: Sequence[np.ndarray]) -> list[np.ndarray]:
    if sum(np.size(a) for a in like) != np.size(flat):
        raise UsageError("flat vector length does not match template")
    out, pos = [], 0
    for a in like:
        size = np.size(a)
        out.append(np.asarray(flat[pos:pos + size]).reshape(np.shape(a)))
        pos += size
    return out


def finite_diff_check(loss: Callable[[np.ndarray], float], params, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of ``loss`` at the flat vector ``params``."""
    if not h > 0:
        raise UsageError("step h must be positive")
    p = np.array(params, dtype=np.float64).ravel()
    grad = np.empty_like(p)
    for i in range(p.size):
        orig = p[i]
        p[i] = orig + h
        up = float(loss(p))
        p[i] = orig - h
        down = float(loss(p))
        p[i] = orig
        if not (math.isfinite(up) and math.isfinite(down)):
            raise NumericError(f"loss is not finite near coordinate {i}")
        grad[i] = (up - down) / (2.0 * h)
    return grad


def grad_close(analytic, numeric, rtol: float = 1e-4, atol: float = 1e-7) -> bool:
    """Relative agreement with an absolute floor, coordinate-wise."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return bool(np.all(np.abs(a - n) <= atol + rtol * np.maximum(np.abs(a), np.abs(n))))
