import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mi_lab import numerics as nm
from mi_lab.errors import NumericError, UsageError


def small_net(activation="tanh"):
    return nm.Critic(
        weights=(np.array([[0.5, -0.3]]), np.array([[0.7], [-0.4]])),
        biases=(np.array([0.1, 0.2]), np.array([0.05])),
        activation=activation,
    )


class TestLogsumexp:
    def test_two_zeros(self):
        assert nm.logsumexp([0.0, 0.0]) == pytest.approx(math.log(2), abs=1e-15)

    def test_no_overflow(self):
        assert nm.logsumexp([1000.0, 1000.0]) == pytest.approx(1000 + math.log(2), abs=1e-12)

    def test_matches_direct_sum(self, rng):
        v = rng.uniform(-5, 5, 10)
        assert abs(nm.logsumexp(v) - math.log(sum(math.exp(x) for x in v))) < 1e-12

    def test_empty_is_usage_error(self):
        with pytest.raises(UsageError):
            nm.logsumexp([])

    @given(arrays(np.float64, st.integers(1, 30), elements=st.floats(-1e6, 1e6)))
    def test_shift_identity_and_finite(self, v):
        m = v.max()
        assert nm.logsumexp(v) == m + nm.logsumexp(v - m)
        assert math.isfinite(nm.logsumexp(v))

    def test_rows_match_scalar(self, rng):
        a = rng.normal(size=(4, 7)) * 50
        np.testing.assert_allclose(nm.logsumexp_rows(a), [nm.logsumexp(r) for r in a], rtol=1e-14)

    def test_sigmoid_extremes(self):
        np.testing.assert_allclose(nm.sigmoid(np.array([-800.0, 0.0, 800.0])), [0.0, 0.5, 1.0])


class TestMlpForward:
    def test_zero_weights_give_output_bias(self, rng):
        c = nm.init_critic([3, 5, 1], rng)
        c = c.with_params([np.zeros_like(p) for p in c.params()[:-1]] + [np.array([1.25])])
        np.testing.assert_array_equal(nm.mlp_forward(c, rng.normal(size=(6, 3))), 1.25)

    def test_hand_evaluated_tanh_net(self):
        # tanh(0.5) * 0.7 - 0.4 * tanh(-0.04) + 0.05, evaluated at 50 digits
        out = nm.mlp_forward(small_net(), np.array([[0.8]]))
        assert out[0] == pytest.approx(0.38947348220647226, abs=1e-15)

    def test_clip(self):
        c = nm.Critic((np.array([[1.0]]),), (np.array([0.0]),), output_clip=(0.0, 1.0))
        np.testing.assert_array_equal(nm.mlp_forward(c, np.array([[3.7], [0.25], [-2.0]])), [1.0, 0.25, 0.0])

    def test_dimension_mismatch(self, rng):
        with pytest.raises(UsageError):
            nm.mlp_forward(nm.init_critic([3, 4, 1], rng), np.zeros((2, 4)))

    def test_bad_layer_dims(self, rng):
        with pytest.raises(UsageError):
            nm.init_critic([3, 4, 2], rng)

    def test_glorot_range_and_zero_bias(self, rng):
        c = nm.init_critic([30, 20, 1], rng)
        assert np.abs(c.weights[0]).max() <= math.sqrt(6 / 50)
        assert all(np.all(b == 0) for b in c.biases)

    @given(st.integers(0, 2**32 - 1), st.floats(0.1, 5.0))
    def test_clip_range_property(self, seed, f_max):
        r = np.random.default_rng(seed)
        c = nm.init_critic([2, 6, 1], r, "relu", (0.0, f_max))
        c = c.with_params([p * 20 + r.normal() for p in c.params()])
        out = nm.mlp_forward(c, r.normal(size=(25, 2)) * 10)
        assert np.all((out >= 0) & (out <= f_max))


class TestMlpBackward:
    def test_zero_output_grads(self, rng):
        c = nm.init_critic([3, 4, 1], rng)
        grads = nm.mlp_backward(c, rng.normal(size=(5, 3)), np.zeros(5))
        assert all(np.all(g == 0) for g in grads)

    def test_linear_layer_closed_form(self, rng):
        c = nm.Critic((rng.normal(size=(3, 1)),), (np.array([0.2]),))
        x, g = rng.normal(size=(6, 3)), rng.normal(size=6)
        gw, gb = nm.mlp_backward(c, x, g)
        np.testing.assert_allclose(gw[:, 0], g @ x, rtol=1e-14)
        assert gb[0] == pytest.approx(g.sum(), rel=1e-14)

    @pytest.mark.parametrize("activation", ["tanh", "relu"])
    def test_three_layer_matches_finite_differences(self, rng, activation):
        c = nm.init_critic([4, 7, 5, 1], rng, activation)
        c = c.with_params([p + rng.normal(0, 0.3, p.shape) for p in c.params()])
        x, g = rng.normal(size=(9, 4)), rng.normal(size=9)
        like = c.params()
        loss = lambda flat: float(g @ nm.mlp_forward(c.with_params(nm.unflatten(flat, like)), x))
        num = nm.finite_diff_check(loss, nm.flatten(like))
        assert nm.grad_close(nm.flatten(nm.mlp_backward(c, x, g)), num, rtol=1e-5)

    def test_clamped_rows_get_no_gradient(self):
        c = nm.Critic((np.array([[2.0]]),), (np.array([0.0]),), output_clip=(0.0, 1.0))
        gw, gb = nm.mlp_backward(c, np.array([[3.0], [0.25]]), np.array([1.0, 1.0]))
        assert gw[0, 0] == 0.25 and gb[0] == 1.0

    def test_output_grad_length(self, rng):
        c = nm.init_critic([2, 3, 1], rng)
        with pytest.raises(UsageError):
            nm.mlp_backward(c, np.zeros((4, 2)), np.zeros(3))


class TestPairScores:
    @pytest.mark.parametrize("depth", [1, 2, 3])
    @pytest.mark.parametrize("activation", ["relu", "tanh"])
    def test_equals_concatenated_inputs(self, rng, depth, activation):
        c = nm.init_critic([6] + [8] * (depth - 1) + [1], rng, activation)
        c = c.with_params([p + rng.normal(0, 0.1, p.shape) for p in c.params()])
        x, y = rng.normal(size=(5, 3)), rng.normal(size=(4, 3))
        rows = np.array([np.concatenate([a, b]) for a in x for b in y])
        np.testing.assert_allclose(nm.pair_scores(c, x, y), nm.mlp_forward(c, rows).reshape(5, 4),
                                   rtol=1e-12, atol=1e-13)

    @pytest.mark.parametrize("depth", [1, 2, 3])
    def test_backward_equals_concatenated_inputs(self, rng, depth):
        c = nm.init_critic([4] + [6] * (depth - 1) + [1], rng, "tanh")
        x, y = rng.normal(size=(3, 2)), rng.normal(size=(5, 2))
        G = rng.normal(size=(3, 5))
        rows = np.array([np.concatenate([a, b]) for a in x for b in y])
        expected = nm.mlp_backward(c, rows, G.ravel())
        for a, b in zip(nm.pair_backward(c, x, y, G), expected):
            np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-13)


class TestAdam:
    def test_zero_grads(self):
        p = [np.array([1.0, -2.0])]
        s = nm.adam_init(p, 0.1)
        s = nm.adam_step(s, p, [np.array([3.0, 3.0])])[1]
        new_p, s2 = nm.adam_step(s, p, [np.zeros(2)])
        np.testing.assert_array_equal(new_p[0] - p[0] <= 0, [True, True])  # momentum keeps moving
        assert np.all(np.abs(s2.first_moment[0]) < np.abs(s.first_moment[0]))
        assert np.all(s2.second_moment[0] < s.second_moment[0])

    def test_all_zero_from_start_leaves_params(self):
        p = [np.array([1.0, -2.0])]
        new_p, s = nm.adam_step(nm.adam_init(p, 0.1), p, [np.zeros(2)])
        np.testing.assert_array_equal(new_p[0], p[0])
        assert s.step_count == 1

    def test_first_step_is_signed_lr(self):
        p = [np.array([0.0, 0.0])]
        new_p, _ = nm.adam_step(nm.adam_init(p, 0.01), p, [np.array([3.0, -0.5])])
        np.testing.assert_allclose(new_p[0], [-0.01, 0.01], rtol=1e-7)

    def test_two_steps_on_quadratic(self):
        # scalar Adam recurrence for x^2 from x = 1, lr = 0.1, evaluated at 50 digits
        p = [np.array([1.0])]
        s = nm.adam_init(p, 0.1)
        for _ in range(2):
            p, s = nm.adam_step(s, p, [2.0 * p[0]])
        assert p[0][0] == pytest.approx(0.80041222869179215, abs=1e-15)
        assert s.step_count == 2

    def test_pure(self, rng):
        p, g = [rng.normal(size=(3, 3))], [rng.normal(size=(3, 3))]
        s = nm.adam_init(p)
        a, b = nm.adam_step(s, p, g), nm.adam_step(s, p, g)
        np.testing.assert_array_equal(a[0][0], b[0][0])
        np.testing.assert_array_equal(a[1].second_moment[0], b[1].second_moment[0])
        assert s.step_count == 0

    def test_shape_mismatch(self):
        p = [np.zeros(3)]
        with pytest.raises(UsageError):
            nm.adam_step(nm.adam_init(p), p, [np.zeros(4)])


class TestFiniteDiff:
    def test_quadratic(self):
        g = nm.finite_diff_check(lambda p: float(np.sum(p**2)), np.array([1.0, 2.0]))
        np.testing.assert_allclose(g, [2.0, 4.0], atol=1e-8)

    def test_constant(self):
        np.testing.assert_array_equal(nm.finite_diff_check(lambda p: 3.0, np.ones(4)), 0.0)

    def test_non_finite_loss(self):
        with pytest.raises(NumericError):
            nm.finite_diff_check(lambda p: math.inf, np.ones(2))

    def test_bad_step(self):
        with pytest.raises(UsageError):
            nm.finite_diff_check(lambda p: 0.0, np.ones(2), h=0.0)

    def test_does_not_mutate(self):
        p = np.array([1.0, 2.0])
        nm.finite_diff_check(lambda q: float(q.sum()), p)
        np.testing.assert_array_equal(p, [1.0, 2.0])

    def test_flatten_roundtrip(self, rng):
        like = [rng.normal(size=(2, 3)), rng.normal(size=4)]
        back = nm.unflatten(nm.flatten(like), like)
        assert all(np.array_equal(a, b) for a, b in zip(like, back))
        with pytest.raises(UsageError):
            nm.unflatten(np.zeros(3), like)
