"""Tests for the tensor ops, the tape and the gradient checker."""

import numpy as np
import pytest

from errors import ConfigError, DimensionError, EvaluationError
from tensor import (
    ComputationTape, Tensor, absolute, add, add_bias, concat_cols, concat_rows, conv1d, dropout,
    gradient_check, layer_norm, matmul, mul, no_grad, relu, reshape, scale, softmax_rows, sub,
    sum_all, transpose,
)


def param(data):
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def weighted_sum(t: Tensor, w: np.ndarray) -> Tensor:
    return sum_all(mul(t, Tensor(w)))


# =============================================================================
# Forward semantics
# =============================================================================

class TestMatmul:
    def test_identity(self):
        b = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(matmul(Tensor(np.eye(2)), Tensor(b)).data, b)

    def test_annihilator(self):
        out = matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor(np.zeros((2, 2))))
        np.testing.assert_array_equal(out.data, np.zeros((2, 2)))

    def test_triple_loop_oracle(self, rng):
        a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
        expected = np.zeros((3, 2))
        for i in range(3):
            for j in range(2):
                for k in range(4):
                    expected[i, j] += a[i, k] * b[k, j]
        np.testing.assert_allclose(matmul(Tensor(a), Tensor(b)).data, expected, atol=1e-12)

    def test_batched_left_operand(self, rng):
        a, b = rng.standard_normal((5, 3, 4)), rng.standard_normal((4, 2))
        out = matmul(Tensor(a), Tensor(b))
        for i in range(5):
            np.testing.assert_allclose(out.data[i], a[i] @ b, atol=1e-12)

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


class TestSoftmax:
    def test_uniform_row(self):
        np.testing.assert_allclose(softmax_rows(Tensor([[0.0, 0.0, 0.0, 0.0]])).data, [[0.25] * 4])

    def test_large_logit_does_not_overflow(self):
        out = softmax_rows(Tensor([[1000.0, 0.0]])).data
        assert np.all(np.isfinite(out))
        assert out[0, 0] == 1.0
        assert out[0, 1] == pytest.approx(0.0, abs=1e-300)

    def test_matches_direct_formula(self):
        x = np.array([1.0, 2.0, 3.0])
        expected = np.exp(x) / np.exp(x).sum()
        np.testing.assert_allclose(softmax_rows(Tensor([x])).data[0], expected, atol=1e-12)

    def test_rows_sum_to_one(self, rng):
        for _ in range(50):
            x = rng.standard_normal((rng.integers(1, 6), rng.integers(1, 9))) * rng.uniform(0.1, 50)
            out = softmax_rows(Tensor(x)).data
            assert np.all(out >= 0)
            np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-6)


class TestLayerNorm:
    def test_constant_row_maps_to_zero(self):
        out = layer_norm(Tensor([[5.0, 5.0, 5.0]]), Tensor(np.ones(3)), Tensor(np.zeros(3)))
        np.testing.assert_array_equal(out.data, np.zeros((1, 3)))

    def test_constant_row_without_eps(self, rng):
        x, gain, bias = param([[5.0, 5.0, 5.0], [1.0, 2.0, 4.0]]), param(np.ones(3)), param(np.zeros(3))
        with ComputationTape() as tape:
            out = layer_norm(x, gain, bias, eps=0.0)
            tape.backward(weighted_sum(out, rng.standard_normal((2, 3))))
        np.testing.assert_array_equal(out.data[0], np.zeros(3))
        assert np.all(np.isfinite(out.data))
        assert all(np.all(np.isfinite(t.grad)) for t in (x, gain, bias))

    def test_symmetric_pair(self):
        out = layer_norm(Tensor([[1.0, 3.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=0.0)
        np.testing.assert_allclose(out.data, [[-1.0, 1.0]], atol=1e-12)

    def test_output_moments(self, rng):
        out = layer_norm(Tensor(rng.standard_normal((4, 8)) * 3 + 2), Tensor(np.ones(8)), Tensor(np.zeros(8))).data
        assert np.all(np.abs(out.mean(axis=-1)) < 1e-10)
        assert np.all(np.abs(out.var(axis=-1) - 1.0) < 1e-6)

    def test_negative_eps_rejected(self):
        with pytest.raises(ConfigError):
            layer_norm(Tensor([[1.0, 2.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=-1.0)


def sliding_window_conv(x, kernels):
    l_out, l_in, k = kernels.shape
    pad = (k - 1) // 2
    d = x.shape[1]
    xp = np.pad(x, ((0, 0), (pad, pad)))
    out = np.zeros((l_out, d))
    for o in range(l_out):
        for t in range(d):
            for i in range(l_in):
                for j in range(k):
                    out[o, t] += kernels[o, i, j] * xp[i, t + j]
    return out


class TestConv1d:
    def test_identity_kernel_copies_channel(self, rng):
        x = rng.standard_normal((3, 7))
        kernels = np.zeros((1, 3, 1))
        kernels[0, 2, 0] = 1.0
        np.testing.assert_array_equal(conv1d(Tensor(x), Tensor(kernels)).data, x[2:3])

    def test_zero_kernels(self, rng):
        out = conv1d(Tensor(rng.standard_normal((2, 6))), Tensor(np.zeros((3, 2, 3))))
        np.testing.assert_array_equal(out.data, np.zeros((3, 6)))

    def test_sliding_window_oracle(self, rng):
        x, kernels = rng.standard_normal((2, 6)), rng.standard_normal((3, 2, 3))
        np.testing.assert_allclose(conv1d(Tensor(x), Tensor(kernels)).data, sliding_window_conv(x, kernels), atol=1e-12)

    def test_batched_matches_per_sample(self, rng):
        x, kernels = rng.standard_normal((4, 2, 6)), rng.standard_normal((3, 2, 5))
        out = conv1d(Tensor(x), Tensor(kernels)).data
        for b in range(4):
            np.testing.assert_allclose(out[b], sliding_window_conv(x[b], kernels), atol=1e-12)

    def test_even_kernel_rejected(self):
        with pytest.raises(ConfigError):
            conv1d(Tensor(np.zeros((2, 6))), Tensor(np.zeros((1, 2, 2))))


class TestDropout:
    def test_zero_rate_is_identity(self, rng):
        x = Tensor(rng.standard_normal((3, 4)))
        np.testing.assert_array_equal(dropout(x, 0.0, True, rng).data, x.data)

    def test_eval_mode_is_identity(self, rng):
        x = Tensor(rng.standard_normal((3, 4)))
        np.testing.assert_array_equal(dropout(x, 0.9, False, None).data, x.data)

    def test_inverted_scaling_preserves_mean(self):
        out = dropout(Tensor(np.ones(100_000)), 0.5, True, np.random.default_rng(0)).data
        assert abs(out.mean() - 1.0) < 0.02
        assert set(np.unique(out)) <= {0.0, 2.0}

    @pytest.mark.parametrize("rate", [-0.1, 1.0, 1.5])
    def test_rate_out_of_range(self, rate, rng):
        with pytest.raises(ConfigError):
            dropout(Tensor(np.ones(3)), rate, True, rng)


class TestPointwise:
    def test_relu(self):
        np.testing.assert_array_equal(relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])

    def test_concat_rows_preserves_order(self, rng):
        a, b = rng.standard_normal((2, 4)), rng.standard_normal((3, 4))
        out = concat_rows([Tensor(a), Tensor(b)]).data
        assert out.shape == (5, 4)
        np.testing.assert_array_equal(out[:2], a)
        np.testing.assert_array_equal(out[2:], b)

    def test_concat_rows_width_mismatch(self):
        with pytest.raises(DimensionError):
            concat_rows([Tensor(np.zeros((2, 4))), Tensor(np.zeros((2, 3)))])

    def test_add_shape_mismatch(self):
        with pytest.raises(DimensionError):
            add(Tensor(np.zeros((2, 2))), Tensor(np.zeros((2, 3))))

    def test_transpose_and_scale(self):
        x = Tensor([[1.0, 2.0, 3.0]])
        np.testing.assert_array_equal(transpose(x).data, [[1.0], [2.0], [3.0]])
        np.testing.assert_array_equal(scale(x, -2.0).data, [[-2.0, -4.0, -6.0]])

    def test_add_gradient_is_one(self, rng):
        a, b = param(rng.standard_normal((2, 3))), param(rng.standard_normal((2, 3)))
        with ComputationTape() as tape:
            tape.backward(sum_all(add(a, b)))
        np.testing.assert_array_equal(a.grad, np.ones((2, 3)))
        assert gradient_check(lambda: sum_all(add(a, b)), [a, b]) < 1e-8


# =============================================================================
# Tape behaviour
# =============================================================================

class TestTape:
    def test_nothing_recorded_without_tape(self, rng):
        x = param(rng.standard_normal(3))
        y = relu(x)
        assert not y.requires_grad

    def test_no_grad_suspends_recording(self, rng):
        x = param(rng.standard_normal(3))
        with ComputationTape() as tape:
            with no_grad():
                relu(x)
            assert len(tape) == 0
            relu(x)
            assert len(tape) == 1

    def test_shared_input_accumulates(self, rng):
        x = param(rng.standard_normal((2, 3)))
        w = rng.standard_normal((2, 3))

        def f():
            return weighted_sum(add(mul(x, x), relu(x)), w)

        with ComputationTape() as tape:
            tape.backward(f())
        np.testing.assert_allclose(x.grad, w * (2 * x.data + (x.data > 0)), atol=1e-12)
        assert gradient_check(f, [x]) < 1e-6

    def test_backward_needs_scalar(self, rng):
        x = param(rng.standard_normal(3))
        with ComputationTape() as tape:
            y = relu(x)
            with pytest.raises(DimensionError):
                tape.backward(y)

    def test_identical_inputs_give_identical_gradients(self, rng):
        data = rng.standard_normal((3, 4))
        grads = []
        for _ in range(2):
            x = param(data)
            with ComputationTape() as tape:
                tape.backward(sum_all(softmax_rows(matmul(x, Tensor(data.T)))))
            grads.append(x.grad)
        np.testing.assert_array_equal(grads[0], grads[1])


# =============================================================================
# Gradient checks
# =============================================================================

class TestGradientCheck:
    def test_linear_function(self, rng):
        x = param(rng.standard_normal((3, 4)))
        assert gradient_check(lambda: sum_all(x), [x]) < 1e-8

    def test_softmax_weighted(self, rng):
        x = param(rng.standard_normal((2, 3)))
        v = rng.standard_normal((2, 3))
        assert gradient_check(lambda: weighted_sum(softmax_rows(x), v), [x], h=1e-5) < 1e-6

    def test_non_finite_function(self):
        x = param([1.0])
        with pytest.raises(EvaluationError):
            gradient_check(lambda: scale(sum_all(x), float("inf")), [x])

    @pytest.mark.parametrize("build", [
        lambda rng: ((param(rng.standard_normal((3, 4))), param(rng.standard_normal((4, 2)))),
                     lambda a, b: matmul(a, b)),
        lambda rng: ((param(rng.standard_normal((2, 3, 4))), param(rng.standard_normal((4, 2)))),
                     lambda a, b: matmul(a, b)),
        lambda rng: ((param(rng.standard_normal((2, 3, 4))), param(rng.standard_normal((2, 4, 5)))),
                     lambda a, b: matmul(a, b)),
        lambda rng: ((param(rng.standard_normal((3, 5))), param(rng.uniform(0.5, 1.5, 5)), param(rng.standard_normal(5))),
                     lambda x, g, b: layer_norm(x, g, b)),
        lambda rng: ((param(rng.standard_normal((2, 2, 6))), param(rng.standard_normal((3, 2, 3)))),
                     lambda x, k: conv1d(x, k)),
        lambda rng: ((param(rng.standard_normal((2, 3, 4))), param(rng.standard_normal(4))),
                     lambda x, b: add_bias(x, b)),
        lambda rng: ((param(rng.standard_normal((3, 4))), param(rng.standard_normal((2, 4)))),
                     lambda a, b: concat_rows([a, b])),
        lambda rng: ((param(rng.standard_normal((3, 4))), param(rng.standard_normal((3, 2)))),
                     lambda a, b: concat_cols([a, b])),
        lambda rng: ((param(rng.standard_normal((3, 4))), param(rng.standard_normal((3, 4)))),
                     lambda a, b: sub(absolute(a), relu(b))),
        lambda rng: ((param(rng.standard_normal((3, 4))),),
                     lambda a: transpose(reshape(a, (2, 6)))),
    ], ids=["matmul", "matmul-batched", "matmul-both-batched", "layer_norm", "conv1d", "add_bias",
            "concat_rows", "concat_cols", "abs-relu", "reshape-transpose"])
    def test_op_gradients(self, build, rng):
        params, op = build(rng)
        out_shape = op(*params).shape
        w = rng.standard_normal(out_shape)
        assert gradient_check(lambda: weighted_sum(op(*params), w), list(params)) < 1e-6

    def test_dropout_gradient_with_fixed_mask(self, rng):
        x = param(rng.standard_normal((3, 4)))
        w = rng.standard_normal((3, 4))
        assert gradient_check(
            lambda: weighted_sum(dropout(x, 0.3, True, np.random.default_rng(5)), w), [x]
        ) < 1e-6
