"""Tensor core: forward semantics, adjointness, and gradient correctness."""

import numpy as np
import pytest

from fregan import engine
from fregan.engine import ShapeError, Tensor


def loop_conv2d(x, w, bias=None, stride=1, padding=0, groups=1):
    """Six-nested-loop reference convolution (float64). Oracle, keep dumb."""
    x = x.astype(np.float64)
    w = w.astype(np.float64)
    n, ci, h, wd = x.shape
    co, cig, kh, kw = w.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wd + 2 * padding - kw) // stride + 1
    cog = co // groups
    y = np.zeros((n, co, oh, ow))
    for b in range(n):
        for o in range(co):
            g = o // cog
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0
                    for c in range(cig):
                        for p in range(kh):
                            for q in range(kw):
                                acc += (
                                    x[b, g * cig + c, i * stride + p, j * stride + q]
                                    * w[o, c, p, q]
                                )
                    y[b, o, i, j] = acc
    if bias is not None:
        y = y + bias.reshape(1, co, 1, 1)
    return y


def rand_t(rng, shape, requires_grad=False):
    return Tensor(rng.standard_normal(shape).astype(np.float32), requires_grad=requires_grad)


class TestConv2d:
    def test_haar_ll_kernel_single_block(self):
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]], np.float32).reshape(1, 1, 2, 2))
        w = Tensor(np.full((1, 1, 2, 2), 0.5, np.float32))
        y = engine.conv2d(x, w, stride=2)
        assert y.shape == (1, 1, 1, 1)
        assert y.item() == pytest.approx(5.0, abs=1e-7)

    def test_identity_1x1_kernel(self):
        rng = np.random.default_rng(0)
        x = rand_t(rng, (2, 3, 5, 7))
        w = Tensor(np.eye(3, dtype=np.float32).reshape(3, 3, 1, 1))
        y = engine.conv2d(x, w)
        np.testing.assert_array_equal(y.data, x.data)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(1)
        x = rand_t(rng, (2, 3, 8, 8))
        w = rand_t(rng, (4, 3, 3, 3))
        y = engine.conv2d(x, w, stride=1, padding=1)
        ref = loop_conv2d(x.data, w.data, stride=1, padding=1)
        np.testing.assert_allclose(y.data, ref, atol=1e-5)

    @pytest.mark.parametrize("stride,padding", [(1, 0), (2, 1), (2, 0)])
    def test_strided_padded_matches_oracle(self, stride, padding):
        rng = np.random.default_rng(2)
        x = rand_t(rng, (2, 4, 9, 9))
        w = rand_t(rng, (6, 4, 3, 3))
        b = rand_t(rng, (1, 6, 1, 1))
        y = engine.conv2d(x, w, bias=b, stride=stride, padding=padding)
        ref = loop_conv2d(x.data, w.data, b.data, stride=stride, padding=padding)
        np.testing.assert_allclose(y.data, ref, atol=1e-5)

    def test_grouped_matches_oracle(self):
        rng = np.random.default_rng(3)
        x = rand_t(rng, (2, 6, 6, 6))
        w = rand_t(rng, (6, 2, 2, 2))
        y = engine.conv2d(x, w, stride=2, groups=3)
        ref = loop_conv2d(x.data, w.data, stride=2, groups=3)
        np.testing.assert_allclose(y.data, ref, atol=1e-5)

    def test_linearity(self):
        rng = np.random.default_rng(4)
        x, z = rand_t(rng, (1, 2, 6, 6)), rand_t(rng, (1, 2, 6, 6))
        w = rand_t(rng, (3, 2, 3, 3))
        a, b = 0.7, -1.3
        lhs = engine.conv2d(Tensor(a * x.data + b * z.data), w, padding=1)
        rhs = a * engine.conv2d(x, w, padding=1).data + b * engine.conv2d(z, w, padding=1).data
        np.testing.assert_allclose(lhs.data, rhs, atol=1e-5)

    def test_group_mismatch_raises(self):
        x = Tensor(np.zeros((1, 3, 4, 4), np.float32))
        w = Tensor(np.zeros((4, 1, 2, 2), np.float32))
        with pytest.raises(ShapeError, match="groups"):
            engine.conv2d(x, w, groups=2)

    def test_kernel_larger_than_input_raises(self):
        x = Tensor(np.zeros((1, 1, 2, 2), np.float32))
        w = Tensor(np.zeros((1, 1, 4, 4), np.float32))
        with pytest.raises(ShapeError, match="kernel"):
            engine.conv2d(x, w)


class TestConvTranspose:
    def test_kernel_scaling(self):
        x = Tensor(np.full((1, 1, 1, 1), 2.0, np.float32))
        w = Tensor(np.full((1, 1, 2, 2), 0.5, np.float32))
        y = engine.conv2d_transpose(x, w, stride=2)
        np.testing.assert_array_equal(y.data, np.ones((1, 1, 2, 2), np.float32))

    def test_zero_input_zero_output(self):
        x = Tensor(np.zeros((2, 3, 4, 4), np.float32))
        w = Tensor(np.ones((3, 5, 3, 3), np.float32))
        y = engine.conv2d_transpose(x, w, stride=2)
        assert y.shape == (2, 5, 9, 9)
        assert not y.data.any()

    @pytest.mark.parametrize("stride,groups", [(1, 1), (2, 1), (2, 2)])
    def test_adjoint_identity(self, stride, groups):
        # <conv(x, w), y> == <x, conv_transpose(y, w)> over random triples;
        # input size chosen so the strided conv covers the input exactly
        rng = np.random.default_rng(5)
        for trial in range(50):
            ci, co, k = 4, 6, 3
            oh = int(rng.integers(2, 5))
            h = (oh - 1) * stride + k
            x = rand_t(rng, (2, ci, h, h))
            w = rand_t(rng, (co, ci // groups, k, k))
            fx = engine.conv2d(x, w, stride=stride, groups=groups)
            y = rand_t(rng, fx.shape)
            lhs = float(np.sum(fx.data.astype(np.float64) * y.data))
            bx = engine.conv2d_transpose(y, w, stride=stride, groups=groups)
            rhs = float(np.sum(x.data.astype(np.float64) * bx.data))
            assert abs(lhs - rhs) <= 1e-4 * max(abs(lhs), abs(rhs), 1e-3)


class TestElementwise:
    def test_leaky_relu_values(self):
        x = Tensor(np.array([-1.0, 0.0, 2.0], np.float32).reshape(1, 1, 1, 3))
        y = engine.leaky_relu(x, 0.2)
        np.testing.assert_allclose(y.data.ravel(), [-0.2, 0.0, 2.0], atol=1e-7)

    def test_add_zero_identity(self):
        rng = np.random.default_rng(6)
        x = rand_t(rng, (2, 2, 3, 3))
        y = engine.add(x, Tensor(np.zeros_like(x.data)))
        np.testing.assert_array_equal(y.data, x.data)

    def test_shape_mismatch_raises(self):
        a = Tensor(np.zeros((1, 1, 2, 2), np.float32))
        b = Tensor(np.zeros((1, 1, 2, 3), np.float32))
        with pytest.raises(ShapeError):
            engine.add(a, b)
        with pytest.raises(ShapeError):
            engine.sub(a, b)

    def test_tanh_gradient_finite_difference(self):
        rng = np.random.default_rng(7)
        x = rand_t(rng, (1, 2, 3, 3))
        report = engine.gradcheck(lambda t: engine.mean_all(engine.tanh(t)), [x])
        assert report.max_error < 1e-3


class TestBatchNorm:
    def _gb(self, c, gamma=1.0, beta=0.0, requires_grad=False):
        g = Tensor(np.full((1, c, 1, 1), gamma, np.float32), requires_grad=requires_grad)
        b = Tensor(np.full((1, c, 1, 1), beta, np.float32), requires_grad=requires_grad)
        return g, b

    def test_normalizes_batch_statistics(self):
        rng = np.random.default_rng(8)
        x = Tensor((rng.standard_normal((4, 3, 8, 8)) * 2.0 + 5.0).astype(np.float32))
        gamma, beta = self._gb(3)
        y = engine.batch_norm2d(x, gamma, beta)
        mean = y.data.mean(axis=(0, 2, 3))
        var = y.data.var(axis=(0, 2, 3))
        np.testing.assert_allclose(mean, 0.0, atol=1e-5)
        np.testing.assert_allclose(var, 1.0, atol=1e-3)

    def test_zero_gamma_gives_beta(self):
        rng = np.random.default_rng(9)
        x = rand_t(rng, (2, 2, 4, 4))
        gamma, beta = self._gb(2, gamma=0.0, beta=0.75)
        y = engine.batch_norm2d(x, gamma, beta)
        np.testing.assert_allclose(y.data, 0.75, atol=1e-7)

    def test_single_element_raises(self):
        x = Tensor(np.zeros((1, 3, 1, 1), np.float32))
        gamma, beta = self._gb(3)
        with pytest.raises(ShapeError, match="variance"):
            engine.batch_norm2d(x, gamma, beta)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(10)
        x = rand_t(rng, (2, 2, 3, 3))
        gamma = Tensor((1.0 + 0.1 * rng.standard_normal((1, 2, 1, 1))).astype(np.float32))
        beta = Tensor((0.1 * rng.standard_normal((1, 2, 1, 1))).astype(np.float32))

        def f(xx, gg, bb):
            return engine.mean_all(engine.tanh(engine.batch_norm2d(xx, gg, bb)))

        report = engine.gradcheck(f, [x, gamma, beta])
        assert report.max_error < 1e-3


class TestUpsample:
    def test_replicates_2x2(self):
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]], np.float32).reshape(1, 1, 2, 2))
        y = engine.upsample_nearest2(x)
        expected = np.array(
            [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]], np.float32
        ).reshape(1, 1, 4, 4)
        np.testing.assert_array_equal(y.data, expected)

    def test_constant_stays_constant(self):
        x = Tensor(np.full((2, 3, 4, 4), 0.3, np.float32))
        y = engine.upsample_nearest2(x)
        assert y.shape == (2, 3, 8, 8)
        np.testing.assert_allclose(y.data, 0.3, atol=1e-7)

    def test_gradient(self):
        rng = np.random.default_rng(11)
        x = rand_t(rng, (1, 2, 3, 3))
        report = engine.gradcheck(
            lambda t: engine.mean_all(engine.tanh(engine.upsample_nearest2(t))), [x]
        )
        assert report.max_error < 1e-3


class TestReductions:
    def test_l1_distance_to_self_is_zero(self):
        rng = np.random.default_rng(12)
        x = rand_t(rng, (2, 2, 4, 4))
        assert engine.l1_distance(x, Tensor(x.data.copy())).item() == 0.0

    def test_l1_distance_example(self):
        a = Tensor(np.array([1.0, 2.0], np.float32).reshape(1, 1, 1, 2))
        b = Tensor(np.array([2.0, 4.0], np.float32).reshape(1, 1, 1, 2))
        assert engine.l1_distance(a, b).item() == pytest.approx(1.5, abs=1e-7)

    def test_l1_shape_mismatch_raises(self):
        a = Tensor(np.zeros((1, 1, 2, 2), np.float32))
        b = Tensor(np.zeros((1, 2, 2, 2), np.float32))
        with pytest.raises(ShapeError):
            engine.l1_distance(a, b)

    def test_channel_mean(self):
        rng = np.random.default_rng(13)
        x = rand_t(rng, (2, 5, 3, 3))
        y = engine.channel_mean(x)
        assert y.shape == (2, 1, 3, 3)
        np.testing.assert_allclose(y.data, x.data.mean(axis=1, keepdims=True), atol=1e-6)

    def test_reduction_gradients(self):
        rng = np.random.default_rng(14)
        # |a - b| ~ 0.4: away from the L1 kink, small enough that float32
        # rounding of the loss value stays below tolerance
        a = Tensor((0.05 * rng.standard_normal((1, 2, 3, 3)) + 0.2).astype(np.float32))
        b = Tensor((0.05 * rng.standard_normal((1, 2, 3, 3)) - 0.2).astype(np.float32))
        report = engine.gradcheck(engine.l1_distance, [a, b])
        assert report.max_error < 1e-3
        x = rand_t(rng, (1, 2, 3, 3))
        assert engine.gradcheck(engine.mean_all, [x]).max_error < 1e-3
        cm = lambda t: engine.mean_all(engine.tanh(engine.channel_mean(t)))
        assert engine.gradcheck(cm, [x]).max_error < 1e-3

    def test_relu_mean(self):
        x = Tensor(np.array([-1.0, 0.5, 2.0, -0.5], np.float32).reshape(1, 1, 1, 4))
        assert engine.relu_mean(x).item() == pytest.approx(0.625, abs=1e-7)


class TestBackward:
    def test_sum_gives_ones(self):
        rng = np.random.default_rng(15)
        x = rand_t(rng, (2, 3, 4, 4), requires_grad=True)
        engine.backward(engine.sum_all(x))
        np.testing.assert_array_equal(x.grad, np.ones_like(x.data))

    def test_mean_of_square(self):
        rng = np.random.default_rng(16)
        x = rand_t(rng, (1, 1, 2, 4), requires_grad=True)
        engine.backward(engine.mean_all(engine.mul(x, x)))
        np.testing.assert_allclose(x.grad, 2.0 * x.data / x.data.size, atol=1e-6)

    def test_accumulates_across_calls(self):
        rng = np.random.default_rng(17)
        x = rand_t(rng, (1, 1, 2, 2), requires_grad=True)
        engine.backward(engine.sum_all(x))
        engine.backward(engine.sum_all(x))
        np.testing.assert_array_equal(x.grad, 2.0 * np.ones_like(x.data))

    def test_non_scalar_loss_raises(self):
        x = Tensor(np.zeros((1, 1, 2, 2), np.float32), requires_grad=True)
        with pytest.raises(ShapeError, match="scalar"):
            engine.backward(engine.add(x, x))

    def test_reused_input_accumulates(self):
        # x feeds two branches; grads from both must sum
        rng = np.random.default_rng(18)
        x = rand_t(rng, (1, 1, 2, 2), requires_grad=True)
        loss = engine.add(engine.mean_all(x), engine.mean_all(x))
        engine.backward(loss)
        np.testing.assert_allclose(x.grad, 2.0 / x.data.size, atol=1e-7)

    def test_composite_graph_matches_finite_differences(self):
        rng = np.random.default_rng(19)
        x = rand_t(rng, (2, 2, 4, 4))
        w = Tensor((0.3 * rng.standard_normal((3, 2, 3, 3))).astype(np.float32))
        gamma = Tensor(np.ones((1, 3, 1, 1), np.float32))
        beta = Tensor(np.zeros((1, 3, 1, 1), np.float32))

        def f(xx, ww, gg, bb):
            h = engine.conv2d(xx, ww, padding=1)
            h = engine.batch_norm2d(h, gg, bb)
            h = engine.leaky_relu(h, 0.2)
            return engine.mean_all(h)

        report = engine.gradcheck(f, [x, w, gamma, beta])
        assert report.max_error < 1e-3

    def test_frozen_parameters_get_no_grad(self):
        rng = np.random.default_rng(20)
        x = rand_t(rng, (1, 2, 4, 4), requires_grad=True)
        w = rand_t(rng, (2, 2, 3, 3), requires_grad=False)
        engine.backward(engine.mean_all(engine.conv2d(x, w, padding=1)))
        assert x.grad is not None
        assert w.grad is None


class TestDeterminism:
    def test_forward_backward_bit_identical(self):
        def run():
            rng = np.random.default_rng(21)
            x = rand_t(rng, (2, 3, 8, 8), requires_grad=True)
            w = rand_t(rng, (4, 3, 3, 3), requires_grad=True)
            y = engine.conv2d(x, w, stride=2, padding=1)
            g = Tensor(np.ones((1, 4, 1, 1), np.float32), requires_grad=True)
            b = Tensor(np.zeros((1, 4, 1, 1), np.float32), requires_grad=True)
            y = engine.batch_norm2d(y, g, b)
            loss = engine.mean_all(engine.tanh(y))
            engine.backward(loss)
            return loss.item(), x.grad.copy(), w.grad.copy()

        l1, gx1, gw1 = run()
        l2, gx2, gw2 = run()
        assert l1 == l2
        np.testing.assert_array_equal(gx1, gx2)
        np.testing.assert_array_equal(gw1, gw2)


class TestGradcheck:
    def test_sum_is_exact(self):
        # exact arithmetic case: zeros keep every partial sum representable
        x = Tensor(np.zeros((1, 1, 3, 3), np.float32))
        report = engine.gradcheck(engine.sum_all, [x])
        assert report.max_error < 1e-6

    def test_sum_random_within_general_tolerance(self):
        rng = np.random.default_rng(22)
        x = rand_t(rng, (1, 1, 3, 3))
        assert engine.gradcheck(engine.sum_all, [x]).max_error < 1e-3

    def test_l1_away_from_kink(self):
        rng = np.random.default_rng(23)
        a = Tensor((0.05 * rng.standard_normal((1, 1, 3, 3)) + 0.2).astype(np.float32))
        b = Tensor((0.05 * rng.standard_normal((1, 1, 3, 3)) - 0.2).astype(np.float32))
        assert engine.gradcheck(engine.l1_distance, [a, b]).max_error < 1e-3
