import math

import numpy as np
from django.test import SimpleTestCase

from . import ops
from .exceptions import BatchNormStatsError, ShapeError, TapeError
from .gradcheck import autodiff_gradient, grad_check
from .optim import Adam, GradientDescent
from .tensor import Tape, Tensor, backward


class Conv1dTests(SimpleTestCase):

    def test_cross_correlation_with_same_padding(self):
        out = ops.conv1d(Tensor([[1.0, 2.0, 3.0]]), Tensor([[[1.0, 0.0, -1.0]]]), Tensor([0.0]))
        np.testing.assert_allclose(out.data, [[-2.0, -2.0, 2.0]])

    def test_single_tap_kernel_is_identity(self):
        x = np.random.default_rng(0).normal(size=(1, 9))
        out = ops.conv1d(Tensor(x), Tensor([[[1.0]]]), Tensor([0.0]))
        np.testing.assert_array_equal(out.data, x)

    def test_zero_input_gives_bias(self):
        w = np.random.default_rng(1).normal(size=(2, 3, 5))
        out = ops.conv1d(Tensor(np.zeros((3, 7))), Tensor(w), Tensor([0.5, -1.5]))
        np.testing.assert_array_equal(out.data[0], np.full(7, 0.5))
        np.testing.assert_array_equal(out.data[1], np.full(7, -1.5))

    def test_channel_mismatch_names_both_shapes(self):
        with self.assertRaises(ShapeError) as ctx:
            ops.conv1d(Tensor(np.zeros((2, 5))), Tensor(np.zeros((4, 3, 3))), Tensor(np.zeros(4)))
        self.assertIn('(2, 5)', str(ctx.exception))
        self.assertIn('(4, 3, 3)', str(ctx.exception))

    def test_even_kernel_rejected(self):
        with self.assertRaises(ShapeError):
            ops.conv1d(Tensor(np.zeros((1, 5))), Tensor(np.zeros((1, 1, 4))), Tensor(np.zeros(1)))

    def test_linearity_in_input(self):
        rng = np.random.default_rng(2)
        w, b = Tensor(rng.normal(size=(3, 2, 5))), Tensor(np.zeros(3))
        x, y = rng.normal(size=(2, 11)), rng.normal(size=(2, 11))
        lhs = ops.conv1d(Tensor(2.5 * x - 0.7 * y), w, b).data
        rhs = 2.5 * ops.conv1d(Tensor(x), w, b).data - 0.7 * ops.conv1d(Tensor(y), w, b).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_batched_matches_single(self):
        rng = np.random.default_rng(3)
        w, b = Tensor(rng.normal(size=(4, 2, 3))), Tensor(rng.normal(size=4))
        xs = rng.normal(size=(3, 2, 8))
        batched = ops.conv1d(Tensor(xs), w, b).data
        for i in range(3):
            np.testing.assert_allclose(batched[i], ops.conv1d(Tensor(xs[i]), w, b).data, atol=1e-12)

    def test_gradients_in_all_arguments(self):
        rng = np.random.default_rng(4)
        x0, w0, b0 = rng.normal(size=(2, 10)), rng.normal(size=(3, 2, 5)), rng.normal(size=3)
        probe = rng.normal(size=(3, 10))
        self.assertLess(grad_check(lambda x: ops.tensor_sum(ops.conv1d(x, w0, b0) * probe), x0), 1e-5)
        self.assertLess(grad_check(lambda w: ops.tensor_sum(ops.conv1d(x0, w, b0) * probe), w0), 1e-5)
        self.assertLess(grad_check(lambda b: ops.tensor_sum(ops.conv1d(x0, w0, b) * probe), b0), 1e-5)


class ReluTests(SimpleTestCase):

    def test_values(self):
        np.testing.assert_array_equal(ops.relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])

    def test_all_negative_has_zero_gradient(self):
        x = Tensor([-3.0, -0.5, -1.0], requires_grad=True)
        with Tape() as tape:
            y = ops.tensor_sum(ops.relu(x))
        tape.backward(y)
        np.testing.assert_array_equal(y.data, 0.0)
        np.testing.assert_array_equal(x.grad, [0.0, 0.0, 0.0])

    def test_gradient_at_zero_is_zero(self):
        x = Tensor([0.0], requires_grad=True)
        with Tape() as tape:
            y = ops.tensor_sum(ops.relu(x))
        tape.backward(y)
        self.assertEqual(x.grad[0], 0.0)

    def test_relu_of_square_matches_finite_difference(self):
        g = autodiff_gradient(lambda x: ops.tensor_sum(ops.relu(x * x)), np.array([3.0]))
        self.assertAlmostEqual(g[0], 6.0, places=12)
        self.assertLess(grad_check(lambda x: ops.tensor_sum(ops.relu(x * x)), np.array([3.0])), 1e-7)


class BatchNormTests(SimpleTestCase):

    def test_identity_parameters_in_eval(self):
        x = np.array([[0.5, -1.0, 2.0]])
        stats = ops.BatchNormStats.initial(1)
        out = ops.batchnorm1d(Tensor(x), Tensor([1.0]), Tensor([0.0]), stats, 'eval')
        np.testing.assert_allclose(out.data, x, rtol=1e-5)

    def test_constant_channel_in_train_mode(self):
        x = np.full((2, 6), 4.0)
        stats = ops.BatchNormStats.initial(2)
        out = ops.batchnorm1d(Tensor(x), Tensor([2.0, 3.0]), Tensor([0.25, -1.0]), stats, 'train')
        np.testing.assert_allclose(out.data[0], np.full(6, 0.25))
        np.testing.assert_allclose(out.data[1], np.full(6, -1.0))

    def test_eval_formula(self):
        stats = ops.BatchNormStats(Tensor([1.0]), Tensor([4.0]))
        out = ops.batchnorm1d(Tensor([[2.0]]), Tensor([3.0]), Tensor([1.0]), stats, 'eval')
        self.assertAlmostEqual(out.item(), 3.0 / math.sqrt(4.0 + 1e-5) + 1.0, places=14)

    def test_eval_without_stats_rejected(self):
        with self.assertRaises(BatchNormStatsError):
            ops.batchnorm1d(Tensor([[1.0]]), Tensor([1.0]), Tensor([0.0]), ops.BatchNormStats(), 'eval')

    def test_train_updates_running_stats(self):
        stats = ops.BatchNormStats.initial(1, momentum=0.5)
        ops.batchnorm1d(Tensor([[[1.0, 3.0]]]), Tensor([1.0]), Tensor([0.0]), stats, 'train')
        self.assertAlmostEqual(stats.running_mean.data[0], 1.0)
        # 不偏變異數 2.0
        self.assertAlmostEqual(stats.running_var.data[0], 0.5 * 1.0 + 0.5 * 2.0)

    def test_train_mode_gradient(self):
        rng = np.random.default_rng(5)
        x0 = rng.normal(size=(3, 2, 6))
        probe = rng.normal(size=(3, 2, 6))
        gamma, beta = rng.normal(size=2), rng.normal(size=2)

        def f(x):
            return ops.tensor_sum(ops.batchnorm1d(x, gamma, beta, None, 'train') * probe)

        self.assertLess(grad_check(f, x0), 1e-4)


class PoolLinearTests(SimpleTestCase):

    def test_global_avg_pool(self):
        np.testing.assert_array_equal(ops.global_avg_pool(Tensor([[1.0, 2.0, 3.0]])).data, [2.0])
        np.testing.assert_array_equal(ops.global_avg_pool(Tensor([[0.0, 0.0], [4.0, 6.0]])).data, [0.0, 5.0])

    def test_pool_gradient_is_one_over_length(self):
        g = autodiff_gradient(lambda x: ops.tensor_sum(ops.global_avg_pool(x)), np.ones((1, 4)))
        np.testing.assert_array_equal(g, np.full((1, 4), 0.25))

    def test_linear(self):
        x = np.array([0.3, -2.0])
        np.testing.assert_array_equal(ops.linear(Tensor(x), Tensor(np.eye(2)), Tensor(np.zeros(2))).data, x)
        np.testing.assert_array_equal(
            ops.linear(Tensor(np.zeros(2)), Tensor(np.ones((3, 2))), Tensor([1.0, 2.0, 3.0])).data, [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(ops.linear(Tensor([3.0, 4.0]), Tensor([[1.0, 2.0]]), Tensor([1.0])).data, [12.0])

    def test_linear_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            ops.linear(Tensor([1.0, 2.0, 3.0]), Tensor(np.ones((2, 2))), Tensor(np.zeros(2)))


class SoftmaxCrossEntropyTests(SimpleTestCase):

    def test_values(self):
        self.assertAlmostEqual(ops.softmax_cross_entropy(Tensor([0.0, 0.0]), 0).item(), math.log(2.0), places=12)
        self.assertLess(ops.softmax_cross_entropy(Tensor([100.0, 0.0]), 0).item(), 1e-10)
        expected = -math.log(math.exp(2.0) / (math.exp(1.0) + math.exp(2.0)))
        self.assertAlmostEqual(ops.softmax_cross_entropy(Tensor([1.0, 2.0]), 1).item(), expected, places=12)
        self.assertAlmostEqual(expected, 0.313262, places=6)

    def test_label_out_of_range(self):
        with self.assertRaises(ValueError):
            ops.softmax_cross_entropy(Tensor([0.0, 1.0]), 2)

    def test_gradient_is_softmax_minus_onehot(self):
        z = np.array([0.2, -1.3, 2.1])
        g = autodiff_gradient(lambda t: ops.softmax_cross_entropy(t, 1), z)
        p = ops.softmax(z)
        np.testing.assert_allclose(g, p - np.array([0.0, 1.0, 0.0]), atol=1e-15)
        self.assertAlmostEqual(float(g.sum()), 0.0, delta=1e-12)
        self.assertAlmostEqual(float((g + np.array([0.0, 1.0, 0.0])).sum()), 1.0, delta=1e-12)


class BackwardTests(SimpleTestCase):

    def test_sum_of_squares(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = ops.tensor_sum(x * x)
        tape.backward(y)
        np.testing.assert_array_equal(x.grad, [2.0, 4.0])
        self.assertEqual(x.tape_id, tape.id)

    def test_repeated_backward_accumulates_and_reset(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = ops.tensor_sum(x * x)
        backward(y)
        backward(y)
        np.testing.assert_array_equal(x.grad, [4.0, 8.0])
        tape.zero_grad()
        self.assertIsNone(x.grad)
        backward(y)
        np.testing.assert_array_equal(x.grad, [2.0, 4.0])

    def test_non_scalar_root_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = x * x
        with self.assertRaises(ShapeError):
            tape.backward(y)

    def test_root_off_tape_rejected(self):
        with self.assertRaises(TapeError):
            backward(Tensor(1.0))

    def test_unused_leaf_gets_zero_gradient(self):
        x = Tensor([1.0, -2.0], requires_grad=True)
        with Tape() as tape:
            y = ops.tensor_sum(ops.relu(x * -1.0) * 0.0 + x * 0.0)
        tape.backward(y)
        np.testing.assert_array_equal(x.grad, [0.0, 0.0])

    def test_backward_is_bit_reproducible(self):
        rng = np.random.default_rng(11)
        w = rng.normal(size=(4, 1, 5))
        x0 = rng.normal(size=(1, 16))

        def run():
            x = Tensor(x0, requires_grad=True)
            with Tape() as tape:
                h = ops.relu(ops.conv1d(x, w, np.zeros(4)))
                y = ops.tensor_sum(ops.global_avg_pool(h) * np.arange(1.0, 5.0))
            tape.backward(y)
            return x.grad

        self.assertEqual(run().tobytes(), run().tobytes())


class GradCheckTests(SimpleTestCase):

    def test_sum_of_squares(self):
        self.assertLess(grad_check(lambda x: ops.tensor_sum(x * x), np.array([1.0, 2.0, 3.0])), 1e-7)

    def test_constant_function(self):
        self.assertEqual(grad_check(lambda x: ops.tensor_sum(x * 0.0) + 3.0, np.array([1.0, 2.0])), 0.0)

    def test_elementwise_composite(self):
        x0 = np.array([0.4, -1.2, 2.5, 0.9])
        f = lambda x: ops.mean(ops.power(ops.absolute(ops.diff(x)), 1.5)) + ops.tensor_sum(ops.power(x, 4.0)) / 7.0
        self.assertLess(grad_check(f, x0), 1e-6)


class OptimizerTests(SimpleTestCase):

    def test_gradient_descent_step(self):
        p = Tensor([1.0, -1.0], requires_grad=True)
        p.grad = np.array([0.5, -0.5])
        GradientDescent([p], lr=0.1).step()
        np.testing.assert_allclose(p.data, [0.95, -0.95])

    def test_adam_minimises_quadratic(self):
        p = Tensor([3.0, -2.0], requires_grad=True)
        opt = Adam([p], lr=0.1)
        for _ in range(300):
            opt.zero_grad()
            with Tape() as tape:
                loss = ops.tensor_sum(p * p)
            tape.backward(loss)
            opt.step()
        self.assertLess(float(np.abs(p.data).max()), 1e-2)

    def test_adam_zero_gradient_is_no_op(self):
        p = Tensor([0.25, 0.5], requires_grad=True)
        p.grad = np.zeros(2)
        Adam([p], lr=1.0).step()
        np.testing.assert_array_equal(p.data, [0.25, 0.5])
