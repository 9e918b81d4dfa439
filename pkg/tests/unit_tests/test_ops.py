import math
import unittest
from unittest import mock

import numpy as np

from A2SNAS.exception import InvalidArgumentException, ShapeMismatchException
from A2SNAS.tensor import Tensor, verification_mode
from A2SNAS.tensor import ops
from tests.util import (ref_avg_pool3d, ref_batch_norm3d, ref_classifier_head, ref_conv3d,
                        ref_upsample_nearest3d)

NUM_CASES = 50


def _random_conv_case(rng):
    while True:
        n = int(rng.integers(1, 3))
        ci = int(rng.integers(1, 4))
        co = int(rng.integers(1, 4))
        extents = tuple(int(e) for e in rng.integers(1, 7, size=3))
        kernel = tuple(int(k) for k in rng.choice([1, 2, 3], size=3))
        stride = tuple(int(s) for s in rng.integers(1, 3, size=3))
        dilation = tuple(int(d) for d in rng.integers(1, 3, size=3))
        pad = tuple(int(p) for p in rng.integers(0, 3, size=3))
        fits = all(ops.conv_output_extent(e, k, s, d, p) >= 1
                   for e, k, s, d, p in zip(extents, kernel, stride, dilation, pad))
        if fits:
            return (n, ci) + extents, (co, ci) + kernel, stride, dilation, pad


class TestForwardOracles(unittest.TestCase):

    def test_conv3d_matches_direct_loops(self):
        rng = np.random.default_rng(0)
        with verification_mode():
            for _ in range(NUM_CASES):
                x_shape, w_shape, stride, dilation, pad = _random_conv_case(rng)
                x = rng.normal(size=x_shape)
                w = rng.normal(size=w_shape)
                b = rng.normal(size=w_shape[0])
                out = ops.conv3d(Tensor(x), Tensor(w), Tensor(b), stride, dilation, pad)
                expected = ref_conv3d(x, w, b, stride, dilation, pad)
                self.assertEqual(expected.shape, out.shape)
                np.testing.assert_allclose(out.data, expected, atol=1e-5, rtol=0)

    def test_conv3d_float32_matches_direct_loops(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            x_shape, w_shape, stride, dilation, pad = _random_conv_case(rng)
            x = rng.normal(size=x_shape).astype(np.float32)
            w = rng.normal(size=w_shape).astype(np.float32)
            out = ops.conv3d(Tensor(x), Tensor(w), None, stride, dilation, pad)
            self.assertEqual(np.float32, out.dtype)
            np.testing.assert_allclose(out.data, ref_conv3d(x, w, None, stride, dilation, pad), atol=1e-4, rtol=0)

    def test_conv3d_column_blocks_match_direct_loops(self):
        rng = np.random.default_rng(4)
        with verification_mode():
            for budget in (1, 40, 10 ** 6):
                for _ in range(10):
                    x_shape, w_shape, stride, dilation, pad = _random_conv_case(rng)
                    x = rng.normal(size=x_shape)
                    w = rng.normal(size=w_shape)
                    with mock.patch.object(ops, 'COLUMN_BUDGET', budget):
                        out = ops.conv3d(Tensor(x), Tensor(w), None, stride, dilation, pad)
                    np.testing.assert_allclose(out.data, ref_conv3d(x, w, None, stride, dilation, pad), atol=1e-5,
                                               rtol=0, err_msg=f"budget {budget}")

    def test_avg_pool3d_matches_direct_loops(self):
        rng = np.random.default_rng(2)
        with verification_mode():
            for _ in range(NUM_CASES):
                shape = (int(rng.integers(1, 3)), int(rng.integers(1, 4))) + tuple(int(e) for e in
                                                                                   rng.integers(1, 7, size=3))
                kernel = tuple(int(k) for k in rng.integers(1, 4, size=3))
                x = rng.normal(size=shape)
                out = ops.avg_pool3d(Tensor(x), kernel)
                np.testing.assert_allclose(out.data, ref_avg_pool3d(x, kernel), atol=1e-5, rtol=0)

    def test_upsample_matches_direct_loops(self):
        rng = np.random.default_rng(3)
        with verification_mode():
            for _ in range(NUM_CASES):
                shape = (1, int(rng.integers(1, 4))) + tuple(int(e) for e in rng.integers(1, 7, size=3))
                factors = tuple(int(f) for f in rng.integers(1, 3, size=3))
                target = tuple(int(rng.integers(e, e * f + 1)) for e, f in zip(shape[2:], factors))
                x = rng.normal(size=shape)
                out = ops.upsample_nearest3d(Tensor(x), factors, target)
                np.testing.assert_allclose(out.data, ref_upsample_nearest3d(x, factors, target), atol=1e-5, rtol=0)

    def test_classifier_head_matches_direct_loops(self):
        rng = np.random.default_rng(4)
        with verification_mode():
            for _ in range(NUM_CASES):
                n, c, k = (int(v) for v in rng.integers(1, 5, size=3))
                shape = (n, c) + tuple(int(e) for e in rng.integers(1, 7, size=3))
                x, w, b = rng.normal(size=shape), rng.normal(size=(k, c)), rng.normal(size=k)
                out = ops.classifier_head(Tensor(x), Tensor(w), Tensor(b))
                np.testing.assert_allclose(out.data, ref_classifier_head(x, w, b), atol=1e-5, rtol=0)

    def test_batch_norm_matches_direct_loops(self):
        rng = np.random.default_rng(5)
        with verification_mode():
            for _ in range(10):
                shape = (2, 3, 2, 3, 3)
                x, gamma, beta = rng.normal(size=shape), rng.normal(size=3), rng.normal(size=3)
                out = ops.batch_norm3d(Tensor(x), Tensor(gamma), Tensor(beta))
                np.testing.assert_allclose(out.data, ref_batch_norm3d(x, gamma, beta), atol=1e-5, rtol=0)


class TestOps(unittest.TestCase):

    def test_conv3d_channel_mismatch(self):
        x = Tensor(np.zeros((1, 2, 3, 3, 3)))
        w = Tensor(np.zeros((4, 3, 3, 3, 3)))
        with self.assertRaises(ShapeMismatchException) as context:
            ops.conv3d(x, w, pad=1)
        self.assertIn('(1, 2, 3, 3, 3)', str(context.exception))
        self.assertIn('(1, 3, 3, 3, 3)', str(context.exception))

    def test_conv3d_kernel_does_not_fit(self):
        x = Tensor(np.zeros((1, 1, 2, 2, 2)))
        w = Tensor(np.zeros((1, 1, 3, 3, 3)))
        with self.assertRaises(InvalidArgumentException):
            ops.conv3d(x, w)

    def test_conv3d_invalid_stride(self):
        x = Tensor(np.zeros((1, 1, 3, 3, 3)))
        w = Tensor(np.zeros((1, 1, 1, 1, 1)))
        with self.assertRaises(InvalidArgumentException):
            ops.conv3d(x, w, stride=0)

    def test_same_padding_keeps_extents(self):
        x = Tensor(np.ones((1, 1, 5, 6, 7)))
        for kernel, dilation in ((3, 1), (3, 2), (5, 1), (5, 2)):
            w = Tensor(np.ones((2, 1, kernel, kernel, kernel)))
            out = ops.conv3d(x, w, dilation=dilation, pad=dilation * (kernel - 1) // 2)
            self.assertEqual((1, 2, 5, 6, 7), out.shape)

    def test_avg_pool_truncated_window(self):
        x = Tensor(np.arange(3, dtype=np.float64).reshape(1, 1, 3, 1, 1))
        out = ops.avg_pool3d(x, (2, 1, 1))
        np.testing.assert_allclose(out.data.reshape(-1), [0.5, 2.0])

    def test_avg_pool_floor_mode_drops_trailing_window(self):
        x = Tensor(np.arange(3, dtype=np.float64).reshape(1, 1, 3, 1, 1))
        out = ops.avg_pool3d(x, (2, 1, 1), ceil_mode=False)
        np.testing.assert_allclose(out.data.reshape(-1), [0.5])

    def test_avg_pool_rejects_overlap(self):
        with self.assertRaises(InvalidArgumentException):
            ops.avg_pool3d(Tensor(np.zeros((1, 1, 4, 4, 4))), (2, 2, 2), stride=(1, 1, 1))

    def test_upsample_rejects_target_out_of_range(self):
        x = Tensor(np.zeros((1, 1, 2, 2, 2)))
        with self.assertRaises(InvalidArgumentException):
            ops.upsample_nearest3d(x, (2, 1, 1), (5, 2, 2))
        with self.assertRaises(InvalidArgumentException):
            ops.upsample_nearest3d(x, (2, 1, 1), (1, 2, 2))

    def test_relu_subgradient_at_zero(self):
        from A2SNAS.tensor import ParameterStore, Tape
        store = ParameterStore()
        x = store.register('x', np.array([-1.0, 0.0, 2.0]))
        tape = Tape()
        loss = ops.total(ops.relu(tape.watch(x)))
        grads = tape.backward(loss)
        np.testing.assert_array_equal(grads['x'].data, [0.0, 0.0, 1.0])

    def test_softmax_smoothmax_of_zeros(self):
        probs, lse = ops.softmax_smoothmax(Tensor(np.zeros(4)))
        np.testing.assert_allclose(probs.data, [0.25] * 4, atol=1e-7)
        self.assertAlmostEqual(math.log(4), lse.item(), places=6)

    def test_smoothmax_is_shift_stable(self):
        probs, lse = ops.softmax_smoothmax(Tensor(np.array([1000.0, 1000.0]), dtype=np.float64))
        np.testing.assert_allclose(probs.data, [0.5, 0.5])
        self.assertAlmostEqual(1000.0 + math.log(2), lse.item(), places=9)

    def test_cross_entropy_value(self):
        logits = Tensor(np.array([[0.0, 0.0], [2.0, 0.0]]), dtype=np.float64)
        loss = ops.cross_entropy(logits, [0, 1])
        expected = (math.log(2) + (2.0 + math.log(1 + math.exp(-2.0)))) / 2
        self.assertAlmostEqual(expected, loss.item(), places=12)

    def test_cross_entropy_label_out_of_range(self):
        with self.assertRaises(InvalidArgumentException) as context:
            ops.cross_entropy(Tensor(np.zeros((3, 2))), [0, 1, 2])
        self.assertIn('index 2', str(context.exception))

    def test_mix_weights(self):
        a = Tensor(np.ones((2, 2)))
        b = Tensor(np.full((2, 2), 3.0))
        out = ops.mix([a, b], Tensor(np.array([0.25, 0.75])))
        np.testing.assert_allclose(out.data, np.full((2, 2), 2.5))

    def test_untracked_inputs_give_untracked_result(self):
        out = ops.relu(Tensor(np.ones(3)))
        self.assertIsNone(out.tape)
        self.assertIsNone(out.grad_id)


if __name__ == '__main__':
    unittest.main()
