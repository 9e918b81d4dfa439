import unittest
from unittest import mock

import numpy as np

from A2SNAS.exception import InvalidArgumentException
from A2SNAS.network import INNER_OPS, A2SConvBlock, ForwardContext, mixed_forward
from A2SNAS.tensor import ParameterStore, Rng, Tape, check_gradients, grad_check, verification_mode
from A2SNAS.tensor import ops

TOLERANCE = 1e-4
BN_TOLERANCE = 1e-3


class TestOpGradients(unittest.TestCase):

    def _check(self, op_name, cases, tolerance=TOLERANCE):
        for seed, (shapes, options) in enumerate(cases):
            error = grad_check(op_name, shapes, seed, **options)
            self.assertLess(error, tolerance, f"{op_name} {shapes} {options}")

    def test_conv3d(self):
        self._check('conv3d', [
            (((1, 1, 3, 3, 3), (1, 1, 3, 3, 3)), {'pad': 1}),
            (((2, 2, 3, 4, 4), (2, 2, 3, 3, 3)), {'pad': 1}),
            (((1, 2, 5, 5, 5), (1, 2, 3, 3, 3)), {'dilation': 2, 'pad': 2}),
            (((1, 1, 4, 5, 5), (2, 1, 3, 3, 3)), {'stride': (1, 2, 2), 'pad': 1}),
            (((1, 2, 4, 3, 3), (2, 2, 2, 1, 3)), {'pad': (0, 0, 1)}),
        ])

    def test_conv3d_column_blocks(self):
        cases = [(((1, 2, 4, 4, 4), (2, 2, 3, 3, 3)), {'pad': 1}),
                 (((1, 1, 5, 5, 5), (1, 1, 3, 3, 3)), {'dilation': 2, 'pad': 2, 'stride': (1, 2, 2)})]
        for budget in (1, 150, 500):
            with mock.patch.object(ops, 'COLUMN_BUDGET', budget):
                self._check('conv3d', cases)

    def test_avg_pool3d(self):
        self._check('avg_pool3d', [
            (((1, 1, 4, 2, 2),), {'kernel': (2, 1, 1)}),
            (((1, 2, 3, 2, 2),), {'kernel': (2, 1, 1)}),
            (((2, 1, 2, 5, 5),), {'kernel': (1, 2, 2)}),
            (((1, 1, 3, 3, 4),), {'kernel': (1, 2, 2)}),
            (((1, 2, 5, 3, 3),), {'kernel': (2, 2, 2)}),
        ])

    def test_upsample_nearest3d(self):
        self._check('upsample_nearest3d', [
            (((1, 1, 2, 2, 2),), {'factors': (2, 1, 1)}),
            (((1, 2, 2, 2, 2),), {'factors': (2, 1, 1), 'target_shape': (3, 2, 2)}),
            (((1, 1, 2, 2, 2),), {'factors': (1, 2, 2), 'target_shape': (2, 3, 4)}),
            (((2, 1, 3, 1, 2),), {'factors': (1, 2, 2)}),
            (((1, 1, 1, 2, 2),), {'factors': (2, 2, 2), 'target_shape': (1, 3, 3)}),
        ])

    def test_pool_then_upsample_with_odd_extents(self):
        self._check('pool_upsample', [
            (((1, 1, 3, 2, 2),), {'factors': (2, 1, 1)}),
            (((1, 2, 5, 1, 1),), {'factors': (2, 1, 1)}),
            (((1, 1, 2, 3, 3),), {'factors': (1, 2, 2)}),
            (((1, 1, 1, 5, 3),), {'factors': (1, 2, 2)}),
            (((2, 1, 3, 3, 3),), {'factors': (2, 2, 2)}),
        ])

    def test_batch_norm3d(self):
        cases = [(((2, 2, 2, 2, 2),), {}), (((1, 3, 2, 3, 2),), {}), (((3, 1, 2, 2, 2),), {}),
                 (((2, 2, 1, 3, 3),), {}), (((2, 1, 3, 2, 1),), {})]
        self._check('batch_norm3d', cases, BN_TOLERANCE)
        self._check('batch_norm3d_running', cases, BN_TOLERANCE)

    def test_classifier_head(self):
        self._check('classifier_head', [
            (((1, 1, 2, 2, 2), (2, 1)), {}),
            (((2, 3, 2, 2, 2), (4, 3)), {}),
            (((3, 2, 1, 3, 3), (2, 2)), {}),
            (((1, 4, 2, 1, 2), (3, 4)), {}),
            (((2, 2, 3, 2, 1), (5, 2)), {}),
        ])

    def test_relu(self):
        self._check('relu', [(((n, 2, 2, 2, 2),), {}) for n in range(1, 6)])

    def test_softmax_and_smoothmax(self):
        cases = [(((n,),), {}) for n in (1, 2, 3, 4, 7)]
        self._check('softmax', cases)
        self._check('smoothmax', cases)

    def test_cross_entropy(self):
        self._check('cross_entropy', [(((n, k),), {}) for n, k in ((1, 2), (3, 2), (4, 3), (2, 5), (6, 4))])

    def test_mix(self):
        self._check('mix', [
            (((2, 3), (2,)), {}),
            (((1, 1, 2, 2, 2), (3,)), {}),
            (((4,), (4,)), {}),
            (((2, 2, 1, 1, 2), (1,)), {}),
            (((3, 3), (5,)), {}),
        ])

    def test_unsupported_op(self):
        with self.assertRaises(InvalidArgumentException):
            grad_check('conv2d', ((1, 1),), 0)


class TestBlockGradients(unittest.TestCase):

    def test_mixed_block_forward(self):
        for seed, shape in enumerate([(2, 2, 3, 4, 4), (2, 2, 2, 3, 3), (3, 2, 4, 2, 3),
                                      (2, 2, 1, 5, 4), (2, 2, 3, 3, 2)]):
            rng = Rng(seed)
            with verification_mode():
                store = ParameterStore()
                block = A2SConvBlock(0, 2, store, rng.spawn('block'))
                x = store.register('x', rng.spawn('x').normal(shape))
                beta, alpha = block.arch.groups()
                beta.assign(rng.spawn('beta').normal(beta.shape))
                alpha.assign(rng.spawn('alpha').normal(alpha.shape))
                projection = rng.spawn('projection').normal(shape)

                def build_loss(tape):
                    out = mixed_forward(block, tape.watch(x), ForwardContext(tape))
                    return ops.weighted_total(out, projection)

                checked = [beta, alpha, x, store['block0.k3d1.conv.weight'], store['block0.k5d2.bn.gamma']]
                report = check_gradients(build_loss, checked)
            self.assertGreater(report.checked, 0)
            self.assertLess(report.max_rel_error, BN_TOLERANCE, f"{shape}: {report}")

    def test_mixed_block_reaches_every_candidate(self):
        rng = Rng(11)
        store = ParameterStore()
        block = A2SConvBlock(0, 2, store, rng.spawn('block'))
        beta, alpha = block.arch.groups()
        beta.assign(rng.spawn('beta').normal(beta.shape))
        alpha.assign(rng.spawn('alpha').normal(alpha.shape))
        x = store.register('x', rng.spawn('x').normal((2, 2, 4, 5, 5)))
        projection = rng.spawn('projection').normal((2, 2, 4, 5, 5))

        tape = Tape()
        loss = ops.weighted_total(mixed_forward(block, tape.watch(x), ForwardContext(tape)), projection)
        names = [beta.name, alpha.name]
        for op in INNER_OPS:
            names += [f"block0.{op.token}.conv.weight", f"block0.{op.token}.bn.gamma", f"block0.{op.token}.bn.beta"]
        grads = tape.backward(loss, [store[name] for name in names])
        for name in names:
            self.assertGreater(np.abs(grads[name].data).max(), 0.0, name)


if __name__ == '__main__':
    unittest.main()
