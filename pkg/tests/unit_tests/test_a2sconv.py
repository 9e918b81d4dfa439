import itertools
import unittest

import numpy as np

from A2SNAS.exception import ShapeMismatchException
from A2SNAS.network import (A2SConvBlock, INNER_OPS, OUTER_OPS, InnerOp, OuterOp, apply_outer, candidate_conv,
                            derive_block, discrete_forward, mixed_forward, restore_shape)
from A2SNAS.tensor import ParameterKind, ParameterStore, Rng, Tensor, verification_mode


def _block(channels=1, seed=0, choice=None):
    store = ParameterStore()
    return A2SConvBlock(0, channels, store, Rng(seed), choice=choice), store


class TestSearchSpace(unittest.TestCase):

    def test_candidate_sets(self):
        self.assertEqual(['no_pool', 'spectral_pool', 'spatial_pool'], [op.token for op in OUTER_OPS])
        self.assertEqual([(1, 1, 1), (2, 1, 1), (1, 2, 2)], [op.factors for op in OUTER_OPS])
        self.assertEqual([(3, 1), (3, 2), (5, 1), (5, 2)], [(op.kernel_size, op.dilation) for op in INNER_OPS])
        self.assertEqual([1, 2, 2, 4], [op.padding for op in INNER_OPS])
        self.assertIs(InnerOp.K5D2, InnerOp.from_token('k5d2'))
        with self.assertRaises(KeyError):
            OuterOp.from_token('max_pool')

    def test_block_parameters(self):
        block, store = _block(channels=2)
        names = store.names()
        for op in INNER_OPS:
            self.assertIn(f'block0.{op.token}.conv.weight', names)
        self.assertEqual((2, 2, 5, 5, 5), store['block0.k5d1.conv.weight'].shape)
        self.assertEqual(ParameterKind.ARCH, store['arch.block0.beta'].kind)
        np.testing.assert_array_equal(np.zeros(3), store['arch.block0.beta'].data)
        np.testing.assert_array_equal(np.zeros(4), store['arch.block0.alpha'].data)
        self.assertFalse(store['block0.k3d1.bn.running_mean'].trainable)

    def test_compact_block_owns_only_its_candidate(self):
        _, store = _block(channels=2, choice=(OuterOp.SPATIAL_POOL, InnerOp.K3D2))
        self.assertEqual(['block0.k3d2.bn.beta', 'block0.k3d2.bn.gamma', 'block0.k3d2.bn.running_mean',
                          'block0.k3d2.bn.running_var', 'block0.k3d2.conv.bias', 'block0.k3d2.conv.weight'],
                         store.names())


class TestShapeInvariance(unittest.TestCase):

    def test_every_branch_preserves_extents(self):
        block, _ = _block()
        for extents in itertools.product(range(1, 9), repeat=3):
            x = Tensor(np.ones((1, 1) + extents))
            for outer, inner in itertools.product(OUTER_OPS, INNER_OPS):
                self.assertEqual(x.shape, discrete_forward(block, x, (outer, inner)).shape,
                                 f"{outer.token}/{inner.token} on {extents}")

    def test_mixed_forward_preserves_extents(self):
        block, _ = _block()
        for extents in itertools.product(range(1, 9), repeat=3):
            x = Tensor(np.ones((1, 1) + extents))
            self.assertEqual(x.shape, mixed_forward(block, x).shape, f"{extents}")

    def test_pool_restore_round_trip_shapes(self):
        x = Tensor(np.ones((1, 1, 5, 7, 3)))
        for op in OUTER_OPS:
            pooled, original = apply_outer(x, op)
            expected = tuple(-(-e // f) for e, f in zip(x.shape[2:], op.factors))
            self.assertEqual(expected, pooled.shape[2:])
            self.assertEqual(x.shape, restore_shape(pooled, op, original).shape)

    def test_channel_mismatch(self):
        block, _ = _block(channels=2)
        with self.assertRaises(ShapeMismatchException):
            candidate_conv(Tensor(np.ones((1, 3, 2, 2, 2))), InnerOp.K3D1, block)


class TestMixtureIdentities(unittest.TestCase):

    def _input(self, shape=(2, 2, 3, 5, 4), seed=1):
        return Tensor(Rng(seed).normal(shape))

    def test_uniform_logits_give_branch_mean(self):
        with verification_mode():
            block, _ = _block(channels=2)
            x = self._input()
            mixed = mixed_forward(block, x)
            expected = np.zeros(x.shape)
            for outer in OUTER_OPS:
                pooled, original = apply_outer(x, outer)
                inner = np.mean([candidate_conv(pooled, op, block).data for op in INNER_OPS], axis=0)
                expected += restore_shape(Tensor(inner), outer, original).data / len(OUTER_OPS)
        np.testing.assert_allclose(mixed.data, expected, atol=1e-6, rtol=0)

    def test_one_hot_logits_give_discrete_branch(self):
        with verification_mode():
            block, _ = _block(channels=2)
            x = self._input()
            for o, c in itertools.product(range(len(OUTER_OPS)), range(len(INNER_OPS))):
                block.arch.beta.assign(np.where(np.arange(len(OUTER_OPS)) == o, 40.0, -40.0))
                block.arch.alpha.assign(np.where(np.arange(len(INNER_OPS)) == c, 40.0, -40.0))
                mixed = mixed_forward(block, x)
                discrete = discrete_forward(block, x, (OUTER_OPS[o], INNER_OPS[c]))
                np.testing.assert_allclose(mixed.data, discrete.data, atol=1e-5, rtol=0)
                self.assertEqual((OUTER_OPS[o], INNER_OPS[c]), derive_block(block.arch))

    def test_compact_block_matches_discrete_branch(self):
        choice = (OuterOp.SPECTRAL_POOL, InnerOp.K5D1)
        with verification_mode():
            block, _ = _block(channels=2, seed=3)
            compact, compact_store = _block(channels=2, seed=3, choice=choice)
            x = self._input()
            np.testing.assert_array_equal(discrete_forward(block, x, choice).data, compact(x).data)


class TestDerivation(unittest.TestCase):

    def test_invariant_under_common_shift(self):
        block, _ = _block()
        rng = Rng(4)
        for _ in range(20):
            beta = rng.normal((3,))
            alpha = rng.normal((4,))
            block.arch.beta.assign(beta)
            block.arch.alpha.assign(alpha)
            before = derive_block(block.arch)
            block.arch.beta.assign(beta + 5.0)
            block.arch.alpha.assign(alpha - 3.0)
            self.assertEqual(before, derive_block(block.arch))

    def test_ties_go_to_lowest_index(self):
        block, _ = _block()
        self.assertEqual((OuterOp.NO_POOL, InnerOp.K3D1), derive_block(block.arch))
        block.arch.beta.assign([0.0, 1.0, 1.0])
        block.arch.alpha.assign([0.0, 0.0, 2.0, 2.0])
        self.assertEqual((OuterOp.SPECTRAL_POOL, InnerOp.K5D1), derive_block(block.arch))
        self.assertEqual((OuterOp.SPECTRAL_POOL, InnerOp.K5D1), derive_block(block.arch))


if __name__ == '__main__':
    unittest.main()
