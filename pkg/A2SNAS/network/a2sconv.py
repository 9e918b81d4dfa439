"""
Searchable asymmetric spectral-spatial block.

A block mixes three outer branches (no pooling, spectral pooling, spatial pooling), each
running the four inner convolution candidates on the pooled volume and restoring the
original extents, into one output of the input's shape.
"""
from enum import Enum

import numpy as np

from .layers import ConvBNReLU, ForwardContext
from ..exception import InvalidArgumentException, ShapeMismatchException
from ..tensor import ParameterKind
from ..tensor import ops


class OuterOp(Enum):
    """
    Outer candidates: average pooling factors over (D, H, W), undone by nearest upsampling.
    """
    NO_POOL = ('no_pool', (1, 1, 1))
    SPECTRAL_POOL = ('spectral_pool', (2, 1, 1))
    SPATIAL_POOL = ('spatial_pool', (1, 2, 2))

    @property
    def token(self):
        return self.value[0]

    @property
    def factors(self):
        return self.value[1]

    @classmethod
    def from_token(cls, token):
        for op in cls:
            if op.token == token:
                return op
        raise KeyError(token)


class InnerOp(Enum):
    """
    Inner candidates: 3D convolutions (kernel size, dilation) with same padding.
    """
    K3D1 = ('k3d1', 3, 1)
    K3D2 = ('k3d2', 3, 2)
    K5D1 = ('k5d1', 5, 1)
    K5D2 = ('k5d2', 5, 2)

    @property
    def token(self):
        return self.value[0]

    @property
    def kernel_size(self):
        return self.value[1]

    @property
    def dilation(self):
        return self.value[2]

    @property
    def padding(self):
        return self.dilation * (self.kernel_size - 1) // 2

    @classmethod
    def from_token(cls, token):
        for op in cls:
            if op.token == token:
                return op
        raise KeyError(token)


OUTER_OPS = tuple(OuterOp)
INNER_OPS = tuple(InnerOp)


class ArchParams:
    """
    Architecture logits of one block: beta over OUTER_OPS and alpha over INNER_OPS.

    :type block_id: int
    :param block_id: index of the block in the network

    :type beta: Parameter
    :param beta: outer logits ("arch.block<i>.beta")

    :type alpha: Parameter
    :param alpha: inner logits ("arch.block<i>.alpha")
    """

    def __init__(self, block_id, beta, alpha):
        self.block_id = block_id
        self.beta = beta
        self.alpha = alpha

    @classmethod
    def register(cls, block_id, store):
        """
        Registers zero-initialized (uniform mixture) logits for a block.

        :rtype: ArchParams
        """
        beta = store.register(f"arch.block{block_id}.beta", np.zeros(len(OUTER_OPS)), kind=ParameterKind.ARCH)
        alpha = store.register(f"arch.block{block_id}.alpha", np.zeros(len(INNER_OPS)), kind=ParameterKind.ARCH)
        return cls(block_id, beta, alpha)

    def groups(self):
        return self.beta, self.alpha


class A2SConvBlock:
    """
    One searchable block with channels in == channels out.

    A supernet block owns all four inner candidates and an ArchParams group. A compact block is
    built with a fixed choice and owns only the chosen candidate, registered under the same
    names as in the supernet so weights can be copied across.

    :type block_id: int
    :param block_id: block index 0..5

    :type channels: int
    :param channels: channel count

    :type store: ParameterStore
    :param store: owning network's parameter store

    :type rng: Rng
    :param rng: parent stream for weight initialization

    :type choice: (OuterOp, InnerOp)
    :param choice: fixed branch of a compact block, None for a supernet block
    """

    def __init__(self, block_id, channels, store, rng, choice=None):
        self.block_id = block_id
        self.channels = channels
        self.choice = choice
        inner_ops = INNER_OPS if choice is None else (choice[1],)
        self.candidates = {
            op: ConvBNReLU(f"block{block_id}.{op.token}", channels, channels, store, rng,
                           kernel_size=op.kernel_size, dilation=op.dilation, pad=op.padding)
            for op in inner_ops
        }
        self.arch = ArchParams.register(block_id, store) if choice is None else None

    def __call__(self, x, ctx=None):
        if self.choice is None:
            return mixed_forward(self, x, ctx)
        return discrete_forward(self, x, self.choice, ctx)


def apply_outer(x, op):
    """
    Applies an outer candidate's pooling.

    :type x: Tensor
    :type op: OuterOp

    :rtype: (Tensor, (int, int, int))
    :returns: the pooled tensor and the original (D, H, W)
    """
    original = tuple(x.shape[2:])
    if op is OuterOp.NO_POOL:
        return x, original
    return ops.avg_pool3d(x, op.factors, ceil_mode=True), original


def restore_shape(y, op, original_dhw):
    """
    Upsamples a pooled branch back to original_dhw (replicate, then crop).
    """
    if op is OuterOp.NO_POOL:
        return y
    return ops.upsample_nearest3d(y, op.factors, original_dhw)


def candidate_conv(x, op, block, ctx=None):
    """
    Runs one inner candidate (conv -> batch norm -> relu); the output has x's shape.

    :raise: ShapeMismatchException if x's channel count differs from the block's
    :raise: InvalidArgumentException if the block does not own the candidate
    """
    ctx = ctx or ForwardContext()
    if x.ndim != 5 or x.shape[1] != block.channels:
        expected = (x.shape[0], block.channels) + tuple(x.shape[2:])
        raise ShapeMismatchException(f"block{block.block_id}.{op.token}", expected, x.shape, "channel mismatch")
    if op not in block.candidates:
        raise InvalidArgumentException(f"block{block.block_id} has no candidate {op.token}")
    return block.candidates[op](x, ctx)


def mixed_forward(block, x, ctx=None):
    """
    Softmax-weighted mixture over all 3 x 4 branches.

    output = sum_p softmax(beta)_p * restore_p(sum_c softmax(alpha)_c * candidate_c(pool_p(x))),
    accumulated in (p, c) index order.

    :type block: A2SConvBlock
    :type x: Tensor
    :type ctx: ForwardContext

    :rtype: Tensor
    """
    ctx = ctx or ForwardContext()
    outer_probs, _ = ops.softmax_smoothmax(ctx.param(block.arch.beta))
    inner_probs, _ = ops.softmax_smoothmax(ctx.param(block.arch.alpha))
    branches = []
    for outer in OUTER_OPS:
        pooled, original = apply_outer(x, outer)
        inner = ops.mix([candidate_conv(pooled, op, block, ctx) for op in INNER_OPS], inner_probs)
        branches.append(restore_shape(inner, outer, original))
    return ops.mix(branches, outer_probs)


def discrete_forward(block, x, choice, ctx=None):
    """
    Single branch pool -> candidate -> restore.

    :type choice: (OuterOp, InnerOp)
    """
    outer, inner = choice
    pooled, original = apply_outer(x, outer)
    return restore_shape(candidate_conv(pooled, inner, block, ctx), outer, original)


def derive_block(arch):
    """
    Picks the argmax outer and inner candidates of a block; ties go to the lowest index.

    :type arch: ArchParams

    :rtype: (OuterOp, InnerOp)
    """
    return OUTER_OPS[int(np.argmax(arch.beta.data))], INNER_OPS[int(np.argmax(arch.alpha.data))]
