import contextlib
from enum import Enum

import numpy as np

from .tensor import Tensor
from ..exception import InvalidArgumentException, ShapeMismatchException

BN_EPSILON = 1e-5
BN_MOMENTUM = 0.1
# values gathered per column block of a convolution
COLUMN_BUDGET = 1 << 23

_F64 = np.float64

# sign masks of relu inputs, collected only inside record_relu_masks()
_relu_masks = None


class BatchNormMode(Enum):
    BATCH_STATS = 'batch_stats'
    RUNNING_STATS = 'running_stats'


@contextlib.contextmanager
def record_relu_masks():
    """
    Collects the (input > 0) mask of every relu evaluated inside the block, in call order.

    Gradient checks use this to detect finite-difference perturbations that cross a relu kink.
    """
    global _relu_masks
    previous = _relu_masks
    _relu_masks = []
    try:
        yield _relu_masks
    finally:
        _relu_masks = previous


def _tape_of(*tensors):
    for t in tensors:
        if t is not None and t.tape is not None:
            return t.tape
    return None


def _result(kind, inputs, array, backward_fn):
    tape = _tape_of(*inputs)
    if tape is None:
        return Tensor.wrap(array)
    return tape.record(kind, inputs, array, backward_fn)


def _triple(value, name, minimum):
    if isinstance(value, (int, np.integer)):
        value = (int(value),) * 3
    value = tuple(int(v) for v in value)
    if len(value) != 3:
        raise InvalidArgumentException(f"{name} must have 3 components, got {value}")
    if any(v < minimum for v in value):
        raise InvalidArgumentException(f"{name} components must be >= {minimum}, got {value}")
    return value


def _require_rank5(op, x):
    if x.ndim != 5:
        raise ShapeMismatchException(op, ('N', 'C', 'D', 'H', 'W'), x.shape, "expected a rank-5 tensor")


def _per_channel(v):
    return v[None, :, None, None, None]


"""
Convolution
"""


def conv_output_extent(size, kernel, stride, dilation, pad):
    """
    Output extent of a convolution along one axis.
    """
    return (size + 2 * pad - dilation * (kernel - 1) - 1) // stride + 1


def _window(offsets, dilation, stride, out_extents):
    index = [slice(None), slice(None)]
    for offset, d, s, n in zip(offsets, dilation, stride, out_extents):
        start = offset * d
        index.append(slice(start, start + s * (n - 1) + 1, s))
    return tuple(index)


def _column_view(xp, kernel, stride, dilation, out_extents):
    """
    Read-only view [N, Ci, D', H', W', kd, kh, kw] of every receptive field of the padded input.
    """
    span = tuple(d * (k - 1) + 1 for k, d in zip(kernel, dilation))
    view = np.lib.stride_tricks.sliding_window_view(xp, span, axis=(2, 3, 4))
    view = view[(slice(None), slice(None)) + tuple(slice(None, None, s) for s in stride)
                + tuple(slice(None, None, d) for d in dilation)]
    return view[(slice(None), slice(None)) + tuple(slice(0, n) for n in out_extents)]


def _kernel_chunks(kernel, values_per_offset):
    """
    Splits the kernel offsets into index blocks whose column buffer holds at most COLUMN_BUDGET values.

    Blocks are yielded in row-major offset order; every block keeps all three kernel axes.
    """
    kd, kh, kw = kernel
    if values_per_offset * kh * kw <= COLUMN_BUDGET:
        for i in range(kd):
            yield slice(i, i + 1), slice(None), slice(None)
    elif values_per_offset * kw <= COLUMN_BUDGET:
        for i in range(kd):
            for j in range(kh):
                yield slice(i, i + 1), slice(j, j + 1), slice(None)
    else:
        for i, j, k in np.ndindex(kd, kh, kw):
            yield slice(i, i + 1), slice(j, j + 1), slice(k, k + 1)


def conv3d(x, w, b=None, stride=1, dilation=1, pad=0):
    """
    3D cross-correlation of x[N,Ci,D,H,W] with w[Co,Ci,kd,kh,kw] plus bias b[Co].

    Receptive fields are gathered as columns and contracted against the kernel in 64-bit floats,
    a few kernel planes at a time in fixed order; the result is rounded to x's dtype.

    :type stride: int | (int, int, int)
    :type dilation: int | (int, int, int)
    :type pad: int | (int, int, int)

    :raise: ShapeMismatchException if the channel extents of x and w differ
    :raise: InvalidArgumentException for invalid stride/dilation/pad or a kernel that does not fit

    :rtype: Tensor
    :returns: tensor of shape [N, Co, D', H', W']
    """
    stride = _triple(stride, 'stride', 1)
    dilation = _triple(dilation, 'dilation', 1)
    pad = _triple(pad, 'pad', 0)
    _require_rank5('conv3d', x)
    if w.ndim != 5:
        raise ShapeMismatchException('conv3d', ('Co', 'Ci', 'k', 'k', 'k'), w.shape, "weight must be rank 5")
    n, ci, *extents = x.shape
    co, ci_w, *kernel = w.shape
    if ci != ci_w:
        raise ShapeMismatchException('conv3d', (n, ci_w, *extents), x.shape,
                                     f"input channels do not match weight shape {w.shape}")
    if b is not None and b.shape != (co,):
        raise ShapeMismatchException('conv3d', (co,), b.shape, "bias")

    out_extents = tuple(conv_output_extent(e, k, s, d, p)
                        for e, k, s, d, p in zip(extents, kernel, stride, dilation, pad))
    if any(e < 1 for e in out_extents):
        raise InvalidArgumentException(f"conv3d: dilated kernel {tuple(kernel)} (dilation {dilation}) "
                                       f"does not fit padded input {tuple(extents)} (pad {pad})")

    dtype = x.dtype
    pad_width = ((0, 0), (0, 0)) + tuple((p, p) for p in pad)
    xp = np.pad(x.data.astype(_F64), pad_width)
    w64 = w.data.astype(_F64)
    columns = _column_view(xp, kernel, stride, dilation, out_extents)
    chunks = list(_kernel_chunks(kernel, n * ci * int(np.prod(out_extents))))

    out = np.zeros((n, *out_extents, co), dtype=_F64)
    for chunk in chunks:
        out += np.tensordot(columns[(Ellipsis,) + chunk], w64[(slice(None), slice(None)) + chunk],
                            axes=([1, 5, 6, 7], [1, 2, 3, 4]))
    out = out.transpose(0, 4, 1, 2, 3)
    if b is not None:
        out = out + _per_channel(b.data.astype(_F64))

    def backward(grad, needs):
        g = grad.astype(_F64).transpose(0, 2, 3, 4, 1)
        dx = dw = db = None
        if needs[0]:
            dxp = np.zeros_like(xp)
            for chunk in chunks:
                # [N, D', H', W', Ci, a, b, c] for the offsets of this chunk
                contribution = np.tensordot(g, w64[(slice(None), slice(None)) + chunk], axes=([4], [0]))
                starts = tuple(s.start or 0 for s in chunk)
                for offset in np.ndindex(*contribution.shape[5:]):
                    position = tuple(a + o for a, o in zip(starts, offset))
                    dxp[_window(position, dilation, stride, out_extents)] += \
                        contribution[(Ellipsis,) + offset].transpose(0, 4, 1, 2, 3)
            crop = (slice(None), slice(None)) + tuple(slice(p, p + e) for p, e in zip(pad, extents))
            dx = dxp[crop].astype(dtype)
        if needs[1]:
            dw = np.zeros_like(w64)
            for chunk in chunks:
                dw[(slice(None), slice(None)) + chunk] = np.tensordot(g, columns[(Ellipsis,) + chunk],
                                                                      axes=([0, 1, 2, 3], [0, 2, 3, 4]))
            dw = dw.astype(w.dtype)
        if len(needs) > 2 and needs[2]:
            db = g.sum(axis=(0, 1, 2, 3)).astype(b.dtype)
        return dx, dw, db

    inputs = (x, w) if b is None else (x, w, b)
    return _result('conv3d', inputs, out.astype(dtype), backward)


"""
Pooling and upsampling
"""


def _segment_starts(size, step):
    return np.arange(0, size, step)


def _segment_sizes(size, step):
    return np.array([min(step, size - s) for s in _segment_starts(size, step)], dtype=_F64)


def avg_pool3d(x, kernel, stride=None, ceil_mode=True):
    """
    Non-overlapping 3D average pooling.

    With ceil_mode the trailing window along an axis may be truncated; its mean is taken over the
    voxels it actually covers. Without ceil_mode incomplete trailing windows are dropped.

    :type kernel: (int, int, int)
    :param kernel: window extents; stride must equal kernel

    :raise: InvalidArgumentException for zero-sized or overlapping windows

    :rtype: Tensor
    """
    kernel = _triple(kernel, 'kernel', 1)
    stride = kernel if stride is None else _triple(stride, 'stride', 1)
    if stride != kernel:
        raise InvalidArgumentException(f"avg_pool3d requires kernel == stride, got {kernel} and {stride}")
    _require_rank5('avg_pool3d', x)

    dtype = x.dtype
    extents = x.shape[2:]
    if not ceil_mode:
        used = tuple((e // k) * k for e, k in zip(extents, kernel))
        if any(u == 0 for u in used):
            raise InvalidArgumentException(f"avg_pool3d: window {kernel} larger than input {extents}")
    else:
        used = extents

    pooled = x.data.astype(_F64)[(slice(None), slice(None)) + tuple(slice(0, u) for u in used)]
    counts = np.ones((1, 1, 1, 1, 1), dtype=_F64)
    for axis, (size, k) in enumerate(zip(used, kernel), start=2):
        pooled = np.add.reduceat(pooled, _segment_starts(size, k), axis=axis)
        shape = [1] * 5
        shape[axis] = -1
        counts = counts * _segment_sizes(size, k).reshape(shape)
    out = pooled / counts

    def backward(grad, needs):
        g = grad.astype(_F64) / counts
        for axis, (size, k) in enumerate(zip(used, kernel), start=2):
            g = np.repeat(g, k, axis=axis).take(np.arange(size), axis=axis)
        if used != extents:
            g = np.pad(g, ((0, 0), (0, 0)) + tuple((0, e - u) for e, u in zip(extents, used)))
        return (g.astype(dtype),)

    return _result('avg_pool3d', (x,), out.astype(dtype), backward)


def upsample_nearest3d(x, factors, target_shape):
    """
    Nearest-neighbour upsampling: every voxel is replicated factor times along each axis,
    then trailing indices are cropped to target_shape.

    :type factors: (int, int, int)
    :type target_shape: (int, int, int)
    :param target_shape: output (D, H, W); must lie between the input extents and factors * input extents

    :raise: InvalidArgumentException if target_shape is outside that range

    :rtype: Tensor
    """
    factors = _triple(factors, 'factors', 1)
    target_shape = _triple(target_shape, 'target_shape', 1)
    _require_rank5('upsample_nearest3d', x)
    extents = x.shape[2:]
    for e, f, t in zip(extents, factors, target_shape):
        if not e <= t <= e * f:
            raise InvalidArgumentException(f"upsample_nearest3d: target {target_shape} outside "
                                           f"[{tuple(extents)}, {tuple(e * f for e, f in zip(extents, factors))}]")

    out = x.data
    for axis, (f, t) in enumerate(zip(factors, target_shape), start=2):
        out = np.repeat(out, f, axis=axis).take(np.arange(t), axis=axis)

    def backward(grad, needs):
        g = grad.astype(_F64)
        for axis, (e, f, t) in enumerate(zip(extents, factors, target_shape), start=2):
            g = np.add.reduceat(g, _segment_starts(t, f), axis=axis)
            if g.shape[axis] < e:
                width = [(0, 0)] * 5
                width[axis] = (0, e - g.shape[axis])
                g = np.pad(g, width)
        return (g.astype(x.dtype),)

    return _result('upsample_nearest3d', (x,), np.ascontiguousarray(out), backward)


"""
Normalization, activation, head
"""


def batch_norm3d(x, gamma, beta, running=None, mode=BatchNormMode.BATCH_STATS,
                 momentum=BN_MOMENTUM, eps=BN_EPSILON):
    """
    Per-channel batch normalization over (N, D, H, W).

    :type running: (Parameter, Parameter) | None
    :param running: running mean and variance accumulators; in BATCH_STATS mode they are updated
                    with the given momentum (unbiased variance), in RUNNING_STATS mode they are read

    :type mode: BatchNormMode
    :param mode: BATCH_STATS normalizes with the current batch moments, RUNNING_STATS with stored ones

    :rtype: Tensor
    """
    mode = BatchNormMode(mode)
    _require_rank5('batch_norm3d', x)
    channels = x.shape[1]
    for name, t in (('gamma', gamma), ('beta', beta)):
        if t.shape != (channels,):
            raise ShapeMismatchException('batch_norm3d', (channels,), t.shape, name)

    dtype = x.dtype
    axes = (0, 2, 3, 4)
    x64 = x.data.astype(_F64)
    g64 = gamma.data.astype(_F64)
    count = x64.size // channels

    if mode is BatchNormMode.BATCH_STATS:
        mean = x64.mean(axis=axes)
        var = x64.var(axis=axes)
        if running is not None:
            running_mean, running_var = running
            unbiased = var * count / (count - 1) if count > 1 else var
            running_mean.assign((1 - momentum) * running_mean.data.astype(_F64) + momentum * mean)
            running_var.assign((1 - momentum) * running_var.data.astype(_F64) + momentum * unbiased)
    else:
        if running is None:
            raise InvalidArgumentException("batch_norm3d: running_stats mode requires running statistics")
        mean = running[0].data.astype(_F64)
        var = running[1].data.astype(_F64)

    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x64 - _per_channel(mean)) * _per_channel(inv_std)
    out = _per_channel(g64) * x_hat + _per_channel(beta.data.astype(_F64))

    def backward(grad, needs):
        g = grad.astype(_F64)
        dx = None
        if needs[0]:
            d_hat = g * _per_channel(g64)
            if mode is BatchNormMode.BATCH_STATS:
                dx = _per_channel(inv_std / count) * (count * d_hat
                                                      - _per_channel(d_hat.sum(axis=axes))
                                                      - x_hat * _per_channel((d_hat * x_hat).sum(axis=axes)))
            else:
                dx = d_hat * _per_channel(inv_std)
            dx = dx.astype(dtype)
        d_gamma = (g * x_hat).sum(axis=axes).astype(gamma.dtype) if needs[1] else None
        d_beta = g.sum(axis=axes).astype(beta.dtype) if needs[2] else None
        return dx, d_gamma, d_beta

    return _result('batch_norm3d', (x, gamma, beta), out.astype(dtype), backward)


def relu(x):
    """
    max(0, x) elementwise; the subgradient at 0 is 0.
    """
    positive = x.data > 0
    if _relu_masks is not None:
        _relu_masks.append(positive.copy())
    out = np.where(positive, x.data, np.zeros((), dtype=x.dtype))

    def backward(grad, needs):
        return (np.where(positive, grad, np.zeros((), dtype=grad.dtype)),)

    return _result('relu', (x,), out, backward)


def classifier_head(x, w, b):
    """
    Global average pooling over (D, H, W) followed by an affine map.

    :type x: Tensor
    :param x: features [N, C, D, H, W]

    :type w: Tensor
    :param w: weights [K, C]

    :type b: Tensor
    :param b: bias [K]

    :rtype: Tensor
    :returns: logits [N, K]
    """
    _require_rank5('classifier_head', x)
    n, c = x.shape[:2]
    if w.ndim != 2 or w.shape[1] != c:
        raise ShapeMismatchException('classifier_head', ('K', c), w.shape, "weight")
    if b.shape != (w.shape[0],):
        raise ShapeMismatchException('classifier_head', (w.shape[0],), b.shape, "bias")

    dtype = x.dtype
    volume = int(np.prod(x.shape[2:]))
    pooled = x.data.astype(_F64).mean(axis=(2, 3, 4))
    w64 = w.data.astype(_F64)
    out = pooled @ w64.T + b.data.astype(_F64)

    def backward(grad, needs):
        g = grad.astype(_F64)
        dx = dw = db = None
        if needs[0]:
            dx = np.broadcast_to((g @ w64)[:, :, None, None, None] / volume, x.shape).astype(dtype)
        if needs[1]:
            dw = (g.T @ pooled).astype(w.dtype)
        if needs[2]:
            db = g.sum(axis=0).astype(b.dtype)
        return dx, dw, db

    return _result('classifier_head', (x, w, b), out.astype(dtype), backward)


"""
Softmax, smoothmax, loss
"""


def softmax_smoothmax(v):
    """
    Softmax and log-sum-exp (smoothmax) of a 1-D logit vector, both max-shifted.

    :type v: Tensor
    :param v: logits [n], n >= 1

    :rtype: (Tensor, Tensor)
    :returns: probabilities [n] and the scalar log-sum-exp
    """
    if v.ndim != 1 or v.shape[0] < 1:
        raise ShapeMismatchException('softmax_smoothmax', ('n',), v.shape, "expected a non-empty vector")
    dtype = v.dtype
    v64 = v.data.astype(_F64)
    peak = v64.max()
    exps = np.exp(v64 - peak)
    total = exps.sum()
    probs = exps / total
    lse = peak + np.log(total)

    def probs_backward(grad, needs):
        g = grad.astype(_F64)
        return ((probs * (g - (g * probs).sum())).astype(dtype),)

    def lse_backward(grad, needs):
        return ((float(grad) * probs).astype(dtype),)

    return (_result('softmax', (v,), probs.astype(dtype), probs_backward),
            _result('smoothmax', (v,), np.asarray(lse, dtype=dtype), lse_backward))


def cross_entropy(logits, labels):
    """
    Mean cross-entropy of logits [N, K] against integer labels.

    :type labels: [int]
    :param labels: N class indices in [0, K)

    :raise: InvalidArgumentException naming the first out-of-range label

    :rtype: Tensor
    :returns: scalar loss
    """
    if logits.ndim != 2:
        raise ShapeMismatchException('cross_entropy', ('N', 'K'), logits.shape)
    n, k = logits.shape
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != n:
        raise ShapeMismatchException('cross_entropy', (n,), labels.shape, "labels")
    for i, label in enumerate(labels):
        if not 0 <= label < k:
            raise InvalidArgumentException(f"cross_entropy: label {int(label)} at index {i} outside [0, {k})")

    dtype = logits.dtype
    z = logits.data.astype(_F64)
    peak = z.max(axis=1, keepdims=True)
    exps = np.exp(z - peak)
    totals = exps.sum(axis=1, keepdims=True)
    log_probs = z - peak - np.log(totals)
    rows = np.arange(n)
    loss = -log_probs[rows, labels].mean()

    def backward(grad, needs):
        d = exps / totals
        d[rows, labels] -= 1.0
        return ((d * (float(grad) / n)).astype(dtype),)

    return _result('cross_entropy', (logits,), np.asarray(loss, dtype=dtype), backward)


"""
Composition helpers
"""


def mix(tensors, weights):
    """
    Weighted sum sum_k weights[k] * tensors[k], accumulated in index order.

    :type tensors: [Tensor]
    :param tensors: equally shaped tensors

    :type weights: Tensor
    :param weights: 1-D tensor with one entry per tensor

    :rtype: Tensor
    """
    tensors = list(tensors)
    if weights.shape != (len(tensors),):
        raise ShapeMismatchException('mix', (len(tensors),), weights.shape, "weights")
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise ShapeMismatchException('mix', shape, t.shape)
    dtype = tensors[0].dtype
    w64 = weights.data.astype(_F64)
    out = np.zeros(shape, dtype=_F64)
    for coefficient, t in zip(w64, tensors):
        out += coefficient * t.data.astype(_F64)

    def backward(grad, needs):
        g = grad.astype(_F64)
        grads = [(g * coefficient).astype(dtype) if need else None for coefficient, need in zip(w64, needs)]
        d_weights = None
        if needs[-1]:
            d_weights = np.array([(g * t.data.astype(_F64)).sum() for t in tensors]).astype(weights.dtype)
        return grads + [d_weights]

    return _result('mix', tuple(tensors) + (weights,), out.astype(dtype), backward)


def add(*tensors):
    """
    Elementwise sum of equally shaped tensors.
    """
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise ShapeMismatchException('add', shape, t.shape)
    out = np.zeros(shape, dtype=_F64)
    for t in tensors:
        out += t.data
    dtype = tensors[0].dtype

    def backward(grad, needs):
        return [grad if need else None for need in needs]

    return _result('add', tensors, out.astype(dtype), backward)


def scale(x, factor):
    """
    Multiplies x by a constant scalar.
    """
    factor = float(factor)

    def backward(grad, needs):
        return ((grad * factor).astype(x.dtype),)

    return _result('scale', (x,), (x.data.astype(_F64) * factor).astype(x.dtype), backward)


def total(x):
    """
    Sum of all elements as a scalar tensor.
    """
    def backward(grad, needs):
        return (np.full(x.shape, float(grad), dtype=x.dtype),)

    return _result('total', (x,), np.asarray(x.data.astype(_F64).sum(), dtype=x.dtype), backward)


def weighted_total(x, coefficients):
    """
    Scalar sum(coefficients * x) against a constant coefficient array of x's shape.
    """
    c64 = np.asarray(coefficients, dtype=_F64)
    if c64.shape != x.shape:
        raise ShapeMismatchException('weighted_total', x.shape, c64.shape, "coefficients")

    def backward(grad, needs):
        return ((c64 * float(grad)).astype(x.dtype),)

    return _result('weighted_total', (x,), np.asarray((x.data.astype(_F64) * c64).sum(), dtype=x.dtype), backward)
