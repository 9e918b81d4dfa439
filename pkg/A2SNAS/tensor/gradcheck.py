"""
Finite-difference verification of the autodiff kernels.
"""
import logging

import numpy as np

from . import ops
from .rng import Rng
from .tensor import ParameterStore, Tape, verification_mode
from ..exception import InvalidArgumentException

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-3


class GradCheckReport:
    """
    Outcome of a gradient check.

    :type max_rel_error: float
    :param max_rel_error: largest relative error over all checked elements

    :type checked: int
    :param checked: number of compared elements

    :type skipped: [(str, int)]
    :param skipped: (parameter name, flat index) of elements whose perturbation crossed a relu kink
    """

    def __init__(self, max_rel_error, checked, skipped):
        self.max_rel_error = max_rel_error
        self.checked = checked
        self.skipped = skipped

    def __repr__(self):
        return f"GradCheckReport(max_rel_error={self.max_rel_error:.3e}, checked={self.checked}, " \
               f"skipped={len(self.skipped)})"


def _masks_equal(a, b):
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def _evaluate(build_loss):
    with ops.record_relu_masks() as masks:
        loss = build_loss(Tape())
    return float(loss.data), list(masks)


def check_gradients(build_loss, parameters, epsilon=DEFAULT_EPSILON):
    """
    Compares reverse-mode gradients with central finite differences in 64-bit mode.

    Elements whose +/- epsilon perturbations change the sign pattern of any relu input are skipped,
    since the loss is not differentiable across the kink.

    :type build_loss: callable
    :param build_loss: build_loss(tape) -> scalar Tensor; must read parameters through tape.watch
                       and must not mutate them

    :type parameters: [Parameter]
    :param parameters: parameters to check; should have been created in verification_mode()

    :type epsilon: float
    :param epsilon: finite-difference step

    :rtype: GradCheckReport
    """
    with verification_mode():
        tape = Tape()
        with ops.record_relu_masks() as base_masks:
            loss = build_loss(tape)
        analytic = tape.backward(loss, parameters)

        numeric = {}
        skipped = []
        for parameter in parameters:
            base = parameter.data.copy()
            estimate = np.zeros(base.size, dtype=np.float64)
            valid = np.ones(base.size, dtype=bool)
            for index in range(base.size):
                perturbed = base.copy().reshape(-1)
                perturbed[index] += epsilon
                parameter.assign(perturbed.reshape(base.shape))
                plus, plus_masks = _evaluate(build_loss)
                perturbed[index] -= 2 * epsilon
                parameter.assign(perturbed.reshape(base.shape))
                minus, minus_masks = _evaluate(build_loss)
                if not (_masks_equal(base_masks, plus_masks) and _masks_equal(base_masks, minus_masks)):
                    valid[index] = False
                    skipped.append((parameter.name, index))
                estimate[index] = (plus - minus) / (2 * epsilon)
            parameter.assign(base)
            numeric[parameter.name] = (estimate, valid)

    scale = max([1.0] + [float(np.abs(n[v]).max()) for n, v in numeric.values() if v.any()])
    floor = 1e-6 * scale
    max_error = 0.0
    checked = 0
    for parameter in parameters:
        estimate, valid = numeric[parameter.name]
        exact = analytic[parameter.name].data.astype(np.float64).reshape(-1)
        denominator = np.maximum(np.maximum(np.abs(exact), np.abs(estimate)), floor)
        errors = np.abs(exact - estimate) / denominator
        if valid.any():
            max_error = max(max_error, float(errors[valid].max()))
        checked += int(valid.sum())
    report = GradCheckReport(max_error, checked, skipped)
    logger.debug("gradient check: %r", report)
    return report


"""
Single-op harness
"""


def _register_inputs(store, rng, shapes, names):
    return [store.register(name, rng.normal(shape)) for name, shape in zip(names, shapes)]


def _away_from_zero(values, margin=0.1):
    return np.where(np.abs(values) < margin, np.copysign(margin, values) + values, values)


def _conv3d_case(store, rng, shapes, options):
    x, w = _register_inputs(store, rng, shapes, ('x', 'w'))
    b = store.register('b', rng.normal((shapes[1][0],)))
    stride = options.get('stride', 1)
    dilation = options.get('dilation', 1)
    pad = options.get('pad', 0)
    return [x, w, b], lambda t: ops.conv3d(t.watch(x), t.watch(w), t.watch(b), stride, dilation, pad)


def _avg_pool3d_case(store, rng, shapes, options):
    x, = _register_inputs(store, rng, shapes, ('x',))
    kernel = options.get('kernel', (2, 1, 1))
    return [x], lambda t: ops.avg_pool3d(t.watch(x), kernel)


def _full_target(shape, factors):
    return tuple(e * f for e, f in zip(shape[2:], factors))


def _upsample_case(store, rng, shapes, options):
    x, = _register_inputs(store, rng, shapes, ('x',))
    factors = options.get('factors', (2, 1, 1))
    target = options.get('target_shape', _full_target(shapes[0], factors))
    return [x], lambda t: ops.upsample_nearest3d(t.watch(x), factors, target)


def _pool_upsample_case(store, rng, shapes, options):
    x, = _register_inputs(store, rng, shapes, ('x',))
    factors = options.get('factors', (2, 1, 1))

    def build(t):
        pooled = ops.avg_pool3d(t.watch(x), factors)
        return ops.upsample_nearest3d(pooled, factors, shapes[0][2:])

    return [x], build


def _batch_norm_parameters(store, rng, shapes):
    x, = _register_inputs(store, rng, shapes, ('x',))
    channels = shapes[0][1]
    gamma = store.register('gamma', 1.0 + 0.1 * rng.normal((channels,)))
    beta = store.register('beta', rng.normal((channels,)))
    return x, gamma, beta


def _batch_norm_case(store, rng, shapes, options):
    x, gamma, beta = _batch_norm_parameters(store, rng, shapes)
    return [x, gamma, beta], lambda t: ops.batch_norm3d(t.watch(x), t.watch(gamma), t.watch(beta))


def _batch_norm_running_case(store, rng, shapes, options):
    x, gamma, beta = _batch_norm_parameters(store, rng, shapes)
    channels = shapes[0][1]
    mean = store.register('running_mean', rng.normal((channels,)), trainable=False)
    var = store.register('running_var', 0.5 + rng.uniform(channels), trainable=False)
    return [x, gamma, beta], lambda t: ops.batch_norm3d(t.watch(x), t.watch(gamma), t.watch(beta),
                                                         running=(mean, var),
                                                         mode=ops.BatchNormMode.RUNNING_STATS)


def _classifier_head_case(store, rng, shapes, options):
    x, w = _register_inputs(store, rng, shapes, ('x', 'w'))
    b = store.register('b', rng.normal((shapes[1][0],)))
    return [x, w, b], lambda t: ops.classifier_head(t.watch(x), t.watch(w), t.watch(b))


def _relu_case(store, rng, shapes, options):
    x = store.register('x', _away_from_zero(rng.normal(shapes[0])))
    return [x], lambda t: ops.relu(t.watch(x))


def _softmax_case(store, rng, shapes, options):
    v, = _register_inputs(store, rng, shapes, ('v',))
    return [v], lambda t: ops.softmax_smoothmax(t.watch(v))[0]


def _smoothmax_case(store, rng, shapes, options):
    v, = _register_inputs(store, rng, shapes, ('v',))
    return [v], lambda t: ops.softmax_smoothmax(t.watch(v))[1]


def _cross_entropy_case(store, rng, shapes, options):
    logits, = _register_inputs(store, rng, shapes, ('logits',))
    n, k = shapes[0]
    labels = [int(u * k) for u in rng.uniform(n)]
    return [logits], lambda t: ops.cross_entropy(t.watch(logits), labels)


def _mix_case(store, rng, shapes, options):
    shape, (count,) = shapes
    inputs = [store.register(f'x{i}', rng.normal(shape)) for i in range(count)]
    weights = store.register('weights', rng.normal((count,)))
    return inputs + [weights], lambda t: ops.mix([t.watch(p) for p in inputs], t.watch(weights))


_CASES = {
    'conv3d': _conv3d_case,
    'avg_pool3d': _avg_pool3d_case,
    'upsample_nearest3d': _upsample_case,
    'pool_upsample': _pool_upsample_case,
    'batch_norm3d': _batch_norm_case,
    'batch_norm3d_running': _batch_norm_running_case,
    'classifier_head': _classifier_head_case,
    'relu': _relu_case,
    'softmax': _softmax_case,
    'smoothmax': _smoothmax_case,
    'cross_entropy': _cross_entropy_case,
    'mix': _mix_case,
}

SUPPORTED_OPS = tuple(sorted(_CASES))


def grad_check(op_name, shapes, seed, epsilon=DEFAULT_EPSILON, **options):
    """
    Checks one kernel against finite differences on seeded random inputs.

    The checked loss is sum(R * op(inputs)) for a fixed random R of the output's shape.

    :type op_name: str
    :param op_name: one of SUPPORTED_OPS

    :type shapes: tuple
    :param shapes: input shapes, e.g. ((N, Ci, D, H, W), (Co, Ci, k, k, k)) for conv3d,
                   ((shape), (count,)) for mix, ((N, K),) for cross_entropy

    :type seed: int
    :param seed: seed for inputs and the projection R

    :param options: op settings (stride/dilation/pad, kernel, factors, target_shape)

    :raise: InvalidArgumentException for an unsupported op

    :rtype: float
    :returns: max relative error
    """
    if op_name not in _CASES:
        raise InvalidArgumentException(f"grad_check: unsupported op '{op_name}', expected one of {SUPPORTED_OPS}")
    rng = Rng(seed)
    with verification_mode():
        store = ParameterStore()
        parameters, forward = _CASES[op_name](store, rng.spawn('inputs'), shapes, options)
        out_shape = forward(Tape()).shape
        projection = rng.spawn('projection').normal(out_shape)
        report = check_gradients(lambda t: ops.weighted_total(forward(t), projection), parameters, epsilon)
    logger.info("grad_check %s %s: max rel error %.3e", op_name, shapes, report.max_rel_error)
    return report.max_rel_error
