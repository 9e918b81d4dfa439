import numpy as np

from ..tensor import ops
from ..tensor.ops import BatchNormMode


class ForwardContext:
    """
    Settings of one forward pass.

    :type tape: Tape
    :param tape: tape to record on, or None for a plain forward

    :type mode: BatchNormMode
    :param mode: BATCH_STATS while training/searching, RUNNING_STATS for evaluation

    :type track_running: bool
    :param track_running: if true, batch-norm running statistics are updated (BATCH_STATS mode only)
    """

    def __init__(self, tape=None, mode=BatchNormMode.BATCH_STATS, track_running=False):
        self.tape = tape
        self.mode = BatchNormMode(mode)
        self.track_running = track_running

    @classmethod
    def evaluation(cls):
        return cls(mode=BatchNormMode.RUNNING_STATS)

    def param(self, parameter):
        if self.tape is None:
            return parameter.tensor
        return self.tape.watch(parameter)

    def running(self, running_mean, running_var):
        if self.mode is BatchNormMode.RUNNING_STATS or self.track_running:
            return running_mean, running_var
        return None


class ConvBNReLU:
    """
    conv3d -> batch_norm3d -> relu unit. Used for the stem, the downsample layers and every
    inner candidate of an A2SConv block.

    Registers "<prefix>.conv.weight", "<prefix>.conv.bias", "<prefix>.bn.gamma", "<prefix>.bn.beta" and
    the non-trainable "<prefix>.bn.running_mean" / "<prefix>.bn.running_var".

    :type prefix: str
    :param prefix: parameter name prefix

    :type store: ParameterStore
    :param store: store the parameters are registered in

    :type rng: Rng
    :param rng: parent stream; the kernel is drawn from rng.spawn(<weight name>)
    """

    def __init__(self, prefix, in_channels, out_channels, store, rng, kernel_size=3, stride=1, dilation=1, pad=1):
        self.prefix = prefix
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.stride = stride
        self.dilation = dilation
        self.pad = pad

        shape = (out_channels, in_channels) + (kernel_size,) * 3
        weight_name = f"{prefix}.conv.weight"
        fan_in = in_channels * kernel_size ** 3
        self.weight = store.register(weight_name, rng.spawn(weight_name).he_normal(shape, fan_in))
        self.bias = store.register(f"{prefix}.conv.bias", np.zeros(out_channels))
        self.gamma = store.register(f"{prefix}.bn.gamma", np.ones(out_channels))
        self.beta = store.register(f"{prefix}.bn.beta", np.zeros(out_channels))
        self.running_mean = store.register(f"{prefix}.bn.running_mean", np.zeros(out_channels), trainable=False)
        self.running_var = store.register(f"{prefix}.bn.running_var", np.ones(out_channels), trainable=False)

    def __call__(self, x, ctx):
        y = ops.conv3d(x, ctx.param(self.weight), ctx.param(self.bias), self.stride, self.dilation, self.pad)
        y = ops.batch_norm3d(y, ctx.param(self.gamma), ctx.param(self.beta),
                             running=ctx.running(self.running_mean, self.running_var), mode=ctx.mode)
        return ops.relu(y)


class ClassifierHead:
    """
    Global average pooling followed by a dense layer ("head.weight" [K, C], "head.bias" [K]).
    """

    def __init__(self, channels, num_classes, store, rng, prefix='head'):
        weight_name = f"{prefix}.weight"
        self.weight = store.register(weight_name,
                                     rng.spawn(weight_name).he_normal((num_classes, channels), channels))
        self.bias = store.register(f"{prefix}.bias", np.zeros(num_classes))

    def __call__(self, x, ctx):
        return ops.classifier_head(x, ctx.param(self.weight), ctx.param(self.bias))
