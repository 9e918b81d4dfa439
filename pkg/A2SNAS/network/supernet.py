"""
Three-stage macro skeleton hosting six A2SConv blocks.

stem (conv k3, 1 -> C) -> 2 blocks -> down1 (conv k3, stride (1,2,2), C -> 2C) -> 2 blocks
-> down2 (2C -> 4C) -> 2 blocks -> head
"""
import logging

from .a2sconv import A2SConvBlock, derive_block
from .genotype import FINGERPRINT_KEYS, NUM_BLOCKS, Genotype
from .layers import ClassifierHead, ConvBNReLU, ForwardContext
from ..exception import FingerprintMismatchException, InvalidArgumentException, ShapeMismatchException
from ..tensor import ParameterKind, ParameterStore, Rng

logger = logging.getLogger(__name__)

STAGES = 3
BLOCKS_PER_STAGE = 2
DOWNSAMPLE_STRIDE = (1, 2, 2)


class SupernetConfig:
    """
    Macro configuration of a (super or compact) network.

    :type bands: int
    :param bands: spectral depth B of the input volume

    :type num_classes: int
    :param num_classes: number of output classes K

    :type stem_channels: int
    :param stem_channels: channels C of stage 1; stages 2 and 3 use 2C and 4C

    :type patch_size: int
    :param patch_size: odd spatial patch extent P
    """

    def __init__(self, bands, num_classes, stem_channels=16, patch_size=19):
        for name, value in (('bands', bands), ('num_classes', num_classes),
                            ('stem_channels', stem_channels), ('patch_size', patch_size)):
            if int(value) != value or value < 1:
                raise InvalidArgumentException(f"{name} must be a positive integer, got {value!r}")
        if patch_size % 2 == 0:
            raise InvalidArgumentException(f"patch_size must be odd, got {patch_size}")
        self.bands = int(bands)
        self.num_classes = int(num_classes)
        self.stem_channels = int(stem_channels)
        self.patch_size = int(patch_size)

    @property
    def channel_plan(self):
        return tuple(self.stem_channels * 2 ** stage for stage in range(STAGES))

    @property
    def fingerprint(self):
        return {key: getattr(self, key) for key in FINGERPRINT_KEYS}

    @classmethod
    def from_fingerprint(cls, fingerprint):
        return cls(**{key: fingerprint[key] for key in FINGERPRINT_KEYS})

    def __eq__(self, other):
        return isinstance(other, SupernetConfig) and self.fingerprint == other.fingerprint

    def __repr__(self):
        return f"SupernetConfig({', '.join(f'{k}={v}' for k, v in self.fingerprint.items())})"


class _Network:
    """
    Shared skeleton of Supernet and CompactNet; subclasses decide what a block is.
    """

    def __init__(self, config, rng):
        self.config = config
        self.store = ParameterStore()
        rng = rng if isinstance(rng, Rng) else Rng(rng)
        plan = config.channel_plan

        self.stem = ConvBNReLU('stem', 1, plan[0], self.store, rng)
        self.downsample = [ConvBNReLU(f'down{stage}', plan[stage - 1], plan[stage], self.store, rng,
                                      stride=DOWNSAMPLE_STRIDE)
                           for stage in range(1, STAGES)]
        self.blocks = [self._make_block(block_id, plan[block_id // BLOCKS_PER_STAGE], rng)
                       for block_id in range(NUM_BLOCKS)]
        self.head = ClassifierHead(plan[-1], config.num_classes, self.store, rng)

    def _make_block(self, block_id, channels, rng):
        raise NotImplementedError

    def forward(self, x, ctx=None):
        """
        Computes class logits for a batch of patches.

        :type x: Tensor
        :param x: patches [N, 1, bands, P, P]

        :type ctx: ForwardContext
        :param ctx: forward settings, a plain batch-stats forward if None

        :raise: ShapeMismatchException naming the stage whose input is malformed

        :rtype: Tensor
        :returns: logits [N, num_classes]
        """
        ctx = ctx or ForwardContext()
        expected = (1, self.config.bands, self.config.patch_size, self.config.patch_size)
        if x.ndim != 5 or tuple(x.shape[1:]) != expected:
            raise ShapeMismatchException('stage 1 (stem)', ('N',) + expected, x.shape)

        for stage in range(STAGES):
            x = self.stem(x, ctx) if stage == 0 else self.downsample[stage - 1](x, ctx)
            for block in self.blocks[stage * BLOCKS_PER_STAGE:(stage + 1) * BLOCKS_PER_STAGE]:
                x = block(x, ctx)
        return self.head(x, ctx)

    __call__ = forward

    def weight_parameters(self):
        return self.store.parameters(kind=ParameterKind.WEIGHT, trainable=True)


class Supernet(_Network):
    """
    Over-parameterized network whose blocks mix all candidates.

    :type config: SupernetConfig
    :type rng: Rng | int
    """

    def _make_block(self, block_id, channels, rng):
        return A2SConvBlock(block_id, channels, self.store, rng)

    @property
    def arch_params(self):
        return [block.arch for block in self.blocks]

    def arch_parameters(self):
        return self.store.parameters(kind=ParameterKind.ARCH)

    def genotype(self):
        return derive_genotype(self.arch_params, self.config)


class CompactNet(_Network):
    """
    Derived network: every block runs only its genotype's branch.

    :type genotype: Genotype
    :type config: SupernetConfig
    :type rng: Rng | int
    """

    def __init__(self, genotype, config, rng):
        if genotype.fingerprint != config.fingerprint:
            raise FingerprintMismatchException(f"genotype fingerprint {genotype.fingerprint} does not match "
                                               f"network config {config.fingerprint}")
        self.genotype = genotype
        super().__init__(config, rng)

    def _make_block(self, block_id, channels, rng):
        return A2SConvBlock(block_id, channels, self.store, rng, choice=self.genotype.choices[block_id])

    def load_from_supernet(self, supernet):
        """
        Copies every parameter of this network from the same-named supernet parameter.
        """
        if supernet.config != self.config:
            raise FingerprintMismatchException(f"supernet {supernet.config} does not match {self.config}")
        for name in self.store.names():
            self.store[name].assign(supernet.store[name].data)


def build_supernet(config, rng):
    """
    :type config: SupernetConfig
    :type rng: Rng | int

    :rtype: Supernet
    """
    net = Supernet(config, rng)
    logger.debug("built supernet %s with %d weights", config, count_parameters(net))
    return net


def build_compact(genotype, config, rng):
    """
    :raise: FingerprintMismatchException if the genotype was derived for another config

    :rtype: CompactNet
    """
    net = CompactNet(genotype, config, rng)
    logger.debug("built compact net [%s] with %d weights", genotype, count_parameters(net))
    return net


def derive_genotype(arch, config):
    """
    Argmax derivation of every block.

    :type arch: [ArchParams]
    :param arch: the blocks' logits in block order

    :type config: SupernetConfig

    :rtype: Genotype
    """
    return Genotype([derive_block(a) for a in arch], config.fingerprint)


def count_parameters(net, include_arch=False):
    """
    Counts trainable scalars (batch-norm running statistics excluded).

    :type include_arch: bool
    :param include_arch: if true architecture logits are counted too
    """
    count = net.store.count(kind=ParameterKind.WEIGHT, trainable=True)
    if include_arch:
        count += net.store.count(kind=ParameterKind.ARCH)
    return count
