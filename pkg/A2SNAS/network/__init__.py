from .layers import ForwardContext
from .a2sconv import (A2SConvBlock, ArchParams, InnerOp, OuterOp, INNER_OPS, OUTER_OPS, apply_outer, candidate_conv,
                      derive_block, discrete_forward, mixed_forward, restore_shape)
from .genotype import Genotype, NUM_BLOCKS, load_genotype, loads, parse_choices, save_genotype
from .supernet import (CompactNet, Supernet, SupernetConfig, build_compact, build_supernet, count_parameters,
                       derive_genotype)
