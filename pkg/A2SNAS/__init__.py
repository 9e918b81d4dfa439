from .data import HsiCube, SplitSpec, gen_synthetic, load_cube, make_splits, save_cube
from .metrics import ConfusionMatrix, MetricsReport, compute_metrics
from .network import Genotype, SupernetConfig
from .search import SearchConfig
from .solver import Solver
