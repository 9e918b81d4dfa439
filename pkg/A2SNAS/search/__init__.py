from .state import GENOTYPE_SELECTIONS, SearchConfig, TrainState
from .optimizers import Adam, SGD, exponential_lr
from .agent import SearchAgent, arch_step, beta_decay_loss, run_search, search_step
from .trainer import CompactTrainer, evaluate, predict, train_compact, validate, weight_step
from .checkpoint import Checkpoint, load_checkpoint, restore_checkpoint, save_checkpoint
