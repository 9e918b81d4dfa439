from ..exception import InvalidArgumentException

GENOTYPE_SELECTIONS = ('final', 'best_val')


class SearchConfig:
    """
    Optimization settings shared by the architecture search and compact retraining.

    :type search_epochs: int
    :param search_epochs: epochs of bi-level search

    :type retrain_epochs: int
    :param retrain_epochs: epochs of compact retraining

    :type batch_size: int
    :param batch_size: patches per batch

    :type w_lr: float
    :param w_lr: initial Adam learning rate of the network weights

    :type w_lr_decay: float
    :param w_lr_decay: per-epoch multiplicative decay of w_lr, in (0, 1]

    :type arch_lr: float
    :param arch_lr: SGD learning rate of the architecture logits

    :type arch_momentum: float
    :param arch_momentum: SGD momentum of the architecture logits

    :type beta_decay_weight: float
    :param beta_decay_weight: weight (lambda) of the beta-decay regularizer, >= 0

    :type seed: int
    :param seed: seed of every random stream of a run

    :type genotype_selection: str
    :param genotype_selection: 'final' takes the genotype of the last search epoch, 'best_val' the one
        of the epoch with the highest validation OA
    """

    def __init__(self, search_epochs=50, retrain_epochs=100, batch_size=16, w_lr=1e-3, w_lr_decay=0.97,
                 arch_lr=0.01, arch_momentum=0.9, beta_decay_weight=1.0, seed=0, genotype_selection='final'):
        self.search_epochs = search_epochs
        self.retrain_epochs = retrain_epochs
        self.batch_size = batch_size
        self.w_lr = w_lr
        self.w_lr_decay = w_lr_decay
        self.arch_lr = arch_lr
        self.arch_momentum = arch_momentum
        self.beta_decay_weight = beta_decay_weight
        self.seed = seed
        self.genotype_selection = genotype_selection

        if search_epochs < 0 or retrain_epochs < 0:
            raise InvalidArgumentException("epoch counts must be >= 0")
        if batch_size < 1:
            raise InvalidArgumentException(f"batch_size must be >= 1, got {batch_size}")
        if w_lr <= 0 or arch_lr <= 0:
            raise InvalidArgumentException(f"learning rates must be > 0, got w_lr={w_lr}, arch_lr={arch_lr}")
        if not 0 < w_lr_decay <= 1:
            raise InvalidArgumentException(f"w_lr_decay must be in (0, 1], got {w_lr_decay}")
        if beta_decay_weight < 0:
            raise InvalidArgumentException(f"beta-decay weight must be >= 0, got {beta_decay_weight}")
        if genotype_selection not in GENOTYPE_SELECTIONS:
            raise InvalidArgumentException(f"genotype_selection must be one of {', '.join(GENOTYPE_SELECTIONS)}, "
                                           f"got {genotype_selection!r}")

    def as_dict(self):
        return dict(vars(self))

    def __repr__(self):
        return f"SearchConfig({', '.join(f'{k}={v!r}' for k, v in vars(self).items())})"


class TrainState:
    """
    Mutable progress of one search or training context.

    :type weight_optimizer: Adam
    :param weight_optimizer: optimizer of the network weights

    :type arch_optimizer: SGD
    :param arch_optimizer: optimizer of the architecture logits, None when retraining
    """

    def __init__(self, weight_optimizer, arch_optimizer=None):
        self.epoch = 0
        "number of completed epochs"

        self.step = 0
        "number of completed optimization steps"

        self.history = []
        "one dict per completed epoch"

        self.weight_optimizer = weight_optimizer
        self.arch_optimizer = arch_optimizer

        self.last_step = {}
        "losses of the most recent step"
