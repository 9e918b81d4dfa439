import logging
import pickle

from . import checkpoint as checkpoint_io
from .history import GENOTYPE_COLUMN, search_columns
from .optimizers import SGD, Adam, exponential_lr
from .state import TrainState
from .trainer import epoch_progress_bar, validate, weight_step
from ..data import batch_iter
from ..exception import SplitException
from ..metrics import compute_metrics
from ..network import ForwardContext, Genotype, INNER_OPS, OUTER_OPS, build_supernet, parse_choices
from ..tensor import ParameterKind, Rng, Tape, derive_seed
from ..tensor import ops

logger = logging.getLogger(__name__)


def beta_decay_loss(arch, ctx=None):
    """
    Sum of smoothmax (log-sum-exp) over every block's beta and alpha logit group.

    Its gradient with respect to a group is that group's softmax.

    :type arch: [ArchParams]
    :type ctx: ForwardContext

    :rtype: Tensor
    :returns: scalar loss
    """
    ctx = ctx or ForwardContext()
    terms = [ops.softmax_smoothmax(ctx.param(group))[1] for block in arch for group in block.groups()]
    return ops.add(*terms)


def arch_step(net, batch, optimizer, beta_decay_weight):
    """
    One SGD step of the architecture logits on a validation batch; network weights stay frozen
    and batch-norm running statistics are not updated.

    :rtype: float
    :returns: validation cross-entropy before the step
    """
    x, labels = batch
    tape = Tape(kinds=(ParameterKind.ARCH,), owner='arch step')
    ctx = ForwardContext(tape, track_running=False)
    val_loss = ops.cross_entropy(net(x, ctx), labels)
    objective = val_loss
    if beta_decay_weight > 0:
        objective = ops.add(val_loss, ops.scale(beta_decay_loss(net.arch_params, ctx), beta_decay_weight))
    optimizer.step(tape.backward(objective, net.arch_parameters()))
    return val_loss.item()


def search_step(state, net, train_batch, val_batch, config):
    """
    One first-order bi-level iteration: an architecture step on val_batch, then a weight step on
    train_batch.

    :type state: TrainState
    :type net: Supernet
    :type train_batch: (Tensor, [int])
    :type val_batch: (Tensor, [int])
    :type config: SearchConfig

    :rtype: TrainState
    :returns: state, with last_step holding the two losses
    """
    val_loss = arch_step(net, val_batch, state.arch_optimizer, config.beta_decay_weight)
    lr = exponential_lr(config.w_lr, config.w_lr_decay, state.epoch)
    train_loss = weight_step(net, train_batch, state.weight_optimizer, lr)
    state.step += 1
    state.last_step = {'train_loss': train_loss, 'val_loss': val_loss}
    return state


def arch_distribution(net):
    """
    Gets the softmax weights of every block's candidates keyed like the history columns.

    :rtype: dict
    """
    row = {}
    for arch in net.arch_params:
        outer, _ = ops.softmax_smoothmax(arch.beta.tensor)
        inner, _ = ops.softmax_smoothmax(arch.alpha.tensor)
        row.update({f"b{arch.block_id}.outer.{op.token}": float(p) for op, p in zip(OUTER_OPS, outer.data)})
        row.update({f"b{arch.block_id}.inner.{op.token}": float(p) for op, p in zip(INNER_OPS, inner.data)})
    return row


class SearchAgent:
    """
    Bi-level architecture search agent.

    :type config: SearchConfig
    :param config: optimization settings

    :type net_config: SupernetConfig
    :param net_config: macro configuration of the supernet

    :type cube: HsiCube
    :param cube: (normalized) data cube

    :type train_pixels: [(int, int)]
    :param train_pixels: search-train split, drives the weight steps

    :type val_pixels: [(int, int)]
    :param val_pixels: search-val split, drives the architecture steps

    :type checkpoint_dir: Path | str
    :param checkpoint_dir: if given, a checkpoint is written there after every epoch

    :type verbose: bool
    :param verbose: if true parameters are logged and a progress bar is shown
    """

    def __init__(self, config, net_config, cube, train_pixels, val_pixels, checkpoint_dir=None, verbose=False):
        if not train_pixels or not val_pixels:
            raise SplitException("search needs non-empty train and val splits")
        self.config = config
        self.cube = cube
        self.train_pixels = list(train_pixels)
        self.val_pixels = list(val_pixels)
        self.checkpoint_dir = checkpoint_dir
        self.verbose = verbose

        self.rng = Rng(config.seed)
        self.net = build_supernet(net_config, self.rng.spawn('supernet'))
        self.state = TrainState(Adam(self.net.weight_parameters(), lr=config.w_lr),
                                SGD(self.net.arch_parameters(), lr=config.arch_lr, momentum=config.arch_momentum))

        # results
        self.genotype = None

    @property
    def history(self):
        return self.state.history

    def resume(self, checkpoint_dir):
        """
        Continues from a supernet checkpoint written by this agent's configuration.

        :raise: CheckpointFormatException if the checkpoint was written with another seed
        """
        checkpoint_io.restore_checkpoint(checkpoint_io.load_checkpoint(checkpoint_dir), self.net, self.state,
                                         rng=self.rng)
        logger.info("resumed search at epoch %d", self.state.epoch)

    def run_epoch(self):
        """
        Runs one search epoch: one search_step per training batch, validation batches taken
        round-robin, then an eval-mode validation pass.

        :rtype: dict
        :returns: the epoch's history row
        """
        epoch = self.state.epoch
        patch_size = self.net.config.patch_size
        val_batches = list(batch_iter(self.val_pixels, self.cube, self.config.batch_size,
                                      seed=derive_seed(self.config.seed, f"search.val.epoch{epoch}"),
                                      patch_size=patch_size))
        train_batches = batch_iter(self.train_pixels, self.cube, self.config.batch_size,
                                   seed=derive_seed(self.config.seed, f"search.train.epoch{epoch}"),
                                   patch_size=patch_size)
        weighted_loss, seen = 0.0, 0
        for i, train_batch in enumerate(train_batches):
            search_step(self.state, self.net, train_batch, val_batches[i % len(val_batches)], self.config)
            weighted_loss += self.state.last_step['train_loss'] * len(train_batch[1])
            seen += len(train_batch[1])

        val_loss, confusion = validate(self.net, self.cube, self.val_pixels)
        row = {'epoch': epoch, 'train_loss': weighted_loss / seen, 'val_loss': val_loss,
               'val_oa': compute_metrics(confusion).oa}
        row.update(arch_distribution(self.net))
        row[GENOTYPE_COLUMN] = str(self.net.genotype())
        self.state.history.append(row)
        self.state.epoch += 1
        logger.debug("search epoch %d: train loss %.4f, val loss %.4f, val OA %.4f, genotype [%s]",
                     epoch, row['train_loss'], val_loss, row['val_oa'], row[GENOTYPE_COLUMN])

        if self.checkpoint_dir is not None:
            checkpoint_io.save_checkpoint(self.checkpoint_dir, self.net, self.state,
                                          metrics={'val_oa': row['val_oa'], 'val_loss': val_loss},
                                          rng_state=self.rng.state(), history_columns=search_columns())
        return row

    def select_genotype(self):
        """
        Picks the result genotype according to config.genotype_selection: 'final' derives it from the
        current logits, 'best_val' takes the one recorded at the epoch with the highest val OA
        (earliest on ties).

        :rtype: Genotype
        """
        if self.config.genotype_selection == 'final' or not self.history:
            return self.net.genotype()
        best = max(self.history, key=lambda row: (row['val_oa'], -row['epoch']))
        if GENOTYPE_COLUMN not in best:
            logger.warning("history has no genotype column, using the final genotype")
            return self.net.genotype()
        logger.info("best validation epoch %d (val OA %.4f)", best['epoch'], best['val_oa'])
        return Genotype(parse_choices(best[GENOTYPE_COLUMN]), self.net.config.fingerprint)

    def start(self, child_results_queue=None):
        """
        Runs the remaining search epochs and derives the genotype.

        :type child_results_queue: multiprocessing.Queue
        :param child_results_queue: if given, the pickled agent is put on it when done

        :rtype: Genotype
        :returns: the derived genotype
        """
        epochs = self.config.search_epochs
        if self.verbose:
            logger.info("Running architecture search")
            logger.info("Parameters: %r", self.config)
            logger.info("supernet %s, train pixels = %d, val pixels = %d",
                        self.net.config, len(self.train_pixels), len(self.val_pixels))
            pbar = epoch_progress_bar(epochs)

        while self.state.epoch < epochs:
            self.run_epoch()
            if self.verbose:
                pbar.update(self.state.epoch)

        if self.verbose:
            pbar.finish()
        self.genotype = self.select_genotype()
        logger.info("derived genotype [%s]", self.genotype)

        if child_results_queue is not None:
            child_results_queue.put(pickle.dumps(self))
        return self.genotype


def run_search(config, net_config, cube, train_pixels, val_pixels, checkpoint_dir=None, verbose=False):
    """
    Runs a complete search; see SearchAgent.

    :rtype: (Genotype, [dict])
    :returns: the derived genotype and the per-epoch history
    """
    agent = SearchAgent(config, net_config, cube, train_pixels, val_pixels, checkpoint_dir=checkpoint_dir,
                        verbose=verbose)
    return agent.start(), agent.history
