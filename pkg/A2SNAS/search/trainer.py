import logging
import pickle
import sys

import numpy as np
from progressbar import Bar, ETA, ProgressBar, RotatingMarker

from . import checkpoint as checkpoint_io
from .history import BASE_COLUMNS
from .optimizers import Adam, exponential_lr
from .state import TrainState
from ..data import batch_iter, iter_patch_batches
from ..metrics import ConfusionMatrix, compute_metrics
from ..network import ForwardContext, build_compact
from ..tensor import ParameterKind, Rng, Tape, derive_seed
from ..tensor import ops

logger = logging.getLogger(__name__)

EVAL_BATCH_SIZE = 64


def epoch_progress_bar(epochs):
    """
    Starts a progress bar over epochs on stderr.

    :rtype: ProgressBar
    """
    widgets = [Bar(marker=RotatingMarker()), ' ', ETA()]
    return ProgressBar(widgets=widgets, maxval=max(epochs, 1), fd=sys.stderr).start()


def weight_step(net, batch, optimizer, lr):
    """
    One Adam step of the network weights on a training batch; architecture logits stay frozen.

    :type net: Supernet | CompactNet
    :type batch: (Tensor, [int])
    :type optimizer: Adam
    :type lr: float

    :rtype: float
    :returns: batch loss before the step
    """
    x, labels = batch
    tape = Tape(kinds=(ParameterKind.WEIGHT,), owner='weight step')
    ctx = ForwardContext(tape, track_running=True)
    loss = ops.cross_entropy(net(x, ctx), labels)
    optimizer.step(tape.backward(loss, net.weight_parameters()), lr=lr)
    return loss.item()


def predict(model, cube, pixels, batch_size=EVAL_BATCH_SIZE):
    """
    Predicts 0-based classes of pixels with the eval-mode forward (running batch-norm statistics).

    :rtype: np.ndarray
    """
    ctx = ForwardContext.evaluation()
    predictions = [np.argmax(model(x, ctx).data, axis=1)
                   for x in iter_patch_batches(pixels, cube, batch_size, model.config.patch_size)]
    return np.concatenate(predictions) if predictions else np.zeros(0, dtype=np.int64)


def validate(model, cube, pixels, batch_size=EVAL_BATCH_SIZE):
    """
    Computes the mean eval-mode loss and the confusion matrix of labeled pixels.

    :rtype: (float, ConfusionMatrix)
    """
    ctx = ForwardContext.evaluation()
    confusion = ConfusionMatrix(model.config.num_classes)
    weighted_loss = 0.0
    for x, labels in batch_iter(pixels, cube, batch_size, shuffle=False, patch_size=model.config.patch_size):
        logits = model(x, ctx)
        weighted_loss += ops.cross_entropy(logits, labels).item() * len(labels)
        confusion.accumulate_batch(labels, np.argmax(logits.data, axis=1))
    return weighted_loss / max(len(pixels), 1), confusion


def evaluate(model, cube, pixels, batch_size=EVAL_BATCH_SIZE):
    """
    Evaluates a model on a split.

    :type model: Supernet | CompactNet
    :type cube: HsiCube

    :type pixels: [(int, int)]
    :param pixels: labeled pixels, must not be empty

    :rtype: MetricsReport
    """
    _, confusion = validate(model, cube, pixels, batch_size)
    return compute_metrics(confusion)


class CompactTrainer:
    """
    Retrains a derived compact network from scratch and keeps its best epoch.

    :type genotype: Genotype
    :param genotype: architecture to train

    :type net_config: SupernetConfig
    :param net_config: macro configuration, must match the genotype's fingerprint

    :type config: SearchConfig
    :param config: optimization settings (retrain_epochs, batch_size, w_lr, w_lr_decay, seed)

    :type cube: HsiCube
    :param cube: (normalized) data cube

    :type train_pixels: [(int, int)]
    :param train_pixels: training split

    :type val_pixels: [(int, int)]
    :param val_pixels: validation split used for model selection

    :type checkpoint_dir: Path | str
    :param checkpoint_dir: if given, the best epoch is saved there

    :type verbose: bool
    :param verbose: if true parameters are logged and a progress bar is shown
    """

    def __init__(self, genotype, net_config, config, cube, train_pixels, val_pixels, checkpoint_dir=None,
                 verbose=False):
        self.genotype = genotype
        self.config = config
        self.cube = cube
        self.train_pixels = list(train_pixels)
        self.val_pixels = list(val_pixels)
        self.checkpoint_dir = checkpoint_dir
        self.verbose = verbose

        self.rng = Rng(config.seed)
        self.net = build_compact(genotype, net_config, self.rng.spawn('compact'))
        self.state = TrainState(Adam(self.net.weight_parameters(), lr=config.w_lr))

        # results
        self.best_epoch = None
        self.best_val_oa = None
        self._best_weights = None

    def train_epoch(self):
        """
        Runs one epoch of weight steps followed by validation.

        :rtype: dict
        :returns: the epoch's history row
        """
        epoch = self.state.epoch
        lr = exponential_lr(self.config.w_lr, self.config.w_lr_decay, epoch)
        losses = []
        for batch in batch_iter(self.train_pixels, self.cube, self.config.batch_size,
                                seed=derive_seed(self.config.seed, f"train.epoch{epoch}"),
                                patch_size=self.net.config.patch_size):
            losses.append((weight_step(self.net, batch, self.state.weight_optimizer, lr), len(batch[1])))
            self.state.step += 1
        val_loss, confusion = validate(self.net, self.cube, self.val_pixels)
        row = {
            'epoch': epoch,
            'train_loss': sum(l * n for l, n in losses) / max(sum(n for _, n in losses), 1),
            'val_loss': val_loss,
            'val_oa': compute_metrics(confusion).oa if confusion.total else 0.0,
        }
        self.state.history.append(row)
        self.state.epoch += 1
        logger.debug("retrain epoch %d: lr %.3g, train loss %.4f, val loss %.4f, val OA %.4f",
                     epoch, lr, row['train_loss'], val_loss, row['val_oa'])

        if self.best_val_oa is None or row['val_oa'] > self.best_val_oa:
            self.best_epoch = epoch
            self.best_val_oa = row['val_oa']
            self._best_weights = self.net.store.state()
            if self.checkpoint_dir is not None:
                checkpoint_io.save_checkpoint(self.checkpoint_dir, self.net, self.state,
                                              metrics={'val_oa': row['val_oa'], 'best_epoch': epoch},
                                              rng_state=self.rng.state(), history_columns=BASE_COLUMNS)
        return row

    def start(self, child_results_queue=None):
        """
        Trains for the remaining epochs and restores the best epoch's weights.

        :type child_results_queue: multiprocessing.Queue
        :param child_results_queue: if given, the pickled agent is put on it when done

        :rtype: CompactNet
        :returns: the trained network
        """
        epochs = self.config.retrain_epochs
        if self.verbose:
            logger.info("Retraining compact network [%s]", self.genotype)
            logger.info("Parameters: retrain_epochs = %d, batch_size = %d, w_lr = %g, w_lr_decay = %g, seed = %d",
                        epochs, self.config.batch_size, self.config.w_lr, self.config.w_lr_decay, self.config.seed)
            logger.info("train pixels = %d, val pixels = %d", len(self.train_pixels), len(self.val_pixels))
            pbar = epoch_progress_bar(epochs)

        while self.state.epoch < epochs:
            self.train_epoch()
            if self.verbose:
                pbar.update(self.state.epoch)

        if self.verbose:
            pbar.finish()
        if self._best_weights is not None:
            self.net.store.load_state(self._best_weights)
            logger.info("best val OA %.4f at epoch %d", self.best_val_oa, self.best_epoch)

        if child_results_queue is not None:
            child_results_queue.put(pickle.dumps(self))
        return self.net


def train_compact(genotype, net_config, config, cube, train_pixels, val_pixels, checkpoint_dir=None, verbose=False):
    """
    Retrains a compact network; see CompactTrainer.

    :rtype: CompactTrainer
    :returns: the finished trainer (net, history and best epoch)
    """
    trainer = CompactTrainer(genotype, net_config, config, cube, train_pixels, val_pixels,
                             checkpoint_dir=checkpoint_dir, verbose=verbose)
    trainer.start()
    return trainer
