import logging
import multiprocessing as mp
import pickle

import numpy as np

from .data import normalize_bands
from .exception import InvalidArgumentException
from .network import SupernetConfig
from .search import CompactTrainer, SearchAgent, SearchConfig, evaluate, predict

logger = logging.getLogger(__name__)


class Solver:
    """
    The main solver class which runs the architecture search, retrains the derived network
    and evaluates it.

    :type cube: HsiCube
    :param cube: hyperspectral cube with its label map

    :type config: SearchConfig
    :param config: optimization settings

    :type patch_size: int
    :param patch_size: odd spatial patch extent

    :type stem_channels: int
    :param stem_channels: channels of the first stage

    :type normalize: bool
    :param normalize: if true the cube is z-scored per band first
    """

    def __init__(self, cube, config=None, patch_size=19, stem_channels=16, normalize=True):
        self.cube = normalize_bands(cube) if normalize else cube
        self.config = config or SearchConfig()
        self.net_config = SupernetConfig(cube.bands, cube.num_classes, stem_channels=stem_channels,
                                         patch_size=patch_size)

        # results
        self.search_agent = None
        self.search_agent_list = None
        self.genotype = None
        self.trainer = None
        self.model = None

    def search(self, train_pixels, val_pixels, checkpoint_dir=None, resume=False, verbose=False):
        """
        Runs the bi-level search and derives a genotype.

        :type train_pixels: [(int, int)]
        :param train_pixels: search-train split

        :type val_pixels: [(int, int)]
        :param val_pixels: search-val split

        :type checkpoint_dir: Path | str
        :param checkpoint_dir: supernet checkpoint directory, written after every epoch

        :type resume: bool
        :param resume: if true the search continues from the checkpoint in checkpoint_dir

        :type verbose: bool
        :param verbose: if true runs in verbose mode

        :rtype: Genotype
        :returns: the derived genotype
        """
        self.search_agent = SearchAgent(self.config, self.net_config, self.cube, train_pixels, val_pixels,
                                        checkpoint_dir=checkpoint_dir, verbose=verbose)
        if resume:
            if checkpoint_dir is None:
                raise InvalidArgumentException("resume requires a checkpoint directory")
            self.search_agent.resume(checkpoint_dir)
        self.genotype = self.search_agent.start()
        return self.genotype

    def search_multi_seed(self, seeds, train_pixels, val_pixels, verbose=False):
        """
        Runs independent searches, one child process per seed, and keeps the genotype whose
        final validation OA is highest (the earliest seed wins ties).

        :type seeds: [int]
        :param seeds: one seed per search

        :rtype: Genotype
        :returns: the best genotype
        """
        if not seeds:
            raise InvalidArgumentException("at least one seed is required")
        agents = [SearchAgent(SearchConfig(**{**self.config.as_dict(), 'seed': seed}), self.net_config, self.cube,
                              train_pixels, val_pixels)
                  for seed in seeds]

        if verbose:
            logger.info("Running %d searches in parallel, seeds = %s", len(seeds), list(seeds))

        # create child processes to run the searches
        child_results_queue = mp.Queue()
        processes = [mp.Process(target=agent.start, args=[child_results_queue]) for agent in agents]
        for p in processes:
            p.start()
            if verbose:
                logger.info("child search process started. pid = %d", p.pid)

        # collect results from Queue and wait for child processes to finish
        finished = [pickle.loads(child_results_queue.get()) for _ in processes]
        for p in processes:
            p.join()
            if verbose:
                logger.info("child search process finished. pid = %d", p.pid)

        order = {seed: i for i, seed in enumerate(seeds)}
        self.search_agent_list = sorted(finished, key=lambda agent: order[agent.config.seed])
        self.search_agent = max(self.search_agent_list,
                                key=lambda agent: (agent.history[-1]['val_oa'] if agent.history else 0.0,
                                                   -order[agent.config.seed]))
        self.genotype = self.search_agent.genotype
        logger.info("best search: seed %d, genotype [%s]", self.search_agent.config.seed, self.genotype)
        return self.genotype

    def train(self, train_pixels, val_pixels, genotype=None, checkpoint_dir=None, verbose=False):
        """
        Retrains the derived compact network from scratch.

        :type genotype: Genotype
        :param genotype: architecture to train, defaults to the last searched genotype

        :rtype: CompactNet
        :returns: the network restored to its best validation epoch
        """
        genotype = genotype or self.genotype
        if genotype is None:
            raise InvalidArgumentException("no genotype: run search() first or pass one")
        self.trainer = CompactTrainer(genotype, self.net_config, self.config, self.cube, train_pixels, val_pixels,
                                      checkpoint_dir=checkpoint_dir, verbose=verbose)
        self.model = self.trainer.start()
        return self.model

    def evaluate(self, pixels, model=None):
        """
        :rtype: MetricsReport
        """
        return evaluate(self._model(model), self.cube, pixels)

    def predict_map(self, model=None):
        """
        Predicts every labeled pixel of the scene.

        :rtype: np.ndarray
        :returns: height x width grid of classes 1..K, 0 where the scene is unlabeled
        """
        pixels = self.cube.labeled_pixels()
        grid = np.zeros(self.cube.labels.shape, dtype=np.int64)
        if pixels:
            rows, cols = np.array(pixels).T
            grid[rows, cols] = predict(self._model(model), self.cube, pixels) + 1
        return grid

    def _model(self, model):
        model = model or self.model
        if model is None:
            raise InvalidArgumentException("no trained model: run train() first or pass one")
        return model
