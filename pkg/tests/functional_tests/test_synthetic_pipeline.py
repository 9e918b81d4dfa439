import math
import time
import unittest

import numpy as np

from A2SNAS import SearchConfig, Solver, SplitSpec, gen_synthetic, make_splits
from A2SNAS.data import SplitMode
from A2SNAS.network import NUM_BLOCKS, INNER_OPS, OUTER_OPS, load_genotype, save_genotype
from A2SNAS.search import load_checkpoint
from tests.util import nearest_template_accuracy, new_tmp_dir, rm_tree


def _small_solver(seed=0):
    cube = gen_synthetic(3, 8, 12, 12, noise=0.05, seed=seed)
    config = SearchConfig(search_epochs=2, retrain_epochs=2, batch_size=8, seed=seed)
    return Solver(cube, config, patch_size=5, stem_channels=2)


class TestSyntheticPipeline(unittest.TestCase):

    def setUp(self) -> None:
        self.tmp_dir = new_tmp_dir()

    def tearDown(self) -> None:
        rm_tree(self.tmp_dir)

    def _run(self, name):
        solver = _small_solver()
        labels = solver.cube.labels
        search = make_splits(labels, SplitSpec(SplitMode.TOTAL_BUDGET, total=24, train_fraction=0.5, seed=1))
        evaluation = make_splits(labels, SplitSpec(SplitMode.PER_CLASS_COUNTS, 6, 3, seed=2))

        genotype = solver.search(search.train, search.val, checkpoint_dir=self.tmp_dir / name / 'supernet')
        solver.train(evaluation.train, evaluation.val, checkpoint_dir=self.tmp_dir / name / 'compact')
        report = solver.evaluate(evaluation.test)
        return solver, genotype, report

    def test_search_train_evaluate(self):
        solver, genotype, report = self._run('first')

        self.assertEqual(NUM_BLOCKS, len(genotype.choices))
        for outer, inner in genotype.choices:
            self.assertIn(outer, OUTER_OPS)
            self.assertIn(inner, INNER_OPS)
        self.assertEqual(2, len(solver.search_agent.history))
        self.assertEqual(2, len(solver.trainer.state.history))
        for value in (report.oa, report.aa, report.kappa):
            self.assertFalse(math.isnan(value))
            self.assertLessEqual(value, 1.0)
        self.assertTrue(0.0 <= report.oa and 0.0 <= report.aa)
        self.assertEqual(genotype, load_checkpoint(self.tmp_dir / 'first' / 'compact').genotype)

        save_genotype(genotype, self.tmp_dir / 'genotype')
        self.assertEqual(genotype, load_genotype(self.tmp_dir / 'genotype'))

        grid = solver.predict_map()
        self.assertEqual(solver.cube.labels.shape, grid.shape)
        self.assertTrue(set(np.unique(grid).tolist()) <= {1, 2, 3})

    def test_rerun_is_identical(self):
        _, genotype, report = self._run('first')
        _, genotype_again, report_again = self._run('second')
        self.assertEqual(genotype, genotype_again)
        self.assertEqual(report.confusion, report_again.confusion)
        for directory in ('supernet', 'compact'):
            for path in sorted((self.tmp_dir / 'first' / directory).iterdir()):
                self.assertEqual(path.read_bytes(), (self.tmp_dir / 'second' / directory / path.name).read_bytes(),
                                 msg=f"{directory}/{path.name}")

    def test_multi_seed_search(self):
        solver = _small_solver()
        solver.config = SearchConfig(search_epochs=1, retrain_epochs=1, batch_size=8)
        splits = make_splits(solver.cube.labels, SplitSpec(SplitMode.TOTAL_BUDGET, total=24, seed=1))
        genotype = solver.search_multi_seed([3, 4], splits.train, splits.val)

        self.assertEqual([3, 4], [agent.config.seed for agent in solver.search_agent_list])
        self.assertIn(solver.search_agent, solver.search_agent_list)
        self.assertEqual(genotype, solver.search_agent.genotype)
        best = max(agent.history[-1]['val_oa'] for agent in solver.search_agent_list)
        self.assertEqual(best, solver.search_agent.history[-1]['val_oa'])


class TestAcceptance(unittest.TestCase):
    """
    Desk-scale synthetic run: 5 classes, 32 bands, 64x64 pixels, 20 search and 30 retraining epochs
    of a network with 4 stem channels on 7x7 patches.
    """

    TIME_LIMIT = 20 * 60

    def test_synthetic_accuracy(self):
        cube = gen_synthetic(5, 32, 64, 64, noise=0.1, seed=0)
        self.assertGreaterEqual(nearest_template_accuracy(cube), 0.99)

        started = time.perf_counter()
        solver = Solver(cube, SearchConfig(search_epochs=20, retrain_epochs=30, seed=0), patch_size=7,
                        stem_channels=4)
        search = make_splits(cube.labels, SplitSpec(SplitMode.TOTAL_BUDGET, total=300, train_fraction=0.5, seed=1))
        evaluation = make_splits(cube.labels, SplitSpec(SplitMode.PER_CLASS_COUNTS, 25, 10, seed=2))

        solver.search(search.train, search.val)
        solver.train(evaluation.train, evaluation.val)
        report = solver.evaluate(evaluation.test)
        elapsed = time.perf_counter() - started

        self.assertGreaterEqual(report.oa, 0.95)
        self.assertLessEqual(elapsed, self.TIME_LIMIT)


if __name__ == '__main__':
    unittest.main()
