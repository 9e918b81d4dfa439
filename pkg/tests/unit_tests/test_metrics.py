import math
import unittest

import numpy as np

from A2SNAS.exception import InvalidArgumentException
from A2SNAS.metrics import ConfusionMatrix, compute_metrics


def _brute_force(counts):
    k = len(counts)
    total = sum(sum(row) for row in counts)
    correct = sum(counts[i][i] for i in range(k))
    oa = correct / total
    recalls = [counts[i][i] / sum(counts[i]) for i in range(k) if sum(counts[i]) > 0]
    aa = sum(recalls) / len(recalls)
    pe = sum(sum(counts[i]) * sum(counts[j][i] for j in range(k)) for i in range(k)) / (total * total)
    kappa = (oa - pe) / (1 - pe) if pe != 1 else (1.0 if oa == 1 else 0.0)
    return oa, aa, kappa


class TestMetrics(unittest.TestCase):

    def test_hand_case(self):
        report = compute_metrics([[3, 1], [2, 4]])
        self.assertEqual(0.7, report.oa)
        self.assertAlmostEqual((0.75 + 4 / 6) / 2, report.aa, places=15)
        self.assertEqual(0.4, report.kappa)

    def test_random_matrices_match_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            k = int(rng.integers(2, 9))
            counts = rng.integers(0, 50, size=(k, k))
            counts[0, 0] += 1
            oa, aa, kappa = _brute_force(counts.tolist())
            report = compute_metrics(counts)
            self.assertAlmostEqual(oa, report.oa, delta=1e-12)
            self.assertAlmostEqual(aa, report.aa, delta=1e-12)
            self.assertAlmostEqual(kappa, report.kappa, delta=1e-12)

    def test_perfect_fit(self):
        report = compute_metrics(np.diag([5, 3, 7]))
        self.assertEqual((1.0, 1.0, 1.0), (report.oa, report.aa, report.kappa))
        self.assertIn('oa 100.00\naa 100.00\nkappa 100.00\n', report.to_text())

    def test_single_class_agreement(self):
        report = compute_metrics([[5, 0], [0, 0]])
        self.assertEqual(1.0, report.kappa)
        self.assertEqual(1.0, report.aa)
        self.assertTrue(math.isnan(report.per_class[1]))

    def test_empty_matrix(self):
        with self.assertRaises(InvalidArgumentException):
            compute_metrics(np.zeros((3, 3)))

    def test_to_text(self):
        text = compute_metrics([[3, 1], [0, 0]]).to_text(['corn', 'grass'])
        self.assertEqual('oa 75.00\naa 75.00\nkappa 0.00\nper_class 1 corn 75.00\nper_class 2 grass n/a\n', text)

    def test_accumulate_and_merge(self):
        a = ConfusionMatrix(3).accumulate_batch([0, 1, 2, 2], [0, 2, 2, 1])
        b = ConfusionMatrix(3).accumulate(1, 1)
        merged = a.merge(b)
        self.assertEqual(5, merged.total)
        self.assertEqual(ConfusionMatrix.from_counts([[1, 0, 0], [0, 1, 1], [0, 1, 1]]), merged)
        with self.assertRaises(InvalidArgumentException):
            a.accumulate(3, 0)
        with self.assertRaises(InvalidArgumentException):
            a.merge(ConfusionMatrix(2))

    def test_to_csv(self):
        csv = ConfusionMatrix.from_counts([[3, 1], [2, 4]]).to_csv()
        self.assertEqual('true\\pred,0,1\n0,3,1\n1,2,4\n', csv)


if __name__ == '__main__':
    unittest.main()
