import unittest

from A2SNAS._report_creator import create_report_xlsx_file
from A2SNAS.metrics import compute_metrics
from A2SNAS.network import Genotype, InnerOp, OuterOp
from tests.util import new_tmp_dir, rm_tree

GENOTYPE = Genotype([(OuterOp.SPECTRAL_POOL, InnerOp.K3D1)] * 6,
                    {'bands': 32, 'num_classes': 2, 'patch_size': 19, 'stem_channels': 16})


class TestReport(unittest.TestCase):

    def setUp(self) -> None:
        self.tmp_dir = new_tmp_dir()
        self.output_file = self.tmp_dir / 'test_output'
        self.report = compute_metrics([[3, 1], [0, 0]])

    def tearDown(self) -> None:
        rm_tree(self.tmp_dir)

    def test_create_report_xlsx(self):
        # test without suffix
        path = create_report_xlsx_file(self.report, self.output_file)
        self.assertEqual(self.output_file.with_suffix('.xlsx'), path)
        self.assertTrue(path.exists())

        # test with suffix
        path.unlink()
        create_report_xlsx_file(self.report, path, class_names=['corn', 'grass'], genotype=GENOTYPE)
        self.assertTrue(path.exists())

        # test as string
        path.unlink()
        create_report_xlsx_file(self.report, str(path))
        self.assertTrue(path.exists())

    def test_creates_parent_directory(self):
        path = create_report_xlsx_file(self.report, self.tmp_dir / 'nested' / 'dir' / 'report.xlsx')
        self.assertTrue(path.exists())


if __name__ == '__main__':
    unittest.main()
