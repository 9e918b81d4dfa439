import numpy as np

from .exception import InvalidArgumentException


class ConfusionMatrix:
    """
    K x K confusion counts; rows are true classes, columns predicted classes.

    :type num_classes: int
    :param num_classes: K
    """

    def __init__(self, num_classes, counts=None):
        if num_classes < 1:
            raise InvalidArgumentException(f"confusion matrix needs at least one class, got {num_classes}")
        self.num_classes = num_classes
        if counts is None:
            self.counts = np.zeros((num_classes, num_classes), dtype=np.uint64)
        else:
            counts = np.asarray(counts)
            if counts.shape != (num_classes, num_classes) or (counts < 0).any():
                raise InvalidArgumentException(f"counts must be a non-negative {num_classes}x{num_classes} matrix")
            self.counts = counts.astype(np.uint64)

    @classmethod
    def from_counts(cls, counts):
        counts = np.asarray(counts)
        return cls(counts.shape[0], counts)

    def _check(self, label):
        if not 0 <= label < self.num_classes:
            raise InvalidArgumentException(f"label {label} outside [0, {self.num_classes})")

    def accumulate(self, true_label, predicted):
        """
        Counts one (true, predicted) pair.

        :raise: InvalidArgumentException for a label outside [0, K)
        """
        self._check(true_label)
        self._check(predicted)
        self.counts[true_label, predicted] += np.uint64(1)
        return self

    def accumulate_batch(self, true_labels, predicted):
        for t, p in zip(true_labels, predicted):
            self.accumulate(int(t), int(p))
        return self

    def merge(self, other):
        """
        Adds another shard's counts.

        :rtype: ConfusionMatrix
        :returns: a new matrix
        """
        if other.num_classes != self.num_classes:
            raise InvalidArgumentException(f"cannot merge {self.num_classes}- and {other.num_classes}-class matrices")
        return ConfusionMatrix(self.num_classes, self.counts + other.counts)

    @property
    def total(self):
        return int(self.counts.sum())

    def to_csv(self):
        """
        Gets the counts as comma-separated rows (true class per row), header "true\\pred,0,1,...".
        """
        lines = ['true\\pred,' + ','.join(str(k) for k in range(self.num_classes))]
        for k, row in enumerate(self.counts):
            lines.append(f"{k}," + ','.join(str(int(c)) for c in row))
        return '\n'.join(lines) + '\n'

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)


class MetricsReport:
    """
    Classification quality of a confusion matrix, stored as unit-interval values.

    :type oa: float
    :param oa: overall accuracy, trace / total

    :type aa: float
    :param aa: mean recall over classes with at least one true sample

    :type kappa: float
    :param kappa: Cohen's kappa

    :type per_class: [float]
    :param per_class: recall per class, nan for classes without true samples

    :type total: int
    :param total: number of counted samples

    :type confusion: ConfusionMatrix
    :param confusion: the underlying counts
    """

    def __init__(self, oa, aa, kappa, per_class, total, confusion):
        self.oa = oa
        self.aa = aa
        self.kappa = kappa
        self.per_class = per_class
        self.total = total
        self.confusion = confusion

    def to_text(self, class_names=None):
        """
        One metric per line, x100 with two decimals:

        oa 97.17
        aa 97.05
        kappa 96.73
        per_class 1 <name> 98.00
        """
        lines = [f"oa {self.oa * 100:.2f}", f"aa {self.aa * 100:.2f}", f"kappa {self.kappa * 100:.2f}"]
        for k, recall in enumerate(self.per_class):
            name = class_names[k] if class_names else f"class{k + 1}"
            value = 'n/a' if np.isnan(recall) else f"{recall * 100:.2f}"
            lines.append(f"per_class {k + 1} {name} {value}")
        return '\n'.join(lines) + '\n'

    def __str__(self):
        return f"OA {self.oa * 100:.2f}, AA {self.aa * 100:.2f}, Kappa {self.kappa * 100:.2f} (n={self.total})"


def compute_metrics(confusion):
    """
    Computes OA, AA and Cohen's kappa.

    pe = sum_k row_k * col_k / total^2 and kappa = (oa - pe) / (1 - pe); when pe == 1 kappa is 1
    if oa == 1 and 0 otherwise.

    :type confusion: ConfusionMatrix | array_like

    :raise: InvalidArgumentException if the matrix is empty

    :rtype: MetricsReport
    """
    if not isinstance(confusion, ConfusionMatrix):
        confusion = ConfusionMatrix.from_counts(confusion)
    counts = confusion.counts.astype(np.float64)
    total = counts.sum()
    if total == 0:
        raise InvalidArgumentException("cannot compute metrics of an empty confusion matrix")

    rows = counts.sum(axis=1)
    cols = counts.sum(axis=0)
    oa = float(np.trace(counts) / total)
    with np.errstate(divide='ignore', invalid='ignore'):
        per_class = np.where(rows > 0, np.diag(counts) / rows, np.nan)
    aa = float(np.mean(per_class[rows > 0]))
    chance = (rows * cols).sum()
    if chance == total * total:
        kappa = 1.0 if oa == 1.0 else 0.0
    else:
        # (oa - pe) / (1 - pe) scaled by total^2, exact for integer counts
        kappa = float((total * np.trace(counts) - chance) / (total * total - chance))
    return MetricsReport(oa, aa, kappa, [float(r) for r in per_class], int(total), confusion)
