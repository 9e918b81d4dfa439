"""
Per-epoch history tables (comma-separated).

Search tables hold epoch, train_loss, val_loss, val_oa and then the softmax weights of every
block's outer and inner candidates, e.g. "b0.outer.no_pool" ... "b5.inner.k5d2", and last the
genotype derived at the end of the epoch in its one-line form.
"""
import csv
import io

from ..network.a2sconv import INNER_OPS, OUTER_OPS
from ..network.genotype import NUM_BLOCKS

BASE_COLUMNS = ('epoch', 'train_loss', 'val_loss', 'val_oa')
GENOTYPE_COLUMN = 'genotype'


def arch_columns():
    columns = []
    for block in range(NUM_BLOCKS):
        columns += [f"b{block}.outer.{op.token}" for op in OUTER_OPS]
        columns += [f"b{block}.inner.{op.token}" for op in INNER_OPS]
    return columns


def search_columns():
    return list(BASE_COLUMNS) + arch_columns() + [GENOTYPE_COLUMN]


def _format(value):
    if isinstance(value, str):
        return value
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def to_csv(history, columns):
    """
    Serializes history rows; floats are written with repr() so they read back exactly.

    :type history: [dict]
    :type columns: [str]

    :rtype: str
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(columns)
    for row in history:
        writer.writerow([_format(row[c]) for c in columns])
    return buffer.getvalue()


def from_csv(text):
    """
    Parses a table written by to_csv(); 'epoch' is read as int, 'genotype' as str, every other
    column as float.

    :rtype: [dict]
    """
    reader = csv.DictReader(io.StringIO(text))
    return [{key: _parse(key, value) for key, value in row.items()} for row in reader]


def _parse(key, value):
    if key == 'epoch':
        return int(value)
    if key == GENOTYPE_COLUMN:
        return value
    return float(value)
