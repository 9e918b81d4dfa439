import json
import logging
from collections import namedtuple
from enum import Enum
from pathlib import Path

import numpy as np

from .exception import CubeFormatException, InvalidArgumentException, SplitException
from .tensor import Rng, Tensor

logger = logging.getLogger(__name__)

DTYPE_TAG = 'f32le'
META_FILE = 'meta'
CUBE_FILE = 'cube.f32'
LABELS_FILE = 'labels.u16'
NORMALIZE_EPSILON = 1e-8


class HsiCube:
    """
    Hyperspectral cube with its ground-truth label map.

    :type data: array_like
    :param data: bands x height x width reflectances, stored as 32-bit floats

    :type labels: array_like
    :param labels: height x width class labels, 0 = unlabeled, 1..K = class

    :type class_names: [str]
    :param class_names: names of classes 1..K
    """

    def __init__(self, data, labels, class_names):
        self.data = np.ascontiguousarray(data, dtype=np.float32)
        "3d nparray of shape (bands, height, width)"

        self.labels = np.ascontiguousarray(labels, dtype=np.uint16)
        "2d nparray of shape (height, width)"

        self.class_names = list(class_names)

        if self.data.ndim != 3:
            raise CubeFormatException(f"cube data must be 3-dimensional, got shape {self.data.shape}")
        if self.labels.shape != self.data.shape[1:]:
            raise CubeFormatException(f"label map shape {self.labels.shape} does not match "
                                      f"cube spatial shape {self.data.shape[1:]}")
        if self.labels.size and int(self.labels.max()) > self.num_classes:
            raise CubeFormatException(f"label {int(self.labels.max())} exceeds number of classes {self.num_classes}")

    @property
    def bands(self):
        return self.data.shape[0]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]

    @property
    def num_classes(self):
        return len(self.class_names)

    def labeled_pixels(self):
        """
        Gets every labeled pixel in row-major order.

        :rtype: [(int, int)]
        """
        return [tuple(int(i) for i in p) for p in np.argwhere(self.labels > 0)]

    def __eq__(self, other):
        return isinstance(other, HsiCube) \
               and np.array_equal(self.data, other.data) \
               and np.array_equal(self.labels, other.labels) \
               and self.class_names == other.class_names

    def __str__(self):
        counts = np.bincount(self.labels.reshape(-1), minlength=self.num_classes + 1)
        result = f"bands = {self.bands}\n" \
                 f"height = {self.height}\n" \
                 f"width = {self.width}\n" \
                 f"classes = {self.num_classes}\n" \
                 f"unlabeled pixels = {counts[0]}\n"
        for k, name in enumerate(self.class_names, start=1):
            result += f"{k} {name}: {counts[k]}\n"
        return result


"""
Container format
"""


def save_cube(cube, directory):
    """
    Writes a cube directory: meta (JSON), cube.f32 (little-endian floats, band-major) and
    labels.u16 (little-endian, row-major).

    :type cube: HsiCube
    :type directory: Path | str

    :returns: None
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        'bands': cube.bands,
        'height': cube.height,
        'width': cube.width,
        'dtype': DTYPE_TAG,
        'num_classes': cube.num_classes,
        'class_names': cube.class_names,
    }
    (directory / META_FILE).write_text(json.dumps(meta, indent=2, sort_keys=True) + '\n', encoding='utf-8')
    (directory / CUBE_FILE).write_bytes(cube.data.astype('<f4').tobytes())
    (directory / LABELS_FILE).write_bytes(cube.labels.astype('<u2').tobytes())


def _meta_int(meta, key):
    value = meta.get(key)
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise CubeFormatException(f"meta field '{key}' must be a positive integer, got {value!r}")
    return value


def load_cube(directory):
    """
    Reads a cube directory written by save_cube().

    :type directory: Path | str

    :raise: CubeFormatException for a missing file, an unknown dtype tag, a size mismatch against
            meta or a label greater than num_classes

    :rtype: HsiCube
    """
    directory = Path(directory)
    for name in (META_FILE, CUBE_FILE, LABELS_FILE):
        if not (directory / name).is_file():
            raise CubeFormatException(f"{directory / name} does not exist")
    try:
        meta = json.loads((directory / META_FILE).read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise CubeFormatException(f"{directory / META_FILE} is not valid JSON: {e.msg}") from None
    if not isinstance(meta, dict):
        raise CubeFormatException(f"{directory / META_FILE} must hold an object")
    if meta.get('dtype') != DTYPE_TAG:
        raise CubeFormatException(f"unknown dtype tag {meta.get('dtype')!r}, expected '{DTYPE_TAG}'")

    bands, height, width = (_meta_int(meta, key) for key in ('bands', 'height', 'width'))
    class_names = meta.get('class_names')
    if not isinstance(class_names, list) or len(class_names) != meta.get('num_classes'):
        raise CubeFormatException("meta class_names must list exactly num_classes names")

    raw = (directory / CUBE_FILE).read_bytes()
    if len(raw) != 4 * bands * height * width:
        raise CubeFormatException(f"{CUBE_FILE} holds {len(raw)} bytes, expected 4*{bands}*{height}*{width} = "
                                  f"{4 * bands * height * width}")
    raw_labels = (directory / LABELS_FILE).read_bytes()
    if len(raw_labels) != 2 * height * width:
        raise CubeFormatException(f"{LABELS_FILE} holds {len(raw_labels)} bytes, expected {2 * height * width}")

    data = np.frombuffer(raw, dtype='<f4').reshape(bands, height, width)
    labels = np.frombuffer(raw_labels, dtype='<u2').reshape(height, width)
    return HsiCube(data, labels, [str(name) for name in class_names])


def normalize_bands(cube):
    """
    Per-band z-score over all pixels: x' = (x - mean_b) / (std_b + 1e-8).

    :rtype: HsiCube
    :returns: a new cube; labels are unchanged
    """
    data = cube.data.astype(np.float64)
    mean = data.mean(axis=(1, 2), keepdims=True)
    std = data.std(axis=(1, 2), keepdims=True)
    return HsiCube((data - mean) / (std + NORMALIZE_EPSILON), cube.labels, cube.class_names)


"""
Patches
"""

Patch = namedtuple('Patch', 'center tensor label')


def mirror_indices(indices, n):
    """
    Reflects indices into [0, n) about the borders without repeating the edge (-1 -> 1, n -> n - 2).
    """
    indices = np.asarray(indices)
    if n == 1:
        return np.zeros_like(indices)
    period = 2 * (n - 1)
    indices = np.mod(indices, period)
    return np.where(indices >= n, period - indices, indices)


def _check_patch_size(patch_size):
    if patch_size < 1 or patch_size % 2 == 0:
        raise InvalidArgumentException(f"patch size must be a positive odd number, got {patch_size}")


def patch_array(cube, row, col, patch_size):
    """
    Gets the (bands, P, P) mirror-padded window centered at (row, col).
    """
    half = patch_size // 2
    rows = mirror_indices(np.arange(row - half, row + half + 1), cube.height)
    cols = mirror_indices(np.arange(col - half, col + half + 1), cube.width)
    return cube.data[:, rows[:, None], cols[None, :]]


def extract_patch(cube, row, col, patch_size=19):
    """
    Cuts the patch of a labeled pixel.

    :type cube: HsiCube
    :type row: int
    :type col: int

    :type patch_size: int
    :param patch_size: odd spatial extent P

    :raise: InvalidArgumentException for an even P, a center outside the cube or an unlabeled center

    :rtype: Patch
    :returns: center, tensor of shape (1, 1, bands, P, P) and label = class - 1
    """
    _check_patch_size(patch_size)
    if not (0 <= row < cube.height and 0 <= col < cube.width):
        raise InvalidArgumentException(f"pixel ({row}, {col}) outside cube of {cube.height}x{cube.width}")
    label = int(cube.labels[row, col])
    if label == 0:
        raise InvalidArgumentException(f"pixel ({row}, {col}) is unlabeled")
    window = patch_array(cube, row, col, patch_size)
    return Patch((row, col), Tensor(window[None, None]), label - 1)


def batch_iter(pixels, cube, batch_size, seed=0, shuffle=True, patch_size=19):
    """
    Iterates over labeled pixels in batches of patches.

    :type pixels: [(int, int)]
    :param pixels: labeled pixels of a split

    :type batch_size: int
    :param batch_size: maximum batch size; the final batch may be shorter

    :type seed: int
    :param seed: seed of the order; callers derive one per epoch

    :type shuffle: bool
    :param shuffle: if false the pixels are visited in the given order

    :returns: generator of (Tensor [n, 1, bands, P, P], [label])
    """
    _check_patch_size(patch_size)
    if batch_size < 1:
        raise InvalidArgumentException(f"batch size must be >= 1, got {batch_size}")
    order = Rng(seed).permutation(len(pixels)) if shuffle else np.arange(len(pixels))
    for start in range(0, len(pixels), batch_size):
        chosen = [pixels[i] for i in order[start:start + batch_size]]
        patches = []
        labels = []
        for row, col in chosen:
            label = int(cube.labels[row, col])
            if label == 0:
                raise InvalidArgumentException(f"pixel ({row}, {col}) is unlabeled")
            patches.append(patch_array(cube, row, col, patch_size))
            labels.append(label - 1)
        yield Tensor(np.stack(patches)[:, None]), labels


def iter_patch_batches(pixels, cube, batch_size, patch_size=19):
    """
    Iterates over the patches of arbitrary pixels (labeled or not) in the given order.

    :returns: generator of Tensor [n, 1, bands, P, P]
    """
    _check_patch_size(patch_size)
    for start in range(0, len(pixels), batch_size):
        chunk = pixels[start:start + batch_size]
        yield Tensor(np.stack([patch_array(cube, row, col, patch_size) for row, col in chunk])[:, None])


"""
Splits
"""


class SplitMode(Enum):
    PER_CLASS_COUNTS = 'per_class_counts'
    TOTAL_BUDGET = 'total_budget'


class SplitSpec:
    """
    Sampling protocol of a train/val/test split.

    :type mode: SplitMode | str
    :param mode: PER_CLASS_COUNTS takes fixed counts per class; TOTAL_BUDGET samples a stratified
                 budget and splits it into train/val by train_fraction

    :type train_per_class: int
    :param train_per_class: training pixels per class (per-class mode)

    :type val_per_class: int
    :param val_per_class: validation pixels per class (per-class mode)

    :type total: int
    :param total: number of sampled pixels (budget mode)

    :type train_fraction: float
    :param train_fraction: share of each class's budget that goes to train (budget mode)

    :type seed: int
    :param seed: shuffle seed
    """

    def __init__(self, mode=SplitMode.PER_CLASS_COUNTS, train_per_class=50, val_per_class=30, total=610,
                 train_fraction=0.5, seed=0):
        self.mode = SplitMode(mode)
        self.train_per_class = train_per_class
        self.val_per_class = val_per_class
        self.total = total
        self.train_fraction = train_fraction
        self.seed = seed

        if self.mode is SplitMode.PER_CLASS_COUNTS:
            if train_per_class < 1 or val_per_class < 1:
                raise SplitException(f"per-class counts must be >= 1, got train={train_per_class}, "
                                     f"val={val_per_class}")
        else:
            if total < 1:
                raise SplitException(f"budget must be >= 1, got {total}")
            if not 0 < train_fraction < 1:
                raise SplitException(f"train_fraction must be in (0, 1), got {train_fraction}")

    def __repr__(self):
        if self.mode is SplitMode.PER_CLASS_COUNTS:
            return f"SplitSpec(per_class_counts, train={self.train_per_class}, val={self.val_per_class}, " \
                   f"seed={self.seed})"
        return f"SplitSpec(total_budget, total={self.total}, train_fraction={self.train_fraction}, seed={self.seed})"


Splits = namedtuple('Splits', 'train val test')


def allocate_budget(counts, total):
    """
    Stratified proportional allocation with largest-remainder rounding.

    Every class receives at least 1 and at most its pixel count; the allocation sums to total.

    :type counts: [int]
    :param counts: labeled pixels per class

    :type total: int
    :param total: budget, K <= total <= sum(counts)

    :raise: SplitException if the budget cannot be met

    :rtype: [int]
    """
    counts = np.asarray(counts, dtype=np.int64)
    if total < len(counts):
        raise SplitException(f"budget {total} is smaller than the number of classes {len(counts)}")
    if total > counts.sum():
        raise SplitException(f"budget {total} exceeds the {int(counts.sum())} labeled pixels")

    quotas = total * counts / counts.sum()
    allocation = np.minimum(np.maximum(np.floor(quotas).astype(np.int64), 1), counts)
    remainders = quotas - np.floor(quotas)

    # largest remainder first, ties to the lowest class
    by_remainder = sorted(range(len(counts)), key=lambda k: (-remainders[k], k))
    while allocation.sum() < total:
        for k in by_remainder:
            if allocation.sum() == total:
                break
            if allocation[k] < counts[k]:
                allocation[k] += 1
    while allocation.sum() > total:
        k = min((k for k in range(len(counts)) if allocation[k] > 1), key=lambda k: (quotas[k] - allocation[k], k))
        allocation[k] -= 1
    return [int(a) for a in allocation]


def make_splits(labels, spec):
    """
    Splits the labeled pixels into disjoint train, val and test lists.

    Classes are visited in ascending order; each class's pixels (row-major) are shuffled with
    their own sub-stream of spec.seed.

    per_class_counts: take train then val counts, the rest is test; a class with fewer than
    train + val + 1 pixels uses floor(n / 2) train and floor(n / 4) val instead.
    total_budget: allocate the budget over classes (allocate_budget), then round
    allocation * train_fraction half up for train (keeping at least one pixel for each of train
    and val where the allocation allows it); the remainder of the allocation is val, the rest test.

    :type labels: np.ndarray
    :param labels: height x width label map

    :type spec: SplitSpec

    :raise: SplitException if no pixel is labeled or the budget cannot be met

    :rtype: Splits
    """
    labels = np.asarray(labels)
    classes = [int(k) for k in np.unique(labels) if k != 0]
    if not classes:
        raise SplitException("label map contains no labeled pixels")

    rng = Rng(spec.seed)
    shuffled = []
    for k in classes:
        pixels = [tuple(int(i) for i in p) for p in np.argwhere(labels == k)]
        order = rng.spawn(f"split.class{k}").permutation(len(pixels))
        shuffled.append([pixels[i] for i in order])

    if spec.mode is SplitMode.PER_CLASS_COUNTS:
        sizes = []
        for pixels in shuffled:
            n = len(pixels)
            if n >= spec.train_per_class + spec.val_per_class + 1:
                sizes.append((spec.train_per_class, spec.val_per_class))
            else:
                sizes.append((n // 2, n // 4))
    else:
        allocation = allocate_budget([len(p) for p in shuffled], spec.total)
        sizes = []
        for a in allocation:
            n_train = int(np.floor(a * spec.train_fraction + 0.5))
            if a >= 2:
                n_train = min(max(n_train, 1), a - 1)
            sizes.append((n_train, a - n_train))

    train, val, test = [], [], []
    for k, pixels, (n_train, n_val) in zip(classes, shuffled, sizes):
        train += pixels[:n_train]
        val += pixels[n_train:n_train + n_val]
        test += pixels[n_train + n_val:]
        logger.debug("class %d: %d train, %d val, %d test", k, n_train, n_val, len(pixels) - n_train - n_val)
    return Splits(train, val, test)


"""
Synthetic data
"""


def gen_synthetic(num_classes, bands, height, width, noise=0.1, seed=0, bump_width=None):
    """
    Generates a separable synthetic cube.

    The scene is partitioned into num_classes Voronoi cells around distinct seeded pixels (ties go
    to the lower cell). Class k's spectrum is a Gaussian bump centered at (k + 0.5) * bands / K;
    every pixel is its class spectrum plus Normal(0, noise) noise, and every pixel is labeled.

    :type num_classes: int
    :param num_classes: K >= 2

    :type noise: float
    :param noise: standard deviation of the additive noise

    :type bump_width: float
    :param bump_width: Gaussian width, defaults to bands / (2K)

    :rtype: HsiCube
    """
    if num_classes < 2:
        raise InvalidArgumentException(f"synthetic cubes need at least 2 classes, got {num_classes}")
    if min(bands, height, width) < 1 or height * width < num_classes:
        raise InvalidArgumentException(f"cannot place {num_classes} classes in a {bands}x{height}x{width} cube")
    rng = Rng(seed)

    sites = rng.spawn('synthetic.sites').permutation(height * width)[:num_classes]
    site_rows, site_cols = np.divmod(sites, width)
    rows, cols = np.mgrid[0:height, 0:width]
    distances = (rows[None] - site_rows[:, None, None]) ** 2 + (cols[None] - site_cols[:, None, None]) ** 2
    labels = np.argmin(distances, axis=0) + 1

    templates = spectral_templates(num_classes, bands, bump_width)
    data = templates[labels - 1].transpose(2, 0, 1)
    if noise > 0:
        data = data + rng.spawn('synthetic.noise').normal((bands, height, width), std=noise)
    return HsiCube(data, labels, [f"class{k}" for k in range(1, num_classes + 1)])


def spectral_templates(num_classes, bands, bump_width=None):
    """
    Gets the noise-free class spectra of gen_synthetic() as a (K, bands) array.
    """
    width = bands / (2 * num_classes) if bump_width is None else bump_width
    centers = (np.arange(num_classes) + 0.5) * bands / num_classes
    b = np.arange(bands)
    return np.exp(-(b[None, :] - centers[:, None]) ** 2 / (2 * width ** 2))
