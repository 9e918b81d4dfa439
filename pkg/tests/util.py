import tempfile
from pathlib import Path

import numpy as np

from A2SNAS.data import HsiCube, gen_synthetic, spectral_templates

project_root = Path(__file__).parent.parent


def new_tmp_dir():
    return Path(tempfile.mkdtemp())


def rm_tree(pth):
    pth = Path(pth)
    if not pth.exists():
        return
    for child in pth.glob('*'):
        if child.is_file():
            child.unlink()
        else:
            rm_tree(child)
    pth.rmdir()


def tiny_cube(num_classes=3, bands=4, size=8, noise=0.05, seed=0):
    """
    Small fully labeled synthetic cube for fast network tests.
    """
    return gen_synthetic(num_classes, bands, size, size, noise=noise, seed=seed)


def block_label_map(counts, width=60):
    """
    Builds a label map whose class k (1-based) covers exactly counts[k - 1] pixels, laid out
    row-major; the rest of the map is unlabeled.

    :type counts: [int]
    :rtype: np.ndarray
    """
    flat = np.concatenate([np.full(n, k, dtype=np.uint16) for k, n in enumerate(counts, start=1)])
    height = -(-len(flat) // width) + 1
    labels = np.zeros(height * width, dtype=np.uint16)
    labels[:len(flat)] = flat
    return labels.reshape(height, width)


def cube_from_labels(labels, bands=2):
    labels = np.asarray(labels)
    data = np.zeros((bands,) + labels.shape, dtype=np.float32)
    return HsiCube(data, labels, [f"class{k}" for k in range(1, int(labels.max()) + 1)])


"""
Reference kernels (direct loops)
"""


def ref_conv3d(x, w, b=None, stride=(1, 1, 1), dilation=(1, 1, 1), pad=(0, 0, 0)):
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n, ci, *extents = x.shape
    co, _, *kernel = w.shape
    xp = np.pad(x, ((0, 0), (0, 0)) + tuple((p, p) for p in pad))
    out_extents = [(e + 2 * p - d * (k - 1) - 1) // s + 1
                   for e, k, s, d, p in zip(extents, kernel, stride, dilation, pad)]
    out = np.zeros((n, co, *out_extents))
    for batch in range(n):
        for o in range(co):
            for od, oh, ow in np.ndindex(*out_extents):
                acc = 0.0 if b is None else float(b[o])
                for c in range(ci):
                    for kd, kh, kw in np.ndindex(*kernel):
                        acc += w[o, c, kd, kh, kw] * xp[batch, c,
                                                        od * stride[0] + kd * dilation[0],
                                                        oh * stride[1] + kh * dilation[1],
                                                        ow * stride[2] + kw * dilation[2]]
                out[batch, o, od, oh, ow] = acc
    return out


def ref_avg_pool3d(x, kernel):
    x = np.asarray(x, dtype=np.float64)
    n, c, *extents = x.shape
    out_extents = [-(-e // k) for e, k in zip(extents, kernel)]
    out = np.zeros((n, c, *out_extents))
    for od, oh, ow in np.ndindex(*out_extents):
        window = x[:, :,
                   od * kernel[0]:(od + 1) * kernel[0],
                   oh * kernel[1]:(oh + 1) * kernel[1],
                   ow * kernel[2]:(ow + 1) * kernel[2]]
        out[:, :, od, oh, ow] = window.mean(axis=(2, 3, 4))
    return out


def ref_upsample_nearest3d(x, factors, target_shape):
    x = np.asarray(x, dtype=np.float64)
    n, c = x.shape[:2]
    out = np.zeros((n, c, *target_shape))
    for d, h, w in np.ndindex(*target_shape):
        out[:, :, d, h, w] = x[:, :, d // factors[0], h // factors[1], w // factors[2]]
    return out


def ref_batch_norm3d(x, gamma, beta, eps=1e-5):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    for c in range(x.shape[1]):
        values = x[:, c]
        mean = values.mean()
        var = ((values - mean) ** 2).mean()
        out[:, c] = gamma[c] * (values - mean) / np.sqrt(var + eps) + beta[c]
    return out


def ref_classifier_head(x, w, b):
    x = np.asarray(x, dtype=np.float64)
    n, c = x.shape[:2]
    out = np.zeros((n, len(b)))
    for i in range(n):
        for k in range(len(b)):
            out[i, k] = b[k] + sum(w[k, j] * x[i, j].mean() for j in range(c))
    return out


"""
Oracles
"""


def nearest_template_accuracy(cube, bump_width=None):
    """
    Accuracy of assigning every labeled pixel to the class whose noise-free synthetic spectrum
    is closest in Euclidean distance.
    """
    templates = spectral_templates(cube.num_classes, cube.bands, bump_width)
    pixels = cube.data.reshape(cube.bands, -1).T.astype(np.float64)
    labels = cube.labels.reshape(-1).astype(np.int64)
    labeled = labels > 0
    distances = ((pixels[labeled, None, :] - templates[None]) ** 2).sum(axis=2)
    return float(np.mean(np.argmin(distances, axis=1) + 1 == labels[labeled]))
