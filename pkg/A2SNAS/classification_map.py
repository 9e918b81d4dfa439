"""
Portable pixmap (P6) rendering of label maps and false-colour composites.
"""
from pathlib import Path

import numpy as np

from .exception import InvalidArgumentException


def _to_byte(x):
    return int(np.floor(x * 255 + 0.5))


def hue_to_rgb(hue):
    """
    Converts a hue in degrees at full saturation and value to an RGB triple via the hue sectors.

    :type hue: float
    :rtype: (int, int, int)
    """
    h = (hue % 360) / 60.0
    sector = int(np.floor(h))
    f = h - sector
    q, t = 1.0 - f, f
    r, g, b = [(1, t, 0), (q, 1, 0), (0, 1, t), (0, q, 1), (t, 0, 1), (1, 0, q)][sector % 6]
    return _to_byte(r), _to_byte(g), _to_byte(b)


def class_palette(num_classes):
    """
    Gets the colour table: index 0 (unlabeled) is black, class k >= 1 has hue (k - 1) * 360 / K.

    :rtype: np.ndarray
    :returns: uint8 array of shape (K + 1, 3)
    """
    palette = np.zeros((num_classes + 1, 3), dtype=np.uint8)
    for k in range(1, num_classes + 1):
        palette[k] = hue_to_rgb((k - 1) * 360.0 / num_classes)
    return palette


def encode_ppm(rgb):
    """
    Encodes an (height, width, 3) uint8 image as binary P6 bytes.
    """
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    height, width = rgb.shape[:2]
    return f"P6\n{width} {height}\n255\n".encode('ascii') + rgb.tobytes()


def render_map(grid, num_classes):
    """
    Renders a label or prediction grid.

    :type grid: array_like
    :param grid: height x width values in [0, K], 0 = unlabeled

    :type num_classes: int
    :param num_classes: K

    :raise: InvalidArgumentException for a non-integer grid or a value outside [0, K]

    :rtype: bytes
    """
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise InvalidArgumentException(f"map grid must be 2-dimensional, got shape {grid.shape}")
    if not np.issubdtype(grid.dtype, np.integer):
        raise InvalidArgumentException(f"map grid must hold integer labels, got dtype {grid.dtype}")
    if grid.size and (grid.min() < 0 or grid.max() > num_classes):
        raise InvalidArgumentException(f"map values must lie in [0, {num_classes}], "
                                       f"got [{int(grid.min())}, {int(grid.max())}]")
    return encode_ppm(class_palette(num_classes)[grid.astype(np.int64)])


def render_false_color(cube, bands=None):
    """
    Renders three bands of a cube as an RGB composite, each stretched min-max to [0, 255].

    :type bands: (int, int, int)
    :param bands: (red, green, blue) band indices, defaults to bands at 3/4, 1/2 and 1/4 of the depth

    :rtype: bytes
    """
    if bands is None:
        bands = (cube.bands * 3 // 4, cube.bands // 2, cube.bands // 4)
    for b in bands:
        if not 0 <= b < cube.bands:
            raise InvalidArgumentException(f"band {b} outside [0, {cube.bands})")
    channels = []
    for b in bands:
        band = cube.data[b].astype(np.float64)
        low, high = band.min(), band.max()
        scaled = np.zeros_like(band) if high == low else (band - low) / (high - low)
        channels.append(np.floor(scaled * 255 + 0.5))
    return encode_ppm(np.stack(channels, axis=-1))


def render_ground_truth(cube):
    return render_map(cube.labels, cube.num_classes)


def write_ppm(data, path):
    Path(path).write_bytes(data)
