"""PNG export of mixed samples and bank entries.

Label PNGs use a fixed palette, one colour per class:

    0 ground    (128,  64, 128)
    1 sky       ( 70, 130, 180)
    2 building  ( 70,  70,  70)
    3 car       (  0,   0, 142)
    4 rider     (255,   0,   0)

Unlabelled pixels are black. Weight maps are grey ramps, 0 black and 1 white.
"""
import os

import numpy as np
from PIL import Image

from .core import IGNORE, decode_one_hot

LABEL_PALETTE = np.array([
    (128, 64, 128),
    (70, 130, 180),
    (70, 70, 70),
    (0, 0, 142),
    (255, 0, 0),
], dtype=np.uint8)
UNLABELLED = (0, 0, 0)


def image_rgb(x):
    return (np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def label_rgb(class_map):
    class_map = np.asarray(class_map)
    if class_map.max(initial=IGNORE) >= len(LABEL_PALETTE):
        raise ValueError(f"palette has {len(LABEL_PALETTE)} classes, got {class_map.max()}")
    out = np.empty(class_map.shape + (3,), np.uint8)
    out[:] = UNLABELLED
    known = class_map != IGNORE
    out[known] = LABEL_PALETTE[class_map[known]]
    return out


def weight_gray(q):
    return (np.clip(np.asarray(q, dtype=np.float64), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_png(arr, path):
    Image.fromarray(arr).save(path, format="PNG")
    return path


def save_mixed_triplet(mixed, prefix):
    """Write ``<prefix>_image.png``, ``_label.png`` and ``_weight.png``."""
    return [
        write_png(image_rgb(mixed.image), f"{prefix}_image.png"),
        write_png(label_rgb(decode_one_hot(mixed.label)), f"{prefix}_label.png"),
        write_png(weight_gray(mixed.weight), f"{prefix}_weight.png"),
    ]


def save_entry_pair(entry, prefix):
    return [
        write_png(image_rgb(entry.image), f"{prefix}_image.png"),
        write_png(label_rgb(decode_one_hot(entry.label)), f"{prefix}_label.png"),
    ]


def read_png(path):
    with Image.open(path) as im:
        return np.asarray(im)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
