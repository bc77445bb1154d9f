"""Segmentation tensors, the mixing operator, and evaluation metrics.

All tensors are plain numpy arrays, row-major and channel-last:

* image      -- (H, W, 3) float32 in [0, 1]
* prob map   -- (H, W, C) float, per-pixel simplex
* one-hot    -- (H, W, C) uint8; an all-zero pixel is "unpopulated"
* class map  -- (H, W) int32, values in [0, C) or ``IGNORE``
* mask       -- (H, W) uint8 in {0, 1}
"""
import struct

import numpy as np

IGNORE = -1

# snapshot kind codes
KIND_IMAGE = 0
KIND_PROB = 1
KIND_ONEHOT = 2
KIND_CLASSMAP = 3
KIND_MASK = 4
KIND_WEIGHT = 5

TENSOR_MAGIC = b"ECAPTNSR"
_HEADER = struct.Struct("<8sBIII")
_DTYPES = {
    KIND_IMAGE: np.dtype("<f4"),
    KIND_PROB: np.dtype("<f4"),
    KIND_ONEHOT: np.dtype("u1"),
    KIND_CLASSMAP: np.dtype("<i4"),
    KIND_MASK: np.dtype("u1"),
    KIND_WEIGHT: np.dtype("<f4"),
}
_FLAT_KINDS = (KIND_CLASSMAP, KIND_MASK, KIND_WEIGHT)


class ShapeError(ValueError):
    pass


class FormatError(ValueError):
    pass


def _check_hw(*arrays):
    hw = arrays[0].shape[:2]
    for a in arrays[1:]:
        if a.shape[:2] != hw:
            raise ShapeError(f"spatial shape mismatch: {hw} vs {a.shape[:2]}")


def mix(a, b, m):
    """Take ``a`` where ``m == 1`` and ``b`` elsewhere.

    Works for images and one-hot labels alike. For a binary mask this is
    exactly ``m * a + (1 - m) * b`` with no floating point round-off.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    m = np.asarray(m)
    if a.shape != b.shape:
        raise ShapeError(f"cannot mix {a.shape} with {b.shape}")
    if m.shape != a.shape[:2]:
        raise ShapeError(f"mask {m.shape} does not match tensor {a.shape[:2]}")
    sel = m.astype(bool)
    if a.ndim == 3:
        sel = sel[..., None]
    return np.where(sel, a, b)


def argmax_decode(probs):
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return np.argmax(probs, axis=-1).astype(np.int32)


def one_hot(class_map, num_classes):
    """Encode a class map; IGNORE pixels become unpopulated (all zero)."""
    class_map = np.asarray(class_map)
    out = np.zeros(class_map.shape + (num_classes,), dtype=np.uint8)
    valid = class_map != IGNORE
    if np.any(class_map[valid] >= num_classes) or np.any(class_map[valid] < 0):
        raise ValueError("class index out of range")
    rows, cols = np.nonzero(valid)
    out[rows, cols, class_map[valid]] = 1
    return out


def decode_one_hot(label):
    """Class map from a one-hot label, IGNORE where the pixel is unpopulated."""
    cls = np.argmax(label, axis=-1).astype(np.int32)
    cls[label.sum(axis=-1) == 0] = IGNORE
    return cls


def populated(label):
    return (label.sum(axis=-1) > 0).astype(np.uint8)


def present_classes(label):
    """Set of classes with at least one populated pixel."""
    label = np.asarray(label)
    if label.ndim == 3:
        return {int(c) for c in np.nonzero(label.reshape(-1, label.shape[-1]).any(axis=0))[0]}
    vals = np.unique(label)
    return {int(v) for v in vals if v != IGNORE}


def confusion_matrix(pred, gt, num_classes):
    """Counts with ``cm[i, j]`` = #pixels where gt is i and pred is j."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} vs ground truth {gt.shape}")
    keep = gt != IGNORE
    idx = num_classes * gt[keep].astype(np.int64) + pred[keep].astype(np.int64)
    return np.bincount(idx, minlength=num_classes**2).reshape(num_classes, num_classes)


def miou(cm):
    """Per-class IoU and their mean over classes that have any support.

    Classes with an empty row and column get IoU ``nan`` and are left out of
    the mean.
    """
    cm = np.asarray(cm, dtype=np.float64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ShapeError("confusion matrix must be square")
    inter = np.diag(cm)
    union = cm.sum(axis=0) + cm.sum(axis=1) - inter
    iou = np.full(len(inter), np.nan)
    supported = union > 0
    iou[supported] = inter[supported] / union[supported]
    mean = float(iou[supported].mean()) if supported.any() else float("nan")
    return iou, mean


# -- snapshot serialization -------------------------------------------------

def tensor_to_bytes(kind, data):
    if kind not in _DTYPES:
        raise ValueError(f"unknown tensor kind {kind}")
    data = np.asarray(data)
    if kind in _FLAT_KINDS:
        if data.ndim != 2:
            raise ShapeError("flat tensor kinds must be 2-D")
        h, w, c = data.shape[0], data.shape[1], 1
    else:
        if data.ndim != 3:
            raise ShapeError("channel tensor kinds must be 3-D")
        h, w, c = data.shape
    header = _HEADER.pack(TENSOR_MAGIC, kind, h, w, c)
    return header + np.ascontiguousarray(data, dtype=_DTYPES[kind]).tobytes()


def tensor_from_bytes(buf, offset=0):
    """Decode one tensor starting at ``offset``; returns (kind, array, new offset)."""
    if len(buf) - offset < _HEADER.size:
        raise FormatError("truncated tensor header")
    magic, kind, h, w, c = _HEADER.unpack_from(buf, offset)
    if magic != TENSOR_MAGIC:
        raise FormatError(f"bad tensor magic {magic!r}")
    if kind not in _DTYPES:
        raise FormatError(f"unknown tensor kind {kind}")
    dtype = _DTYPES[kind]
    offset += _HEADER.size
    nbytes = h * w * c * dtype.itemsize
    if len(buf) - offset < nbytes:
        raise FormatError("truncated tensor payload")
    arr = np.frombuffer(buf, dtype=dtype, count=h * w * c, offset=offset)
    shape = (h, w) if kind in _FLAT_KINDS else (h, w, c)
    arr = arr.reshape(shape).astype(dtype.newbyteorder("="))
    return kind, arr, offset + nbytes


def save_tensor(path, kind, data):
    with open(path, "wb") as f:
        f.write(tensor_to_bytes(kind, data))


def load_tensor(path):
    with open(path, "rb") as f:
        buf = f.read()
    kind, arr, end = tensor_from_bytes(buf)
    if end != len(buf):
        raise FormatError("trailing bytes after tensor")
    return kind, arr
