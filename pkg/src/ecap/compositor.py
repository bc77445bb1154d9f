"""Composite canvas from bank samples and the ECAP-before-DACS mix."""
import math
from dataclasses import dataclass

import numpy as np

from .core import IGNORE, ShapeError, decode_one_hot, mix, present_classes
from .pseudo_label import DEFAULT_TAU, target_weight

# provenance codes of mixed-image pixels
FROM_TARGET = 0
FROM_SOURCE = 1
FROM_BANK = 2


class DegenerateSample(ValueError):
    """A transformed sample has no pixels left on the canvas."""


@dataclass(frozen=True)
class TransformConfig:
    scale_min: float = 0.1
    scale_max: float = 1.0
    # False gives the identity placement for every sample (ECAP-minus)
    enabled: bool = True

    def __post_init__(self):
        if not 0.0 < self.scale_min <= self.scale_max:
            raise ValueError("need 0 < scale_min <= scale_max")


@dataclass(frozen=True)
class TransformParams:
    scale: float = 1.0
    translate: tuple = (0, 0)  # (rows, cols) offset of the crop's top-left corner
    hflip: bool = False


IDENTITY = TransformParams()


@dataclass
class TransformedSample:
    image: np.ndarray
    label: np.ndarray
    mask: np.ndarray
    truth: np.ndarray  # None when the entry carries no ground truth
    src_rows: np.ndarray  # entry pixel each canvas pixel was read from, -1 if none
    src_cols: np.ndarray


@dataclass
class CompositeCanvas:
    image: np.ndarray
    label: np.ndarray
    populated: np.ndarray
    truth: np.ndarray = None
    # instrumentation: index into ``order`` and entry coordinates per pixel
    source_index: np.ndarray = None
    src_rows: np.ndarray = None
    src_cols: np.ndarray = None
    order: list = None
    params: list = None
    degenerate: int = 0


@dataclass
class MixedSample:
    image: np.ndarray
    label: np.ndarray
    weight: np.ndarray
    provenance: np.ndarray
    mask: np.ndarray  # DACS mask: 1 where the augmented source was kept
    target_weight: float


def _bbox(mask):
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if len(rows) == 0:
        return None
    return rows[0], rows[-1] + 1, cols[0], cols[-1] + 1


def _fit(crop_h, crop_w, canvas_size):
    return min(1.0, canvas_size[0] / crop_h, canvas_size[1] / crop_w)


def _scaled(n, s):
    return int(math.floor(n * s + 0.5))


def sample_transform(entry, canvas_size, cfg, rng):
    """Random scale, flip and in-bounds translation for one entry.

    Always draws scale, flip, row and column offset in that order, even when
    transforms are disabled, so ECAP and ECAP-minus share one RNG stream.
    """
    box = _bbox(entry.mask)
    if box is None:
        raise DegenerateSample("entry has no populated pixels")
    r0, r1, c0, c1 = box
    scale = float(rng.uniform(cfg.scale_min, cfg.scale_max))
    hflip = bool(rng.integers(2))
    s = scale * _fit(r1 - r0, c1 - c0, canvas_size)
    hs, ws = _scaled(r1 - r0, s), _scaled(c1 - c0, s)
    H, W = canvas_size
    dy = int(rng.integers(-r0, max(H - hs - r0, -r0) + 1))
    dx = int(rng.integers(-c0, max(W - ws - c0, -c0) + 1))
    if not cfg.enabled:
        return IDENTITY
    return TransformParams(scale=scale, translate=(dy, dx), hflip=hflip)


def _resample_index(n_in, n_out):
    # nearest neighbour, sampling at output pixel centres
    idx = np.floor((np.arange(n_out) + 0.5) * (n_in / n_out)).astype(np.int64)
    return np.minimum(idx, n_in - 1)


def apply_transform(entry, t, canvas_size):
    """Scale (nearest neighbour), flip, then translate an entry onto a blank canvas."""
    box = _bbox(entry.mask)
    if box is None:
        raise DegenerateSample("entry has no populated pixels")
    r0, r1, c0, c1 = box
    h, w = r1 - r0, c1 - c0
    s = t.scale * _fit(h, w, canvas_size)
    hs, ws = _scaled(h, s), _scaled(w, s)
    if hs == 0 or ws == 0:
        raise DegenerateSample(f"scale {t.scale} shrinks a {h}x{w} crop to nothing")
    rows = _resample_index(h, hs) + r0
    cols = _resample_index(w, ws) + c0
    if t.hflip:
        cols = cols[::-1]
    top, left = r0 + t.translate[0], c0 + t.translate[1]
    H, W = canvas_size
    if top < 0 or left < 0 or top + hs > H or left + ws > W:
        raise ValueError(f"transformed sample at ({top}, {left}) size {hs}x{ws} leaves the canvas")

    C = entry.label.shape[-1]
    image = np.zeros((H, W, 3), dtype=entry.image.dtype)
    label = np.zeros((H, W, C), dtype=entry.label.dtype)
    src_rows = np.full((H, W), -1, dtype=np.int64)
    src_cols = np.full((H, W), -1, dtype=np.int64)
    win = (slice(top, top + hs), slice(left, left + ws))
    grid = np.ix_(rows, cols)
    image[win] = entry.image[grid]
    label[win] = entry.label[grid]
    src_rows[win] = rows[:, None]
    src_cols[win] = cols[None, :]
    truth = None
    if entry.truth is not None:
        truth = np.full((H, W), IGNORE, dtype=np.int32)
        truth[win] = entry.truth[grid]
    mask = label[..., entry.class_id].astype(np.uint8)
    if not mask.any():
        raise DegenerateSample("no class pixels survive resampling")
    return TransformedSample(image, label, mask, truth, src_rows, src_cols)


def empty_canvas(canvas_size, num_classes):
    H, W = canvas_size
    return CompositeCanvas(
        image=np.zeros((H, W, 3), dtype=np.float32),
        label=np.zeros((H, W, num_classes), dtype=np.uint8),
        populated=np.zeros((H, W), dtype=np.uint8),
        truth=np.full((H, W), IGNORE, dtype=np.int32),
        source_index=np.full((H, W), -1, dtype=np.int64),
        src_rows=np.full((H, W), -1, dtype=np.int64),
        src_cols=np.full((H, W), -1, dtype=np.int64),
        order=[],
        params=[],
    )


def build_composite(draw, rng, canvas_size, transform_cfg, num_classes):
    """Shuffle the drawn samples and paste them one after another.

    Later samples overwrite earlier ones where their class masks overlap.
    Degenerate samples are skipped and counted.
    """
    canvas = empty_canvas(canvas_size, num_classes)
    if len(draw) == 0:
        return canvas
    perm = rng.permutation(len(draw.selected))
    for k in perm:
        c, entry = draw.selected[k]
        try:
            t = sample_transform(entry, canvas_size, transform_cfg, rng)
            ts = apply_transform(entry, t, canvas_size)
        except DegenerateSample:
            canvas.degenerate += 1
            continue
        idx = len(canvas.order)
        canvas.order.append((c, entry))
        canvas.params.append(t)
        m = ts.mask
        canvas.image = mix(ts.image, canvas.image, m)
        canvas.label = mix(ts.label, canvas.label, m)
        canvas.populated = np.maximum(canvas.populated, m)
        sel = m.astype(bool)
        if ts.truth is not None:
            canvas.truth[sel] = ts.truth[sel]
        canvas.source_index[sel] = idx
        canvas.src_rows[sel] = ts.src_rows[sel]
        canvas.src_cols[sel] = ts.src_cols[sel]
    return canvas


def dacs_mask(label, rng):
    """Mask over a random half (rounded up) of the classes present in ``label``."""
    classes = sorted(present_classes(label))
    if not classes:
        raise ValueError("label has no populated pixels")
    chosen = rng.choice(classes, size=math.ceil(len(classes) / 2), replace=False)
    cls = decode_one_hot(label) if label.ndim == 3 else label
    return np.isin(cls, chosen).astype(np.uint8)


def ecap_dacs_mix(src_image, src_label, tgt_image, teacher, canvas, rng, tau=DEFAULT_TAU):
    """Paste the canvas onto the source, then DACS-mix the result into the target.

    Pixels kept from the augmented source (source or bank origin) get weight
    1; target pixels get the teacher's confident-pixel ratio.
    """
    _check = (src_image, src_label, tgt_image, teacher.probs, canvas.image, canvas.label)
    hw = src_image.shape[:2]
    if any(a.shape[:2] != hw for a in _check):
        raise ShapeError("all inputs must share height and width")

    aug_image = mix(canvas.image, src_image, canvas.populated)
    aug_label = mix(canvas.label, src_label, canvas.populated)
    m = dacs_mask(aug_label, rng)
    image = mix(aug_image, tgt_image, m)
    label = mix(aug_label, teacher.pseudo_label, m)

    w = target_weight(teacher.probs, tau)
    weight = np.where(m.astype(bool), 1.0, w)
    provenance = np.where(
        m.astype(bool),
        np.where(canvas.populated.astype(bool), FROM_BANK, FROM_SOURCE),
        FROM_TARGET,
    ).astype(np.uint8)
    return MixedSample(image, label, weight, provenance, m, w)
