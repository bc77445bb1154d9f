"""Procedural two-domain scenes: ground, sky and a few object classes.

The source and target domains share the scene layout; each target image is
seen through a global colour affine transform plus extra pixel noise, both
scaled by a per-image severity.
Class 0 is ground, class 1 is sky and classes 2.. are objects, each rarer
and smaller than the previous one.
"""
from dataclasses import dataclass, field, replace

import numpy as np

DEFAULT_PALETTE = (
    (0.38, 0.38, 0.40),  # ground
    (0.50, 0.68, 0.90),  # sky
    (0.62, 0.42, 0.30),  # building
    (0.22, 0.30, 0.70),  # car
    (0.85, 0.22, 0.22),  # rider
)
DEFAULT_SHIFT_LINEAR = (
    (-0.30, 0.20, 0.15),
    (0.10, -0.25, 0.10),
    (0.20, 0.05, -0.35),
)
DEFAULT_SHIFT_BIAS = (0.08, 0.04, -0.02)


@dataclass(frozen=True)
class SyntheticSceneConfig:
    height: int = 32
    width: int = 32
    num_classes: int = 5
    shapes_min: int = 2
    shapes_max: int = 5
    palette: tuple = DEFAULT_PALETTE
    color_jitter: float = 0.05
    pixel_noise: float = 0.03
    # target colour = (I + shift_linear) @ colour + shift_bias + N(0, shift_noise)
    shift_linear: tuple = DEFAULT_SHIFT_LINEAR
    shift_bias: tuple = DEFAULT_SHIFT_BIAS
    shift_noise: float = 0.04
    # each target image gets a severity in [severity_min, 1] scaling the whole shift
    severity_min: float = 0.5
    n_source: int = 200
    n_target: int = 250
    eval_fraction: float = 0.2

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if len(self.palette) != self.num_classes:
            raise ValueError("palette needs one colour per class")
        if not 1 <= self.shapes_min <= self.shapes_max:
            raise ValueError("need 1 <= shapes_min <= shapes_max")
        if not 0.0 <= self.severity_min <= 1.0:
            raise ValueError("severity_min must be in [0, 1]")
        if not 0.0 <= self.eval_fraction < 1.0:
            raise ValueError("eval_fraction must be in [0, 1)")
        shift = np.concatenate([np.ravel(self.shift_linear), np.ravel(self.shift_bias),
                                [self.shift_noise]])
        if np.asarray(self.shift_linear).shape != (3, 3) or len(self.shift_bias) != 3:
            raise ValueError("shift_linear must be 3x3 and shift_bias length 3")
        if not np.all(np.isfinite(shift)):
            raise ValueError("shift parameters must be finite")

    @property
    def has_shift(self):
        return bool(np.any(self.shift_linear) or np.any(self.shift_bias) or self.shift_noise)

    def without_shift(self):
        return replace(self, shift_linear=((0.0,) * 3,) * 3, shift_bias=(0.0,) * 3,
                       shift_noise=0.0)


@dataclass
class DomainPair:
    source_images: np.ndarray  # (N_S, H, W, 3) float32
    source_labels: np.ndarray  # (N_S, H, W) int32
    target_images: np.ndarray  # training split
    target_truth: np.ndarray  # hidden; only the denoise/oracle variants and metrics read it
    eval_images: np.ndarray
    eval_truth: np.ndarray
    num_classes: int = field(default=5)


def _draw_layout(cfg, rng):
    H, W = cfg.height, cfg.width
    rows = np.arange(H)[:, None]
    cols = np.arange(W)[None, :]
    horizon = rng.uniform(0.3, 0.6) * H
    slope = rng.uniform(-0.2, 0.2)
    cls = np.where(rows < horizon + slope * (cols - W / 2), 1, 0).astype(np.int32)

    things = np.arange(2, cfg.num_classes)
    if len(things) == 0:
        return cls
    freq = 0.55 ** np.arange(len(things))
    freq /= freq.sum()
    n = rng.integers(cfg.shapes_min, cfg.shapes_max + 1)
    for c in rng.choice(things, size=n, p=freq):
        rank = c - 2
        size = max(2.0, 0.35 * H * 0.7**rank)
        h = int(rng.uniform(0.5, 1.0) * size) + 1
        w = int(rng.uniform(0.5, 1.0) * size * (0.8 if rank % 2 else 1.4)) + 1
        cx = rng.uniform(0, W)
        if rank == 0:
            # anchored on the horizon, extending upwards
            bottom = horizon + rng.uniform(0, 3)
            top = bottom - h
            inside = (rows >= top) & (rows < bottom) & (np.abs(cols - cx) < w / 2)
        else:
            cy = rng.uniform(horizon, H)
            if rank % 2:
                inside = ((rows - cy) / (h / 2)) ** 2 + ((cols - cx) / (w / 2)) ** 2 <= 1
            else:
                inside = (np.abs(rows - cy) < h / 2) & (np.abs(cols - cx) < w / 2)
        cls[inside] = c
    return cls


def _render(cfg, cls, rng):
    palette = np.asarray(cfg.palette, dtype=np.float64)
    jitter = rng.normal(0.0, cfg.color_jitter, size=palette.shape)
    img = (palette + jitter)[cls]
    # vertical shading so colour alone is not a perfect cue
    shade = np.linspace(-0.05, 0.05, cfg.height)[:, None, None]
    img = img + shade + rng.normal(0.0, cfg.pixel_noise, size=img.shape)
    return img


def _shift(cfg, img, rng):
    sev = rng.uniform(cfg.severity_min, 1.0)
    A = np.eye(3) + sev * np.asarray(cfg.shift_linear)
    out = img @ A.T + sev * np.asarray(cfg.shift_bias)
    if cfg.shift_noise > 0:
        out = out + rng.normal(0.0, sev * cfg.shift_noise, size=out.shape)
    return out


def _domain(cfg, n, rng, shifted):
    images = np.empty((n, cfg.height, cfg.width, 3), dtype=np.float32)
    labels = np.empty((n, cfg.height, cfg.width), dtype=np.int32)
    for k in range(n):
        cls = _draw_layout(cfg, rng)
        img = _render(cfg, cls, rng)
        if shifted and cfg.has_shift:
            img = _shift(cfg, img, rng)
        images[k] = np.clip(img, 0.0, 1.0)
        labels[k] = cls
    return images, labels


def gen_domain_pair(cfg, seed):
    """Labelled source scenes and shifted target scenes with hidden truth.

    The target set is split into a training part and a held-out evaluation
    part of ``eval_fraction``.
    """
    src_seq, tgt_seq = np.random.SeedSequence(seed).spawn(2)
    xs, ys = _domain(cfg, cfg.n_source, np.random.default_rng(src_seq), shifted=False)
    xt, yt = _domain(cfg, cfg.n_target, np.random.default_rng(tgt_seq), shifted=True)
    n_eval = int(round(cfg.n_target * cfg.eval_fraction))
    n_train = cfg.n_target - n_eval
    return DomainPair(xs, ys, xt[:n_train], yt[:n_train], xt[n_train:], yt[n_train:],
                      num_classes=cfg.num_classes)
