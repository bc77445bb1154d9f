"""Teacher-side machinery: pseudo-labels, pixel weights, confidences, EMA."""
from dataclasses import dataclass

import numpy as np

from .core import argmax_decode, one_hot

DEFAULT_TAU = 0.968
DEFAULT_EMA_DECAY = 0.999


@dataclass(frozen=True)
class TeacherOutput:
    probs: np.ndarray
    pseudo_label: np.ndarray  # one-hot, fully populated
    max_conf: np.ndarray

    @property
    def class_map(self):
        return argmax_decode(self.pseudo_label)

    @property
    def num_classes(self):
        return self.probs.shape[-1]


@dataclass(frozen=True)
class EmaConfig:
    decay: float = DEFAULT_EMA_DECAY

    def __post_init__(self):
        if not 0.0 <= self.decay < 1.0:
            raise ValueError(f"EMA decay must be in [0, 1), got {self.decay}")


def generate_pseudo_label(probs):
    probs = np.asarray(probs)
    cls = argmax_decode(probs)
    return TeacherOutput(
        probs=probs,
        pseudo_label=one_hot(cls, probs.shape[-1]),
        max_conf=probs.max(axis=-1),
    )


def target_weight(probs, tau=DEFAULT_TAU):
    """Fraction of pixels whose top-class confidence is strictly above ``tau``."""
    max_conf = np.asarray(probs).max(axis=-1)
    return float(np.count_nonzero(max_conf > tau)) / max_conf.size


def class_confidence(probs, c):
    """Mean probability of class ``c`` over the pixels predicted as ``c``.

    Returns None when no pixel is predicted as ``c``.
    """
    probs = np.asarray(probs)
    if not 0 <= c < probs.shape[-1]:
        raise ValueError(f"class {c} out of range")
    sel = argmax_decode(probs) == c
    n = np.count_nonzero(sel)
    if n == 0:
        return None
    return float(probs[..., c][sel].sum() / n)


def ema_update(teacher_params, student_params, cfg):
    teacher_params = np.asarray(teacher_params)
    student_params = np.asarray(student_params)
    if teacher_params.shape != student_params.shape:
        raise ValueError(
            f"parameter shape mismatch: {teacher_params.shape} vs {student_params.shape}"
        )
    return cfg.decay * teacher_params + (1.0 - cfg.decay) * student_params
