"""A small per-pixel MLP classifier with hand-written backprop.

Each pixel is described by its colour, the mean colour of a square window
around it and its normalised (row, col) coordinates; one tanh hidden layer
maps these features to class logits.
"""
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

LOG_EPS = 1e-12
NUM_FEATURES = 8


def pixel_features(image, window=5):
    """(H*W, 8) feature matrix for an (H, W, 3) image."""
    image = np.asarray(image, dtype=np.float64)
    H, W, _ = image.shape
    local = uniform_filter(image, size=(window, window, 1), mode="nearest")
    rr, cc = np.meshgrid(np.linspace(-1.0, 1.0, H), np.linspace(-1.0, 1.0, W), indexing="ij")
    feats = np.concatenate([image, local, rr[..., None], cc[..., None]], axis=-1)
    return feats.reshape(H * W, NUM_FEATURES)


@dataclass
class PixelClassifier:
    params: np.ndarray
    num_classes: int
    hidden: int = 32
    window: int = 5

    @classmethod
    def init(cls, num_classes, rng, hidden=32, window=5, scale=0.5):
        n = param_count(num_classes, hidden)
        params = np.zeros(n)
        w1, _, w2, _ = _views(params, num_classes, hidden)
        w1[...] = rng.normal(0.0, scale / np.sqrt(NUM_FEATURES), size=w1.shape)
        w2[...] = rng.normal(0.0, scale / np.sqrt(hidden), size=w2.shape)
        return cls(params, num_classes, hidden, window)

    def with_params(self, params):
        return PixelClassifier(np.asarray(params), self.num_classes, self.hidden, self.window)


def param_count(num_classes, hidden):
    return NUM_FEATURES * hidden + hidden + hidden * num_classes + num_classes


def _views(params, num_classes, hidden):
    F = NUM_FEATURES
    i = 0
    w1 = params[i:i + F * hidden].reshape(F, hidden)
    i += F * hidden
    b1 = params[i:i + hidden]
    i += hidden
    w2 = params[i:i + hidden * num_classes].reshape(hidden, num_classes)
    i += hidden * num_classes
    b2 = params[i:i + num_classes]
    return w1, b1, w2, b2


def _softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward(model, feats):
    w1, b1, w2, b2 = _views(model.params, model.num_classes, model.hidden)
    hid = np.tanh(feats @ w1 + b1)
    return hid, _softmax(hid @ w2 + b2)


def forward(model, x):
    """Per-pixel class probabilities, shape (H, W, C)."""
    if not np.all(np.isfinite(model.params)):
        raise ValueError("model parameters are not finite")
    H, W = x.shape[:2]
    _, probs = _forward(model, pixel_features(x, model.window))
    return probs.reshape(H, W, model.num_classes)


def pixel_ce(y, probs):
    """Per-pixel cross entropy -sum_c y log p, with the log clamped at ``LOG_EPS``."""
    return -(y * np.log(np.maximum(probs, LOG_EPS))).sum(axis=-1)


def weighted_ce_loss(y, probs, q, truth=None, target_region=None):
    """Weighted cross entropy summed over pixels.

    With ``truth`` (a class map) also returns how the loss over
    ``target_region`` splits between correct and incorrect labels.
    Returns ``(loss, parts)`` where ``parts`` is None without ``truth`` and
    otherwise a dict with ``correct``, ``incorrect``, ``target`` and
    ``noise_ratio``.
    """
    y = np.asarray(y)
    probs = np.asarray(probs)
    q = np.asarray(q, dtype=np.float64)
    if y.shape != probs.shape or q.shape != y.shape[:2]:
        raise ValueError(f"shape mismatch: labels {y.shape}, probs {probs.shape}, weights {q.shape}")
    per_pixel = q * pixel_ce(y, probs)
    total = float(per_pixel.sum())
    if truth is None:
        return total, None
    if target_region is None:
        target_region = np.ones(q.shape, dtype=bool)
    target_region = np.asarray(target_region, dtype=bool)
    wrong = np.argmax(y, axis=-1) != truth
    bad = per_pixel[target_region & wrong]
    good = per_pixel[target_region & ~wrong]
    incorrect = float(bad.sum())
    correct = float(good.sum())
    target = correct + incorrect
    return total, {
        "correct": correct,
        "incorrect": incorrect,
        "target": target,
        "noise_ratio": incorrect / target if target > 0 else 0.0,
    }


def loss_and_grad(model, x, y, q, feats=None):
    """Weighted CE of ``forward(model, x)`` and its gradient w.r.t. ``model.params``.

    Also returns the per-pixel loss and the probabilities.
    """
    H, W = x.shape[:2]
    C = model.num_classes
    if feats is None:
        feats = pixel_features(x, model.window)
    hid, p = _forward(model, feats)
    yf = y.reshape(H * W, C).astype(np.float64)
    qf = np.asarray(q, dtype=np.float64).reshape(H * W)
    per_pixel = qf * -(yf * np.log(np.maximum(p, LOG_EPS))).sum(axis=-1)

    # d(-log max(p_y, eps)) vanishes where the clamp is active
    live = (yf * p).sum(axis=-1) > LOG_EPS
    dlogits = (qf * live)[:, None] * (p * yf.sum(axis=-1, keepdims=True) - yf)

    w1, b1, w2, b2 = _views(model.params, C, model.hidden)
    grad = np.zeros_like(model.params)
    gw1, gb1, gw2, gb2 = _views(grad, C, model.hidden)
    gw2[...] = hid.T @ dlogits
    gb2[...] = dlogits.sum(axis=0)
    dhid = (dlogits @ w2.T) * (1.0 - hid**2)
    gw1[...] = feats.T @ dhid
    gb1[...] = dhid.sum(axis=0)
    return float(per_pixel.sum()), grad, per_pixel.reshape(H, W), p.reshape(H, W, C)
