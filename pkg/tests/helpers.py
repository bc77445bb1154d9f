from contextlib import contextmanager

import numpy as np

from ecap.core import one_hot
from ecap.memory_bank import BankEntry


def make_entry(class_id, confidence, image_id, size=(8, 8), num_classes=4, box=None, rng=None):
    """Bank entry whose class mask is a rectangle ``box = (r0, r1, c0, c1)``."""
    rng = rng or np.random.default_rng(image_id)
    H, W = size
    r0, r1, c0, c1 = box or (1, H - 1, 1, W - 1)
    m = np.zeros(size, dtype=bool)
    m[r0:r1, c0:c1] = True
    image = np.where(m[..., None], rng.random((H, W, 3)), 0.0).astype(np.float32)
    cls = np.where(m, class_id, -1)
    return BankEntry(image, one_hot(cls, num_classes), float(confidence), image_id, class_id,
                     truth=cls.astype(np.int32))


def reference_dacs(xs, ys_cls, xt, probs, rng, tau):
    """Plain DACS mix written from scratch: half the source classes onto the target.

    Uses the arithmetic form m*a + (1-m)*b and the same RNG call for the
    class choice as the pipeline, so identical seeds give identical masks.
    """
    C = probs.shape[-1]
    classes = sorted(int(c) for c in np.unique(ys_cls))
    chosen = rng.choice(classes, size=(len(classes) + 1) // 2, replace=False)
    m = np.isin(ys_cls, chosen).astype(np.float32)
    m3 = m[..., None]
    image = m3 * xs + (1 - m3) * xt
    pseudo = np.eye(C, dtype=np.uint8)[np.argmax(probs, axis=-1)]
    label = (m3 * np.eye(C)[ys_cls] + (1 - m3) * pseudo).astype(np.uint8)
    ratio = np.mean(probs.max(axis=-1) > tau)
    weight = m * 1.0 + (1 - m) * ratio
    return image.astype(np.float32), label, weight


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


@contextmanager
def criterion(number, title):
    """Record a PASS or FAIL line for the block; ``notes`` gets appended."""
    notes = []
    try:
        yield notes
    except BaseException as exc:
        msg = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
        ACCEPTANCE_LINES.append(f"FAIL  {number}. {title}: {msg}")
        ACCEPTANCE_LINES.extend(f"        {n}" for n in notes)
        raise
    ACCEPTANCE_LINES.append(f"PASS  {number}. {title}")
    ACCEPTANCE_LINES.extend(f"        {n}" for n in notes)
