"""Per-class memory banks of confidently pseudo-labelled target crops."""
import struct
from dataclasses import dataclass

import numpy as np

from .core import (
    IGNORE,
    KIND_CLASSMAP,
    KIND_IMAGE,
    KIND_ONEHOT,
    FormatError,
    ShapeError,
    argmax_decode,
    tensor_from_bytes,
    tensor_to_bytes,
)
from .pseudo_label import class_confidence

BANK_MAGIC = b"ECAPBANK"
BANK_VERSION = 1


class EmptyBankError(LookupError):
    pass


@dataclass(eq=False)
class BankEntry:
    image: np.ndarray  # float32, zero outside the class mask
    label: np.ndarray  # one-hot, populated only on the class mask
    confidence: float
    image_id: int
    class_id: int
    # hidden ground truth of the crop, IGNORE outside the mask; metrics only
    truth: np.ndarray = None

    @property
    def mask(self):
        return self.label[..., self.class_id].astype(np.uint8)

    def __eq__(self, other):
        if not isinstance(other, BankEntry):
            return NotImplemented
        same_truth = (self.truth is None and other.truth is None) or (
            self.truth is not None
            and other.truth is not None
            and np.array_equal(self.truth, other.truth)
        )
        return (
            self.image_id == other.image_id
            and self.class_id == other.class_id
            and self.confidence == other.confidence
            and self.image.dtype == other.image.dtype
            and np.array_equal(self.image, other.image)
            and np.array_equal(self.label, other.label)
            and same_truth
        )


class MemoryBank:
    """Entries of one class, at most one per target image.

    Entries are kept in insertion order; re-inserting an image moves its new
    entry to the back.
    """

    def __init__(self, class_id, entries=()):
        self.class_id = class_id
        self._entries = {}
        for e in entries:
            self.add(e)

    def add(self, entry):
        if entry.class_id != self.class_id:
            raise ValueError(f"entry of class {entry.class_id} in bank {self.class_id}")
        self._entries.pop(entry.image_id, None)
        self._entries[entry.image_id] = entry

    @property
    def entries(self):
        return list(self._entries.values())

    def confidences(self):
        return np.fromiter((e.confidence for e in self._entries.values()),
                           dtype=np.float64, count=len(self._entries))

    def __len__(self):
        return len(self._entries)

    def __contains__(self, image_id):
        return image_id in self._entries

    def __eq__(self, other):
        return (isinstance(other, MemoryBank) and self.class_id == other.class_id
                and self.entries == other.entries)


class BankSet:
    def __init__(self, num_classes, enabled=None):
        if num_classes < 2:
            raise ValueError("need at least two classes")
        self.banks = [MemoryBank(c) for c in range(num_classes)]
        if enabled is None:
            enabled = [True] * num_classes
        if len(enabled) != num_classes:
            raise ValueError("one enabled flag per class required")
        self.enabled = [bool(f) for f in enabled]

    @property
    def num_classes(self):
        return len(self.banks)

    def __getitem__(self, c):
        return self.banks[c]

    def __iter__(self):
        return iter(self.banks)

    def __eq__(self, other):
        return (isinstance(other, BankSet) and self.enabled == other.enabled
                and self.banks == other.banks)


def extract_class_samples(x, teacher, image_id=0, truth=None):
    """One masked crop per class predicted anywhere in ``x``."""
    x = np.asarray(x, dtype=np.float32)
    if x.shape[:2] != teacher.probs.shape[:2]:
        raise ShapeError(f"image {x.shape[:2]} vs teacher output {teacher.probs.shape[:2]}")
    if truth is not None and truth.shape != x.shape[:2]:
        raise ShapeError("ground truth does not match image")
    cls = argmax_decode(teacher.probs)
    out = []
    for c in np.unique(cls):
        c = int(c)
        conf = class_confidence(teacher.probs, c)
        if conf is None:
            continue
        m = cls == c
        entry_truth = None
        if truth is not None:
            entry_truth = np.where(m, truth, IGNORE).astype(np.int32)
        out.append(BankEntry(
            image=np.where(m[..., None], x, np.float32(0.0)),
            label=teacher.pseudo_label * m[..., None].astype(np.uint8),
            confidence=conf,
            image_id=int(image_id),
            class_id=c,
            truth=entry_truth,
        ))
    return out


def insert(bank_set, entries, image_id):
    for e in entries:
        if e.image_id != image_id:
            raise ValueError(f"entry carries image id {e.image_id}, expected {image_id}")
        bank_set[e.class_id].add(e)
    return bank_set


def top_n_order(bank, n):
    """Entry indices in sampling order, most confident first (ties: older first)."""
    return np.argsort(-bank.confidences(), kind="stable")[:n]


def top_n_distribution(bank, n):
    """Sampling probability of every entry: uniform over the ``n`` most confident."""
    if n < 1:
        raise ValueError("n must be positive")
    if len(bank) == 0:
        raise EmptyBankError(f"bank {bank.class_id} is empty")
    top = top_n_order(bank, n)
    p = np.zeros(len(bank))
    p[top] = 1.0 / len(top)
    return p


# -- snapshot file ----------------------------------------------------------

_ENTRY = struct.Struct("<qIdB")


def bank_to_bytes(bank_set):
    parts = [BANK_MAGIC, struct.pack("<BI", BANK_VERSION, bank_set.num_classes)]
    for bank, enabled in zip(bank_set.banks, bank_set.enabled):
        parts.append(struct.pack("<BI", enabled, len(bank)))
        for e in bank.entries:
            parts.append(_ENTRY.pack(e.image_id, e.class_id, e.confidence, e.truth is not None))
            parts.append(tensor_to_bytes(KIND_IMAGE, e.image))
            parts.append(tensor_to_bytes(KIND_ONEHOT, e.label))
            if e.truth is not None:
                parts.append(tensor_to_bytes(KIND_CLASSMAP, e.truth))
    return b"".join(parts)


def bank_from_bytes(buf):
    if buf[:8] != BANK_MAGIC:
        raise FormatError("not a memory bank snapshot")
    try:
        version, num_classes = struct.unpack_from("<BI", buf, 8)
        if version != BANK_VERSION:
            raise FormatError(f"unsupported bank snapshot version {version}")
        off = 8 + 5
        enabled, banks = [], []
        for c in range(num_classes):
            flag, count = struct.unpack_from("<BI", buf, off)
            off += 5
            enabled.append(bool(flag))
            entries = []
            for _ in range(count):
                image_id, class_id, conf, has_truth = _ENTRY.unpack_from(buf, off)
                off += _ENTRY.size
                _, image, off = tensor_from_bytes(buf, off)
                _, label, off = tensor_from_bytes(buf, off)
                truth = None
                if has_truth:
                    _, truth, off = tensor_from_bytes(buf, off)
                entries.append(BankEntry(image, label, conf, image_id, class_id, truth))
            banks.append(entries)
    except struct.error as exc:
        raise FormatError(f"truncated bank snapshot: {exc}") from None
    if off != len(buf):
        raise FormatError("trailing bytes after bank snapshot")
    bank_set = BankSet(num_classes, enabled)
    for c, entries in enumerate(banks):
        bank_set.banks[c] = MemoryBank(c, entries)
    return bank_set


def save_bank(bank_set, path):
    with open(path, "wb") as f:
        f.write(bank_to_bytes(bank_set))


def load_bank(path):
    with open(path, "rb") as f:
        return bank_from_bytes(f.read())
