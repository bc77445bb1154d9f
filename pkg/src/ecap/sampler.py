"""Confidence-gated sampling of bank entries."""
import math
from dataclasses import dataclass, field

from .memory_bank import top_n_distribution, top_n_order


@dataclass(frozen=True)
class SamplerConfig:
    n0: float = 1.0
    beta: float = 0.8
    gamma: float = 0.005
    n_top: int = 30
    mec_excludes_disabled: bool = True
    # optional per-class n_top overrides, {class_id: n}
    n_top_per_class: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.n0 <= 1.0:
            raise ValueError(f"n0 must be in [0, 1], got {self.n0}")
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must be in (0, 1), got {self.beta}")
        if not self.gamma > 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if int(self.n_top) != self.n_top or self.n_top < 1:
            raise ValueError(f"n_top must be a positive integer, got {self.n_top}")
        for c, n in self.n_top_per_class.items():
            if int(n) != n or n < 1:
                raise ValueError(f"n_top for class {c} must be a positive integer")

    def top_for(self, c):
        return self.n_top_per_class.get(c, self.n_top)


@dataclass
class SampleDraw:
    selected: list  # [(class_id, BankEntry)], ascending class id

    def __len__(self):
        return len(self.selected)


def _sigmoid(z):
    # numerically safe for large |z|
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def mec(bank_set, n_top, excludes_disabled=True, n_top_per_class=None):
    """Mean expected confidence of one uniformly drawn top-n sample per class.

    Empty banks add zero. Disabled banks add zero and, with
    ``excludes_disabled``, are also dropped from the class count.
    """
    n_top_per_class = n_top_per_class or {}
    total = 0.0
    count = 0
    for c, bank in enumerate(bank_set):
        if not bank_set.enabled[c]:
            if not excludes_disabled:
                count += 1
            continue
        count += 1
        if len(bank) == 0:
            continue
        top = top_n_order(bank, n_top_per_class.get(c, n_top))
        total += float(bank.confidences()[top].sum()) / len(top)
    return total / count if count else 0.0


def gate_probability(mec_value, cfg):
    return cfg.n0 * _sigmoid((mec_value - cfg.beta) / cfg.gamma)


def draw(bank_set, cfg, rng, gate=None):
    """Bernoulli gate per class, then one top-n entry from each open bank.

    RNG use is fixed: classes in ascending order, one uniform for the gate
    and, if it opens, one integer for the entry.
    """
    if gate is None:
        gate = gate_probability(
            mec(bank_set, cfg.n_top, cfg.mec_excludes_disabled, cfg.n_top_per_class), cfg)
    selected = []
    for c, bank in enumerate(bank_set):
        if not bank_set.enabled[c] or len(bank) == 0:
            continue
        if not rng.random() < gate:
            continue
        top = top_n_order(bank, cfg.top_for(c))
        k = int(rng.integers(len(top)))
        selected.append((c, bank.entries[top[k]]))
    return SampleDraw(selected)


def entry_distribution(bank, cfg):
    """Analytic per-entry draw probability for an open gate."""
    return top_n_distribution(bank, cfg.top_for(bank.class_id))
