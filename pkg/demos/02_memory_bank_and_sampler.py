# Filling per-class banks from teacher predictions, then gating draws by MEC.
# Run: python3 demos/02_memory_bank_and_sampler.py

# %%
import numpy as np

from ecap.core import one_hot
from ecap.memory_bank import BankSet, extract_class_samples, insert, top_n_distribution
from ecap.pseudo_label import generate_pseudo_label
from ecap.sampler import SamplerConfig, draw, gate_probability, mec
from ecap.synthetic import SyntheticSceneConfig, gen_domain_pair

data = gen_domain_pair(SyntheticSceneConfig(n_source=2, n_target=60), seed=3)
rng = np.random.default_rng(0)
banks = BankSet(5)

# %% a teacher that sharpens over "training": noise shrinks as images go by
for i, (x, y) in enumerate(zip(data.target_images, data.target_truth)):
    sharp = 1.0 + 0.1 * i
    logits = sharp * one_hot(y, 5) + rng.normal(0, 0.8, y.shape + (5,))
    probs = np.exp(logits) / np.exp(logits).sum(-1, keepdims=True)
    insert(banks, extract_class_samples(x, generate_pseudo_label(probs), i, truth=y), i)

for c, bank in enumerate(banks):
    q = bank.confidences()
    print(f"class {c}: {len(bank):3d} entries, confidence {q.min():.3f} .. {q.max():.3f}")

# %% sampling mass sits on the n most confident entries
p = top_n_distribution(banks[4], 10)
print("rider bank: nonzero draw probabilities", np.count_nonzero(p), "each", p.max())

# %% the gate opens around beta
cfg = SamplerConfig(n_top=10)
level = mec(banks, cfg.n_top)
print(f"MEC {level:.4f} -> gate {gate_probability(level, cfg):.3f}")
for b in (0.7, 0.8, 0.9, 0.95):
    g = gate_probability(level, SamplerConfig(beta=b))
    print(f"  beta {b:.2f}: gate {g:.3f}")

# %% one draw: at most one entry per class
d = draw(banks, cfg, rng)
print("drawn:", [(c, e.image_id, round(e.confidence, 3)) for c, e in d.selected])
