# Pseudo-labels, pixel weights and plain DACS mixing on one synthetic pair.
# Run: python3 demos/01_mixing_and_pseudo_labels.py

# %%
import numpy as np

from ecap.compositor import dacs_mask, ecap_dacs_mix, empty_canvas
from ecap.core import argmax_decode, mix, one_hot
from ecap.pseudo_label import generate_pseudo_label, target_weight
from ecap.synthetic import SyntheticSceneConfig, gen_domain_pair

data = gen_domain_pair(SyntheticSceneConfig(n_source=4, n_target=5), seed=0)
xs, ys = data.source_images[0], data.source_labels[0]
xt = data.target_images[0]
print("source", xs.shape, "classes present:", np.unique(ys))

# %% the mixing operator is a per-pixel select
m = np.zeros(ys.shape, np.uint8)
m[:, :16] = 1
left_right = mix(xs, xt, m)
print("left half from source:", np.array_equal(left_right[:, :16], xs[:, :16]))

# %% a fake teacher: softened ground truth with a few wrong pixels
rng = np.random.default_rng(1)
truth = data.target_truth[0]
logits = 4.0 * one_hot(truth, 5) + rng.normal(0, 1.2, truth.shape + (5,))
probs = np.exp(logits) / np.exp(logits).sum(-1, keepdims=True)
teacher = generate_pseudo_label(probs)
wrong = np.mean(argmax_decode(teacher.pseudo_label) != truth)
print(f"pseudo-label error rate {wrong:.3f}")
print(f"target weight at tau=0.968: {target_weight(probs, 0.968):.3f}")
print(f"target weight at tau=0.5:   {target_weight(probs, 0.5):.3f}")

# %% DACS picks half the source classes, rounded up
print("mask covers classes", np.unique(ys[dacs_mask(one_hot(ys, 5), rng) == 1]).tolist())

# %% with an empty canvas the pipeline is plain DACS
out = ecap_dacs_mix(xs, one_hot(ys, 5), xt, teacher, empty_canvas(ys.shape, 5), rng)
print("weights take two values:", np.unique(out.weight))
print("provenance counts (target, source, bank):", np.bincount(out.provenance.ravel(), minlength=3))
