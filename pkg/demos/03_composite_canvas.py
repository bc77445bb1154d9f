# Building a composite canvas from bank samples and pasting it before DACS.
# Writes PNGs to $ECAP_OUTPUT_ROOT/demos (default runs/demos).
# Run: python3 demos/03_composite_canvas.py

# %%
import os

import numpy as np

from ecap.compositor import (FROM_BANK, IDENTITY, TransformConfig, build_composite,
                             ecap_dacs_mix)
from ecap.core import one_hot
from ecap.export import ensure_dir, save_mixed_triplet
from ecap.memory_bank import BankSet, extract_class_samples, insert
from ecap.pseudo_label import generate_pseudo_label
from ecap.sampler import SamplerConfig, draw
from ecap.synthetic import SyntheticSceneConfig, gen_domain_pair

out_dir = ensure_dir(os.path.join(os.environ.get("ECAP_OUTPUT_ROOT", "runs"), "demos"))
data = gen_domain_pair(SyntheticSceneConfig(n_source=3, n_target=20), seed=5)

# oracle-quality teacher so the banks hold clean crops
banks = BankSet(5)
for i, (x, y) in enumerate(zip(data.target_images, data.target_truth)):
    probs = 0.96 * one_hot(y, 5) + 0.01
    insert(banks, extract_class_samples(x, generate_pseudo_label(probs), i, truth=y), i)

# %% same draw, with and without the random scale / flip / translate
rng = np.random.default_rng(7)
d = draw(banks, SamplerConfig(), rng, gate=1.0)
state = rng.bit_generator.state
plain = build_composite(d, rng, (32, 32), TransformConfig(enabled=False), 5)
rng.bit_generator.state = state
moved = build_composite(d, rng, (32, 32), TransformConfig(), 5)
print("classes drawn:", [c for c, _ in d.selected])
print("identity params without transforms:", all(t == IDENTITY for t in plain.params))
for (c, e), t in zip(moved.order, moved.params):
    print(f"  class {c} image {e.image_id}: scale {t.scale:.2f} flip {t.hflip} shift {t.translate}")
print("canvas coverage", plain.populated.mean().round(3), "vs", moved.populated.mean().round(3))

# %% paste onto the source, then mix with a target
xs, ys = data.source_images[0], data.source_labels[0]
xt = data.target_images[1]
teacher = generate_pseudo_label(0.9 * one_hot(data.target_truth[1], 5) + 0.02)
mixed = ecap_dacs_mix(xs, one_hot(ys, 5), xt, teacher, moved, rng)
print("bank pixels in the mixed image:", int(np.sum(mixed.provenance == FROM_BANK)))
print("written:", save_mixed_triplet(mixed, os.path.join(out_dir, "composite")))
