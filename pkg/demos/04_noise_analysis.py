# Four training variants side by side: how much of the target loss is noise?
# Takes about a minute at the default 3000 iterations.
# Run: python3 demos/04_noise_analysis.py [iterations] [seed]

# %%
import sys

from ecap.config import RunConfig
from ecap.harness import Variant, run_experiment

iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 3000
seed = int(sys.argv[2]) if len(sys.argv) > 2 else 1
cfg = RunConfig(iterations=iterations, seed=seed, split_window=min(500, iterations),
                final_k=min(50, iterations))

results = {v: run_experiment(cfg, v) for v in Variant}

# %%
print(f"{'variant':<10}{'mIoU':>8}{'tgt acc':>10}{'noise':>8}")
for v, r in results.items():
    m = r.metrics
    print(f"{v.value:<10}{m.miou:8.2f}{m.target_accuracy:10.2f}{m.target_loss_noise_ratio:8.2f}")

# %% bank-origin pixels against target-image pixels, per class
m = results[Variant.ECAP].metrics
names = ("ground", "sky", "building", "car", "rider")
print(f"\n{'class':<10}{'bank':>8}{'image':>8}")
for name, b, i in zip(names, m.bank_accuracy, m.image_accuracy):
    print(f"{name:<10}{b:8.2f}{i:8.2f}")

# %% when does sampling come online?
ecap = results[Variant.ECAP].series
first = next((r.iteration for r in ecap if r.gate_probability > 0.5), None)
print("\ngate first above 0.5 at iteration", first)
