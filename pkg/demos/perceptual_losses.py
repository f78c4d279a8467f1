"""
Motion perceptual loss and the composite objective
==================================================

The perceptual loss compares tapped feature maps of a prediction and its
reference. With a 1x1 identity extractor it collapses to the voxel MAE,
which makes a handy sanity check.
"""

import numpy as np

from mrimotion import Volume, VolumeMeta, shepp_logan_volume
from mrimotion.motion import simulate_pair
from mrimotion.perceptual import (
    FeatureExtractor,
    LossWeights,
    composite_loss,
    deep_tap_extractor,
    loss_terms,
    motion_perceptual_loss,
)

rng = np.random.default_rng(0)
a = Volume(rng.random((2, 32, 32)), VolumeMeta("demo"))
b = Volume(rng.random((2, 32, 32)), VolumeMeta("demo"))
identity = FeatureExtractor.identity()
print("MPL", motion_perceptual_loss(identity, a, b), "MAE", np.mean(np.abs(a.data - b.data)))

# %%
# A deeper seeded extractor: five 3x3 stages, pooled after the first four,
# with the last two tapped.

ex = deep_tap_extractor(seed=0)
print([(s.out_channels, s.pool) for s in ex.stages], "taps", ex.tap_layers)

clean = shepp_logan_volume(nz=4, ny=128, nx=128, seed=2)
for level in ("mild", "moderate", "severe"):
    moved, _, _ = simulate_pair(clean, level, seed=5)
    print(f"{level:9s} MPL {motion_perceptual_loss(ex, moved, clean):.4f}")

# %%
# The composite objective weighs L1, 1 - SSIM, the perceptual term, the
# focal frequency loss and an externally supplied adversarial value.

moved, _, _ = simulate_pair(clean, "moderate", seed=5)
terms = loss_terms(ex, moved, clean, adv=0.7)
print({k: round(v, 4) for k, v in terms.items()})
print("total", composite_loss(terms, LossWeights()))
