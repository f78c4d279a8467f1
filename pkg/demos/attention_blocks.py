"""
Restoration network building blocks
===================================

Forward-only versions of the multi-scale recovery module, the channel and
spatial attention pair and the residual block. Each maps a (C, H, W) array
to one of the same shape.
"""

import numpy as np

from mrimotion.blocks import (
    MSAWeights,
    MultiScaleWeights,
    ResidualWeights,
    channel_attention_weights,
    msa_block,
    multiscale_recovery,
    residual_block,
    spatial_attention_mask,
)

rng = np.random.default_rng(0)
x = rng.normal(size=(16, 32, 32))

# %%
# With all-zero weights both attention gates sit at sigmoid(0) = 0.5, so the
# combined block scales its input by a quarter.

print("zero MSA ratio:", np.unique(msa_block(x, MSAWeights.zeros(16)) / x))

w = MSAWeights.random(16, rng)
gates = channel_attention_weights(x, w.channel)
mask = spatial_attention_mask(x, w.spatial)
print(f"channel gates in [{gates.min():.3f}, {gates.max():.3f}], "
      f"spatial mask in [{mask.min():.3f}, {mask.max():.3f}]")

# %%
# Delta kernels with an averaging fusion turn the multi-scale module into the
# identity. Zero residual weights leave only the skip path.

print("multiscale identity error", np.abs(multiscale_recovery(x, MultiScaleWeights.identity(16)) - x).max())
print("residual skip error", np.abs(residual_block(x, ResidualWeights.zeros(16)) - x).max())

# %%
# A small wiring example: one encoder level, a bottleneck and a decoder level
# with the attention block on the skip connection. Depth and widths here are
# illustrative only.


def down(t):
    c, h, w = t.shape
    return t[:, : h // 2 * 2, : w // 2 * 2].reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))


def up(t):
    return t.repeat(2, axis=1).repeat(2, axis=2)


enc = residual_block(x, ResidualWeights.random(16, rng))
bottom = multiscale_recovery(down(enc), MultiScaleWeights.random(16, rng))
skip = msa_block(enc, w)
dec = residual_block(up(bottom) + skip, ResidualWeights.random(16, rng))
print("decoder output", dec.shape)
