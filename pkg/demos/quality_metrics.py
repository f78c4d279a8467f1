"""
Image quality metrics
=====================

Reference metrics (PSNR, SSIM, FID and a feature distance) need a ground
truth. SNR and CNR are computed from regions inside one volume and work
without it.
"""

from mrimotion import cnr, psnr, shepp_logan_volume, snr, ssim
from mrimotion.motion import simulate_pair
from mrimotion.perceptual import deep_tap_extractor, feature_distance, volume_fid

clean = shepp_logan_volume(nz=8, ny=128, nx=128, noise=0.02, seed=1)
corrupted, _, _ = simulate_pair(clean, "moderate", seed=3)
extractor = deep_tap_extractor(seed=0)

# %%
# Against itself a volume hits the fixed points: infinite PSNR, SSIM of one
# and zero for both feature-space scores.

print("self  PSNR", psnr(clean, clean), "SSIM", ssim(clean, clean),
      "FID", round(volume_fid(extractor, clean, clean), 12),
      "feature", feature_distance(extractor, clean, clean))

# %%
# The corrupted copy scores lower on every reference metric.

print(f"moved PSNR {psnr(corrupted, clean):.2f} SSIM {ssim(corrupted, clean):.3f} "
      f"FID {volume_fid(extractor, corrupted, clean):.3f} "
      f"feature {feature_distance(extractor, corrupted, clean):.4f}")

# %%
# Regions for SNR and CNR come from an Otsu foreground, a two-cluster split
# of it and a five-voxel border band as background.

for name, v in (("clean", clean), ("moved", corrupted)):
    print(f"{name} SNR {snr(v):.2f} CNR {cnr(v):.2f}")
