"""Synthetic head phantoms for tests, demos and the CLI smoke corpus."""

from __future__ import annotations

import numpy as np

from .volume import Volume, VolumeMeta

# (intensity, semi-axis a, semi-axis b, center x, center y, rotation in degrees)
# Modified Shepp-Logan with contrasts raised for visibility.
_ELLIPSES = (
    (1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0),
    (-0.80, 0.6624, 0.8740, 0.00, -0.0184, 0.0),
    (-0.20, 0.1100, 0.3100, 0.22, 0.0000, -18.0),
    (-0.20, 0.1600, 0.4100, -0.22, 0.0000, 18.0),
    (0.10, 0.2100, 0.2500, 0.00, 0.3500, 0.0),
    (0.10, 0.0460, 0.0460, 0.00, 0.1000, 0.0),
    (0.10, 0.0460, 0.0460, 0.00, -0.1000, 0.0),
    (0.10, 0.0460, 0.0230, -0.08, -0.6050, 0.0),
    (0.10, 0.0230, 0.0230, 0.00, -0.6060, 0.0),
    (0.10, 0.0230, 0.0460, 0.06, -0.6050, 0.0),
)


def shepp_logan_slice(ny: int, nx: int, scale: float = 1.0) -> np.ndarray:
    """One 2-D modified Shepp-Logan slice with the head outline scaled by ``scale``."""
    y, x = np.mgrid[-1:1:complex(0, ny), -1:1:complex(0, nx)]
    img = np.zeros((ny, nx))
    for value, a, b, cx, cy, theta in _ELLIPSES:
        t = np.deg2rad(theta)
        xr = (x - cx * scale) * np.cos(t) + (y - cy * scale) * np.sin(t)
        yr = -(x - cx * scale) * np.sin(t) + (y - cy * scale) * np.cos(t)
        inside = (xr / (a * scale)) ** 2 + (yr / (b * scale)) ** 2 <= 1.0
        img[inside] += value
    return np.clip(img, 0.0, None)


def shepp_logan_volume(
    nz: int = 16,
    ny: int = 128,
    nx: int = 128,
    *,
    noise: float = 0.0,
    seed: int = 0,
    patient_id: str = "phantom",
    modality: str = "T1",
    center: str = "synthetic",
) -> Volume:
    """A stack of Shepp-Logan slices whose outline shrinks toward the ends.

    ``noise`` adds the magnitude of complex Gaussian noise with that standard
    deviation per channel, which gives the air background a realistic floor.
    The result is max-normalized.
    """
    zs = np.linspace(-1.0, 1.0, nz) if nz > 1 else np.zeros(1)
    scales = 1.0 - 0.25 * zs ** 2
    data = np.stack([shepp_logan_slice(ny, nx, s) for s in scales])
    if noise > 0:
        rng = np.random.default_rng(seed)
        re = data + rng.normal(0.0, noise, data.shape)
        im = rng.normal(0.0, noise, data.shape)
        data = np.hypot(re, im)
    data = data / data.max()
    return Volume(data, VolumeMeta(patient_id=patient_id, modality=modality, center=center))
