"""Centered unitary slice-wise 2-D Fourier transforms and the focal frequency loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch
from .volume import Volume, VolumeMeta


@dataclass(frozen=True, eq=False)
class KSpaceVolume:
    """Complex slice-wise spectra of a Volume; DC sits at ``(ny // 2, nx // 2)``."""

    data: np.ndarray
    origin_meta: VolumeMeta
    spacing: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.complex128, copy=True)
        if arr.ndim != 3:
            raise ValueError(f"k-space data must be 3-D, got shape {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple:
        return self.data.shape

    def with_data(self, data) -> "KSpaceVolume":
        return KSpaceVolume(data, self.origin_meta, self.spacing)


def fft2c(images: np.ndarray) -> np.ndarray:
    """Centered orthonormal 2-D DFT over the last two axes."""
    shifted = np.fft.ifftshift(images, axes=(-2, -1))
    return np.fft.fftshift(np.fft.fft2(shifted, norm="ortho"), axes=(-2, -1))


def ifft2c(spectra: np.ndarray) -> np.ndarray:
    shifted = np.fft.ifftshift(spectra, axes=(-2, -1))
    return np.fft.fftshift(np.fft.ifft2(shifted, norm="ortho"), axes=(-2, -1))


def forward_transform(v: Volume) -> KSpaceVolume:
    return KSpaceVolume(fft2c(v.data), v.meta, v.spacing)


def inverse_transform(k: KSpaceVolume) -> Volume:
    """Back to image space, keeping the magnitude of the complex result."""
    return Volume(np.abs(ifft2c(k.data)), k.origin_meta, k.spacing)


def focal_frequency_loss(pred: Volume, gt: Volume, alpha: float = 1.0) -> float:
    """Spectral squared error reweighted toward the worst-fit frequencies.

    Per slice the weight is ``|F_pred - F_gt| ** alpha`` scaled to a maximum
    of 1; the loss is the mean of weight times squared distance over all bins.
    """
    if pred.dims != gt.dims:
        raise DimMismatch(f"pred dims {pred.dims} != gt dims {gt.dims}")
    diff = fft2c(pred.data) - fft2c(gt.data)
    dist = diff.real ** 2 + diff.imag ** 2
    total = 0.0
    for d in dist:
        peak = d.max()
        if peak == 0:
            continue
        w = (d / peak) ** (alpha / 2.0)
        total += float(np.sum(w * d))
    return total / dist.size
