"""Image quality metrics: PSNR, SSIM, SNR, CNR and the Frechet distance.

All metrics operate on max-normalized volumes (data range 1). SNR and CNR
use regions from :func:`mrimotion.volume.resolve_roi`::

    SNR = mean(foreground) / std(background)
    CNR = |mean(tissue_a) - mean(tissue_b)| / std(background)

with the sample (n - 1) standard deviation.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields
from typing import Iterable, Optional

import numpy as np
from scipy import ndimage

from .errors import DegenerateBackground, DimMismatch, SliceTooSmall, TooFewSamples
from .volume import RoiSpec, Volume, resolve_roi

SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_dims(a: Volume, b: Volume) -> None:
    if a.dims != b.dims:
        raise DimMismatch(f"dims differ: {a.dims} vs {b.dims}")


def psnr(pred: Volume, gt: Volume, data_range: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical volumes."""
    _check_dims(pred, gt)
    if data_range <= 0:
        raise ValueError("data_range must be positive")
    mse = float(np.mean((pred.data - gt.data) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(data_range ** 2 / mse)


def gaussian_window_1d(size: int = SSIM_WIN, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    pad = (g.size - 1) // 2
    out = ndimage.correlate1d(img, g, axis=-1, mode="constant")
    out = ndimage.correlate1d(out, g, axis=-2, mode="constant")
    return out[..., pad:-pad, pad:-pad]


def ssim_map(x: np.ndarray, y: np.ndarray, data_range: float = 1.0) -> np.ndarray:
    """Local SSIM over the valid region of a 2-D pair (Gaussian 11x11, sigma 1.5)."""
    g = gaussian_window_1d()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mx = _filter_valid(x, g)
    my = _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return num / den


def ssim(pred: Volume, gt: Volume) -> float:
    """Mean over slices of the per-slice mean SSIM."""
    _check_dims(pred, gt)
    _, ny, nx = pred.dims
    if ny < SSIM_WIN or nx < SSIM_WIN:
        raise SliceTooSmall(f"slices must be at least {SSIM_WIN}x{SSIM_WIN}, got {ny}x{nx}")
    per_slice = [float(ssim_map(p, g).mean()) for p, g in zip(pred.data, gt.data)]
    return float(np.mean(per_slice))


def _background_std(v: Volume, background: np.ndarray) -> float:
    values = v.data[background]
    if values.size < 2:
        raise DegenerateBackground("background needs at least two voxels")
    sd = float(np.std(values, ddof=1))
    if sd == 0:
        raise DegenerateBackground("background has zero standard deviation")
    return sd


def snr(v: Volume, roi: RoiSpec = RoiSpec()) -> float:
    fg, _, _, bg = resolve_roi(v, roi, require=("foreground", "background"))
    return float(v.data[fg].mean()) / _background_std(v, bg)


def cnr(v: Volume, roi: RoiSpec = RoiSpec()) -> float:
    _, ta, tb, bg = resolve_roi(v, roi)
    return abs(float(v.data[ta].mean()) - float(v.data[tb].mean())) / _background_std(v, bg)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric square root with negative eigenvalues clamped to zero."""
    m = 0.5 * (m + m.T)
    w, q = np.linalg.eigh(m)
    return (q * np.sqrt(np.clip(w, 0.0, None))) @ q.T


def frechet_distance(mu_a, cov_a, mu_b, cov_b) -> float:
    mu_a, mu_b = np.atleast_1d(mu_a), np.atleast_1d(mu_b)
    cov_a, cov_b = np.atleast_2d(cov_a), np.atleast_2d(cov_b)
    root_a = _psd_sqrt(cov_a)
    cross = _psd_sqrt(root_a @ cov_b @ root_a)
    diff = mu_a - mu_b
    value = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(cross))
    return max(value, 0.0)


def fid(features_a, features_b) -> float:
    """Frechet distance between Gaussian fits of two feature sets.

    Parameters
    ----------
    features_a, features_b : array_like, shape (n, d)
        One row per sample; each set needs at least two rows.
    """
    a = np.atleast_2d(np.asarray(features_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(features_b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise DimMismatch(f"feature dimensionality differs: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise TooFewSamples("each feature set needs at least two samples")
    cov_a = np.atleast_2d(np.cov(a, rowvar=False, ddof=1))
    cov_b = np.atleast_2d(np.cov(b, rowvar=False, ddof=1))
    return frechet_distance(a.mean(axis=0), cov_a, b.mean(axis=0), cov_b)


# -- metric rows --------------------------------------------------------------

METRIC_NAMES = ("psnr", "ssim", "snr", "cnr", "fid", "feature_dist")


@dataclass(frozen=True)
class MetricRow:
    volume_id: str
    method_label: str
    psnr: Optional[float] = None
    ssim: Optional[float] = None
    snr: Optional[float] = None
    cnr: Optional[float] = None
    fid: Optional[float] = None
    feature_dist: Optional[float] = None


CSV_FIELDS = tuple(f.name for f in fields(MetricRow))


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(float(value))


def _parse(text: str) -> Optional[float]:
    return None if text == "" else float(text)


def rows_to_csv(rows: Iterable[MetricRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for row in rows:
        writer.writerow([_fmt(getattr(row, name)) for name in CSV_FIELDS])
    return buf.getvalue()


def rows_from_csv(text: str) -> list[MetricRow]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_FIELDS:
        raise ValueError(f"metric CSV header must be {','.join(CSV_FIELDS)}")
    out = []
    for rec in reader:
        out.append(MetricRow(
            volume_id=rec["volume_id"],
            method_label=rec["method_label"],
            **{name: _parse(rec[name]) for name in METRIC_NAMES},
        ))
    return out
