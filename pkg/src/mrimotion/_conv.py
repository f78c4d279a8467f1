"""Minimal same-padded 2-D convolution used by extractors and blocks."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeUnderflow


def conv2d_same(x: np.ndarray, kernel: np.ndarray, bias=None, stride: int = 1) -> np.ndarray:
    """Cross-correlate ``x`` (C_in, H, W) with ``kernel`` (C_out, C_in, kh, kw).

    Zero padding keeps the spatial size for odd kernels; ``stride`` subsamples
    the same-size result, giving ``ceil(H / stride)`` rows.
    """
    c_out, c_in, kh, kw = kernel.shape
    if x.shape[0] != c_in:
        raise ValueError(f"input has {x.shape[0]} channels, kernel expects {c_in}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("only odd kernel sizes are supported")
    ph, pw = kh // 2, kw // 2
    padded = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    windows = sliding_window_view(padded, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    out = np.tensordot(kernel, windows, axes=([1, 2, 3], [0, 3, 4]))
    if bias is not None:
        out = out + np.asarray(bias)[:, None, None]
    return out


def max_pool2(x: np.ndarray) -> np.ndarray:
    """2x2 max pooling with floor semantics (odd trailing rows/cols dropped)."""
    c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    if h2 < 1 or w2 < 1:
        raise ShapeUnderflow(f"cannot 2x2-pool a {h}x{w} map")
    return x[:, : 2 * h2, : 2 * w2].reshape(c, h2, 2, w2, 2).max(axis=(2, 4))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


_TINY = np.finfo(np.float64).tiny
_BELOW_ONE = np.nextafter(1.0, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Logistic function, clipped so gates stay strictly inside (0, 1)."""
    return np.clip(0.5 * (1.0 + np.tanh(0.5 * x)), _TINY, _BELOW_ONE)
