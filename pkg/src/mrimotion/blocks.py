"""Forward-only reference versions of the restoration network's building blocks.

Every block maps a ``(C, H, W)`` array to an array of the same shape, which is
what lets them sit on the skip paths of an encoder/decoder. Weights are plain
dataclasses of numpy arrays; ``zeros`` and ``random`` constructors are
provided for each.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from ._conv import conv2d_same, relu, sigmoid
from .errors import ShapeUnderflow
from .perceptual import WEIGHTS_MAGIC, _read_tensors, _write_tensors


def _check_tensor(x: np.ndarray, min_hw: int = 1) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or min(x.shape) < 1:
        raise ValueError(f"expected a (C, H, W) array, got shape {x.shape}")
    if x.shape[1] < min_hw or x.shape[2] < min_hw:
        raise ShapeUnderflow(f"spatial size {x.shape[1:]} below the {min_hw}x{min_hw} minimum")
    return x


def _kaiming(rng, shape):
    fan_in = int(np.prod(shape[1:]))
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass(frozen=True, eq=False)
class MultiScaleWeights:
    k3: np.ndarray
    b3: np.ndarray
    k5: np.ndarray
    b5: np.ndarray
    k7: np.ndarray
    b7: np.ndarray
    fuse: np.ndarray  # (C, 3C, 1, 1)
    fuse_b: np.ndarray

    def __post_init__(self):
        c = self.b3.shape[0]
        for k, size in ((self.k3, 3), (self.k5, 5), (self.k7, 7)):
            if k.shape != (c, c, size, size):
                raise ValueError(f"branch kernel {k.shape} should be {(c, c, size, size)}")
        if self.fuse.shape != (c, 3 * c, 1, 1) or self.fuse_b.shape != (c,):
            raise ValueError("fusion kernel must be (C, 3C, 1, 1)")

    @classmethod
    def zeros(cls, c: int):
        z = np.zeros
        return cls(z((c, c, 3, 3)), z(c), z((c, c, 5, 5)), z(c), z((c, c, 7, 7)), z(c),
                   z((c, 3 * c, 1, 1)), z(c))

    @classmethod
    def identity(cls, c: int):
        """Delta kernels on every branch and an averaging fusion."""
        w = cls.zeros(c)
        for k, size in ((w.k3, 3), (w.k5, 5), (w.k7, 7)):
            k[np.arange(c), np.arange(c), size // 2, size // 2] = 1.0
        for branch in range(3):
            w.fuse[np.arange(c), branch * c + np.arange(c), 0, 0] = 1.0 / 3.0
        return w

    @classmethod
    def random(cls, c: int, rng):
        return cls(_kaiming(rng, (c, c, 3, 3)), rng.normal(0, 0.1, c),
                   _kaiming(rng, (c, c, 5, 5)), rng.normal(0, 0.1, c),
                   _kaiming(rng, (c, c, 7, 7)), rng.normal(0, 0.1, c),
                   _kaiming(rng, (c, 3 * c, 1, 1)), rng.normal(0, 0.1, c))


@dataclass(frozen=True, eq=False)
class ChannelAttentionWeights:
    w1: np.ndarray  # (C // r, C)
    b1: np.ndarray
    w2: np.ndarray  # (C, C // r)
    b2: np.ndarray

    def __post_init__(self):
        hidden, c = self.w1.shape
        if self.w2.shape != (c, hidden) or self.b1.shape != (hidden,) or self.b2.shape != (c,):
            raise ValueError("channel attention weight shapes are inconsistent")

    @staticmethod
    def hidden_size(c: int, reduction: int) -> int:
        if reduction < 1:
            raise ValueError("reduction ratio must be >= 1")
        if c % reduction:
            raise ValueError(f"channels ({c}) must be divisible by the reduction ratio ({reduction})")
        return c // reduction

    @classmethod
    def zeros(cls, c: int, reduction: int = 16):
        h = cls.hidden_size(c, reduction)
        return cls(np.zeros((h, c)), np.zeros(h), np.zeros((c, h)), np.zeros(c))

    @classmethod
    def random(cls, c: int, rng, reduction: int = 16):
        h = cls.hidden_size(c, reduction)
        return cls(_kaiming(rng, (h, c)), rng.normal(0, 0.1, h),
                   _kaiming(rng, (c, h)), rng.normal(0, 0.1, c))


@dataclass(frozen=True, eq=False)
class SpatialAttentionWeights:
    kernel: np.ndarray  # (1, 2, 3, 3)
    bias: np.ndarray

    def __post_init__(self):
        if self.kernel.shape != (1, 2, 3, 3) or self.bias.shape != (1,):
            raise ValueError("spatial attention needs a (1, 2, 3, 3) kernel and one bias")

    @classmethod
    def zeros(cls):
        return cls(np.zeros((1, 2, 3, 3)), np.zeros(1))

    @classmethod
    def random(cls, rng):
        return cls(_kaiming(rng, (1, 2, 3, 3)), rng.normal(0, 0.1, 1))


@dataclass(frozen=True, eq=False)
class ResidualWeights:
    k1: np.ndarray
    b1: np.ndarray
    k2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        c = self.b1.shape[0]
        if self.k1.shape != (c, c, 3, 3) or self.k2.shape != (c, c, 3, 3) or self.b2.shape != (c,):
            raise ValueError("residual block needs two (C, C, 3, 3) kernels")

    @classmethod
    def zeros(cls, c: int):
        return cls(np.zeros((c, c, 3, 3)), np.zeros(c), np.zeros((c, c, 3, 3)), np.zeros(c))

    @classmethod
    def identity(cls, c: int):
        w = cls.zeros(c)
        for k in (w.k1, w.k2):
            k[np.arange(c), np.arange(c), 1, 1] = 1.0
        return w

    @classmethod
    def random(cls, c: int, rng):
        return cls(_kaiming(rng, (c, c, 3, 3)), rng.normal(0, 0.1, c),
                   _kaiming(rng, (c, c, 3, 3)), rng.normal(0, 0.1, c))


@dataclass(frozen=True, eq=False)
class MSAWeights:
    channel: ChannelAttentionWeights
    spatial: SpatialAttentionWeights

    @classmethod
    def zeros(cls, c: int, reduction: int = 16):
        return cls(ChannelAttentionWeights.zeros(c, reduction), SpatialAttentionWeights.zeros())

    @classmethod
    def random(cls, c: int, rng, reduction: int = 16):
        return cls(ChannelAttentionWeights.random(c, rng, reduction),
                   SpatialAttentionWeights.random(rng))


def multiscale_recovery(x: np.ndarray, w: MultiScaleWeights) -> np.ndarray:
    """Parallel 3x3/5x5/7x7 convolutions, concatenated and fused by a 1x1 convolution."""
    x = _check_tensor(x, 7)
    branches = [conv2d_same(x, w.k3, w.b3), conv2d_same(x, w.k5, w.b5), conv2d_same(x, w.k7, w.b7)]
    return conv2d_same(np.concatenate(branches), w.fuse, w.fuse_b)


def channel_attention_weights(x: np.ndarray, w: ChannelAttentionWeights) -> np.ndarray:
    """Per-channel gates in (0, 1) from the squeeze-and-excitation bottleneck."""
    pooled = x.mean(axis=(1, 2))
    return sigmoid(w.w2 @ relu(w.w1 @ pooled + w.b1) + w.b2)


def channel_attention(x: np.ndarray, w: ChannelAttentionWeights) -> np.ndarray:
    x = _check_tensor(x)
    return channel_attention_weights(x, w)[:, None, None] * x


def spatial_attention_mask(x: np.ndarray, w: SpatialAttentionWeights) -> np.ndarray:
    descriptor = np.stack([x.max(axis=0), x.mean(axis=0)])
    return sigmoid(conv2d_same(descriptor, w.kernel, w.bias)[0])


def spatial_attention(x: np.ndarray, w: SpatialAttentionWeights) -> np.ndarray:
    x = _check_tensor(x, 3)
    return spatial_attention_mask(x, w)[None] * x


def msa_block(x: np.ndarray, w: MSAWeights) -> np.ndarray:
    """Channel attention followed by spatial attention."""
    return spatial_attention(channel_attention(x, w.channel), w.spatial)


def residual_block(x: np.ndarray, w: ResidualWeights) -> np.ndarray:
    x = _check_tensor(x, 3)
    return x + conv2d_same(relu(conv2d_same(x, w.k1, w.b1)), w.k2, w.b2)


# -- persistence ----------------------------------------------------------------

_BLOCK_TYPES = {
    "multiscale": MultiScaleWeights,
    "channel_attention": ChannelAttentionWeights,
    "spatial_attention": SpatialAttentionWeights,
    "residual": ResidualWeights,
}


def _flatten(weights):
    if isinstance(weights, MSAWeights):
        return [("channel." + n, t) for n, t in _flatten(weights.channel)] + \
               [("spatial." + n, t) for n, t in _flatten(weights.spatial)]
    return [(f.name, getattr(weights, f.name)) for f in fields(weights)]


def save_block_weights(weights, path) -> Path:
    """Store block weights in the extractor file format, tagged with the block type."""
    tag = "msa" if isinstance(weights, MSAWeights) else next(
        k for k, cls in _BLOCK_TYPES.items() if isinstance(weights, cls))
    manifest_path = Path(path).with_suffix(".json")
    payload_path = manifest_path.with_suffix(".f32")
    named = _flatten(weights)
    _write_tensors(payload_path, [t for _, t in named])
    manifest = {
        "magic": WEIGHTS_MAGIC,
        "version": 1,
        "kind": "block",
        "block": tag,
        "tensors": [{"name": n, "shape": list(np.shape(t))} for n, t in named],
        "payload": payload_path.name,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def load_block_weights(path):
    manifest_path = Path(path)
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("magic") != WEIGHTS_MAGIC or manifest.get("kind") != "block":
        raise ValueError(f"{manifest_path} is not a block weight manifest")
    specs = manifest["tensors"]
    tensors = _read_tensors(manifest_path.with_name(manifest["payload"]),
                            [tuple(s["shape"]) for s in specs])
    named = {s["name"]: t for s, t in zip(specs, tensors)}
    if manifest["block"] == "msa":
        ch = {k.split(".", 1)[1]: v for k, v in named.items() if k.startswith("channel.")}
        sp = {k.split(".", 1)[1]: v for k, v in named.items() if k.startswith("spatial.")}
        return MSAWeights(ChannelAttentionWeights(**ch), SpatialAttentionWeights(**sp))
    return _BLOCK_TYPES[manifest["block"]](**named)
