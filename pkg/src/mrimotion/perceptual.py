"""Feature extractors, the motion perceptual loss and the composite objective.

An extractor is a plain stack of convolution stages. Any stage may be
tapped; the perceptual loss compares tapped feature maps of a prediction
and its reference with a per-layer normalized L1 distance and averages the
layers, then the slices.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from . import _conv
from .errors import DimMismatch, NonFiniteTerm, ShapeUnderflow
from .metrics import fid, ssim
from .spectral import focal_frequency_loss
from .volume import Volume

WEIGHTS_MAGIC = "MRIF-WEIGHTS"


@dataclass(frozen=True)
class ConvStage:
    in_channels: int
    out_channels: int
    kernel_size: int = 3
    stride: int = 1
    nonlinearity: str = "relu"
    pool: str = "none"

    def __post_init__(self):
        if self.nonlinearity not in ("relu", "none"):
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.pool not in ("none", "max2"):
            raise ValueError(f"unknown pool {self.pool!r}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be a positive odd integer")
        if min(self.in_channels, self.out_channels, self.stride) < 1:
            raise ValueError("channels and stride must be >= 1")

    @property
    def kernel_shape(self) -> tuple:
        return (self.out_channels, self.in_channels, self.kernel_size, self.kernel_size)


@dataclass(frozen=True)
class FeatureMap:
    data: np.ndarray
    layer_index: int


class FeatureExtractor:
    """Immutable convolutional feature stack with named tap stages.

    Parameters
    ----------
    stages : sequence of ConvStage
    weights : sequence of (kernel, bias) pairs, one per stage
    tap_layers : sequence of int
        Zero-based stage indices whose outputs are exposed, in output order.
    provenance : dict
        ``{"kind": "seeded", "seed": s}`` or ``{"kind": "loaded", "path": p}``.
    """

    def __init__(self, stages: Sequence[ConvStage], weights, tap_layers: Sequence[int],
                 provenance: Optional[dict] = None):
        self.stages = tuple(stages)
        if not self.stages:
            raise ValueError("extractor needs at least one stage")
        for prev, nxt in zip(self.stages, self.stages[1:]):
            if nxt.in_channels != prev.out_channels:
                raise ValueError("stage channel counts do not chain")
        self.tap_layers = tuple(int(t) for t in tap_layers)
        if not self.tap_layers:
            raise ValueError("tap_layers must be non-empty")
        if any(t < 0 or t >= len(self.stages) for t in self.tap_layers):
            raise ValueError(f"tap layer out of range 0..{len(self.stages) - 1}")
        if len(weights) != len(self.stages):
            raise ValueError("need one (kernel, bias) pair per stage")
        frozen = []
        for stage, (kernel, bias) in zip(self.stages, weights):
            kernel = np.array(kernel, dtype=np.float64)
            bias = np.array(bias, dtype=np.float64)
            if kernel.shape != stage.kernel_shape or bias.shape != (stage.out_channels,):
                raise ValueError(
                    f"weights {kernel.shape}/{bias.shape} do not match stage {stage.kernel_shape}")
            kernel.flags.writeable = False
            bias.flags.writeable = False
            frozen.append((kernel, bias))
        self.weights = tuple(frozen)
        self.provenance = dict(provenance or {"kind": "constructed"})

    # -- constructors -------------------------------------------------------

    @classmethod
    def seeded(cls, stages: Sequence[ConvStage], tap_layers: Sequence[int], seed: int):
        """Fan-in scaled uniform (Kaiming) init, rounded to float32 so files roundtrip exactly."""
        rng = np.random.default_rng(seed)
        weights = []
        for stage in stages:
            fan_in = stage.in_channels * stage.kernel_size ** 2
            bound = math.sqrt(6.0 / fan_in)
            kernel = rng.uniform(-bound, bound, size=stage.kernel_shape)
            bias = rng.uniform(-1.0 / math.sqrt(fan_in), 1.0 / math.sqrt(fan_in),
                               size=stage.out_channels)
            weights.append((kernel.astype(np.float32).astype(np.float64),
                            bias.astype(np.float32).astype(np.float64)))
        return cls(stages, weights, tap_layers, {"kind": "seeded", "seed": int(seed)})

    @classmethod
    def identity(cls, scales: Sequence[float] = (1.0,)):
        """One 1x1 linear stage per entry of ``scales``, each tapped.

        Stage ``i`` multiplies the *input slice* by ``scales[i]``, so with
        ``scales=(1.0,)`` the single feature map equals the input.
        """
        stages, weights = [], []
        prev = 1.0
        for s in scales:
            stages.append(ConvStage(1, 1, kernel_size=1, nonlinearity="none"))
            weights.append((np.full((1, 1, 1, 1), s / prev), np.zeros(1)))
            prev = s
        return cls(stages, weights, range(len(stages)))

    # -- forward ------------------------------------------------------------

    def extract(self, image: np.ndarray) -> list[FeatureMap]:
        """Forward one 2-D slice and return the tapped maps in ``tap_layers`` order."""
        x = np.asarray(image, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError("extract expects a single 2-D slice")
        x = x[None]
        outputs = {}
        taps = set(self.tap_layers)
        last = max(taps)
        for idx, (stage, (kernel, bias)) in enumerate(zip(self.stages, self.weights)):
            if x.shape[1] < 1 or x.shape[2] < 1:
                raise ShapeUnderflow("feature map collapsed to zero size")
            x = _conv.conv2d_same(x, kernel, bias, stage.stride)
            if stage.nonlinearity == "relu":
                x = _conv.relu(x)
            if stage.pool == "max2":
                x = _conv.max_pool2(x)
            if idx in taps:
                outputs[idx] = x
            if idx == last:
                break
        return [FeatureMap(outputs[t], t) for t in self.tap_layers]

    def slice_embedding(self, image: np.ndarray) -> np.ndarray:
        """Global-average-pooled tap features concatenated into one vector."""
        return np.concatenate([fm.data.mean(axis=(1, 2)) for fm in self.extract(image)])

    # -- persistence --------------------------------------------------------

    def save(self, path) -> Path:
        """Write ``<stem>.json`` manifest plus ``<stem>.f32`` payload; returns the manifest path."""
        manifest_path = Path(path).with_suffix(".json")
        payload_path = manifest_path.with_suffix(".f32")
        manifest = {
            "magic": WEIGHTS_MAGIC,
            "version": 1,
            "kind": "extractor",
            "stages": [stage.__dict__ for stage in self.stages],
            "tap_layers": list(self.tap_layers),
            "provenance": self.provenance,
            "payload": payload_path.name,
        }
        _write_tensors(payload_path, [t for pair in self.weights for t in pair])
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return manifest_path

    @classmethod
    def load(cls, path) -> "FeatureExtractor":
        manifest_path = Path(path)
        manifest = json.loads(manifest_path.read_text())
        if manifest.get("magic") != WEIGHTS_MAGIC or manifest.get("kind") != "extractor":
            raise ValueError(f"{manifest_path} is not an extractor manifest")
        stages = [ConvStage(**s) for s in manifest["stages"]]
        shapes = []
        for s in stages:
            shapes += [s.kernel_shape, (s.out_channels,)]
        tensors = _read_tensors(manifest_path.with_name(manifest["payload"]), shapes)
        weights = list(zip(tensors[::2], tensors[1::2]))
        return cls(stages, weights, manifest["tap_layers"],
                   {"kind": "loaded", "path": str(manifest_path)})


def _write_tensors(path: Path, tensors) -> None:
    blob = b"".join(np.ascontiguousarray(t, dtype="<f4").tobytes() for t in tensors)
    path.write_bytes(blob)


def _read_tensors(path: Path, shapes) -> list[np.ndarray]:
    flat = np.frombuffer(path.read_bytes(), dtype="<f4")
    need = sum(int(np.prod(s)) for s in shapes)
    if flat.size != need:
        raise ValueError(f"{path}: payload holds {flat.size} scalars, manifest needs {need}")
    out, pos = [], 0
    for s in shapes:
        n = int(np.prod(s))
        out.append(flat[pos:pos + n].astype(np.float64).reshape(s))
        pos += n
    return out


def deep_tap_extractor(seed: int = 0, widths=(8, 16, 32, 32, 32)) -> FeatureExtractor:
    """Five 3x3 stages, pooled after the first four, tapped at the last two."""
    stages, c_in = [], 1
    for i, c_out in enumerate(widths):
        stages.append(ConvStage(c_in, c_out, 3, 1, "relu", "max2" if i < len(widths) - 1 else "none"))
        c_in = c_out
    return FeatureExtractor.seeded(stages, (len(widths) - 2, len(widths) - 1), seed)


def extract_features(ex: FeatureExtractor, image: np.ndarray) -> list[FeatureMap]:
    return ex.extract(image)


def motion_perceptual_loss(ex: FeatureExtractor, pred: Volume, gt: Volume) -> float:
    """Mean over slices of the mean over tap layers of the normalized feature L1."""
    if pred.dims != gt.dims:
        raise DimMismatch(f"dims differ: {pred.dims} vs {gt.dims}")
    per_slice = []
    for p, g in zip(pred.data, gt.data):
        fp, fg = ex.extract(p), ex.extract(g)
        per_layer = [float(np.mean(np.abs(a.data - b.data))) for a, b in zip(fp, fg)]
        per_slice.append(sum(per_layer) / len(per_layer))
    return sum(per_slice) / len(per_slice)


def feature_distance(ex: FeatureExtractor, a: Volume, b: Volume) -> float:
    """Perceptual distance between two volumes; same functional as the MPL."""
    return motion_perceptual_loss(ex, a, b)


def volume_embeddings(ex: FeatureExtractor, v: Volume) -> np.ndarray:
    """One pooled feature vector per slice, shape ``(nz, d)``."""
    return np.stack([ex.slice_embedding(s) for s in v.data])


def volume_fid(ex: FeatureExtractor, a: Volume, b: Volume) -> float:
    return fid(volume_embeddings(ex, a), volume_embeddings(ex, b))


# -- composite objective ------------------------------------------------------

LOSS_TERMS = ("l1", "ssim", "motion", "focal", "adv")


@dataclass(frozen=True)
class LossWeights:
    l1: float = 0.25
    ssim: float = 0.25
    motion: float = 0.3
    focal: float = 0.15
    adv: float = 0.05

    def __post_init__(self):
        values = [getattr(self, n) for n in LOSS_TERMS]
        if any(not (0 < w <= 1) for w in values):
            raise ValueError(f"loss weights must lie in (0, 1], got {values}")
        total = math.fsum(values)
        if abs(total - 1.0) > 1e-9:
            warnings.warn(f"loss weights sum to {total}; renormalizing to 1", stacklevel=3)
            for n in LOSS_TERMS:
                object.__setattr__(self, n, getattr(self, n) / total)


def composite_loss(terms: Mapping[str, float], w: LossWeights = LossWeights()) -> float:
    """Weighted sum of loss terms.

    ``terms`` holds ``l1``, ``ssim_loss`` (that is, 1 - SSIM), ``motion``,
    ``focal`` and optionally ``adv``. A missing adversarial term counts as 0
    and keeps its weight.
    """
    values = {
        "l1": terms["l1"],
        "ssim": terms["ssim_loss"],
        "motion": terms["motion"],
        "focal": terms["focal"],
        "adv": terms.get("adv", 0.0) if terms.get("adv") is not None else 0.0,
    }
    for name, val in values.items():
        if not math.isfinite(val) or val < 0:
            raise NonFiniteTerm(f"loss term {name!r} must be finite and non-negative, got {val}")
    return math.fsum(getattr(w, n) * values[n] for n in LOSS_TERMS)


def loss_terms(ex: FeatureExtractor, pred: Volume, gt: Volume, adv: Optional[float] = None,
               focal_alpha: float = 1.0) -> dict:
    """Evaluate every image-derived term of the composite objective."""
    if pred.dims != gt.dims:
        raise DimMismatch(f"dims differ: {pred.dims} vs {gt.dims}")
    return {
        "l1": float(np.mean(np.abs(pred.data - gt.data))),
        "ssim_loss": 1.0 - ssim(pred, gt),
        "motion": motion_perceptual_loss(ex, pred, gt),
        "focal": focal_frequency_loss(pred, gt, focal_alpha),
        "adv": adv,
    }
