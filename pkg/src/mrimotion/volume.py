"""Volume container, intensity normalization, ROI resolution and the MRIF v1 file format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import AllZeroVolume, DimMismatch, EmptyRegion, FormatError

MODALITIES = ("T1", "T2")
SEVERITIES = ("mild", "moderate", "severe")

MAGIC = "MRIF"
VERSION = 1
SIDECAR_SUFFIX = ".mrif.json"
PAYLOAD_SUFFIX = ".f32"

BORDER_WIDTH = 5


@dataclass(frozen=True)
class VolumeMeta:
    patient_id: str
    modality: str = "T1"
    center: str = ""
    severity_label: Optional[str] = None
    is_corrupted: bool = False

    def __post_init__(self):
        if not isinstance(self.patient_id, str) or not self.patient_id:
            raise ValueError("patient_id must be a non-empty string")
        if self.modality not in MODALITIES:
            raise ValueError(f"modality must be one of {MODALITIES}, got {self.modality!r}")
        if self.severity_label is not None:
            if self.severity_label not in SEVERITIES:
                raise ValueError(f"unknown severity label {self.severity_label!r}")
            if not self.is_corrupted:
                raise ValueError("severity_label requires is_corrupted=True")

    def to_dict(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "modality": self.modality,
            "center": self.center,
            "severity_label": self.severity_label,
            "is_corrupted": self.is_corrupted,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VolumeMeta":
        if "patient_id" not in d:
            raise FormatError("meta is missing patient_id")
        try:
            return cls(
                patient_id=d["patient_id"],
                modality=d.get("modality", "T1"),
                center=d.get("center", ""),
                severity_label=d.get("severity_label"),
                is_corrupted=bool(d.get("is_corrupted", False)),
            )
        except ValueError as exc:
            raise FormatError(str(exc)) from exc


@dataclass(frozen=True, eq=False)
class Volume:
    """A 3-D scalar image indexed ``(z, y, x)``.

    The voxel array is stored as float64 and made read-only on construction,
    so a Volume can be shared freely between threads.
    """

    data: np.ndarray
    meta: VolumeMeta
    spacing: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"volume data must be 3-D with all dims >= 1, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("volume contains non-finite voxels")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3:
            raise ValueError("spacing must have three entries")
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self) -> tuple:
        return self.data.shape

    def with_data(self, data, **meta_changes) -> "Volume":
        meta = replace(self.meta, **meta_changes) if meta_changes else self.meta
        return Volume(data, meta, self.spacing)

    def __eq__(self, other):
        if not isinstance(other, Volume):
            return NotImplemented
        return (
            self.dims == other.dims
            and np.array_equal(self.data, other.data)
            and self.spacing == other.spacing
            and self.meta == other.meta
        )

    __hash__ = None


def normalize_max(v: Volume) -> Volume:
    """Scale a volume so its maximum voxel is exactly 1.

    Negative voxels are clamped to zero first; magnitude images have none,
    so their presence points at a bad ingestion step rather than signal.

    Raises
    ------
    AllZeroVolume
        If no voxel is positive.
    """
    data = np.maximum(v.data, 0.0)
    peak = data.max()
    if peak <= 0:
        raise AllZeroVolume("volume has no positive voxel; cannot normalize")
    return Volume(data / peak, v.meta, v.spacing)


def _sidecar_paths(path) -> tuple[Path, Path]:
    path = Path(path)
    name = path.name
    if name.endswith(SIDECAR_SUFFIX):
        stem = name[: -len(SIDECAR_SUFFIX)]
    else:
        stem = name
    return path.with_name(stem + SIDECAR_SUFFIX), path.with_name(stem + PAYLOAD_SUFFIX)


def save_volume(v: Volume, path) -> Path:
    """Write ``v`` as an MRIF v1 sidecar/payload pair and return the sidecar path.

    ``path`` may be the sidecar name (``<id>.mrif.json``) or the bare stem.
    The payload is float32 little-endian in z, y, x order, so the roundtrip
    is bit-exact for float32-representable voxel values.
    """
    sidecar, payload = _sidecar_paths(path)
    header = {
        "magic": MAGIC,
        "version": VERSION,
        "dims": list(v.dims),
        "spacing": list(v.spacing),
        "dtype": "f32le",
        "meta": v.meta.to_dict(),
    }
    sidecar.parent.mkdir(parents=True, exist_ok=True)
    payload.write_bytes(np.ascontiguousarray(v.data, dtype="<f4").tobytes())
    sidecar.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return sidecar


def load_volume(path) -> Volume:
    sidecar, payload = _sidecar_paths(path)
    try:
        header = json.loads(sidecar.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{sidecar}: sidecar is not valid JSON") from exc
    if header.get("magic") != MAGIC or header.get("version") != VERSION:
        raise FormatError(f"{sidecar}: expected magic {MAGIC!r} version {VERSION}")
    if header.get("dtype") != "f32le":
        raise FormatError(f"{sidecar}: unsupported dtype {header.get('dtype')!r}")
    dims = header.get("dims")
    if not isinstance(dims, list) or len(dims) != 3 or any(int(d) < 1 for d in dims):
        raise FormatError(f"{sidecar}: dims must be three positive integers")
    if "meta" not in header or not isinstance(header["meta"], dict):
        raise FormatError(f"{sidecar}: missing meta block")
    meta = VolumeMeta.from_dict(header["meta"])
    raw = np.frombuffer(payload.read_bytes(), dtype="<f4")
    expected = int(np.prod(dims))
    if raw.size != expected:
        raise DimMismatch(f"{payload}: {raw.size} scalars for dims {dims} ({expected} expected)")
    spacing = header.get("spacing", [1.0, 1.0, 1.0])
    return Volume(raw.reshape(dims).astype(np.float64), meta, tuple(spacing))


# -- regions of interest ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class RoiSpec:
    kind: str = "auto"
    mask: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        if self.kind not in ("auto", "explicit_mask"):
            raise ValueError(f"unknown ROI kind {self.kind!r}")
        if self.kind == "explicit_mask":
            if self.mask is None:
                raise ValueError("explicit_mask ROI needs a mask")
            mask = np.asarray(self.mask, dtype=bool)
            if not mask.any():
                raise EmptyRegion("explicit mask has no true voxel")
            object.__setattr__(self, "mask", mask)


def otsu_threshold(values: np.ndarray, bins: int = 256) -> float:
    """Otsu threshold of ``values`` over a fixed-bin histogram.

    Returns the upper edge of the bin that maximizes the between-class
    variance; ``nan`` when the values are constant.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    lo, hi = values.min(), values.max()
    if hi <= lo:
        return float("nan")
    counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
    centers = 0.5 * (edges[:-1] + edges[1:])
    w0 = np.cumsum(counts).astype(np.float64)
    w1 = w0[-1] - w0
    s0 = np.cumsum(counts * centers)
    m0 = np.divide(s0, w0, out=np.zeros_like(s0), where=w0 > 0)
    m1 = np.divide(s0[-1] - s0, w1, out=np.zeros_like(s0), where=w1 > 0)
    between = w0 * w1 * (m0 - m1) ** 2
    return float(edges[int(np.argmax(between[:-1])) + 1])


def two_means(values: np.ndarray, max_iter: int = 100) -> np.ndarray:
    """Split 1-D ``values`` into two clusters; returns True for the brighter one.

    Centroids start at the minimum and maximum, so the result is deterministic.
    """
    values = np.asarray(values, dtype=np.float64)
    c_lo, c_hi = values.min(), values.max()
    bright = values > 0.5 * (c_lo + c_hi)
    for _ in range(max_iter):
        if bright.all() or not bright.any():
            break
        c_lo, c_hi = values[~bright].mean(), values[bright].mean()
        updated = np.abs(values - c_hi) < np.abs(values - c_lo)
        if np.array_equal(updated, bright):
            break
        bright = updated
    return bright


def border_band(dims, width: int = BORDER_WIDTH) -> np.ndarray:
    """In-plane frame of ``width`` voxels around every slice."""
    band = np.zeros(dims, dtype=bool)
    band[:, :width, :] = True
    band[:, -width:, :] = True
    band[:, :, :width] = True
    band[:, :, -width:] = True
    return band


ROI_NAMES = ("foreground", "tissue_a", "tissue_b", "background")


def resolve_roi(v: Volume, spec: RoiSpec = RoiSpec(), require=ROI_NAMES):
    """Resolve foreground, two tissue classes and background masks.

    ``require`` names the masks that must be non-empty; SNR only needs the
    foreground and background, so a uniform foreground is fine there.

    Returns
    -------
    foreground, tissue_a, tissue_b, background : ndarray of bool
        ``tissue_a`` is the brighter of the two foreground clusters.
    """
    if spec.kind == "explicit_mask":
        if spec.mask.shape != v.dims:
            raise DimMismatch(f"mask shape {spec.mask.shape} != volume dims {v.dims}")
        foreground = spec.mask.copy()
    else:
        t = otsu_threshold(v.data)
        if np.isnan(t):
            raise EmptyRegion("constant volume: Otsu threshold cannot split it")
        foreground = v.data >= t
    background = border_band(v.dims) & ~foreground

    tissue_a = np.zeros(v.dims, dtype=bool)
    tissue_b = np.zeros(v.dims, dtype=bool)
    if foreground.any():
        bright = two_means(v.data[foreground])
        tissue_a[foreground] = bright
        tissue_b[foreground] = ~bright

    masks = (foreground, tissue_a, tissue_b, background)
    for name, mask in zip(ROI_NAMES, masks):
        if name in require and not mask.any():
            raise EmptyRegion(f"{name} region is empty")
    return masks
