"""k-space phase-perturbation motion simulation at calibrated severities.

The pipeline for one volume is::

    forward_transform -> perturb_phase -> undersample -> inverse_transform -> normalize_max

Every random draw comes from generators seeded by the caller, and the
complete corruption is captured in a :class:`CorruptionRecord` so that a
corrupted volume can be replayed bit-for-bit with :func:`apply_record`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .spectral import KSpaceVolume, forward_transform, inverse_transform
from .volume import SEVERITIES, Volume, normalize_max


@dataclass(frozen=True)
class SeverityProfile:
    level: str
    phase_bound: float
    retain_ratio_range: tuple

    def __post_init__(self):
        lo, hi = self.retain_ratio_range
        if not 0 < lo <= hi <= 1:
            raise ValueError(f"retain ratio range must satisfy 0 < lo <= hi <= 1, got {(lo, hi)}")
        if self.phase_bound < 0:
            raise ValueError("phase_bound must be non-negative")


SEVERITY_TABLE = {
    "mild": SeverityProfile("mild", 0.1 * math.pi, (0.60, 0.80)),
    "moderate": SeverityProfile("moderate", 0.3 * math.pi, (0.40, 0.60)),
    "severe": SeverityProfile("severe", 0.5 * math.pi, (0.20, 0.40)),
}


def severity_params(level: str) -> SeverityProfile:
    try:
        return SEVERITY_TABLE[level]
    except KeyError:
        raise ValueError(f"unknown severity level {level!r}; expected one of {SEVERITIES}") from None


def perturb_phase(k: KSpaceVolume, phase_bound: float, seed, mode: str = "line"):
    """Multiply k-space by random unit phasors drawn from ``U(-bound, bound)``.

    In ``"line"`` mode (default) every phase-encode row of every slice gets
    one constant phase, which is how rigid in-plane motion shows up. The
    ``"sample"`` mode draws an independent phase per k-space sample.

    Returns
    -------
    perturbed : KSpaceVolume
    phases : ndarray
        ``(nz, ny)`` in line mode, ``(nz, ny, nx)`` in sample mode.
    """
    if phase_bound < 0:
        raise ValueError("phase_bound must be non-negative")
    nz, ny, nx = k.dims
    rng = np.random.default_rng(seed)
    if mode == "line":
        phases = rng.uniform(-phase_bound, phase_bound, size=(nz, ny))
        factors = np.exp(1j * phases)[:, :, None]
    elif mode == "sample":
        phases = rng.uniform(-phase_bound, phase_bound, size=(nz, ny, nx))
        factors = np.exp(1j * phases)
    else:
        raise ValueError(f"unknown phase mode {mode!r}")
    if phase_bound == 0:
        return k.with_data(k.data), phases
    return k.with_data(k.data * factors), phases


def select_lines(ny: int, retain_ratio: float, seed, pattern: str = "random") -> np.ndarray:
    """Sorted row indices to keep; the DC row ``ny // 2`` is always among them."""
    if not 0 < retain_ratio <= 1:
        raise ValueError("retain_ratio must lie in (0, 1]")
    n_keep = min(ny, max(1, int(math.floor(retain_ratio * ny + 0.5))))
    dc = ny // 2
    if pattern == "random":
        rng = np.random.default_rng(seed)
        others = np.delete(np.arange(ny), dc)
        chosen = rng.choice(others, size=n_keep - 1, replace=False)
        lines = np.append(chosen, dc)
    elif pattern == "equispaced":
        # evenly spaced grid anchored on the DC row
        offsets = np.round(np.arange(n_keep) * ny / n_keep).astype(int)
        lines = (dc + offsets) % ny
    else:
        raise ValueError(f"unknown undersampling pattern {pattern!r}")
    return np.unique(lines)


def undersample(k: KSpaceVolume, retain_ratio: float, seed, pattern: str = "random"):
    """Zero every phase-encode row that is not retained.

    One row pattern is drawn per volume and shared by all slices.

    Returns
    -------
    undersampled : KSpaceVolume
    retained_lines : ndarray of int
    """
    ny = k.dims[1]
    lines = select_lines(ny, retain_ratio, seed, pattern)
    keep = np.zeros(ny, dtype=bool)
    keep[lines] = True
    return k.with_data(np.where(keep[None, :, None], k.data, 0)), lines


@dataclass(frozen=True)
class CorruptionRecord:
    seed: int
    level: str
    drawn_retain_ratio: float
    retained_lines: tuple
    per_line_phase: tuple  # per slice, the phase of each retained line

    def __post_init__(self):
        object.__setattr__(self, "retained_lines", tuple(int(i) for i in self.retained_lines))
        object.__setattr__(
            self, "per_line_phase",
            tuple(tuple(float(p) for p in row) for row in self.per_line_phase),
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "level": self.level,
            "retain_ratio": self.drawn_retain_ratio,
            "retained_lines": list(self.retained_lines),
            "per_line_phase": [list(row) for row in self.per_line_phase],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorruptionRecord":
        return cls(
            seed=int(d["seed"]),
            level=d["level"],
            drawn_retain_ratio=float(d["retain_ratio"]),
            retained_lines=d["retained_lines"],
            per_line_phase=d["per_line_phase"],
        )

    def save(self, path) -> None:
        # repr-precision floats survive the JSON roundtrip exactly
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "CorruptionRecord":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _child_seeds(seed: int):
    ratio_seq, phase_seq, line_seq = np.random.SeedSequence(seed).spawn(3)
    return ratio_seq, phase_seq, line_seq


def draw_record(
    dims,
    level: str,
    seed: int,
    *,
    retain_ratio: Optional[float] = None,
    phase_bound: Optional[float] = None,
    pattern: str = "random",
) -> CorruptionRecord:
    """Draw all random parameters of one corruption without touching image data.

    ``retain_ratio`` and ``phase_bound`` override the severity profile; they
    exist for tests and calibration runs.
    """
    profile = severity_params(level)
    nz, ny, _ = dims
    ratio_seq, phase_seq, line_seq = _child_seeds(seed)
    if retain_ratio is None:
        lo, hi = profile.retain_ratio_range
        retain_ratio = float(np.random.default_rng(ratio_seq).uniform(lo, hi))
    bound = profile.phase_bound if phase_bound is None else phase_bound
    phases = np.random.default_rng(phase_seq).uniform(-bound, bound, size=(nz, ny))
    lines = select_lines(ny, retain_ratio, line_seq, pattern)
    return CorruptionRecord(
        seed=int(seed),
        level=level,
        drawn_retain_ratio=retain_ratio,
        retained_lines=lines,
        per_line_phase=phases[:, lines],
    )


def apply_record(clean: Volume, record: CorruptionRecord) -> Volume:
    """Replay a corruption from its record; bit-identical to :func:`simulate_pair`."""
    k = forward_transform(clean)
    lines = np.asarray(record.retained_lines, dtype=int)
    phases = np.asarray(record.per_line_phase, dtype=np.float64).reshape(k.dims[0], lines.size)
    corrupted = np.zeros_like(k.data)
    corrupted[:, lines, :] = k.data[:, lines, :] * np.exp(1j * phases)[:, :, None]
    image = inverse_transform(k.with_data(corrupted))
    out = normalize_max(image)
    return out.with_data(out.data, is_corrupted=True, severity_label=record.level)


def simulate_pair(
    clean: Volume,
    level: str,
    seed: int,
    *,
    retain_ratio: Optional[float] = None,
    phase_bound: Optional[float] = None,
    pattern: str = "random",
):
    """Manufacture a motion-corrupted counterpart of a max-normalized volume.

    Returns
    -------
    corrupted : Volume
        Carries ``is_corrupted=True`` and ``severity_label=level``.
    clean : Volume
        The input, unchanged.
    record : CorruptionRecord
    """
    record = draw_record(clean.dims, level, seed, retain_ratio=retain_ratio,
                         phase_bound=phase_bound, pattern=pattern)
    return apply_record(clean, record), clean, record


def volume_seed(seed_base: int, index: int) -> int:
    """Per-volume seed used by batch simulation, identical for serial and parallel runs."""
    return int(seed_base) + int(index)
