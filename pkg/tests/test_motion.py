import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mrimotion.metrics import psnr, ssim
from mrimotion.motion import (
    CorruptionRecord,
    apply_record,
    perturb_phase,
    severity_params,
    simulate_pair,
    undersample,
)
from mrimotion.phantom import shepp_logan_volume
from mrimotion.spectral import forward_transform


@pytest.mark.parametrize("level, bound, lo, hi", [
    ("mild", 0.1 * math.pi, 0.60, 0.80),
    ("moderate", 0.3 * math.pi, 0.40, 0.60),
    ("severe", 0.5 * math.pi, 0.20, 0.40),
])
def test_severity_table(level, bound, lo, hi):
    p = severity_params(level)
    assert p.level == level
    assert p.phase_bound == pytest.approx(bound)
    assert p.retain_ratio_range == (lo, hi)


def test_unknown_severity():
    with pytest.raises(ValueError):
        severity_params("extreme")


@pytest.fixture(scope="module")
def kspace(request):
    return forward_transform(shepp_logan_volume(2, 32, 32, noise=0.01))


def test_zero_phase_is_identity(kspace):
    out, phases = perturb_phase(kspace, 0.0, seed=5)
    assert out.data.tobytes() == kspace.data.tobytes()
    assert not phases.any()


@given(st.integers(0, 2**63 - 1), st.floats(0.0, math.pi))
def test_phase_preserves_magnitude(kspace, seed, bound):
    out, phases = perturb_phase(kspace, bound, seed)
    np.testing.assert_allclose(np.abs(out.data), np.abs(kspace.data), rtol=0, atol=1e-12)
    assert phases.shape == kspace.dims[:2]
    assert np.all(np.abs(phases) <= bound)


def test_sample_mode_preserves_magnitude(kspace):
    out, phases = perturb_phase(kspace, 0.5, 3, mode="sample")
    assert phases.shape == kspace.dims
    np.testing.assert_allclose(np.abs(out.data), np.abs(kspace.data), atol=1e-12)


def test_phase_determinism(kspace):
    a, pa = perturb_phase(kspace, 1.0, 11)
    b, pb = perturb_phase(kspace, 1.0, 11)
    c, pc = perturb_phase(kspace, 1.0, 12)
    assert a.data.tobytes() == b.data.tobytes()
    assert not np.array_equal(pa, pc)


def test_line_mode_constant_along_row(kspace):
    out, phases = perturb_phase(kspace, 1.0, 2)
    mask = np.abs(kspace.data) > 1e-8
    ratio = np.angle(out.data[mask] / kspace.data[mask])
    expected = np.broadcast_to(phases[:, :, None], kspace.dims)[mask]
    np.testing.assert_allclose(np.angle(np.exp(1j * (ratio - expected))), 0, atol=1e-9)


def test_undersample_full_ratio_identity(kspace):
    out, lines = undersample(kspace, 1.0, 0)
    assert out.data.tobytes() == kspace.data.tobytes()
    np.testing.assert_array_equal(lines, np.arange(32))


def test_undersample_half_of_64():
    from mrimotion.spectral import KSpaceVolume
    from mrimotion.volume import VolumeMeta
    k = KSpaceVolume(np.ones((2, 64, 8), complex), VolumeMeta("p"))
    out, lines = undersample(k, 0.5, 9)
    assert len(lines) == 32 and len(set(lines.tolist())) == 32
    assert 32 in lines
    kept_rows = np.nonzero(np.abs(out.data[0]).sum(axis=1))[0]
    np.testing.assert_array_equal(kept_rows, lines)
    # same pattern on every slice
    np.testing.assert_array_equal(out.data[0], out.data[1])


@given(st.floats(0.01, 1.0), st.integers(0, 1000))
def test_undersample_energy_never_increases(kspace, ratio, seed):
    out, lines = undersample(kspace, ratio, seed)
    assert np.sum(np.abs(out.data) ** 2) <= np.sum(np.abs(kspace.data) ** 2)
    assert kspace.dims[1] // 2 in lines


def test_equispaced_pattern_includes_dc(kspace):
    _, lines = undersample(kspace, 0.25, 0, pattern="equispaced")
    assert len(lines) == 8 and 16 in lines
    assert np.all(np.diff(lines) == 4)


@pytest.fixture(scope="module")
def clean():
    return shepp_logan_volume(4, 64, 64, noise=0.01, seed=1)


def test_identity_hook(clean):
    corrupted, same, record = simulate_pair(clean, "mild", 0, retain_ratio=1.0, phase_bound=0.0)
    assert same is clean
    np.testing.assert_allclose(corrupted.data, clean.data, atol=1e-9)
    assert corrupted.meta.is_corrupted and corrupted.meta.severity_label == "mild"


def test_record_invariants(clean):
    _, _, record = simulate_pair(clean, "severe", 42)
    prof = severity_params("severe")
    lo, hi = prof.retain_ratio_range
    assert lo <= record.drawn_retain_ratio <= hi
    assert 32 in record.retained_lines
    assert list(record.retained_lines) == sorted(record.retained_lines)
    assert all(0 <= i < 64 for i in record.retained_lines)
    phases = np.asarray(record.per_line_phase)
    assert phases.shape == (4, len(record.retained_lines))
    assert np.all(np.abs(phases) <= prof.phase_bound)


def test_replay_from_record_bit_identical(clean, tmp_path):
    corrupted, _, record = simulate_pair(clean, "moderate", 77)
    record.save(tmp_path / "r.json")
    loaded = CorruptionRecord.load(tmp_path / "r.json")
    assert loaded == record
    replay = apply_record(clean, loaded)
    assert replay.data.tobytes() == corrupted.data.tobytes()
    again, _, _ = simulate_pair(clean, "moderate", 77)
    assert again.data.tobytes() == corrupted.data.tobytes()


def test_record_json_field_names(clean):
    _, _, record = simulate_pair(clean, "mild", 1)
    assert set(record.to_dict()) == {"seed", "level", "retain_ratio", "retained_lines", "per_line_phase"}


def test_severity_ordering_on_phantom():
    clean = shepp_logan_volume(4, 64, 64, noise=0.01)
    scores = {}
    for level in ("mild", "moderate", "severe"):
        c, _, _ = simulate_pair(clean, level, 2024)
        scores[level] = (ssim(c, clean), psnr(c, clean))
    assert scores["mild"][0] > scores["moderate"][0] > scores["severe"][0]
