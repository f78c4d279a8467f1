import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mrimotion import Volume, VolumeMeta
from mrimotion.errors import DimMismatch, NonFiniteTerm, ShapeUnderflow
from mrimotion.perceptual import (
    ConvStage,
    FeatureExtractor,
    LossWeights,
    composite_loss,
    deep_tap_extractor,
    extract_features,
    feature_distance,
    loss_terms,
    motion_perceptual_loss,
    volume_fid,
)

META = VolumeMeta("p0")


def vol(a):
    return Volume(a, META)


def random_pair(rng, shape=(3, 12, 10)):
    return vol(rng.random(shape)), vol(rng.random(shape))


def test_identity_stage_returns_input():
    rng = np.random.default_rng(0)
    img = rng.normal(size=(9, 13))
    (fm,) = extract_features(FeatureExtractor.identity(), img)
    assert fm.layer_index == 0
    np.testing.assert_array_equal(fm.data[0], img)


def test_relu_kills_negative_input():
    stage = ConvStage(1, 2, kernel_size=3, nonlinearity="relu")
    kernel = np.abs(np.random.default_rng(1).normal(size=stage.kernel_shape)) + 0.1
    ex = FeatureExtractor([stage], [(kernel, np.zeros(2))], [0])
    img = -np.random.default_rng(2).random((8, 8)) - 0.01
    (fm,) = ex.extract(img)
    assert np.all(fm.data == 0.0)


def test_extract_is_deterministic():
    ex = deep_tap_extractor(seed=5)
    img = np.random.default_rng(3).random((32, 32))
    a, b = ex.extract(img), ex.extract(img)
    assert [m.layer_index for m in a] == [3, 4]
    for x, y in zip(a, b):
        assert x.data.tobytes() == y.data.tobytes()


def test_seeded_weights_reproduce_bit_exactly():
    a, b = deep_tap_extractor(seed=11), deep_tap_extractor(seed=11)
    for (ka, ba), (kb, bb) in zip(a.weights, b.weights):
        assert ka.tobytes() == kb.tobytes() and ba.tobytes() == bb.tobytes()
    c = deep_tap_extractor(seed=12)
    assert not np.array_equal(a.weights[0][0], c.weights[0][0])
    assert a.provenance == {"kind": "seeded", "seed": 11}


def test_conv_matches_direct_loop():
    rng = np.random.default_rng(4)
    stage = ConvStage(2, 3, kernel_size=3, nonlinearity="none")
    kernel, bias = rng.normal(size=stage.kernel_shape), rng.normal(size=3)
    ex = FeatureExtractor([ConvStage(1, 2, 1, nonlinearity="none"), stage],
                          [(np.ones((2, 1, 1, 1)), np.zeros(2)), (kernel, bias)], [1])
    img = rng.normal(size=(6, 7))
    x = np.stack([img, img])
    pad = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    expect = np.zeros((3, 6, 7))
    for o in range(3):
        for i in range(6):
            for j in range(7):
                expect[o, i, j] = np.sum(kernel[o] * pad[:, i:i + 3, j:j + 3]) + bias[o]
    np.testing.assert_allclose(ex.extract(img)[0].data, expect, atol=1e-12)


def test_pooling_underflow():
    ex = deep_tap_extractor(seed=0)
    with pytest.raises(ShapeUnderflow):
        ex.extract(np.ones((8, 8)))


def test_tap_validation():
    with pytest.raises(ValueError):
        FeatureExtractor([ConvStage(1, 1, 1)], [(np.ones((1, 1, 1, 1)), np.zeros(1))], [])
    with pytest.raises(ValueError):
        FeatureExtractor([ConvStage(1, 1, 1)], [(np.ones((1, 1, 1, 1)), np.zeros(1))], [1])
    with pytest.raises(ValueError):
        FeatureExtractor([ConvStage(1, 2, 3)], [(np.ones((2, 1, 1, 1)), np.zeros(2))], [0])


def test_mpl_identity_equals_mae():
    rng = np.random.default_rng(6)
    ex = FeatureExtractor.identity()
    for _ in range(20):
        a, b = random_pair(rng)
        mae = float(np.mean(np.abs(a.data - b.data)))
        assert abs(motion_perceptual_loss(ex, a, b) - mae) <= 1e-12


def test_mpl_two_tap_is_one_and_a_half_mae():
    rng = np.random.default_rng(7)
    ex = FeatureExtractor.identity(scales=(1.0, 2.0))
    a, b = random_pair(rng)
    mae = float(np.mean(np.abs(a.data - b.data)))
    assert motion_perceptual_loss(ex, a, b) == pytest.approx(1.5 * mae, abs=1e-12)


def test_mpl_zero_for_equal_inputs():
    rng = np.random.default_rng(8)
    a = vol(rng.random((2, 32, 32)))
    assert motion_perceptual_loss(deep_tap_extractor(3), a, a) == 0.0


def test_mpl_dims_mismatch():
    with pytest.raises(DimMismatch):
        motion_perceptual_loss(FeatureExtractor.identity(), vol(np.ones((1, 4, 4))),
                               vol(np.ones((1, 4, 5))))


@given(seed=st.integers(0, 2**31 - 1))
def test_mpl_nonnegative_random_extractors(seed):
    rng = np.random.default_rng(seed)
    stages = [ConvStage(1, 3, 3, pool="max2"), ConvStage(3, 4, 3, nonlinearity="none")]
    ex = FeatureExtractor.seeded(stages, [0, 1], seed)
    a, b = vol(rng.random((1, 10, 10))), vol(rng.random((1, 10, 10)))
    d = motion_perceptual_loss(ex, a, b)
    fa, fb = ex.extract(a.data[0]), ex.extract(b.data[0])
    coincide = all(np.array_equal(x.data, y.data) for x, y in zip(fa, fb))
    assert d >= 0 and (d == 0) == coincide


def test_feature_distance_symmetric_and_monotone():
    rng = np.random.default_rng(9)
    a, b = random_pair(rng)
    ex = deep_tap_extractor(1)
    a32, b32 = vol(rng.random((1, 32, 32))), vol(rng.random((1, 32, 32)))
    assert feature_distance(ex, a32, b32) == feature_distance(ex, b32, a32)
    assert feature_distance(ex, a32, a32) == 0.0
    ident = FeatureExtractor.identity()
    ts = np.linspace(0, 1, 11)
    ds = [feature_distance(ident, a, vol((1 - t) * a.data + t * b.data)) for t in ts]
    assert all(x <= y + 1e-15 for x, y in zip(ds, ds[1:]))


def test_volume_fid_self_zero():
    v = vol(np.random.default_rng(10).random((6, 32, 32)))
    assert abs(volume_fid(deep_tap_extractor(0), v, v)) <= 1e-8


def test_save_load_roundtrip(tmp_path):
    ex = deep_tap_extractor(seed=21)
    manifest = ex.save(tmp_path / "ex")
    assert manifest.name == "ex.json" and (tmp_path / "ex.f32").exists()
    back = FeatureExtractor.load(manifest)
    assert back.tap_layers == ex.tap_layers and back.stages == ex.stages
    assert back.provenance["kind"] == "loaded"
    for (k1, b1), (k2, b2) in zip(ex.weights, back.weights):
        assert k1.tobytes() == k2.tobytes() and b1.tobytes() == b2.tobytes()
    n_scalars = sum(k.size + b.size for k, b in ex.weights)
    assert (tmp_path / "ex.f32").stat().st_size == 4 * n_scalars


def test_load_rejects_short_payload(tmp_path):
    manifest = deep_tap_extractor(0).save(tmp_path / "ex")
    payload = tmp_path / "ex.f32"
    payload.write_bytes(payload.read_bytes()[:-4])
    with pytest.raises(ValueError):
        FeatureExtractor.load(manifest)


# -- composite objective ------------------------------------------------------

def terms(l1=0.0, ssim_loss=0.0, motion=0.0, focal=0.0, adv=0.0):
    return {"l1": l1, "ssim_loss": ssim_loss, "motion": motion, "focal": focal, "adv": adv}


def test_composite_examples():
    assert composite_loss(terms()) == 0.0
    assert abs(composite_loss(terms(1, 1, 1, 1, 1)) - 1.0) <= 1e-12
    assert composite_loss(terms(0.2, 0.4, 0.1)) == pytest.approx(0.18, abs=1e-12)


def test_composite_missing_adv_keeps_weight():
    t = terms(1, 1, 1, 1)
    del t["adv"]
    assert composite_loss(t) == pytest.approx(0.95, abs=1e-12)
    t["adv"] = None
    assert composite_loss(t) == pytest.approx(0.95, abs=1e-12)


@pytest.mark.parametrize("name,weight", [("l1", 0.25), ("ssim_loss", 0.25), ("motion", 0.3),
                                         ("focal", 0.15), ("adv", 0.05)])
def test_composite_slope(name, weight):
    base = terms(0.3, 0.2, 0.5, 0.1, 0.7)
    h = 1e-3
    up = dict(base, **{name: base[name] + h})
    slope = (composite_loss(up) - composite_loss(base)) / h
    assert abs(slope - weight) <= 1e-9


@pytest.mark.parametrize("bad", [math.nan, math.inf, -0.1])
def test_composite_rejects_bad_terms(bad):
    with pytest.raises(NonFiniteTerm):
        composite_loss(terms(motion=bad))


def test_loss_weights_renormalize_with_warning():
    with pytest.warns(UserWarning):
        w = LossWeights(0.5, 0.5, 0.5, 0.5, 0.5)
    assert math.fsum([w.l1, w.ssim, w.motion, w.focal, w.adv]) == pytest.approx(1.0, abs=1e-9)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        LossWeights()
    with pytest.raises(ValueError):
        LossWeights(0.0, 0.25, 0.3, 0.15, 0.3)


def test_loss_terms_self_are_zero():
    v = vol(np.random.default_rng(12).random((2, 32, 32)))
    t = loss_terms(deep_tap_extractor(0), v, v)
    assert t["l1"] == 0.0 and t["motion"] == 0.0 and t["focal"] == 0.0
    assert abs(t["ssim_loss"]) <= 1e-12
    assert composite_loss(t) == pytest.approx(0.0, abs=1e-12)
