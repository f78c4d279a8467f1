import numpy as np
import pytest
from hypothesis import given, strategies as st

from mrimotion.blocks import (
    ChannelAttentionWeights,
    MSAWeights,
    MultiScaleWeights,
    ResidualWeights,
    SpatialAttentionWeights,
    channel_attention,
    channel_attention_weights,
    load_block_weights,
    msa_block,
    multiscale_recovery,
    residual_block,
    save_block_weights,
    spatial_attention,
    spatial_attention_mask,
)
from mrimotion.errors import ShapeUnderflow

shapes = st.tuples(st.integers(1, 4), st.integers(7, 14), st.integers(7, 14))


def tensor(shape, seed=0):
    return np.random.default_rng(seed).normal(size=shape)


@given(shape=shapes, seed=st.integers(0, 10_000))
def test_multiscale_identity_and_shape(shape, seed):
    x = tensor(shape, seed)
    c = shape[0]
    y = multiscale_recovery(x, MultiScaleWeights.identity(c))
    assert np.max(np.abs(y - x)) <= 1e-12
    rnd = multiscale_recovery(x, MultiScaleWeights.random(c, np.random.default_rng(seed)))
    assert rnd.shape == x.shape


def test_multiscale_zero_input_gives_zero():
    w = MultiScaleWeights.random(3, np.random.default_rng(1))
    w = MultiScaleWeights(w.k3, np.zeros(3), w.k5, np.zeros(3), w.k7, np.zeros(3),
                          w.fuse, np.zeros(3))
    assert np.all(multiscale_recovery(np.zeros((3, 9, 9)), w) == 0.0)


def test_multiscale_needs_seven():
    with pytest.raises(ShapeUnderflow):
        multiscale_recovery(np.zeros((1, 6, 9)), MultiScaleWeights.zeros(1))


@given(shape=shapes, seed=st.integers(0, 10_000))
def test_residual_zero_is_skip_and_shape(shape, seed):
    x = tensor(shape, seed)
    assert np.array_equal(residual_block(x, ResidualWeights.zeros(shape[0])), x)
    y = residual_block(x, ResidualWeights.random(shape[0], np.random.default_rng(seed)))
    assert y.shape == x.shape


def test_residual_identity_doubles_positive_input():
    x = np.abs(tensor((3, 8, 9))) + 0.1
    np.testing.assert_allclose(residual_block(x, ResidualWeights.identity(3)), 2 * x, atol=1e-12)


def test_zero_attention_halves():
    x = tensor((16, 8, 8), 2)
    assert np.array_equal(channel_attention(x, ChannelAttentionWeights.zeros(16)), 0.5 * x)
    assert np.array_equal(spatial_attention(x, SpatialAttentionWeights.zeros()), 0.5 * x)
    assert np.array_equal(msa_block(x, MSAWeights.zeros(16)), 0.25 * x)


@given(shape=shapes, seed=st.integers(0, 10_000), scale=st.floats(1e-3, 1e3))
def test_attention_bounds(shape, seed, scale):
    x = scale * tensor(shape, seed)
    rng = np.random.default_rng(seed)
    cw = ChannelAttentionWeights.random(shape[0], rng, reduction=1)
    sw = SpatialAttentionWeights.random(rng)
    gates = channel_attention_weights(x, cw)
    mask = spatial_attention_mask(x, sw)
    assert np.all((gates > 0) & (gates < 1)) and np.all((mask > 0) & (mask < 1))
    for y in (channel_attention(x, cw), spatial_attention(x, sw), msa_block(x, MSAWeights(cw, sw))):
        assert y.shape == x.shape
        assert np.all(np.abs(y) <= np.abs(x))


def test_mask_strict_for_extreme_logits():
    x = np.full((1, 5, 5), 1e6)
    w = SpatialAttentionWeights(np.ones((1, 2, 3, 3)), np.zeros(1))
    m = spatial_attention_mask(x, w)
    assert np.all(m < 1) and np.all(spatial_attention_mask(-x, w) > 0)


def test_single_channel_max_equals_mean():
    # with C = 1 the two descriptor channels coincide, so splitting the kernel
    # weight between them must not change the mask
    x = tensor((1, 6, 6), 3)
    k = np.random.default_rng(4).normal(size=(3, 3))
    a = SpatialAttentionWeights(np.stack([k, np.zeros((3, 3))])[None], np.zeros(1))
    b = SpatialAttentionWeights(np.stack([np.zeros((3, 3)), k])[None], np.zeros(1))
    np.testing.assert_allclose(spatial_attention_mask(x, a), spatial_attention_mask(x, b),
                               rtol=0, atol=1e-15)


def test_channel_pooling_scales_linearly():
    x = tensor((16, 6, 6), 5)
    seen = []
    w = ChannelAttentionWeights.random(16, np.random.default_rng(6))

    class Spy:
        def __init__(self, arr):
            self.arr = arr

        def __matmul__(self, v):
            seen.append(v.copy())
            return self.arr @ v

    spy = ChannelAttentionWeights.__new__(ChannelAttentionWeights)
    object.__setattr__(spy, "w1", Spy(w.w1))
    for n in ("b1", "w2", "b2"):
        object.__setattr__(spy, n, getattr(w, n))
    channel_attention_weights(x, spy)
    channel_attention_weights(3.0 * x, spy)
    np.testing.assert_allclose(seen[1], 3.0 * seen[0], rtol=1e-12)


def test_msa_order_matters():
    rng = np.random.default_rng(7)
    w = MSAWeights.random(16, rng)
    x = rng.normal(size=(16, 8, 8))
    forward = msa_block(x, w)
    reverse = channel_attention(spatial_attention(x, w.spatial), w.channel)
    assert not np.allclose(forward, reverse)


def test_reduction_ratio_checks():
    with pytest.raises(ValueError):
        ChannelAttentionWeights.zeros(12)
    with pytest.raises(ValueError):
        ChannelAttentionWeights.zeros(4, reduction=0)
    assert ChannelAttentionWeights.zeros(32).w1.shape == (2, 32)


def test_spatial_needs_three():
    with pytest.raises(ShapeUnderflow):
        spatial_attention(np.ones((1, 2, 5)), SpatialAttentionWeights.zeros())


@pytest.mark.parametrize("make", [
    lambda r: MultiScaleWeights.random(2, r),
    lambda r: ChannelAttentionWeights.random(16, r),
    lambda r: SpatialAttentionWeights.random(r),
    lambda r: ResidualWeights.random(2, r),
    lambda r: MSAWeights.random(16, r),
])
def test_block_weights_roundtrip(tmp_path, make):
    w = make(np.random.default_rng(8))
    # float32 payload, so outputs agree to single precision only
    path = save_block_weights(w, tmp_path / "blk")
    back = load_block_weights(path)
    assert type(back) is type(w)
    x = tensor((16 if isinstance(w, (ChannelAttentionWeights, MSAWeights)) else 2, 8, 8), 9)
    fn = {MultiScaleWeights: multiscale_recovery, ChannelAttentionWeights: channel_attention,
          SpatialAttentionWeights: spatial_attention, ResidualWeights: residual_block,
          MSAWeights: msa_block}[type(w)]
    np.testing.assert_allclose(fn(x, back), fn(x, w), rtol=1e-5, atol=1e-6)
    again = save_block_weights(back, tmp_path / "blk2")
    assert (tmp_path / "blk.f32").read_bytes() == (tmp_path / "blk2.f32").read_bytes()
    assert again.name == "blk2.json"


def test_blocks_deterministic():
    rng = np.random.default_rng(10)
    w = MultiScaleWeights.random(2, rng)
    x = rng.normal(size=(2, 9, 9))
    assert multiscale_recovery(x, w).tobytes() == multiscale_recovery(x, w).tobytes()
