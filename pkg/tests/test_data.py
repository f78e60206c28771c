import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from s2r_depth.data import (Batch, DatasetConfig, Domain, ImageSample, augment, clip_depth, clip_sample,
                            collate, decode_depth_png, encode_depth_png, flip_sample, image_to_uint8,
                            iterate_batches, preprocess, read_dataset, resize_pair, rotate_sample,
                            sample_rng, uint8_to_image, write_dataset)
from s2r_depth.errors import DepthEncodingError, InvalidConfigError, ShapeError


def make_sample(h=6, w=8, seed=0, invalid_frac=0.2):
    rng = np.random.default_rng(seed)
    depth = rng.uniform(1, 80, size=(h, w))
    depth[rng.random((h, w)) < invalid_frac] = 0
    image = rng.uniform(-1, 1, size=(h, w, 3))
    return ImageSample.from_depth(image, depth)


# -- ImageSample ----------------------------------------------------------------

def test_sample_invariants_enforced():
    img = np.zeros((2, 2, 3))
    with pytest.raises(ShapeError):
        ImageSample(img, np.ones((2, 3)), np.ones((2, 3), bool))
    with pytest.raises(ShapeError):
        ImageSample(np.zeros((2, 2)), np.ones((2, 2)), np.ones((2, 2), bool))
    with pytest.raises(ValueError):
        ImageSample(img, np.zeros((2, 2)), np.ones((2, 2), bool))
    with pytest.raises(ValueError):
        ImageSample(img, np.ones((2, 2)), np.zeros((2, 2), bool))


def test_sample_arrays_are_read_only():
    s = make_sample()
    with pytest.raises(ValueError):
        s.depth[0, 0] = 1.0


# -- clip_depth -----------------------------------------------------------------

def test_clip_vkitti_sky():
    np.testing.assert_array_equal(clip_depth([10, 655.35], 80), [10, 80])


def test_clip_identity_when_below():
    d = np.array([1.0, 5.0, 79.0])
    np.testing.assert_array_equal(clip_depth(d, 80), d)


def test_clip_elementwise_min():
    np.testing.assert_array_equal(clip_depth([0, 80.0001, 200], 80), [0, 80, 80])


@pytest.mark.parametrize("bad", [0, -1])
def test_clip_rejects_nonpositive_cap(bad):
    with pytest.raises(InvalidConfigError):
        clip_depth([1.0], bad)


def test_clip_sample_keeps_mask():
    s = make_sample()
    c = clip_sample(s, 20)
    np.testing.assert_array_equal(c.mask, s.mask)
    assert c.depth.max() <= 20


@given(arrays(np.float64, st.integers(1, 30), elements=st.floats(0, 1000)), st.floats(0.1, 500))
def test_clip_idempotent(d, cap):
    once = clip_depth(d, cap)
    np.testing.assert_array_equal(clip_depth(once, cap), once)


# -- augmentation -----------------------------------------------------------------

def test_flip_twice_is_identity():
    s = make_sample()
    f = flip_sample(flip_sample(s))
    np.testing.assert_array_equal(f.image, s.image)
    np.testing.assert_array_equal(f.depth, s.depth)
    np.testing.assert_array_equal(f.mask, s.mask)


def test_identity_augmentation():
    s = make_sample()
    cfg = DatasetConfig(flip_probability=0.0, rotation_range_deg=(0.0, 0.0), brightness_jitter=0.0)
    out = augment(s, np.random.default_rng(3), cfg)
    np.testing.assert_array_equal(out.image, s.image)
    np.testing.assert_array_equal(out.depth, s.depth)


@pytest.mark.parametrize("r,c", [(0, 0), (2, 5), (5, 7), (3, 1)])
def test_flip_hot_pixel(r, c):
    h, w = 6, 8
    depth = np.zeros((h, w))
    depth[r, c] = 7.0
    s = ImageSample.from_depth(np.zeros((h, w, 3)), depth)
    cfg = DatasetConfig(flip_probability=1.0, rotation_range_deg=(0.0, 0.0), brightness_jitter=0.0)
    out = augment(s, np.random.default_rng(0), cfg)
    hot = np.argwhere(out.depth > 0)
    assert hot.tolist() == [[r, w - 1 - c]]


def test_rotation_fills_invalid_and_zero_image():
    s = ImageSample.from_depth(np.ones((16, 16, 3)), np.full((16, 16), 5.0))
    r = rotate_sample(s, 5.0)
    assert not r.mask[0, 0] and r.depth[0, 0] == 0
    assert r.image[0, 0, 0] == 0.0
    assert r.mask[8, 8] and r.depth[8, 8] == 5.0


def test_rotation_uses_nearest_for_depth():
    depth = np.where(np.arange(16)[None, :] < 8, 10.0, 40.0) * np.ones((16, 1))
    s = ImageSample.from_depth(np.zeros((16, 16, 3)), depth)
    r = rotate_sample(s, 4.0)
    assert set(np.unique(r.depth)) <= {0.0, 10.0, 40.0}


def test_brightness_only_touches_image():
    s = make_sample()
    cfg = DatasetConfig(flip_probability=0.0, rotation_range_deg=(0.0, 0.0), brightness_jitter=0.5)
    out = augment(s, np.random.default_rng(1), cfg)
    np.testing.assert_array_equal(out.depth, s.depth)
    assert not np.array_equal(out.image, s.image)
    assert out.image.min() >= -1 and out.image.max() <= 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(4, 20), st.integers(4, 20))
def test_augment_preserves_invariants(seed, h, w):
    s = make_sample(h, w, seed)
    out = augment(s, np.random.default_rng(seed))
    assert out.image.shape[:2] == out.depth.shape == out.mask.shape == (h, w)
    assert np.all(out.depth[out.mask] > 0) and np.all(out.depth[~out.mask] == 0)
    assert out.image.min() >= -1 and out.image.max() <= 1


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_augment_deterministic(seed):
    s = make_sample(seed=seed)
    a = augment(s, np.random.default_rng(seed))
    b = augment(s, np.random.default_rng(seed))
    np.testing.assert_array_equal(a.image, b.image)
    np.testing.assert_array_equal(a.depth, b.depth)


def test_sample_rng_streams_are_distinct_and_repeatable():
    assert sample_rng(0, 1, 2).random() == sample_rng(0, 1, 2).random()
    assert sample_rng(0, 1, 2).random() != sample_rng(0, 1, 3).random()
    assert sample_rng(0, 1, 2).random() != sample_rng(0, 2, 2).random()


def test_config_validation():
    with pytest.raises(InvalidConfigError):
        DatasetConfig(flip_probability=1.5)
    with pytest.raises(InvalidConfigError):
        DatasetConfig(rotation_range_deg=(5, -5))
    with pytest.raises(InvalidConfigError):
        DatasetConfig(target_resolution=(0, 10))


# -- resize ---------------------------------------------------------------------

def test_resize_identity():
    s = make_sample()
    assert resize_pair(s, s.shape) is s


def test_resize_constant_depth():
    s = ImageSample.from_depth(np.zeros((8, 8, 3)), np.full((8, 8), 12.5))
    r = resize_pair(s, (3, 5))
    np.testing.assert_array_equal(r.depth, np.full((3, 5), 12.5))


def test_resize_checkerboard_nearest():
    checker = (np.indices((4, 4)).sum(0) % 2).astype(float)
    depth = np.where(checker > 0, 3.0, 0.0)
    s = ImageSample.from_depth(np.zeros((4, 4, 3)), depth)
    r = resize_pair(s, (2, 2))
    # nearest-exact picks source index floor((i + 0.5) * 2) = 1, 3.
    idx = np.array([1, 3])
    np.testing.assert_array_equal(r.mask, checker[np.ix_(idx, idx)] > 0)
    np.testing.assert_array_equal(r.depth, depth[np.ix_(idx, idx)])


def test_resize_large_upsample_warns():
    s = make_sample(2, 2)
    with pytest.warns(UserWarning):
        resize_pair(s, (10, 10))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        resize_pair(s, (8, 8))


def test_resize_rejects_bad_target():
    with pytest.raises(InvalidConfigError):
        resize_pair(make_sample(), (0, 4))


def test_preprocess_clips_and_resizes():
    s = ImageSample.from_depth(np.zeros((8, 16, 3)), np.full((8, 16), 300.0))
    p = preprocess(s, DatasetConfig(target_resolution=(4, 8)))
    assert p.shape == (4, 8) and p.depth.max() == 80.0


# -- depth PNG --------------------------------------------------------------------

def _stored(data):
    return np.asarray(Image.open(__import__("io").BytesIO(data)))


def test_depth_png_invalid_zero():
    data = encode_depth_png(np.zeros((2, 2)))
    assert _stored(data).max() == 0
    assert np.all(decode_depth_png(data) == 0)


def test_depth_png_80m():
    data = encode_depth_png(np.full((1, 1), 80.0))
    assert _stored(data)[0, 0] == 20480
    assert decode_depth_png(data)[0, 0] == 80.0


def test_depth_png_quantization_boundary():
    data = encode_depth_png(np.full((1, 1), 1 / 256))
    assert _stored(data)[0, 0] == 1
    assert decode_depth_png(data)[0, 0] == 1 / 256


def test_depth_png_tiny_positive_stays_valid():
    assert decode_depth_png(encode_depth_png(np.full((1, 1), 1e-4)))[0, 0] > 0


@pytest.mark.parametrize("bad", [256.0, 300.0, -1.0, np.nan])
def test_depth_png_rejects(bad):
    with pytest.raises(DepthEncodingError):
        encode_depth_png(np.full((1, 1), bad))


def test_depth_png_rejects_8bit():
    import io
    buf = io.BytesIO()
    Image.fromarray(np.zeros((2, 2), np.uint8)).save(buf, format="PNG")
    with pytest.raises(DepthEncodingError):
        decode_depth_png(buf.getvalue())


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)),
              elements=st.floats(1 / 512, 255.99)))
def test_depth_png_round_trip_error(depth):
    back = decode_depth_png(encode_depth_png(depth))
    assert np.all(np.abs(back - depth) <= 1 / 512 + 1e-12)
    assert np.all(back > 0)


# -- images, directory layout, batching ---------------------------------------------

def test_image_uint8_round_trip():
    img = np.linspace(-1, 1, 256 * 3).reshape(16, 16, 3)
    back = uint8_to_image(image_to_uint8(img))
    assert np.abs(back - img).max() <= 1 / 127.5


def test_dataset_round_trip(tmp_path):
    samples = [ImageSample.from_depth(*_pair(i), domain=Domain.REAL_TARGET, sample_id=f"s{i}")
               for i in range(3)]
    write_dataset(tmp_path, samples)
    lines = (tmp_path / "index.txt").read_text(encoding="utf-8").splitlines()
    assert lines == [f"s{i} real_target" for i in range(3)]
    back = read_dataset(tmp_path)
    for a, b in zip(samples, back):
        assert b.sample_id == a.sample_id and b.domain is Domain.REAL_TARGET
        np.testing.assert_array_equal(b.mask, a.mask)
        assert np.abs(b.depth - a.depth).max() <= 1 / 512
        assert np.abs(b.image - a.image).max() <= 1 / 127.5


def _pair(i):
    rng = np.random.default_rng(i)
    depth = rng.uniform(1, 80, (4, 6))
    depth[0, 0] = 0
    return rng.uniform(-1, 1, (4, 6, 3)), depth


def test_read_dataset_missing_index(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_dataset(tmp_path)


def test_collate_shapes():
    b = collate([make_sample(seed=i) for i in range(3)])
    assert isinstance(b, Batch) and len(b) == 3
    assert b.image.shape == (3, 3, 6, 8) and b.depth.shape == (3, 1, 6, 8) and b.mask.shape == (3, 1, 6, 8)


def test_iterate_batches_covers_all_and_repeats():
    samples = [make_sample(seed=i) for i in range(10)]
    for i, s in enumerate(samples):
        object.__setattr__(s, "sample_id", str(i))
    ids = [x for b in iterate_batches(samples, 4, seed=1, epoch=0) for x in b.ids]
    assert sorted(ids) == sorted(str(i) for i in range(10))
    a = [b.image for b in iterate_batches(samples, 4, seed=1, epoch=2, augment_config=DatasetConfig())]
    b = [b.image for b in iterate_batches(samples, 4, seed=1, epoch=2, augment_config=DatasetConfig())]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    with pytest.raises(InvalidConfigError):
        list(iterate_batches(samples, 0))
