import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from talkingface import facegeom as fg


def blank_landmarks(rng=None, w=64, h=64):
    rng = np.random.default_rng(0) if rng is None else rng
    return np.column_stack([rng.uniform(0, w - 1, 68), rng.uniform(0, h - 1, 68)])


def with_lips(upper, lower, base=None):
    pts = blank_landmarks() if base is None else base.copy()
    pts[51] = upper
    pts[57] = lower
    return pts


# -- mouth openness ---------------------------------------------------------------

@pytest.mark.parametrize("upper, lower, expected", [
    ((100, 120), (100, 150), 30.0),
    ((40, 40), (40, 40), 0.0),
    ((10, 10), (13, 14), math.hypot(3, 4)),
])
def test_mouth_openness(upper, lower, expected):
    assert fg.mouth_openness(with_lips(upper, lower)) == pytest.approx(expected, abs=1e-12)


def test_landmark_index_convention():
    pts = np.arange(136, dtype=float).reshape(68, 2)
    assert tuple(fg.lm(pts, 1)) == (0.0, 1.0)
    assert tuple(fg.lm(pts, 68)) == (134.0, 135.0)


def test_as_landmarks_rejects_bad_input():
    with pytest.raises(ValueError):
        fg.as_landmarks(np.zeros((67, 2)))
    bad = np.zeros((68, 2))
    bad[3, 0] = np.nan
    with pytest.raises(ValueError):
        fg.as_landmarks(bad)
    # coordinates outside any image are allowed
    fg.as_landmarks(np.full((68, 2), -500.0))


# -- bank selection ---------------------------------------------------------------

def make_frames(openness, h=8, w=8):
    frames, lms = [], []
    for i, o in enumerate(openness):
        frames.append(np.full((h, w, 3), i, dtype=np.uint8))  # frame id encoded in pixel value
        lms.append(with_lips((4.0, 2.0), (4.0, 2.0 + o)))
    return frames, lms


def oracle_ranks(num_frames, n):
    if n == 1:
        return [0]
    return [math.floor(k * (num_frames - 1) / (n - 1)) for k in range(n)]


def frame_ids(bank):
    return [int(round((img[0, 0, 0] + 1) * 127.5)) for img in bank.images]


def test_select_bank_ten_frames():
    order = [3, 7, 0, 9, 1, 5, 8, 2, 6, 4]
    frames, lms = make_frames([float(o) for o in order])
    bank = fg.select_bank(frames, lms, 5)
    assert oracle_ranks(10, 5) == [0, 2, 4, 6, 9]
    assert list(bank.openness) == [0.0, 2.0, 4.0, 6.0, 9.0]
    assert frame_ids(bank) == [order.index(v) for v in (0, 2, 4, 6, 9)]


def test_select_bank_degenerate_sizes():
    frames, lms = make_frames([4.0, 1.0, 3.0])
    one = fg.select_bank(frames, lms, 1)
    assert one.size == 1 and one.openness[0] == 1.0
    full = fg.select_bank(frames, lms, 3)
    assert list(full.openness) == [1.0, 3.0, 4.0]


def test_select_bank_ties_keep_original_order():
    frames, lms = make_frames([2.0, 1.0, 2.0, 1.0])
    bank = fg.select_bank(frames, lms, 4)
    assert frame_ids(bank) == [1, 3, 0, 2]


def test_select_bank_insufficient_frames():
    frames, lms = make_frames([1.0, 2.0])
    with pytest.raises(ValueError, match="insufficient frames"):
        fg.select_bank(frames, lms, 5)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 50, allow_nan=False), min_size=2, max_size=25), st.integers(2, 6))
def test_select_bank_properties(openness, n):
    if n > len(openness):
        n = len(openness)
    frames, lms = make_frames(openness)
    bank = fg.select_bank(frames, lms, n)
    got = list(bank.openness)
    assert got == sorted(got)
    computed = [fg.mouth_openness(p) for p in lms]
    assert got[0] == pytest.approx(min(computed))
    assert got[-1] == pytest.approx(max(computed))
    srt = sorted(computed)
    assert got == pytest.approx([srt[r] for r in oracle_ranks(len(openness), n)])


# -- difference field -----------------------------------------------------------

def test_difference_field_single_landmark():
    src = np.tile([[20.0, 20.0]], (68, 1))
    src[0] = (2, 3)
    tgt = src.copy()
    tgt[0] = (5, 7)
    f = fg.difference_field(src, tgt, 32, 24)
    assert f.shape == (24, 32, 2)
    assert tuple(f[3, 2]) == (3.0, 4.0)
    f[3, 2] = 0
    assert not f.any()


def test_difference_field_identity_is_zero():
    pts = blank_landmarks()
    assert not fg.difference_field(pts, pts, 64, 64).any()


def test_difference_field_sparsity_matches_brute_force():
    rng = np.random.default_rng(4)
    cells = rng.choice(64 * 64, size=68, replace=False)
    src = np.column_stack([cells % 64, cells // 64]).astype(float) + rng.uniform(-0.4, 0.4, (68, 2))
    tgt = src + rng.uniform(0.5, 3.0, (68, 2)) * rng.choice([-1, 1], (68, 2))
    f = fg.difference_field(src, tgt, 64, 64)
    expected = np.zeros((64, 64, 2))
    for j in range(68):
        expected[int(round(src[j, 1])), int(round(src[j, 0]))] = tgt[j] - src[j]
    assert np.count_nonzero(np.any(expected != 0, axis=-1)) == 68
    assert np.count_nonzero(np.any(f != 0, axis=-1)) == 68
    np.testing.assert_allclose(f, expected, atol=1e-6)


def test_difference_field_collision_and_out_of_bounds():
    src = blank_landmarks()
    src[10] = (7.2, 9.1)
    src[40] = (6.8, 8.9)  # rounds to the same pixel, higher index wins
    src[5] = (-3.0, 4.0)  # outside: skipped
    tgt = src + 1.0
    tgt[40] = src[40] + (2.0, -2.0)
    f = fg.difference_field(src, tgt, 64, 64)
    assert tuple(f[9, 7]) == (2.0, -2.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_difference_field_never_exceeds_68(seed):
    rng = np.random.default_rng(seed)
    src = rng.uniform(-10, 40, (68, 2))
    tgt = src + rng.normal(0, 3, (68, 2))
    f = fg.difference_field(src, tgt, 32, 32)
    assert np.count_nonzero(np.any(f != 0, axis=-1)) <= 68


# -- input assembly ---------------------------------------------------------------

def make_bank(n, h=16, w=16, seed=0, value=None):
    rng = np.random.default_rng(seed)
    imgs = rng.uniform(-1, 1, (n, h, w, 3)).astype(np.float32) if value is None else \
        np.full((n, h, w, 3), value, np.float32)
    lms = np.stack([blank_landmarks(rng, w, h) for _ in range(n)])
    return fg.SourceBank(imgs, lms, np.sort(rng.uniform(0, 5, n)))


@pytest.mark.parametrize("n, size, channels", [(5, 224, 25), (1, 16, 5), (3, 20, 15)])
def test_assemble_input_shape(n, size, channels):
    bank = make_bank(n, size, size)
    out = fg.assemble_input(bank, np.zeros((n, size, size, 2), np.float32))
    assert out.shape == (size, size, channels)


def test_assemble_input_layout():
    bank = make_bank(3, 8, 12)
    fields = np.random.default_rng(1).normal(size=(3, 8, 12, 2)).astype(np.float32)
    out = fg.assemble_input(bank, fields)
    for i in range(3):
        np.testing.assert_array_equal(out[..., 3 * i:3 * i + 3], bank.images[i])
        np.testing.assert_allclose(out[..., 9 + 2 * i:9 + 2 * i + 2], fields[i] / 12.0, rtol=1e-6)


def test_assemble_input_mid_gray_zero_fields():
    bank = make_bank(2, value=0.0)
    out = fg.assemble_input(bank, np.zeros((2, 16, 16, 2), np.float32))
    assert not out.any()


def test_assemble_input_is_pure():
    bank = make_bank(4)
    fields = np.random.default_rng(3).normal(size=(4, 16, 16, 2)).astype(np.float32)
    a = fg.assemble_input(bank, fields)
    b = fg.assemble_input(bank, fields.copy())
    assert a.tobytes() == b.tobytes()


def test_assemble_input_dimension_mismatch():
    with pytest.raises(ValueError):
        fg.assemble_input(make_bank(3), np.zeros((2, 16, 16, 2)))


def test_uint8_roundtrip():
    img = np.arange(256, dtype=np.uint8).reshape(16, 16, 1).repeat(3, -1)
    np.testing.assert_array_equal(fg.image_to_uint8(fg.image_to_float(img)), img)


# -- heatmap weights ------------------------------------------------------------

def heatmap_oracle(pts, w, h, gamma, floor):
    pts = np.rint(pts)
    out = np.empty((h, w))
    for y in range(h):
        for x in range(w):
            d = min(math.hypot(x - px, y - py) for px, py in pts)
            out[y, x] = max(gamma ** d, floor)
    return out


def test_heatmap_values_at_known_distances():
    pts = np.tile([[2.0, 2.0]], (68, 1))
    k = fg.heatmap_weights(pts, 40, 8)
    assert k[2, 2] == 1.0
    assert k[2, 12] == pytest.approx(0.95 ** 10, abs=1e-6)
    assert 0.95 ** 10 == pytest.approx(0.5987369392, abs=1e-9)
    assert 0.95 ** 30 < 0.3
    assert k[2, 32] == pytest.approx(0.3)


def test_heatmap_matches_brute_force():
    rng = np.random.default_rng(2)
    pts = rng.uniform(-3, 23, (68, 2))
    np.testing.assert_allclose(fg.heatmap_weights(pts, 20, 14, 0.9, 0.2), heatmap_oracle(pts, 20, 14, 0.9, 0.2),
                               atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.5, 0.99), st.floats(0.0, 0.9))
def test_heatmap_properties(seed, gamma, floor):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 23, (68, 2))
    k = fg.heatmap_weights(pts, 24, 24, gamma, floor)
    assert k.min() >= np.float32(floor) - 1e-7 and k.max() <= 1.0
    r = np.rint(pts).astype(int)
    assert np.all(k[r[:, 1], r[:, 0]] == 1.0)
    yy, xx = np.mgrid[0:24, 0:24]
    dist = np.min(np.hypot(xx[..., None] - r[:, 0], yy[..., None] - r[:, 1]), axis=-1).ravel()
    kv = k.ravel()[np.argsort(dist, kind="stable")]
    assert np.all(np.diff(kv) <= 1e-6)


def test_heatmap_argument_checks():
    pts = blank_landmarks()
    with pytest.raises(ValueError):
        fg.heatmap_weights(pts, 8, 8, gamma=1.0)
    with pytest.raises(ValueError):
        fg.heatmap_weights(pts, 8, 8, floor=1.5)


# -- cropping --------------------------------------------------------------------

def test_crop_identity_when_already_centered():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
    pts = blank_landmarks(rng, 32, 32)
    pts[fg.NOSE_TIP - 1] = (16.0, 16.0)
    out, remapped = fg.crop_center(img, pts, "nose-tip", 32, side=32.0)
    np.testing.assert_array_equal(out, img)
    np.testing.assert_allclose(remapped, pts)


@pytest.mark.parametrize("mode", ["nose-tip", "eye-corners"])
def test_crop_centers_reference_point(mode):
    rng = np.random.default_rng(5)
    img = rng.integers(0, 256, (300, 260, 3), dtype=np.uint8)
    pts = np.column_stack([rng.uniform(90, 170, 68), rng.uniform(100, 200, 68)])
    out, remapped = fg.crop_center(img, pts, mode, 224)
    assert out.shape == (224, 224, 3)
    if mode == "nose-tip":
        centre = remapped[fg.NOSE_TIP - 1]
    else:
        centre = 0.5 * (remapped[fg.LEFT_EYE_OUTER - 1] + remapped[fg.RIGHT_EYE_OUTER - 1])
    np.testing.assert_allclose(centre, (112.0, 112.0), atol=0.5)


def test_crop_remaps_landmarks_with_the_image_transform():
    # independent check: a bright dot drawn at a landmark lands at the remapped landmark
    img = np.zeros((200, 200, 3), np.uint8)
    rng = np.random.default_rng(1)
    pts = np.column_stack([rng.uniform(60, 140, 68), rng.uniform(60, 140, 68)])
    pts[0] = (80.0, 90.0)
    img[88:93, 78:83] = 255
    out, remapped = fg.crop_center(img, pts, "nose-tip", 64)
    ys, xs = np.nonzero(out[..., 0] > 0)
    w = out[ys, xs, 0].astype(float)
    np.testing.assert_allclose([np.average(xs, weights=w), np.average(ys, weights=w)], remapped[0], atol=0.75)


def test_crop_window_outside_image():
    img = np.zeros((50, 50, 3), np.uint8)
    pts = np.column_stack([np.linspace(400, 420, 68), np.linspace(400, 420, 68)])
    with pytest.raises(ValueError):
        fg.crop_center(img, pts, "nose-tip", 32)


def test_landmark_file_roundtrip(tmp_path):
    recs = [blank_landmarks(np.random.default_rng(i)) for i in range(3)]
    fg.save_landmarks(tmp_path / "lm.jsonl", recs)
    back = fg.load_landmarks(tmp_path / "lm.jsonl")
    assert len(back) == 3
    for a, b in zip(recs, back):
        np.testing.assert_array_equal(a, b)


def test_landmark_file_errors(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text("[[1, 2], [3, 4]]\n")
    with pytest.raises(ValueError, match="bad.jsonl:1"):
        fg.load_landmarks(p)
