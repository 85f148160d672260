import numpy as np
import pytest

from potfuse.errors import DegenerateRangeError
from potfuse.preprocess import (
    AugmentPolicy,
    augment,
    hflip,
    minmax,
    normalize,
    resize,
    rotate,
)


def naive_bilinear_resize(img, height, width):
    """Independent oracle: scalar loops, same half-pixel convention."""
    sh, sw = img.shape[:2]
    out = np.zeros((height, width) + img.shape[2:], dtype=np.float64)
    for i in range(height):
        for j in range(width):
            r = min(max((i + 0.5) * sh / height - 0.5, 0.0), sh - 1.0)
            c = min(max((j + 0.5) * sw / width - 0.5, 0.0), sw - 1.0)
            r0, c0 = int(np.floor(r)), int(np.floor(c))
            r1, c1 = min(r0 + 1, sh - 1), min(c0 + 1, sw - 1)
            fr, fc = r - r0, c - c0
            out[i, j] = (
                img[r0, c0] * (1 - fr) * (1 - fc)
                + img[r0, c1] * (1 - fr) * fc
                + img[r1, c0] * fr * (1 - fc)
                + img[r1, c1] * fr * fc
            )
    return out


class TestMinmax:
    def test_upper_bound(self):
        assert minmax(255, 0, 255) == 1.0

    def test_lower_bound(self):
        assert minmax(0, 0, 255) == 0.0

    def test_interior_value(self):
        # 51/255 = 0.2 by hand
        assert minmax(51, 0, 255) == pytest.approx(0.2, abs=1e-15)

    def test_degenerate_range(self):
        with pytest.raises(DegenerateRangeError):
            minmax(1.0, 3.0, 3.0)

    def test_monotone_and_in_range(self):
        rng = np.random.default_rng(0)
        xs = np.sort(rng.uniform(-5, 5, size=50))
        ys = [minmax(x, -5, 5) for x in xs]
        assert all(0.0 <= y <= 1.0 for y in ys)
        assert all(a <= b for a, b in zip(ys, ys[1:]))


class TestNormalize:
    def test_all_white(self):
        img = np.full((4, 4, 3), 255, dtype=np.uint8)
        assert np.all(normalize(img) == 1.0)

    def test_all_black(self):
        img = np.zeros((4, 4, 3), dtype=np.uint8)
        assert np.all(normalize(img) == 0.0)

    def test_mid_value(self):
        img = np.full((2, 2, 3), 128, dtype=np.uint8)
        assert normalize(img)[0, 0, 0] == pytest.approx(128 / 255, abs=1e-7)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            normalize(np.zeros((0, 0, 3), dtype=np.uint8))

    def test_normalize_then_minmax_identity(self):
        rng = np.random.default_rng(1)
        img = rng.integers(0, 256, size=(5, 5, 3)).astype(np.uint8)
        normed = normalize(img)
        again = minmax(normed.astype(np.float64), 0.0, 1.0)
        np.testing.assert_array_equal(again, normed.astype(np.float64))


class TestResize:
    def test_identity_at_same_size(self):
        rng = np.random.default_rng(2)
        img = rng.random((224, 224, 3)).astype(np.float32)
        np.testing.assert_array_equal(resize(img, 224, 224), img)

    def test_constant_stays_constant(self):
        img = np.full((448, 448, 3), 0.37, dtype=np.float32)
        out = resize(img, 224, 224)
        assert out.shape == (224, 224, 3)
        np.testing.assert_array_equal(out, np.full((224, 224, 3), np.float32(0.37)))

    def test_checkerboard_upsample_hand_values(self):
        # 2x2 checkerboard to 4x4: sample grid r,c in {0, 0.25, 0.75, 1.0}.
        board = np.array([[1.0, 0.0], [0.0, 1.0]])
        out = resize(board, 4, 4)
        assert out[0, 0] == pytest.approx(1.0)  # corners preserved
        assert out[0, 3] == pytest.approx(0.0)
        assert out[3, 3] == pytest.approx(1.0)
        # interior: (0.25, 0.25) -> 0.75*0.75 + 0.25*0.25 = 0.625
        assert out[1, 1] == pytest.approx(0.625, abs=1e-6)
        # (0.25, 0.75) -> 0.75*0.25 + 0.25*0.75 twice = 0.375
        assert out[1, 2] == pytest.approx(0.375, abs=1e-6)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(3)
        img = rng.random((7, 5, 3))
        for h, w in [(3, 9), (14, 10), (5, 5)]:
            np.testing.assert_allclose(resize(img, h, w), naive_bilinear_resize(img, h, w), atol=1e-12)

    def test_zero_dimension_rejected(self):
        with pytest.raises(ValueError):
            resize(np.zeros((0, 4, 3)), 224, 224)
        with pytest.raises(ValueError):
            resize(np.zeros((4, 4, 3)), 0, 224)


def naive_rotate_bilinear(img, angle_deg):
    """Independent oracle: per-pixel inverse mapping with python loops."""
    h, w = img.shape[:2]
    cy, cx = (h - 1) / 2, (w - 1) / 2
    t = np.deg2rad(angle_deg)
    out = np.zeros_like(img, dtype=np.float64)
    for r in range(h):
        for c in range(w):
            x = np.cos(t) * (c - cx) - np.sin(t) * (r - cy) + cx
            y = np.sin(t) * (c - cx) + np.cos(t) * (r - cy) + cy
            x0, y0 = int(np.floor(x)), int(np.floor(y))
            fx, fy = x - x0, y - y0
            acc = 0.0
            for dy, dx, wgt in ((0, 0, (1 - fy) * (1 - fx)), (0, 1, (1 - fy) * fx),
                                (1, 0, fy * (1 - fx)), (1, 1, fy * fx)):
                yy, xx = y0 + dy, x0 + dx
                if 0 <= yy < h and 0 <= xx < w:
                    acc += img[yy, xx] * wgt
            out[r, c] = acc
    return out


class TestRotate:
    def test_zero_angle_is_identity(self):
        rng = np.random.default_rng(4)
        img = rng.random((32, 32, 3)).astype(np.float32)
        np.testing.assert_array_equal(rotate(img, 0.0), img)

    def test_45_degrees_square_against_oracle(self):
        img = np.zeros((33, 33))
        img[10:23, 10:23] = 1.0  # centered white square
        out = rotate(img, 45.0)
        np.testing.assert_allclose(out, naive_rotate_bilinear(img, 45.0), atol=1e-12)
        # corners of the frame are fill (black), center stays white
        assert out[0, 0] == 0.0 and out[0, -1] == 0.0
        assert out[16, 16] == pytest.approx(1.0)
        # the square's own corners rotate out of the axis-aligned footprint
        assert out[11, 11] == pytest.approx(0.0, abs=1e-9)

    def test_round_trip_nearest_recovers_fixture(self):
        img = np.zeros((41, 41))
        img[12:29, 12:29] = 1.0
        once = rotate(img, 30.0, interp="nearest")
        back = rotate(once, -30.0, interp="nearest")
        filled = rotate(np.ones_like(img), 30.0, interp="nearest")
        filled = rotate(filled, -30.0, interp="nearest")
        # compare away from the fixture's edges and outside the fill region
        interior = np.zeros_like(img, dtype=bool)
        interior[14:27, 14:27] = True
        exterior = np.zeros_like(img, dtype=bool)
        exterior[:10, :10] = True
        mask = (filled > 0.5) & (interior | exterior)
        np.testing.assert_array_equal(back[mask], img[mask])


class TestAugment:
    def test_identity_policy_returns_input(self):
        rng = np.random.default_rng(5)
        img = rng.random((16, 16, 3)).astype(np.float32)
        policy = AugmentPolicy(rotation_range_deg=(0.0, 0.0), hflip_prob=0.0, seed=0)
        out = augment(img, policy, policy.rng_for(0))
        np.testing.assert_array_equal(out, img)

    def test_hflip_is_involution(self):
        rng = np.random.default_rng(6)
        img = rng.random((8, 12, 3))
        np.testing.assert_array_equal(hflip(hflip(img)), img)

    def test_shape_and_range_preserved(self):
        rng = np.random.default_rng(7)
        img = rng.random((224, 224, 3)).astype(np.float32)
        policy = AugmentPolicy(seed=3)
        out = augment(img, policy, policy.rng_for(5))
        assert out.shape == (224, 224, 3)
        assert float(out.min()) >= 0.0 and float(out.max()) <= 1.0

    def test_fixed_rng_state_is_bit_identical(self):
        rng = np.random.default_rng(8)
        img = rng.random((64, 64, 3)).astype(np.float32)
        policy = AugmentPolicy(seed=11)
        a = augment(img, policy, policy.rng_for(2))
        b = augment(img, policy, policy.rng_for(2))
        assert a.tobytes() == b.tobytes()

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            AugmentPolicy(rotation_range_deg=(-30.0, 45.0))
        with pytest.raises(ValueError):
            AugmentPolicy(hflip_prob=1.5)
