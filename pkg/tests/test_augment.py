import math

import numpy as np
import pytest

from harborscan.annotations import AnnotationRecord, write_annotation
from harborscan.augment import (
    AugmentSpec,
    apply_transform,
    augment,
    horizontal_flip,
    scale_preserve_ar,
)
from harborscan.geometry import BoxNorm, box_stats


def rec(cx, cy, w, h, class_id=0):
    return AnnotationRecord(class_id, BoxNorm(cx, cy, w, h))


def noise_image(seed=0, width=64, height=48, channels=3):
    rng = np.random.default_rng(seed)
    shape = (height, width, channels) if channels else (height, width)
    return rng.integers(0, 256, size=shape, dtype=np.uint8)


class TestScale:
    def test_identity(self):
        img = noise_image(1)
        records = (rec(0.5, 0.5, 0.4, 0.2),)
        out_img, out_recs, offset = scale_preserve_ar(img, records, 1.0)
        assert np.array_equal(out_img, img)
        assert out_recs == records
        assert offset == (0, 0)

    def test_shrink_centered_box(self):
        out_img, out_recs, _ = scale_preserve_ar(
            noise_image(2), (rec(0.5, 0.5, 0.4, 0.2),), 0.5
        )
        box = out_recs[0].box
        assert (box.cx, box.cy) == (0.5, 0.5)
        assert box.w == pytest.approx(0.2)
        assert box.h == pytest.approx(0.1)
        assert box_stats(box).ar == pytest.approx(2.0, abs=1e-12)

    def test_shrink_pads_with_gray(self):
        img = noise_image(3, width=40, height=40)
        out_img, _, offset = scale_preserve_ar(img, (), 0.5, pad_value=114)
        assert out_img.shape == img.shape
        assert offset == (10, 10)
        assert np.all(out_img[0, 0] == 114)
        assert np.all(out_img[:5, :] == 114)

    def test_grow_crops_center(self):
        img = noise_image(4, width=40, height=40)
        out_img, _, offset = scale_preserve_ar(img, (), 2.0)
        assert out_img.shape == img.shape
        assert offset == (-20, -20)

    def test_box_pushed_outside_is_dropped(self):
        # at s=2 a box near the left edge maps fully outside the crop
        _, out_recs, _ = scale_preserve_ar(
            noise_image(5), (rec(0.05, 0.5, 0.05, 0.1),), 2.0
        )
        assert out_recs == ()

    def test_box_more_than_quarter_visible_is_kept_and_clipped(self):
        # cx' = 0.5 + (0.2-0.5)*2 = -0.1, w' = 0.8 -> visible x in [0, 0.3]
        # of [-0.5, 0.3]: 3/8 of the width -> 37.5% visible, above threshold
        _, out_recs, _ = scale_preserve_ar(
            noise_image(6), (rec(0.2, 0.5, 0.4, 0.4),), 2.0
        )
        assert len(out_recs) == 1
        box = out_recs[0].box
        assert box.cx == pytest.approx(0.15)
        assert box.w == pytest.approx(0.3)

    def test_barely_visible_box_is_dropped(self):
        # cx' = 0.5 + (0.1-0.5)*2 = -0.3, w' = 0.8 -> visible 0.1 of 0.8 = 12.5%
        _, out_recs, _ = scale_preserve_ar(
            noise_image(7), (rec(0.1, 0.5, 0.4, 0.4),), 2.0
        )
        assert out_recs == ()

    def test_ar_preserved_random(self):
        rng = np.random.default_rng(11)
        img = noise_image(8)
        for _ in range(1000):
            w, h = rng.uniform(0.05, 0.5, size=2)
            cx = rng.uniform(w / 2, 1 - w / 2)
            cy = rng.uniform(h / 2, 1 - h / 2)
            s = rng.uniform(0.8, 1.2)
            before = rec(cx, cy, w, h)
            # clipping is decided by the input affine, not the output corners
            sx, sy = 0.5 + (cx - 0.5) * s, 0.5 + (cy - 0.5) * s
            sw, sh = w * s, h * s
            clipped = (
                sx - sw / 2 < 0 or sy - sh / 2 < 0 or sx + sw / 2 > 1 or sy + sh / 2 > 1
            )
            _, out_recs, _ = scale_preserve_ar(img, (before,), s)
            if not clipped:
                (out,) = out_recs
                assert abs(box_stats(out.box).ar - box_stats(before.box).ar) <= 1e-9

    def test_rejects_non_positive_scale(self):
        with pytest.raises(ValueError):
            scale_preserve_ar(noise_image(9), (), 0.0)


class TestFlip:
    def test_pixel_mirror(self):
        img = np.arange(12, dtype=np.uint8).reshape(3, 4)
        out, _ = horizontal_flip(img, ())
        for y in range(3):
            for x in range(4):
                assert out[y, 3 - x] == img[y, x]

    def test_box_reflection(self):
        _, recs = horizontal_flip(noise_image(10), (rec(0.2, 0.3, 0.1, 0.1),))
        assert recs[0].box.cx == pytest.approx(0.8)

    def test_double_flip_byte_identical(self):
        img = noise_image(11)
        records = (rec(0.3, 0.4, 0.2, 0.1), rec(0.7, 0.2, 0.1, 0.3, class_id=2))
        once_img, once_recs = horizontal_flip(img, records)
        twice_img, twice_recs = horizontal_flip(once_img, once_recs)
        assert twice_img.tobytes() == img.tobytes()
        assert write_annotation(twice_recs) == write_annotation(records)


class TestAugment:
    def test_identity_spec(self):
        img = noise_image(12)
        records = (rec(0.4, 0.4, 0.2, 0.2),)
        spec = AugmentSpec(scale_min=1.0, scale_max=1.0, flip_probability=0.0, seed=5)
        sample = augment(img, records, spec, draw_index=0)
        assert np.array_equal(sample.image, img)
        assert sample.records == records
        assert sample.transform.scale == 1.0
        assert not sample.transform.flipped

    def test_deterministic_per_draw(self):
        img = noise_image(13)
        records = (rec(0.4, 0.4, 0.2, 0.2),)
        spec = AugmentSpec(seed=9)
        a = augment(img, records, spec, draw_index=3)
        b = augment(img, records, spec, draw_index=3)
        c = augment(img, records, spec, draw_index=4)
        assert np.array_equal(a.image, b.image)
        assert a.records == b.records and a.transform == b.transform
        assert a.transform != c.transform

    def test_flip_rate_binomial(self):
        spec = AugmentSpec(flip_probability=0.5, seed=21)
        img = noise_image(14, width=8, height=8)
        n = 10_000
        flips = sum(augment(img, (), spec, i).transform.flipped for i in range(n))
        sigma = math.sqrt(n * 0.25)
        assert abs(flips - n / 2) <= 5 * sigma

    def test_scale_draw_within_range(self):
        spec = AugmentSpec(scale_min=0.8, scale_max=1.2, seed=2)
        img = noise_image(15, width=8, height=8)
        scales = [augment(img, (), spec, i).transform.scale for i in range(200)]
        assert all(0.8 <= s <= 1.2 for s in scales)
        assert min(scales) < 0.9 and max(scales) > 1.1

    def test_replay_reproduces_output_exactly(self):
        img = noise_image(16)
        records = (rec(0.4, 0.4, 0.3, 0.2), rec(0.7, 0.6, 0.2, 0.2, class_id=1))
        spec = AugmentSpec(seed=31)
        for i in range(20):
            sample = augment(img, records, spec, draw_index=i)
            replay_img, replay_recs = apply_transform(
                img, records, sample.transform, spec.pad_value
            )
            assert np.array_equal(replay_img, sample.image)
            assert replay_recs == sample.records

    def test_no_out_of_range_boxes_emitted(self):
        rng = np.random.default_rng(17)
        img = noise_image(18)
        spec = AugmentSpec(scale_min=0.5, scale_max=2.0, seed=4)
        for i in range(300):
            w, h = rng.uniform(0.05, 0.9, size=2)
            cx, cy = rng.uniform(0, 1, size=2)
            records = (rec(cx, cy, w, h),)
            sample = augment(img, records, spec, draw_index=i)
            for r in sample.records:
                x1, y1, x2, y2 = r.box.corners()
                assert 0.0 <= x1 < x2 <= 1.0 and 0.0 <= y1 < y2 <= 1.0

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            AugmentSpec(scale_min=0.0)
        with pytest.raises(ValueError):
            AugmentSpec(flip_probability=1.5)
