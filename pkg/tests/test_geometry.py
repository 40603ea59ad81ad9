from __future__ import annotations

import math
import random

import numpy as np
import pytest

from loopmark.geometry import (
    Affine2,
    AugmentationSpec,
    ImageDims,
    SingularTransformError,
    iou,
    plan_augmentation,
    resample_raster,
    sample_affine,
    transform_box,
    transform_box_hull,
)
from loopmark.labels import BoundingBox

from oracles import iou_rasterized, rotated_box_extents


DIMS = ImageDims(640, 480)
SQUARE = ImageDims(1000, 1000)


class TestIou:
    def test_identical_boxes(self):
        a = BoundingBox(0, 0.5, 0.5, 0.4, 0.4)
        assert iou(a, a) == 1.0

    def test_disjoint_boxes(self):
        a = BoundingBox(0, 0.2, 0.2, 0.1, 0.1)
        b = BoundingBox(0, 0.8, 0.8, 0.1, 0.1)
        assert iou(a, b) == 0.0

    def test_worked_overlap(self):
        a = BoundingBox(0, 0.5, 0.5, 0.4, 0.4)
        b = BoundingBox(0, 0.6, 0.5, 0.4, 0.4)
        assert iou(a, b) == pytest.approx(0.6, abs=1e-12)

    def test_symmetry_and_bounds(self, rng):
        for _ in range(200):
            a = BoundingBox(0, rng.random(), rng.random(), rng.uniform(0.01, 1), rng.uniform(0.01, 1))
            b = BoundingBox(0, rng.random(), rng.random(), rng.uniform(0.01, 1), rng.uniform(0.01, 1))
            ab, ba = iou(a, b), iou(b, a)
            assert ab == ba
            assert 0.0 <= ab <= 1.0

    def test_containment_gives_area_ratio(self):
        inner = BoundingBox(0, 0.5, 0.5, 0.2, 0.2)
        outer = BoundingBox(0, 0.5, 0.5, 0.4, 0.4)
        assert iou(inner, outer) == pytest.approx(0.04 / 0.16, abs=1e-12)

    def test_matches_rasterized_oracle(self, rng):
        # Box edges sit on the oracle's 1/1000 pixel grid so the pixel count
        # is an exact area measure and the comparison is sharp.
        def grid_box():
            x1 = rng.randrange(0, 900)
            x2 = rng.randrange(x1 + 30, 1000)
            y1 = rng.randrange(0, 900)
            y2 = rng.randrange(y1 + 30, 1000)
            return BoundingBox(0, (x1 + x2) / 2000, (y1 + y2) / 2000,
                               (x2 - x1) / 1000, (y2 - y1) / 1000)

        for _ in range(25):
            a, b = grid_box(), grid_box()
            assert iou(a, b) == pytest.approx(iou_rasterized(a, b), abs=2e-3)


class TestAffine2:
    def test_identity_apply(self):
        assert Affine2.identity().apply(3.0, 4.0) == (3.0, 4.0)

    def test_flip_maps_x_to_width_minus_x(self):
        flip = Affine2.flip_horizontal(640)
        assert flip.apply(100.0, 50.0) == (540.0, 50.0)

    def test_compose_matches_sequential_apply(self, rng):
        for _ in range(50):
            t1 = Affine2.rotation_deg(rng.uniform(-30, 30), 320, 240)
            t2 = Affine2.shear_deg(rng.uniform(-10, 10), rng.uniform(-10, 10), 320, 240)
            x, y = rng.uniform(0, 640), rng.uniform(0, 480)
            mid = t1.apply(x, y)
            expected = t2.apply(*mid)
            got = t1.then(t2).apply(x, y)
            assert got[0] == pytest.approx(expected[0], abs=1e-9)
            assert got[1] == pytest.approx(expected[1], abs=1e-9)

    def test_inverse(self, rng):
        t = Affine2.rotation_deg(17.0, 320, 240).then(Affine2.shear_deg(5, -3, 320, 240))
        inv = t.inverse()
        for _ in range(20):
            x, y = rng.uniform(0, 640), rng.uniform(0, 480)
            rx, ry = inv.apply(*t.apply(x, y))
            assert rx == pytest.approx(x, abs=1e-9)
            assert ry == pytest.approx(y, abs=1e-9)

    def test_singular_inverse_rejected(self):
        with pytest.raises(SingularTransformError):
            Affine2(1, 1, 1, 1, 0, 0).inverse()


class TestSampleAffine:
    def test_collapsed_ranges_give_identity(self):
        spec = AugmentationSpec(flip_horizontal_probability=0.0,
                                rotation_range_deg=(0.0, 0.0),
                                shear_range_deg_x=(0.0, 0.0),
                                shear_range_deg_y=(0.0, 0.0))
        t = sample_affine(spec, DIMS, "img", 1)
        assert (t.a, t.b, t.c, t.d, t.tx, t.ty) == (1.0, 0.0, 0.0, 1.0, 0.0, 0.0)

    def test_certain_flip_mirrors_x(self):
        spec = AugmentationSpec(flip_horizontal_probability=1.0,
                                rotation_range_deg=(0.0, 0.0),
                                shear_range_deg_x=(0.0, 0.0),
                                shear_range_deg_y=(0.0, 0.0))
        t = sample_affine(spec, DIMS, "img", 1)
        assert t.apply(100.0, 77.0) == (540.0, 77.0)

    def test_deterministic_across_runs(self):
        spec = AugmentationSpec(seed=1234)
        first = sample_affine(spec, DIMS, "some-image", 3)
        second = sample_affine(spec, DIMS, "some-image", 3)
        assert first == second

    def test_streams_differ_by_key(self):
        spec = AugmentationSpec(seed=1234)
        assert sample_affine(spec, DIMS, "a", 1) != sample_affine(spec, DIMS, "b", 1)
        assert sample_affine(spec, DIMS, "a", 1) != sample_affine(spec, DIMS, "a", 2)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            AugmentationSpec(copies_per_image=0)
        with pytest.raises(ValueError):
            AugmentationSpec(rotation_range_deg=(-95.0, 0.0))
        with pytest.raises(ValueError):
            AugmentationSpec(min_area_keep_fraction=0.0)


class TestTransformBox:
    def test_identity_keeps_box(self):
        box = BoundingBox(1, 0.4, 0.6, 0.2, 0.1)
        out = transform_box(box, Affine2.identity(), DIMS)
        assert out is not None
        assert out.cx == pytest.approx(box.cx, abs=1e-12)
        assert out.cy == pytest.approx(box.cy, abs=1e-12)
        assert out.w == pytest.approx(box.w, abs=1e-12)
        assert out.h == pytest.approx(box.h, abs=1e-12)
        assert out.class_id == box.class_id

    def test_center_box_is_rotation_fixed_point(self):
        box = BoundingBox(0, 0.5, 0.5, 0.2, 0.1)
        for angle in (-15.0, -7.3, 3.0, 15.0, 45.0):
            t = Affine2.rotation_deg(angle, SQUARE.width_px / 2, SQUARE.height_px / 2)
            out = transform_box(box, t, SQUARE)
            assert out is not None
            assert out.cx == 0.5
            assert out.cy == 0.5

    def test_rotation_15_deg_worked_example(self):
        # Corner-enumeration oracle: hull extents of a rotated w x h box are
        # (w cos + h sin, w sin + h cos).
        box = BoundingBox(0, 0.5, 0.5, 0.2, 0.1)
        expect_w, expect_h = rotated_box_extents(0.2, 0.1, 15.0)
        t = Affine2.rotation_deg(15.0, SQUARE.width_px / 2, SQUARE.height_px / 2)
        out = transform_box(box, t, SQUARE)
        assert out is not None
        assert out.w == pytest.approx(expect_w, abs=1e-12)
        assert out.h == pytest.approx(expect_h, abs=1e-12)
        assert f"{out.w:.6f}" == "0.219067"
        assert f"{out.h:.6f}" == "0.148356"

    def test_double_flip_restores_box(self, rng):
        flip = Affine2.flip_horizontal(DIMS.width_px)
        for _ in range(100):
            w, h = rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.4)
            box = BoundingBox(0, rng.uniform(w / 2, 1 - w / 2), rng.uniform(h / 2, 1 - h / 2), w, h)
            once = transform_box(box, flip, DIMS)
            assert once is not None
            back = transform_box(once, flip, DIMS)
            assert back is not None
            for got, want in ((back.cx, box.cx), (back.cy, box.cy), (back.w, box.w), (back.h, box.h)):
                assert got == pytest.approx(want, abs=1e-9)

    def test_aabb_contains_transformed_interior_points(self, rng):
        for _ in range(100):
            w, h = rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.4)
            box = BoundingBox(0, rng.uniform(w / 2, 1 - w / 2), rng.uniform(h / 2, 1 - h / 2), w, h)
            t = (Affine2.flip_horizontal(DIMS.width_px) if rng.random() < 0.5 else Affine2.identity())
            t = t.then(Affine2.rotation_deg(rng.uniform(-15, 15), 320, 240))
            t = t.then(Affine2.shear_deg(rng.uniform(-10, 10), rng.uniform(-10, 10), 320, 240))
            hx1, hy1, hx2, hy2 = transform_box_hull(box, t, DIMS)
            for _ in range(100):
                px = (box.cx + (rng.random() - 0.5) * box.w) * DIMS.width_px
                py = (box.cy + (rng.random() - 0.5) * box.h) * DIMS.height_px
                qx, qy = t.apply(px, py)
                assert hx1 - 1e-9 <= qx <= hx2 + 1e-9
                assert hy1 - 1e-9 <= qy <= hy2 + 1e-9

    def test_rotate_back_hull_contains_original(self, rng):
        for _ in range(50):
            w, h = rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3)
            box = BoundingBox(0, rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), w, h)
            theta = rng.uniform(-15, 15)
            fwd = Affine2.rotation_deg(theta, 500, 500)
            back = Affine2.rotation_deg(-theta, 500, 500)
            once = transform_box(box, fwd, SQUARE)
            assert once is not None
            twice = transform_box(once, back, SQUARE)
            assert twice is not None
            assert twice.cx - twice.w / 2 <= box.cx - box.w / 2 + 1e-9
            assert twice.cx + twice.w / 2 >= box.cx + box.w / 2 - 1e-9
            assert twice.cy - twice.h / 2 <= box.cy - box.h / 2 + 1e-9
            assert twice.cy + twice.h / 2 >= box.cy + box.h / 2 - 1e-9

    def test_box_clipped_out_is_dropped(self):
        box = BoundingBox(0, 0.05, 0.05, 0.1, 0.1)
        # Push the box far off-canvas: rotate 45 degrees about the far corner.
        t = Affine2.rotation_deg(45.0, 640, 480)
        spun = transform_box(box, t, DIMS)
        assert spun is None

    def test_min_area_keep_fraction_controls_drop(self):
        # Box hanging half off the left edge after a big shift via flip? Use
        # a shear that slides content sideways near the top.
        box = BoundingBox(0, 0.05, 0.5, 0.1, 0.2)
        t = Affine2(1, 0, 0, 1, -40.0, 0.0)  # shift 40px left; half the 80px box
        kept = transform_box(box, t, DIMS, min_area_keep_fraction=0.25)
        assert kept is not None
        dropped = transform_box(box, t, DIMS, min_area_keep_fraction=0.75)
        assert dropped is None

    def test_singular_transform_raises(self):
        with pytest.raises(SingularTransformError):
            transform_box(BoundingBox(0, 0.5, 0.5, 0.1, 0.1), Affine2(0, 0, 0, 0, 1, 1), DIMS)


class TestResampleRaster:
    def _noise(self, rng_seed: int, w: int = 64, h: int = 48) -> np.ndarray:
        gen = np.random.Generator(np.random.PCG64(rng_seed))
        return gen.integers(0, 256, size=(h, w, 3), dtype=np.uint8)

    def test_identity_is_byte_identical(self):
        img = self._noise(1)
        assert np.array_equal(resample_raster(img, Affine2.identity()), img)

    def test_double_flip_is_byte_identical(self):
        img = self._noise(2)
        flip = Affine2.flip_horizontal(img.shape[1])
        assert np.array_equal(resample_raster(resample_raster(img, flip), flip), img)

    def test_single_flip_reverses_columns(self):
        img = self._noise(3)
        flip = Affine2.flip_horizontal(img.shape[1])
        assert np.array_equal(resample_raster(img, flip), img[:, ::-1])

    def test_rotation_keeps_center_pixel(self):
        img = np.zeros((101, 101, 3), dtype=np.uint8)
        img[50, 50] = (255, 255, 255)
        t = Affine2.rotation_deg(15.0, 101 / 2, 101 / 2)
        out = resample_raster(img, t)
        assert tuple(out[50, 50]) == (255, 255, 255)

    def test_out_of_bounds_fills_black(self):
        img = np.full((10, 10, 3), 200, dtype=np.uint8)
        shift = Affine2(1, 0, 0, 1, 5.0, 0.0)
        out = resample_raster(img, shift)
        assert np.all(out[:, :5] == 0)
        assert np.all(out[:, 5:] == 200)


class TestPlanAugmentation:
    def test_copy_count_without_drops(self):
        spec = AugmentationSpec(flip_horizontal_probability=0.5,
                                rotation_range_deg=(0.0, 0.0),
                                shear_range_deg_x=(0.0, 0.0),
                                shear_range_deg_y=(0.0, 0.0),
                                copies_per_image=3)
        items = [("a", DIMS, [BoundingBox(0, 0.5, 0.5, 0.2, 0.2)]),
                 ("b", DIMS, [])]
        plans = plan_augmentation(spec, items)
        assert len(plans) == 6  # flips never drop a centered box; empties kept

    def test_copy_dropped_when_any_box_lost(self):
        spec = AugmentationSpec(flip_horizontal_probability=0.0,
                                rotation_range_deg=(44.9, 45.0),
                                shear_range_deg_x=(0.0, 0.0),
                                shear_range_deg_y=(0.0, 0.0),
                                copies_per_image=2,
                                min_area_keep_fraction=0.99)
        corner_box = BoundingBox(0, 0.05, 0.05, 0.1, 0.1)
        center_box = BoundingBox(1, 0.5, 0.5, 0.2, 0.2)
        plans = plan_augmentation(spec, [("x", SQUARE, [corner_box, center_box])])
        assert plans == []

    def test_plan_is_deterministic(self):
        spec = AugmentationSpec(seed=5, copies_per_image=2)
        items = [("img", DIMS, [BoundingBox(0, 0.5, 0.5, 0.3, 0.3)])]
        assert plan_augmentation(spec, items) == plan_augmentation(spec, items)
