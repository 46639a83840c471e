import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from composegen.datagen import (
    AugmentationSpec,
    DegenerateCorrespondenceError,
    EmptyWarpResultError,
    Homography,
    PerturbationSpec,
    SceneSpec,
    apply_crop_window,
    apply_hsv_jitter,
    color_jitter,
    crop_shift_augment,
    generate_scene,
    homography_from_correspondences,
    make_training_triplet,
    perturb_four_points,
    warp_and_rotate,
)
from composegen.datagen.perturb import bbox_corners
from composegen.datagen.warp import warp_image, warp_mask


class TestGenerateScene:
    def test_determinism(self):
        a = generate_scene(SceneSpec(rng_seed=7))
        b = generate_scene(SceneSpec(rng_seed=7))
        np.testing.assert_array_equal(a.image, b.image)
        for ma, mb in zip(a.masks, b.masks):
            np.testing.assert_array_equal(ma, mb)
        assert a.labels == b.labels

    def test_single_object_size_filter(self):
        scene = generate_scene(SceneSpec(canvas_size=64, num_objects=1, rng_seed=1))
        assert len(scene.masks) == 1
        x, y, w, h = scene.bboxes[0]
        assert 0.02 * 64 ** 2 <= w * h <= 0.40 * 64 ** 2

    def test_two_objects_disjoint(self):
        scene = generate_scene(SceneSpec(num_objects=2, rng_seed=3))
        m1, m2 = scene.masks
        # pixelwise oracle
        for y in range(m1.shape[0]):
            for x in range(m1.shape[1]):
                assert not (m1[y, x] and m2[y, x])

    def test_masks_binary_and_labels_in_vocab(self):
        scene = generate_scene(SceneSpec(num_objects=3, rng_seed=11))
        for mask in scene.masks:
            assert set(np.unique(mask)) <= {0, 1}
        assert all(lbl in SceneSpec().shape_vocabulary for lbl in scene.labels)

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            generate_scene(SceneSpec(canvas_size=16))


class TestPerturbFourPoints:
    def test_zero_offsets(self):
        src, dst = perturb_four_points((10, 10, 20, 20),
                                       PerturbationSpec(corner_offset_frac=0.0))
        np.testing.assert_array_equal(src, dst)

    def test_offset_bound(self):
        # diagonal of a 20x20 box is sqrt(800)
        bound = 0.15 * np.sqrt(800.0)
        src, dst = perturb_four_points((10, 10, 20, 20),
                                       PerturbationSpec(corner_offset_frac=0.15, rng_seed=5))
        assert np.abs(dst - src).max() <= bound + 1e-12

    def test_seed_determinism(self):
        spec = PerturbationSpec(rng_seed=42)
        a = perturb_four_points((5, 5, 30, 20), spec)
        b = perturb_four_points((5, 5, 30, 20), spec)
        np.testing.assert_array_equal(a[1], b[1])

    @given(st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_always_convex(self, seed):
        _, dst = perturb_four_points((8, 8, 24, 24),
                                     PerturbationSpec(corner_offset_frac=0.3, rng_seed=seed))
        crosses = []
        for i in range(4):
            a = dst[(i + 1) % 4] - dst[i]
            b = dst[(i + 2) % 4] - dst[(i + 1) % 4]
            crosses.append(a[0] * b[1] - a[1] * b[0])
        assert np.all(np.array(crosses) > 0) or np.all(np.array(crosses) < 0)


def _dlt_oracle(src, dst):
    # independent 8x8 linear-system solve
    rows, rhs = [], []
    for (x, y), (u, v) in zip(src, dst):
        rows.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
        rhs.append(u)
        rows.append([0, 0, 0, x, y, 1, -v * x, -v * y])
        rhs.append(v)
    sol = np.linalg.lstsq(np.array(rows, dtype=float), np.array(rhs, dtype=float),
                          rcond=None)[0]
    return np.append(sol, 1.0).reshape(3, 3)


class TestHomography:
    def test_identity(self):
        pts = np.array([(0, 0), (1, 0), (1, 1), (0, 1)], dtype=float)
        h = homography_from_correspondences((pts, pts))
        np.testing.assert_allclose(h.matrix, np.eye(3), atol=1e-12)

    def test_translation(self):
        src = np.array([(0, 0), (1, 0), (1, 1), (0, 1)], dtype=float)
        h = homography_from_correspondences((src, src + (2, 3)))
        np.testing.assert_allclose(
            h.matrix, [[1, 0, 2], [0, 1, 3], [0, 0, 1]], atol=1e-12)

    @given(st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_random_vs_oracle(self, seed):
        rng = np.random.default_rng(seed)
        src = bbox_corners((10, 10, 40, 30))
        dst = src + rng.uniform(-5, 5, size=(4, 2))
        h = homography_from_correspondences((src, dst))
        np.testing.assert_allclose(h.matrix, _dlt_oracle(src, dst), atol=1e-6)
        np.testing.assert_allclose(h.apply(src), dst, atol=1e-6)

    def test_collinear_raises(self):
        src = np.array([(0, 0), (1, 1), (2, 2), (0, 5)], dtype=float)
        with pytest.raises(DegenerateCorrespondenceError):
            homography_from_correspondences((src, src))

    def test_normalized_h33(self):
        src = bbox_corners((0, 0, 10, 10))
        dst = src * 2.0 + 1.0
        h = homography_from_correspondences((src, dst))
        assert h.matrix[2, 2] == pytest.approx(1.0)


def _l_mask(size=32):
    mask = np.zeros((size, size), dtype=np.uint8)
    mask[10:22, 10:14] = 1
    mask[18:22, 10:20] = 1
    return mask


class TestWarpAndRotate:
    def test_identity(self):
        mask = _l_mask()
        img = np.random.default_rng(0).uniform(size=(32, 32, 3))
        rgba, wmask = warp_and_rotate(img, mask, Homography.identity(), 0.0)
        np.testing.assert_array_equal(wmask, mask)
        np.testing.assert_allclose(rgba[..., :3], img * mask[..., None], atol=1e-12)
        np.testing.assert_array_equal(rgba[..., 3], mask.astype(float))

    def test_rot90_permutation_oracle(self):
        # mask bbox is symmetric about (15.5, 15.5) so a 90-degree rotation
        # maps pixel centers to pixel centers exactly
        mask = np.zeros((32, 32), dtype=np.uint8)
        mask[10:22, 12:20] = 0  # keep bbox symmetric: rows 10..21, cols 10..21
        mask[10:22, 10:22] = 1
        mask[10:14, 10:14] = 0  # L-ish notch
        _, wmask = warp_and_rotate(np.zeros((32, 32, 3)), mask, Homography.identity(), 90.0)

        cx = cy = 15.5
        oracle = np.zeros_like(mask)
        for y in range(32):
            for x in range(32):
                # inverse rotation by 90 degrees about the bbox center
                sx = cx + (y - cy)
                sy = cy - (x - cx)
                sxi, syi = int(round(sx)), int(round(sy))
                if 0 <= sxi < 32 and 0 <= syi < 32:
                    oracle[y, x] = mask[syi, sxi]
        np.testing.assert_array_equal(wmask, oracle)

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_mask_stays_binary(self, seed):
        rng = np.random.default_rng(seed)
        mask = _l_mask()
        src, dst = perturb_four_points((10, 10, 10, 12),
                                       PerturbationSpec(corner_offset_frac=0.2, rng_seed=seed))
        h = homography_from_correspondences((src, dst))
        angle = float(rng.uniform(-20, 20))
        try:
            _, wmask = warp_and_rotate(np.zeros((32, 32, 3)), mask, h, angle)
        except EmptyWarpResultError:
            return
        assert set(np.unique(wmask)) <= {0, 1}

    def test_fully_outside_raises(self):
        mask = _l_mask()
        off_canvas = Homography(np.array([[1, 0, 500], [0, 1, 500], [0, 0, 1]], dtype=float))
        with pytest.raises(EmptyWarpResultError):
            warp_and_rotate(np.zeros((32, 32, 3)), mask, off_canvas, 0.0)


class TestColorJitter:
    def test_identity_settings(self):
        img = np.random.default_rng(1).uniform(size=(8, 8, 3))
        out = color_jitter(img, PerturbationSpec.identity())
        np.testing.assert_array_equal(out, img)

    def test_gray_hue_invariant(self):
        gray = np.full((4, 4, 3), 0.5)
        out = apply_hsv_jitter(gray, hue_shift_deg=77.0, sat_scale=1.0, val_scale=1.0)
        np.testing.assert_allclose(out, gray, atol=1e-12)

    def test_red_plus_120_is_green(self):
        red = np.zeros((1, 1, 3))
        red[..., 0] = 1.0
        out = apply_hsv_jitter(red, hue_shift_deg=120.0, sat_scale=1.0, val_scale=1.0)
        np.testing.assert_allclose(out[0, 0], [0.0, 1.0, 0.0], atol=1e-12)

    def test_seed_determinism(self):
        img = np.random.default_rng(2).uniform(size=(8, 8, 3))
        spec = PerturbationSpec(rng_seed=9)
        np.testing.assert_array_equal(color_jitter(img, spec), color_jitter(img, spec))


class TestMakeTrainingTriplet:
    def test_identity_spec_equals_segmented_crop(self):
        scene = generate_scene(SceneSpec(rng_seed=5))
        t = make_training_triplet(scene, 0, PerturbationSpec.identity())
        mask = scene.masks[0]
        expected = np.clip(np.round(scene.image * mask[..., None] * 255), 0, 255)
        np.testing.assert_array_equal(t.object_image[..., :3], expected.astype(np.uint8))
        np.testing.assert_array_equal(t.object_image[..., 3], mask * 255)

    def test_mask_zero_region_is_bbox(self):
        scene = generate_scene(SceneSpec(rng_seed=6))
        t = make_training_triplet(scene, 0, PerturbationSpec(rng_seed=6))
        x, y, w, h = (int(v) for v in t.bbox)
        expected = np.ones_like(t.mask)
        expected[y:y + h, x:x + w] = 0
        np.testing.assert_array_equal(t.mask, expected)

    def test_reproducible(self):
        scene = generate_scene(SceneSpec(rng_seed=8))
        spec = PerturbationSpec(rng_seed=3)
        a = make_training_triplet(scene, 0, spec)
        b = make_training_triplet(scene, 0, spec)
        np.testing.assert_array_equal(a.object_image, b.object_image)
        np.testing.assert_array_equal(a.background_image, b.background_image)
        np.testing.assert_array_equal(a.mask, b.mask)
        assert a.bbox == b.bbox and a.caption == b.caption


class TestCropShiftAugment:
    def _triplet(self):
        scene = generate_scene(SceneSpec(rng_seed=4))
        return make_training_triplet(scene, 0, PerturbationSpec.identity())

    def test_identity_window(self):
        t = self._triplet()
        out = crop_shift_augment(t, AugmentationSpec(min_crop_frac=1.0, max_shift_frac=0.0))
        np.testing.assert_array_equal(out.background_image, t.background_image)
        np.testing.assert_array_equal(out.mask, t.mask)
        assert out.bbox == t.bbox

    def test_bbox_inside_canvas(self):
        t = self._triplet()
        for seed in range(10):
            out = crop_shift_augment(t, AugmentationSpec(rng_seed=seed))
            x, y, w, h = out.bbox
            assert x >= -1e-9 and y >= -1e-9
            assert x + w <= 64 + 1e-9 and y + h <= 64 + 1e-9

    def test_affine_remap_oracle(self):
        t = self._triplet()
        t.bbox = (20.0, 20.0, 10.0, 10.0)
        out = apply_crop_window(t, 8, 8, 48)
        scale = 64 / 48
        np.testing.assert_allclose(
            out.bbox, ((20 - 8) * scale, (20 - 8) * scale, 10 * scale, 10 * scale))
        assert out.bbox[2] == pytest.approx(13.3333, abs=1e-3)

    def test_unsatisfiable_returns_flagged(self):
        # seed 1 draws crop=63, for which no window both contains this bbox
        # and stays on canvas; the triplet must come back unchanged
        t = self._triplet()
        t.bbox = (0.5, 0.5, 63.0, 63.0)
        out = crop_shift_augment(
            t, AugmentationSpec(min_crop_frac=0.5, max_shift_frac=0.0, rng_seed=1))
        assert out.augmented is False
        np.testing.assert_array_equal(out.background_image, t.background_image)
        assert out.bbox == t.bbox

    def test_mask_stays_binary(self):
        t = self._triplet()
        for seed in range(10):
            out = crop_shift_augment(t, AugmentationSpec(rng_seed=seed))
            assert set(np.unique(out.mask)) <= {0, 1}


class TestWarpKernelPaths:
    def test_numpy_and_dispatch_paths_agree(self):
        from composegen.datagen.warp import _bilinear_numpy, _nearest_numpy

        rng = np.random.default_rng(0)
        img = rng.uniform(size=(32, 32, 3))
        mask = _l_mask()
        h = homography_from_correspondences(perturb_four_points(
            (10, 10, 12, 12), PerturbationSpec(corner_offset_frac=0.2, rng_seed=1)))

        out_img = warp_image(img, h)
        ref_img = np.zeros_like(out_img)
        _bilinear_numpy(np.ascontiguousarray(img), h.inverse().matrix, ref_img)
        np.testing.assert_allclose(out_img, ref_img, atol=1e-10)

        out_mask = warp_mask(mask, h)
        ref_mask = np.zeros_like(out_mask)
        _nearest_numpy(mask, h.inverse().matrix, ref_mask)
        np.testing.assert_array_equal(out_mask, ref_mask)
