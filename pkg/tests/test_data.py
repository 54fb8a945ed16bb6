"""Tests for depthkit.data module."""

import numpy as np
import pytest

from depthkit.data import (
    DepthSample,
    augment,
    generate_scene,
    generate_scenes,
    load_samples,
    plan_scene,
    render_scene,
    save_samples,
)
from depthkit.exceptions import ShapeError
from depthkit.objective import compute_metrics


class FixedDraws:
    """Stands in for a generator: never flips, rotates by a fixed angle, keeps brightness."""

    def __init__(self, angle: float):
        self.angle = angle

    def random(self) -> float:
        return 1.0

    def uniform(self, low: float, high: float) -> float:
        return self.angle if low < 0 else 1.0


@pytest.fixture(scope="module")
def scene():
    return generate_scene(0, size=(64, 64))


class TestDepthSample:
    """Tests for DepthSample class."""

    def test_mask_becomes_bool(self):
        sample = DepthSample(np.zeros((3, 2, 2)), np.ones((1, 2, 2)), np.ones((1, 2, 2)))
        assert sample.mask.dtype == bool
        assert sample.size == (2, 2)

    def test_depth_must_match_rgb(self):
        with pytest.raises(ShapeError, match="does not match rgb"):
            DepthSample(np.zeros((3, 2, 2)), np.ones((1, 2, 3)), np.ones((1, 2, 3)))

    def test_rgb_needs_three_channels(self):
        with pytest.raises(ShapeError, match="3xHxW"):
            DepthSample(np.zeros((4, 2, 2)), np.ones((1, 2, 2)), np.ones((1, 2, 2)))


class TestGenerateScene:
    """Tests for generate_scene function."""

    def test_deterministic(self, scene):
        again = generate_scene(0, size=(64, 64))
        np.testing.assert_array_equal(scene.rgb, again.rgb)
        np.testing.assert_array_equal(scene.depth, again.depth)

    def test_seeds_differ(self, scene):
        assert not np.array_equal(scene.depth, generate_scene(1).depth)

    def test_shapes_and_ranges(self, scene):
        assert scene.rgb.shape == (3, 64, 64)
        assert scene.depth.shape == (1, 64, 64)
        assert scene.rgb.dtype == np.float32
        assert scene.rgb.min() >= 0.0
        assert scene.rgb.max() <= 1.0
        assert scene.depth.min() > 1e-3
        assert scene.depth.max() <= 10.0

    @pytest.mark.parametrize("depth_range", [(1e-3, 10.0), (1e-3, 80.0)])
    def test_almost_all_pixels_valid(self, depth_range):
        for seed in range(5):
            sample = generate_scene(seed, depth_range=depth_range)
            assert sample.mask.mean() >= 0.99

    def test_sphere_is_nearer_than_ramp(self):
        plan = plan_scene(0, (64, 64), (1e-3, 10.0))
        depth, _ = render_scene(plan, noise_seed=1)
        sphere = plan.objects[0]

        footprint = sphere.footprint(64, 64)

        assert sphere.kind == "sphere"
        assert np.all(depth[footprint] < plan.ramp[footprint])

    def test_object_count(self):
        for seed in range(10):
            assert 2 <= len(plan_scene(seed, (64, 64), (1e-3, 10.0)).objects) <= 5

    def test_non_rectangular_sizes(self):
        assert generate_scene(3, size=(32, 96)).depth.shape == (1, 32, 96)

    def test_size_must_be_multiple_of_32(self):
        with pytest.raises(ShapeError, match="divisible by 32"):
            generate_scene(0, size=(48, 64))

    def test_generate_scenes_uses_distinct_seeds(self):
        samples = generate_scenes(3, seed=2, size=(32, 32), depth_range=(1e-3, 10.0))
        assert [s.scene_seed for s in samples] == [2000, 2001, 2002]


class TestAugment:
    """Tests for augment function."""

    def test_double_flip_is_identity(self, scene):
        flip_only = {"flip_prob": 1.0, "max_rotation": 0.0, "brightness": (1.0, 1.0)}
        rng = np.random.default_rng(0)

        twice = augment(augment(scene, rng, **flip_only), rng, **flip_only)

        np.testing.assert_array_equal(twice.rgb, scene.rgb)
        np.testing.assert_array_equal(twice.depth, scene.depth)
        np.testing.assert_array_equal(twice.mask, scene.mask)

    def test_single_flip_mirrors(self, scene):
        out = augment(scene, np.random.default_rng(0), 1.0, 0.0, (1.0, 1.0))
        np.testing.assert_array_equal(out.depth, scene.depth[..., ::-1])

    def test_zero_rotation_is_identity(self, scene):
        out = augment(scene, np.random.default_rng(5), 0.0, 0.0, (1.0, 1.0))
        np.testing.assert_allclose(out.rgb, scene.rgb, atol=1e-6)
        np.testing.assert_array_equal(out.depth, scene.depth)

    def test_brightness_leaves_depth_alone(self, scene):
        out = augment(scene, np.random.default_rng(1), 0.0, 0.0, (1.1, 1.1))

        np.testing.assert_array_equal(out.depth, scene.depth)
        assert out.rgb.max() <= 1.0
        assert out.rgb.mean() > scene.rgb.mean()

    def test_rotation_masks_border(self, scene):
        draws = FixedDraws(angle=2.5)
        out = augment(scene, draws, 0.0, 2.5, (1.0, 1.0), depth_range=(1e-3, 10.0))

        assert out.mask.sum() < scene.mask.sum()
        assert np.all(out.depth[out.mask] > 1e-3)

    def test_correspondence_survives(self, scene):
        rng = np.random.default_rng(7)
        for _ in range(5):
            out = augment(scene, rng, depth_range=(1e-3, 10.0))
            report = compute_metrics(out.depth, out.depth, out.mask)
            assert report.abs_rel == 0.0
            assert report.delta1 == 1.0

    def test_rng_drives_everything(self, scene):
        first = augment(scene, np.random.default_rng(11))
        second = augment(scene, np.random.default_rng(11))
        np.testing.assert_array_equal(first.rgb, second.rgb)


class TestSampleFiles:
    """Tests for save_samples and load_samples functions."""

    def test_round_trip(self, tmp_path):
        samples = generate_scenes(2, seed=0, size=(32, 32), depth_range=(1e-3, 10.0))
        path = save_samples(tmp_path / "samples.dten", samples)

        loaded = load_samples(path)

        assert [s.scene_seed for s in loaded] == [0, 1]
        for original, restored in zip(samples, loaded):
            np.testing.assert_array_equal(original.rgb, restored.rgb)
            np.testing.assert_array_equal(original.depth, restored.depth)
            np.testing.assert_array_equal(original.mask, restored.mask)
