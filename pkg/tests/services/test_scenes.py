"""
Tests for procedural scene generation.
"""
import os
import shutil
import tempfile
import unittest

import numpy as np
from PIL import Image

from depthformer.schemas.depth import SceneSpec
from depthformer.services.data.scenes import depth_to_color, gen_scene, gen_scenes, save_preview, scene_layout


class TestGenScene(unittest.TestCase):
    """Test cases for gen_scene."""

    def test_flat_scene(self):
        """Test that no rectangles and a level plane give a constant scene."""
        spec = SceneSpec(seed=0, height=8, width=12, n_rects=0, background=(4.0, 0.0, 0.0))
        image, depth = gen_scene(spec)
        np.testing.assert_array_equal(depth.array, np.full((8, 12), 4.0))
        self.assertEqual(image.shape, (3, 8, 12))
        expected = depth_to_color(np.array([[4.0]]), spec.d_min, spec.d_max)[:, 0, 0]
        np.testing.assert_allclose(image, np.broadcast_to(expected[:, None, None], image.shape))

    def test_deterministic(self):
        """Test that the same scene recipe renders identical bytes."""
        spec = SceneSpec(seed=42, height=16, width=16)
        image_a, depth_a = gen_scene(spec)
        image_b, depth_b = gen_scene(spec)
        self.assertEqual(image_a.tobytes(), image_b.tobytes())
        self.assertEqual(depth_a.array.tobytes(), depth_b.array.tobytes())

    def test_seeds_differ(self):
        """Test that different seeds give different scenes."""
        _, a = gen_scene(SceneSpec(seed=1, height=16, width=16))
        _, b = gen_scene(SceneSpec(seed=2, height=16, width=16))
        self.assertFalse(np.array_equal(a.array, b.array))

    def test_depth_within_range(self):
        """Test that depths of 100 seeds stay inside [d_min, d_max]."""
        for seed in range(100):
            spec = SceneSpec(seed=seed, height=16, width=16, d_min=1.0, d_max=10.0)
            _, depth = gen_scene(spec)
            self.assertTrue(((depth.array >= 1.0) & (depth.array <= 10.0)).all(), seed)
            self.assertTrue(depth.valid.all())

    def test_nearest_rectangle_wins(self):
        """Test that overlapping rectangles show the nearer depth."""
        spec = SceneSpec(seed=7, height=32, width=32, n_rects=6)
        _, rects = scene_layout(spec)
        _, depth = gen_scene(spec)
        for rect in rects:
            region = depth.array[rect.top:rect.bottom, rect.left:rect.right]
            self.assertTrue((region <= rect.depth).all())

    def test_color_monotone_in_depth(self):
        """Test that the red channel increases with depth."""
        colors = depth_to_color(np.array([[1.0, 2.0, 5.0, 10.0]]), 1.0, 10.0)
        self.assertTrue((np.diff(colors[0, 0]) > 0).all())
        self.assertAlmostEqual(colors[0, 0, 0], 0.0)
        self.assertAlmostEqual(colors[0, 0, -1], 1.0)

    def test_gen_scenes(self):
        """Test rendering a list of specs in order."""
        specs = [SceneSpec(seed=s, height=8, width=8) for s in (3, 4)]
        scenes = gen_scenes(specs)
        self.assertEqual(len(scenes), 2)
        np.testing.assert_array_equal(scenes[1][1].array, gen_scene(specs[1])[1].array)

    def test_invalid_range(self):
        """Test that d_min must be below d_max."""
        with self.assertRaises(ValueError):
            SceneSpec(d_min=5.0, d_max=5.0)


class TestSavePreview(unittest.TestCase):
    """Test cases for save_preview."""

    def setUp(self):
        """Set up test fixtures."""
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        """Tear down test fixtures."""
        shutil.rmtree(self.temp_dir)

    def test_writes_rgb_png(self):
        """Test that a preview is an 8-bit RGB image of the scene size."""
        image, _ = gen_scene(SceneSpec(seed=0, height=8, width=12))
        path = os.path.join(self.temp_dir, "previews", "scene.png")
        save_preview(image, path)
        with Image.open(path) as img:
            self.assertEqual(img.mode, "RGB")
            self.assertEqual(img.size, (12, 8))


if __name__ == '__main__':
    unittest.main()
