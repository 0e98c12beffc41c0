"""
Tests for depth raster I/O.
"""
import os
import shutil
import tempfile
import unittest

import numpy as np

from depthformer.exceptions import DepthFormatError, ShapeError
from depthformer.schemas.depth import DepthMap
from depthformer.services.data.depth_io import ingest_depth_pair, read_depth, write_depth


class TestDepthIO(unittest.TestCase):
    """Test cases for reading and writing depth maps."""

    def setUp(self):
        """Set up test fixtures."""
        self.temp_dir = tempfile.mkdtemp()
        self.depth = DepthMap(values=[[20.0, 0.0], [1.5, 80.25]], valid=[[True, False], [True, True]])

    def tearDown(self):
        """Tear down test fixtures."""
        shutil.rmtree(self.temp_dir)

    def _path(self, name: str) -> str:
        return os.path.join(self.temp_dir, name)

    def test_sixteen_bit_value(self):
        """Test that a stored 5120 at the default scale reads as 20 m and 0 as invalid."""
        write_depth(self._path("d.dr16"), self.depth)
        with open(self._path("d.dr16"), "rb") as f:
            header = f.readline()
            raw = np.frombuffer(f.read(), dtype="<u2")
        self.assertTrue(header.startswith(b"DR16 2 2 "))
        self.assertEqual(int(raw[0]), 5120)
        self.assertEqual(int(raw[1]), 0)
        loaded = read_depth(self._path("d.dr16"))
        self.assertEqual(loaded.array[0, 0], 20.0)
        self.assertFalse(loaded.valid[0, 1])

    def test_formats_preserve_quantized_depths(self):
        """Test every format on depths representable at the default scale."""
        for name in ("d.png", "d.dr16", "d.txt"):
            write_depth(self._path(name), self.depth)
            loaded = read_depth(self._path(name))
            np.testing.assert_array_equal(loaded.valid, self.depth.valid, err_msg=name)
            np.testing.assert_array_equal(loaded.array[loaded.valid], self.depth.array[self.depth.valid], err_msg=name)

    def test_scale_override(self):
        """Test reading a 16-bit file with an explicit scale."""
        write_depth(self._path("mm.png"), DepthMap(values=[[1.234]]), scale=0.001)
        self.assertAlmostEqual(read_depth(self._path("mm.png"), scale=0.001).array[0, 0], 1.234)

    def test_out_of_range(self):
        """Test that depths beyond the 16-bit range are rejected."""
        with self.assertRaises(DepthFormatError):
            write_depth(self._path("far.png"), DepthMap(values=[[300.0]]))

    def test_unsupported_extension(self):
        """Test that unknown extensions are rejected."""
        with self.assertRaises(DepthFormatError):
            write_depth(self._path("d.exr"), self.depth)

    def test_missing_file(self):
        """Test reading a path that does not exist."""
        with self.assertRaises(FileNotFoundError):
            read_depth(self._path("absent.png"))

    def test_truncated_dr16(self):
        """Test that a short payload is reported."""
        with open(self._path("short.dr16"), "wb") as f:
            f.write(b"DR16 2 2 0.00390625\n\x00\x14")
        with self.assertRaises(DepthFormatError):
            read_depth(self._path("short.dr16"))

    def test_malformed_txt(self):
        """Test text fixtures with a wrong value count."""
        with open(self._path("bad.txt"), "w") as f:
            f.write("2 2\n1.0 2.0 3.0\n")
        with self.assertRaises(DepthFormatError):
            read_depth(self._path("bad.txt"))

    def test_rgb_png_rejected(self):
        """Test that colour PNGs are not read as depth."""
        from PIL import Image
        Image.fromarray(np.zeros((2, 2, 3), dtype=np.uint8)).save(self._path("rgb.png"))
        with self.assertRaises(DepthFormatError):
            read_depth(self._path("rgb.png"))


class TestIngestDepthPair(unittest.TestCase):
    """Test cases for ingest_depth_pair."""

    def setUp(self):
        """Set up test fixtures."""
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        """Tear down test fixtures."""
        shutil.rmtree(self.temp_dir)

    def test_pair(self):
        """Test loading a prediction and its ground truth."""
        pred_path = os.path.join(self.temp_dir, "pred.txt")
        gt_path = os.path.join(self.temp_dir, "gt.png")
        write_depth(pred_path, DepthMap(values=[[2.0, 3.0]]))
        write_depth(gt_path, DepthMap(values=[[2.0, 0.0]]))
        pred, gt = ingest_depth_pair(pred_path, gt_path)
        self.assertEqual(pred.shape, gt.shape)
        self.assertEqual(int(gt.valid.sum()), 1)

    def test_shape_mismatch_names_both(self):
        """Test that mismatched shapes name both files and shapes."""
        pred_path = os.path.join(self.temp_dir, "pred.txt")
        gt_path = os.path.join(self.temp_dir, "gt.txt")
        write_depth(pred_path, DepthMap(values=np.ones((2, 3))))
        write_depth(gt_path, DepthMap(values=np.ones((3, 2))))
        with self.assertRaises(ShapeError) as ctx:
            ingest_depth_pair(pred_path, gt_path)
        message = str(ctx.exception)
        self.assertIn("(2, 3)", message)
        self.assertIn("(3, 2)", message)


if __name__ == '__main__':
    unittest.main()
