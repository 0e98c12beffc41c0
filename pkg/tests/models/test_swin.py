"""
Tests for the windowed-Transformer branch.
"""
import unittest

import numpy as np

from depthformer.core import ops
from depthformer.core.gradcheck import finite_diff_check
from depthformer.core.tensor import Tensor, parameter
from depthformer.exceptions import ShapeError
from depthformer.models.module import randomize
from depthformer.models.swin import (
    MASK_VALUE,
    FeaturePyramid,
    PatchEmbed,
    PatchMerge,
    SwinBranch,
    TransformerLayer,
    WindowAttention,
    encode_transformer,
    patch_merge,
    patch_partition_embed,
    shift_mask,
    transformer_layer,
    window_attention_weights,
    window_geometry,
    window_msa,
    window_partition,
    window_reverse,
)
from depthformer.schemas.network import BranchConfig


def _full_attention(grid: np.ndarray, attn: WindowAttention) -> np.ndarray:
    """Multi-head attention over all tokens of a C×H×W grid, written out directly."""
    c, h, w = grid.shape
    tokens = grid.reshape(c, h * w).T
    qkv = tokens @ attn.qkv_weight.data + attn.qkv_bias.data
    q, k, v = qkv[:, :c], qkv[:, c:2 * c], qkv[:, 2 * c:]
    d = c // attn.num_heads
    out = np.zeros_like(tokens)
    for m in range(attn.num_heads):
        cols = slice(m * d, (m + 1) * d)
        scores = q[:, cols] @ k[:, cols].T / np.sqrt(d)
        weights = np.exp(scores - scores.max(axis=1, keepdims=True))
        weights /= weights.sum(axis=1, keepdims=True)
        out[:, cols] = weights @ v[:, cols]
    out = out @ attn.proj_weight.data + attn.proj_bias.data
    return out.T.reshape(c, h, w)


class TestWindowBookkeeping(unittest.TestCase):
    """Test cases for window geometry and masks."""

    def test_geometry(self):
        """Test effective windows and shifts."""
        self.assertEqual(window_geometry(4, 4, 2, True), (2, 2, 1, 1))
        self.assertEqual(window_geometry(4, 4, 2, False), (2, 2, 0, 0))
        # a window covering the grid is never shifted
        self.assertEqual(window_geometry(2, 2, 4, True), (2, 2, 0, 0))

    def test_window_must_divide_grid(self):
        """Test that a non-dividing window is rejected."""
        with self.assertRaises(ShapeError):
            window_geometry(6, 6, 4, False)

    def test_partition_is_bijection(self):
        """Test that every token lands in exactly one window and reverse restores the grid."""
        h, w, c = 6, 8, 3
        tokens = np.arange(h * w * c, dtype=np.float64).reshape(h, w, c)
        for wh, ww in ((2, 2), (3, 4), (6, 8), (1, 1)):
            windows = window_partition(Tensor(tokens), wh, ww).data
            self.assertEqual(windows.shape, (h * w // (wh * ww), wh * ww, c))
            np.testing.assert_array_equal(np.sort(windows[..., 0].reshape(-1)), tokens[..., 0].reshape(-1))
            np.testing.assert_array_equal(window_reverse(Tensor(windows), h, w, wh, ww).data, tokens)

    def test_shifted_partition_is_bijection(self):
        """Test roll, partition, reverse and roll back on a shifted layout."""
        h, w, c = 8, 8, 2
        tokens = np.random.default_rng(6).normal(size=(h, w, c))
        wh, ww, sh, sw = window_geometry(h, w, 4, True)
        self.assertEqual((sh, sw), (2, 2))
        rolled = ops.roll(Tensor(tokens), (-sh, -sw), (0, 1))
        windows = window_partition(rolled, wh, ww)
        self.assertEqual(sorted(windows.data[..., 0].reshape(-1).tolist()), sorted(tokens[..., 0].reshape(-1).tolist()))
        restored = ops.roll(window_reverse(windows, h, w, wh, ww), (sh, sw), (0, 1))
        np.testing.assert_array_equal(restored.data, tokens)

    def test_shift_mask(self):
        """Test the mask layout on a shifted 4x4 grid."""
        mask = shift_mask(4, 4, 2, 2, 1, 1)
        self.assertEqual(mask.shape, (4, 1, 4, 4))
        # the top-left window holds only original neighbours
        self.assertTrue((mask[0] == 0).all())
        self.assertTrue((mask[3] == MASK_VALUE).any())
        for window in mask[:, 0]:
            np.testing.assert_array_equal(window, window.T)
            np.testing.assert_array_equal(np.diag(window), np.zeros(4))


class TestWindowMsa(unittest.TestCase):
    """Test cases for window_msa."""

    def setUp(self):
        """Set up test fixtures."""
        self.rng = np.random.default_rng(0)
        self.attn = randomize(WindowAttention(4, 2, self.rng), self.rng)
        self.grid = self.rng.normal(size=(4, 4, 4))

    def test_single_window_equals_full_attention(self):
        """Test that a window covering the grid is plain multi-head attention."""
        out = window_msa(self.grid, self.attn, window=8, shift=False).data
        np.testing.assert_allclose(out, _full_attention(self.grid, self.attn), atol=1e-12)

    def test_single_window_ignores_shift(self):
        """Test that shift has no effect when one window covers the grid."""
        a = window_msa(self.grid, self.attn, window=4, shift=True).data
        b = window_msa(self.grid, self.attn, window=4, shift=False).data
        np.testing.assert_array_equal(a, b)

    def test_zero_projections(self):
        """Test that zero value and output projections give zero output."""
        self.attn.zero_(["qkv_weight", "qkv_bias", "proj_weight", "proj_bias"])
        out = window_msa(self.grid, self.attn, window=2, shift=True).data
        np.testing.assert_array_equal(out, np.zeros_like(self.grid))

    def test_identity_projections_on_four_tokens(self):
        """Test a 1x2x2 grid with Q = K = V = identity against direct enumeration."""
        attn = WindowAttention(1, 1, self.rng)
        attn.qkv_weight.data = np.ones((1, 3))
        attn.proj_weight.data = np.ones((1, 1))
        grid = np.array([[[0.5, -1.0], [2.0, 0.25]]])
        out = window_msa(grid, attn, window=2, shift=False).data.reshape(-1)

        t = grid.reshape(-1)
        expected = []
        for i in range(4):
            scores = [t[i] * t[j] for j in range(4)]
            weights = np.exp(scores) / np.sum(np.exp(scores))
            expected.append(sum(weights[j] * t[j] for j in range(4)))
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_masked_pairs_get_no_weight(self):
        """Test that tokens separated by the cyclic shift do not attend to each other."""
        weights = window_attention_weights(self.grid, self.attn, window=2, shift=True)
        mask = np.broadcast_to(shift_mask(4, 4, 2, 2, 1, 1), weights.shape)
        self.assertTrue((weights[mask == MASK_VALUE] < 1e-12).all())
        np.testing.assert_allclose(weights.sum(axis=-1), np.ones(weights.shape[:-1]))

    def test_weight_rows_sum_to_one(self):
        """Test that every attention row sums to one within 1e-12, shifted or not."""
        attn = randomize(WindowAttention(4, 2, self.rng), self.rng, scale=3.0)
        grid = self.rng.normal(scale=4.0, size=(4, 8, 8))
        for window, shift in ((2, False), (2, True), (4, True), (8, False)):
            weights = window_attention_weights(grid, attn, window=window, shift=shift)
            self.assertLess(np.abs(weights.sum(axis=-1) - 1.0).max(), 1e-12)

    def test_channel_mismatch(self):
        """Test that the grid must match the attention width."""
        with self.assertRaises(ShapeError):
            window_msa(np.ones((3, 4, 4)), self.attn, window=2, shift=False)

    def test_gradient(self):
        """Test shifted window attention against central differences."""
        grid = parameter(self.grid, name="grid")
        params = dict(self.attn.named_parameters())
        params["grid"] = grid
        w = self.rng.normal(size=self.grid.shape)
        report = finite_diff_check(lambda: (window_msa(grid, self.attn, 2, True) * w).sum(), params, max_entries=8)
        self.assertTrue(report.passed, report.errors)


class TestTransformerLayer(unittest.TestCase):
    """Test cases for transformer_layer."""

    def setUp(self):
        """Set up test fixtures."""
        self.rng = np.random.default_rng(1)
        self.layer = randomize(TransformerLayer(4, 2, window_size=2, shift=True, mlp_ratio=2, rng=self.rng), self.rng)
        self.z = self.rng.normal(size=(4, 4, 4))

    def test_zero_weights_pass_input_through(self):
        """Test the double residual with zeroed attention and MLP."""
        self.layer.zero_(["attn", "mlp"])
        np.testing.assert_array_equal(transformer_layer(self.z, self.layer).data, self.z)

    def test_shape_contract(self):
        """Test that the output grid has the input shape."""
        for shape in ((4, 2, 2), (4, 4, 8), (4, 6, 6)):
            z = self.rng.normal(size=shape)
            self.assertEqual(transformer_layer(z, self.layer).shape, shape)

    def test_gradient(self):
        """Test the gradient of mean(output) with respect to every parameter."""
        z = parameter(self.z, name="z")
        params = dict(self.layer.named_parameters())
        params["z"] = z
        report = finite_diff_check(lambda: transformer_layer(z, self.layer).mean(), params, max_entries=6)
        self.assertTrue(report.passed, report.errors)


class TestPatchEmbed(unittest.TestCase):
    """Test cases for patch_partition_embed."""

    def setUp(self):
        """Set up test fixtures."""
        self.rng = np.random.default_rng(2)

    def test_unit_patch_identity_embedding(self):
        """Test p = 1 with an identity embedding."""
        cfg = BranchConfig(patch_size=1, embed_dim=3, depths=[1], num_heads=[1], num_levels=1)
        embed = PatchEmbed(3, 1, 3, self.rng)
        embed.weight.data = np.eye(3)
        image = self.rng.normal(size=(3, 4, 4))
        np.testing.assert_allclose(patch_partition_embed(image, cfg, embed).data, image)

    def test_ones_embedding_sums_patch(self):
        """Test p = 2 on a 3x4x4 image with an all-ones embedding row."""
        cfg = BranchConfig(patch_size=2, embed_dim=4, depths=[1], num_heads=[1], num_levels=1)
        embed = PatchEmbed(3, 2, 1, self.rng)
        embed.weight.data = np.ones((12, 1))
        image = self.rng.normal(size=(3, 4, 4))
        tokens = patch_partition_embed(image, cfg, embed).data
        self.assertEqual(tokens.shape, (1, 2, 2))
        for i in range(2):
            for j in range(2):
                self.assertAlmostEqual(tokens[0, i, j], image[:, 2 * i:2 * i + 2, 2 * j:2 * j + 2].sum())

    def test_locality(self):
        """Test that changing one patch changes only its token."""
        cfg = BranchConfig(patch_size=2, embed_dim=4, depths=[1], num_heads=[1], num_levels=1)
        embed = PatchEmbed(3, 2, 4, self.rng)
        a = self.rng.normal(size=(3, 8, 8))
        b = a.copy()
        b[:, 2:4, 4:6] += 1.0
        diff = np.abs(patch_partition_embed(a, cfg, embed).data - patch_partition_embed(b, cfg, embed).data)
        changed = diff.max(axis=0) > 1e-12
        expected = np.zeros((4, 4), dtype=bool)
        expected[1, 2] = True
        np.testing.assert_array_equal(changed, expected)

    def test_extent_must_be_multiple_of_patch(self):
        """Test that partial patches are rejected."""
        cfg = BranchConfig(patch_size=2, embed_dim=4, depths=[1], num_heads=[1], num_levels=1)
        with self.assertRaises(ShapeError):
            patch_partition_embed(np.ones((3, 5, 4)), cfg, PatchEmbed(3, 2, 4, self.rng))


class TestPatchMerge(unittest.TestCase):
    """Test cases for patch_merge."""

    def setUp(self):
        """Set up test fixtures."""
        self.rng = np.random.default_rng(3)
        self.merge = randomize(PatchMerge(3, self.rng), self.rng)

    def test_shape(self):
        """Test halved extents and doubled channels."""
        self.assertEqual(patch_merge(self.rng.normal(size=(3, 4, 6)), self.merge).shape, (6, 2, 3))

    def test_block_permutation(self):
        """Test that swapping two 2x2 blocks swaps the two output pixels."""
        grid = self.rng.normal(size=(3, 4, 4))
        swapped = grid.copy()
        swapped[:, 0:2, 0:2], swapped[:, 0:2, 2:4] = grid[:, 0:2, 2:4], grid[:, 0:2, 0:2]
        a = patch_merge(grid, self.merge).data
        b = patch_merge(swapped, self.merge).data
        np.testing.assert_allclose(b[:, 0, 0], a[:, 0, 1], atol=1e-12)
        np.testing.assert_allclose(b[:, 0, 1], a[:, 0, 0], atol=1e-12)
        np.testing.assert_allclose(b[:, 1], a[:, 1], atol=1e-12)

    def test_constant_grid(self):
        """Test that a constant grid merges to a constant grid."""
        grid = np.broadcast_to(self.rng.normal(size=(3, 1, 1)), (3, 4, 4)).copy()
        out = patch_merge(grid, self.merge).data
        np.testing.assert_allclose(out, np.broadcast_to(out[:, :1, :1], out.shape), atol=1e-12)

    def test_odd_extent(self):
        """Test that odd extents are rejected."""
        with self.assertRaises(ShapeError):
            patch_merge(np.ones((3, 3, 4)), self.merge)


class TestEncodeTransformer(unittest.TestCase):
    """Test cases for encode_transformer."""

    def setUp(self):
        """Set up test fixtures."""
        self.cfg = BranchConfig()

    def test_desk_pyramid_shapes(self):
        """Test level shapes of the default branch on a 64x64 image."""
        branch = SwinBranch(self.cfg, np.random.default_rng(0))
        image = np.random.default_rng(1).uniform(size=(3, 64, 64))
        pyramid = encode_transformer(image, self.cfg, branch)
        self.assertEqual(pyramid.shapes, [(32, 16, 16), (64, 8, 8), (128, 4, 4), (256, 2, 2)])

    def test_indivisible_image_rejected(self):
        """Test that a 48x48 image does not fit four levels."""
        branch = SwinBranch(self.cfg, np.random.default_rng(0))
        with self.assertRaises(ShapeError):
            encode_transformer(np.zeros((3, 48, 48)), self.cfg, branch)

    def test_deterministic(self):
        """Test that the same seed and input give bit-identical pyramids."""
        cfg = BranchConfig(embed_dim=8, depths=[1, 1], num_heads=[2, 2], num_levels=2)
        image = np.random.default_rng(2).uniform(size=(3, 16, 16))
        first = SwinBranch(cfg, np.random.default_rng(5)).forward(Tensor(image))
        second = SwinBranch(cfg, np.random.default_rng(5)).forward(Tensor(image))
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.data, b.data)

    def test_zero_blocks_keep_embedding(self):
        """Test that zeroed attention and MLP leave the first level equal to the embedding."""
        cfg = BranchConfig(embed_dim=8, depths=[2, 1], num_heads=[2, 2], num_levels=2)
        branch = SwinBranch(cfg, np.random.default_rng(3))
        for stage in branch.stages:
            for layer in stage.layers:
                layer.zero_(["attn", "mlp"])
        image = np.random.default_rng(4).uniform(size=(3, 16, 16))
        pyramid = encode_transformer(image, cfg, branch)
        embedded = patch_partition_embed(image, cfg, branch.patch_embed)
        np.testing.assert_array_equal(pyramid[0].data, embedded.data)
        np.testing.assert_allclose(pyramid[1].data, patch_merge(embedded, branch.merges[0]).data, atol=1e-12)

    def test_full_gradient(self):
        """Test every entry of the image and branch weights on a 3x16x16 input."""
        cfg = BranchConfig(embed_dim=4, depths=[2, 1], num_heads=[2, 2], window_size=2, num_levels=2, mlp_ratio=2)
        rng = np.random.default_rng(8)
        branch = randomize(SwinBranch(cfg, rng), rng)
        image = parameter(rng.uniform(size=(3, 16, 16)), name="image")
        readouts = [rng.normal(size=shape) for shape in ((4, 4, 4), (8, 2, 2))]
        named = dict(branch.named_parameters())
        named["image"] = image

        def objective():
            pyramid = encode_transformer(image, cfg, branch)
            return (pyramid[0] * readouts[0]).sum() + (pyramid[1] * readouts[1]).sum()

        report = finite_diff_check(objective, named, max_entries=None)
        self.assertTrue(report.passed, report.errors)
        self.assertLessEqual(report.max_error, 1e-5)
        self.assertEqual(report.checked, {name: p.size for name, p in named.items()})


class TestFeaturePyramid(unittest.TestCase):
    """Test cases for FeaturePyramid."""

    def test_accessors(self):
        """Test shapes, channels and sizes."""
        pyramid = FeaturePyramid([np.zeros((2, 4, 4)), np.zeros((4, 2, 2))])
        self.assertEqual(pyramid.channels, [2, 4])
        self.assertEqual(pyramid.sizes, [(4, 4), (2, 2)])
        pyramid.check_hierarchy()

    def test_hierarchy_violation(self):
        """Test that a level not halving its predecessor is rejected."""
        pyramid = FeaturePyramid([np.zeros((2, 4, 4)), np.zeros((4, 4, 4))])
        with self.assertRaises(ShapeError):
            pyramid.check_hierarchy()

    def test_level_rank(self):
        """Test that every level must be C×H×W."""
        with self.assertRaises(ShapeError):
            FeaturePyramid([np.zeros((4, 4))])


if __name__ == '__main__':
    unittest.main()
