"""
Tests for deformable attention.
"""
import math
import unittest

import numpy as np

from depthformer.core.gradcheck import finite_diff_check
from depthformer.core.tensor import Tensor, parameter
from depthformer.exceptions import ShapeError
from depthformer.models.deform_attn import (
    CrossDeformAttention,
    DeformAttention,
    LevelIndexMap,
    deform_attend,
    deform_cross_attention,
    deform_self_attention,
    predict_offsets_weights,
    predict_reference_points,
)
from depthformer.models.module import randomize


def _sample(image: np.ndarray, x: float, y: float) -> float:
    """Bilinear read of one H×W channel with zero padding."""
    h, w = image.shape
    x0, y0 = math.floor(x), math.floor(y)
    total = 0.0
    for xi, wx in ((x0, 1.0 - (x - x0)), (x0 + 1, x - x0)):
        for yi, wy in ((y0, 1.0 - (y - y0)), (y0 + 1, y - y0)):
            if 0 <= xi < w and 0 <= yi < h:
                total += wx * wy * image[yi, xi]
    return total


def _oracle_attend(values, refs, offsets, weights, out_weight, out_bias):
    """Query by query, level by level, point by point."""
    q_count, m_count, l_count, k_count, _ = offsets.shape
    c = values[0].shape[0]
    head_dim = c // m_count
    heads = np.zeros((q_count, c))
    for q in range(q_count):
        for m in range(m_count):
            for level in range(l_count):
                _, h, w = values[level].shape
                ref = refs[q] if refs.ndim == 2 else refs[q, level]
                for k in range(k_count):
                    x = ref[0] * w - 0.5 + offsets[q, m, level, k, 0]
                    y = ref[1] * h - 0.5 + offsets[q, m, level, k, 1]
                    for d in range(head_dim):
                        channel = values[level][m * head_dim + d]
                        heads[q, m * head_dim + d] += weights[q, m, level, k] * _sample(channel, x, y)
    return heads @ out_weight + out_bias


def _softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class TestLevelIndexMap(unittest.TestCase):
    """Test cases for LevelIndexMap."""

    def test_two_level_layout(self):
        """Test provenance for a 2x2 level followed by a 1x1 level."""
        lvmap = LevelIndexMap([(2, 2), (1, 1)])
        self.assertEqual(lvmap.num_rows, 5)
        np.testing.assert_array_equal(lvmap.level, [0, 0, 0, 0, 1])
        np.testing.assert_array_equal(lvmap.row, [0, 0, 1, 1, 0])
        np.testing.assert_array_equal(lvmap.col, [0, 1, 0, 1, 0])
        self.assertEqual(lvmap.rows(1), slice(4, 5))

    def test_reference_points(self):
        """Test normalized pixel-center locations."""
        refs = LevelIndexMap([(2, 2), (1, 1)]).reference_points()
        np.testing.assert_allclose(refs[1], [0.75, 0.25])
        np.testing.assert_allclose(refs[4], [0.5, 0.5])

    def test_empty(self):
        """Test that a map needs a level."""
        with self.assertRaises(ShapeError):
            LevelIndexMap([])


class TestPredictOffsetsWeights(unittest.TestCase):
    """Test cases for predict_offsets_weights."""

    def setUp(self):
        """Set up test fixtures."""
        self.rng = np.random.default_rng(0)

    def test_zero_heads(self):
        """Test zero offsets and uniform weights from freshly built heads."""
        params = DeformAttention(4, 2, 3, 2, self.rng)
        offsets, weights = predict_offsets_weights(self.rng.normal(size=(5, 4)), params)
        self.assertEqual(offsets.shape, (5, 2, 3, 2, 2))
        np.testing.assert_array_equal(offsets.data, np.zeros(offsets.shape))
        np.testing.assert_allclose(weights.data, np.full((5, 2, 3, 2), 1.0 / 6.0))

    def test_weights_normalized(self):
        """Test that weights sum to one over levels and points for 100 queries."""
        params = randomize(DeformAttention(8, 4, 2, 3, self.rng), self.rng, scale=2.0)
        _, weights = predict_offsets_weights(self.rng.normal(size=(100, 8)), params)
        np.testing.assert_allclose(weights.data.sum(axis=(2, 3)), np.ones((100, 4)), atol=1e-12)
        self.assertTrue((weights.data > 0).all())

    def test_query_width(self):
        """Test that query rows must match the block width."""
        with self.assertRaises(ShapeError):
            predict_offsets_weights(np.ones((2, 3)), DeformAttention(4, 2, 1, 1, self.rng))


class TestDeformAttend(unittest.TestCase):
    """Test cases for deform_attend."""

    def setUp(self):
        """Set up test fixtures."""
        self.rng = np.random.default_rng(1)

    def _identity_block(self, dim: int, levels: int, points: int) -> DeformAttention:
        params = DeformAttention(dim, 1, levels, points, self.rng)
        params.output_weight.data = np.eye(dim)
        return params

    def test_pure_gather(self):
        """Test that one point at a pixel center returns that pixel."""
        params = self._identity_block(3, 1, 1)
        value = self.rng.normal(size=(3, 4, 5))
        lvmap = LevelIndexMap([(4, 5)])
        refs = lvmap.reference_points()
        q = lvmap.num_rows
        out = deform_attend([value], refs, np.zeros((q, 1, 1, 1, 2)), np.ones((q, 1, 1, 1)), params).data
        np.testing.assert_allclose(out, value.reshape(3, -1).T, atol=1e-12)

    def test_uniform_points_at_same_location(self):
        """Test that K coincident points with uniform weights equal one gather."""
        params = self._identity_block(2, 1, 4)
        value = self.rng.normal(size=(2, 3, 3))
        refs = self.rng.uniform(size=(6, 2))
        single = deform_attend([value], refs, np.zeros((6, 1, 1, 1, 2)), np.ones((6, 1, 1, 1)),
                               self._identity_block(2, 1, 1)).data
        spread = deform_attend([value], refs, np.zeros((6, 1, 1, 4, 2)), np.full((6, 1, 1, 4), 0.25), params).data
        np.testing.assert_allclose(spread, single, atol=1e-12)

    def _random_instance(self, rng: np.random.Generator):
        """Draw Q ≤ 8, L ≤ 2, maps up to 4x4, M in {1, 2, 8} and K in {1, 4, 8}."""
        q = int(rng.integers(1, 9))
        levels = int(rng.integers(1, 3))
        heads = int(rng.choice([1, 2, 8]))
        points = int(rng.choice([1, 4, 8]))
        dim = heads * int(rng.integers(1, 3))
        params = randomize(DeformAttention(dim, heads, levels, points, rng), rng)
        values = [rng.normal(size=(dim, int(rng.integers(1, 5)), int(rng.integers(1, 5)))) for _ in range(levels)]
        refs = rng.uniform(size=(q, 2)) if rng.random() < 0.5 else rng.uniform(size=(q, levels, 2))
        offsets = rng.normal(scale=1.5, size=(q, heads, levels, points, 2))
        weights = _softmax(rng.normal(size=(q, heads, levels * points))).reshape(q, heads, levels, points)
        return params, values, refs, offsets, weights

    def test_matches_triple_loop(self):
        """Test 100 random instances against the loop reimplementation."""
        rng = np.random.default_rng(11)
        for instance in range(100):
            params, values, refs, offsets, weights = self._random_instance(rng)
            np.testing.assert_allclose(weights.sum(axis=(2, 3)), 1.0, rtol=0, atol=1e-12)
            out = deform_attend(values, refs, offsets, weights, params).data
            expected = _oracle_attend(values, refs, offsets, weights, params.output_weight.data,
                                      params.output_bias.data)
            np.testing.assert_allclose(out, expected, rtol=0, atol=1e-12, err_msg=f"instance {instance}")

    def test_query_permutation(self):
        """Test that permuting the queries permutes the outputs the same way."""
        rng = np.random.default_rng(12)
        for _ in range(10):
            params, values, refs, offsets, weights = self._random_instance(rng)
            perm = rng.permutation(offsets.shape[0])
            out = deform_attend(values, refs, offsets, weights, params).data
            permuted = deform_attend(values, refs[perm], offsets[perm], weights[perm], params).data
            np.testing.assert_allclose(permuted, out[perm], rtol=0, atol=1e-12)

    def test_per_level_references(self):
        """Test corner references given per level with zero offsets."""
        params = self._identity_block(2, 2, 1)
        values = [self.rng.normal(size=(2, 4, 4)), self.rng.normal(size=(2, 2, 2))]
        refs = np.array([[[0.5 / 4, 0.5 / 4], [1.5 / 2, 1.5 / 2]]])
        weights = np.array([[[[1.0], [0.0]]]])
        out = deform_attend(values, refs, np.zeros((1, 1, 2, 1, 2)), weights, params).data
        np.testing.assert_allclose(out[0], values[0][:, 0, 0], atol=1e-12)
        weights = np.array([[[[0.0], [1.0]]]])
        out = deform_attend(values, refs, np.zeros((1, 1, 2, 1, 2)), weights, params).data
        np.testing.assert_allclose(out[0], values[1][:, 1, 1], atol=1e-12)

    def test_level_count_mismatch(self):
        """Test that one value map is needed per level."""
        params = self._identity_block(2, 2, 1)
        with self.assertRaises(ShapeError):
            deform_attend([np.zeros((2, 2, 2))], np.zeros((1, 2)), np.zeros((1, 1, 2, 1, 2)),
                          np.ones((1, 1, 2, 1)), params)


class TestDeformSelfAttention(unittest.TestCase):
    """Test cases for deform_self_attention."""

    def setUp(self):
        """Set up test fixtures."""
        self.rng = np.random.default_rng(2)
        self.lvmap = LevelIndexMap([(4, 4), (2, 2)])

    def test_uniform_self_located_average(self):
        """Test zero embeddings and heads against the uniform-gather oracle."""
        params = DeformAttention(4, 2, 2, 3, self.rng)
        x = self.rng.normal(size=(self.lvmap.num_rows, 4))
        out = deform_self_attention(x, self.lvmap, np.zeros((2, 4)), params).data

        projected = x @ params.value_weight.data + params.value_bias.data
        values = [projected[self.lvmap.rows(n)].reshape(h, w, 4).transpose(2, 0, 1)
                  for n, (h, w) in enumerate(self.lvmap.sizes)]
        q = self.lvmap.num_rows
        expected = _oracle_attend(values, self.lvmap.reference_points(), np.zeros((q, 2, 2, 3, 2)),
                                  np.full((q, 2, 2, 3), 1.0 / 6.0), params.output_weight.data,
                                  params.output_bias.data)
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_single_pixel_level(self):
        """Test that a 1x1 map leaves only the output projection of its value."""
        params = DeformAttention(4, 2, 1, 2, self.rng)
        params.value_bias.data = self.rng.normal(size=4)
        params.output_bias.data = self.rng.normal(size=4)
        params.attn_weight.data = self.rng.normal(size=params.attn_weight.shape)
        x = self.rng.normal(size=(1, 4))
        out = deform_self_attention(x, LevelIndexMap([(1, 1)]), self.rng.normal(size=(1, 4)), params).data
        value = x @ params.value_weight.data + params.value_bias.data
        np.testing.assert_allclose(out, value @ params.output_weight.data + params.output_bias.data, atol=1e-12)

    def test_row_count_mismatch(self):
        """Test that X must cover the level map."""
        params = DeformAttention(4, 2, 2, 1, self.rng)
        with self.assertRaises(ShapeError):
            deform_self_attention(np.zeros((7, 4)), self.lvmap, np.zeros((2, 4)), params)

    def test_gradient(self):
        """Test the gradient of mean(X̂) with respect to X and every parameter."""
        params = randomize(DeformAttention(4, 2, 2, 2, self.rng), self.rng)
        x = parameter(self.rng.normal(size=(self.lvmap.num_rows, 4)), name="x")
        embed = parameter(self.rng.normal(size=(2, 4)), name="level_embed")
        named = dict(params.named_parameters())
        named.update({"x": x, "level_embed": embed})
        report = finite_diff_check(lambda: deform_self_attention(x, self.lvmap, embed, params).mean(),
                                   named, max_entries=8)
        self.assertTrue(report.passed, report.errors)


class TestDeformCrossAttention(unittest.TestCase):
    """Test cases for deform_cross_attention."""

    def setUp(self):
        """Set up test fixtures."""
        self.rng = np.random.default_rng(3)
        self.lvmap = LevelIndexMap([(4, 4), (2, 2)])

    def test_zero_reference_head(self):
        """Test that a zero sigmoid head centers every reference point."""
        params = CrossDeformAttention(4, 2, 2, 1, self.rng)
        params.ref_weight.data = np.zeros((4, 2))
        refs = predict_reference_points(Tensor(self.rng.normal(size=(3, 4))), params).data
        np.testing.assert_array_equal(refs, np.full((3, 2), 0.5))

    def test_matches_triple_loop(self):
        """Test a random instance against the loop reimplementation."""
        params = randomize(CrossDeformAttention(4, 2, 2, 2, self.rng), self.rng)
        queries = self.rng.normal(size=(3, 4))
        x_hat = self.rng.normal(size=(self.lvmap.num_rows, 4))
        out = deform_cross_attention(queries, x_hat, self.lvmap, params).data

        refs = 1.0 / (1.0 + np.exp(-(queries @ params.ref_weight.data + params.ref_bias.data)))
        offsets = (queries @ params.offset_weight.data + params.offset_bias.data).reshape(3, 2, 2, 2, 2)
        logits = (queries @ params.attn_weight.data + params.attn_bias.data).reshape(3, 2, 4)
        weights = _softmax(logits).reshape(3, 2, 2, 2)
        projected = x_hat @ params.value_weight.data + params.value_bias.data
        values = [projected[self.lvmap.rows(n)].reshape(h, w, 4).transpose(2, 0, 1)
                  for n, (h, w) in enumerate(self.lvmap.sizes)]
        expected = _oracle_attend(values, refs, offsets, weights, params.output_weight.data, params.output_bias.data)
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_query_permutation(self):
        """Test that permuting the query rows permutes the attended rows."""
        params = randomize(CrossDeformAttention(4, 2, 2, 2, self.rng), self.rng)
        queries = self.rng.normal(size=(6, 4))
        x_hat = self.rng.normal(size=(self.lvmap.num_rows, 4))
        perm = self.rng.permutation(6)
        out = deform_cross_attention(queries, x_hat, self.lvmap, params).data
        permuted = deform_cross_attention(queries[perm], x_hat, self.lvmap, params).data
        np.testing.assert_allclose(permuted, out[perm], rtol=0, atol=1e-12)

    def test_level_count_mismatch(self):
        """Test that the block must be built for the pyramid's level count."""
        params = CrossDeformAttention(4, 2, 3, 1, self.rng)
        with self.assertRaises(ShapeError):
            deform_cross_attention(np.zeros((1, 4)), np.zeros((self.lvmap.num_rows, 4)), self.lvmap, params)

    def test_gradient(self):
        """Test gradients with respect to queries, X̂ and every parameter."""
        params = randomize(CrossDeformAttention(4, 2, 2, 2, self.rng), self.rng)
        queries = parameter(self.rng.normal(size=(3, 4)), name="queries")
        x_hat = parameter(self.rng.normal(size=(self.lvmap.num_rows, 4)), name="x_hat")
        named = dict(params.named_parameters())
        named.update({"queries": queries, "x_hat": x_hat})
        report = finite_diff_check(lambda: deform_cross_attention(queries, x_hat, self.lvmap, params).mean(),
                                   named, max_entries=8)
        self.assertTrue(report.passed, report.errors)


if __name__ == '__main__':
    unittest.main()
