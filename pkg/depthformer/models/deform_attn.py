"""
Multi-head, multi-level deformable attention.

Each query predicts K sampling offsets per head and level around a reference
point, plus softmax-normalized weights over the L·K samples of each head.
Samples are bilinear reads of the value maps; heads are concatenated and
projected.

Reference points are normalized (x, y) in [0, 1]². A point maps to level
pixels as ref·(W, H) − 0.5 + offset, so offsets are measured in pixels of
the level being sampled.
"""
import logging
from typing import List, Sequence, Tuple

import numpy as np

from depthformer.core import ops
from depthformer.core.tensor import Tensor, as_tensor
from depthformer.exceptions import ShapeError
from depthformer.models.module import Module, init_linear, zeros

logger = logging.getLogger(__name__)


class LevelIndexMap:
    """
    Provenance of the rows of an unfolded pyramid.

    Row r comes from level `level[r]` at pixel (`row[r]`, `col[r]`); levels
    are stacked in order and row-major inside each level.
    """

    def __init__(self, sizes: Sequence[Tuple[int, int]]):
        self.sizes = [(int(h), int(w)) for h, w in sizes]
        if not self.sizes:
            raise ShapeError("a level map needs at least one level")
        counts = [h * w for h, w in self.sizes]
        self.starts = [int(s) for s in np.cumsum([0] + counts[:-1])]
        self.counts = counts
        self.level = np.concatenate([np.full(c, n, dtype=np.int64) for n, c in enumerate(counts)])
        self.row = np.concatenate([np.repeat(np.arange(h), w) for h, w in self.sizes])
        self.col = np.concatenate([np.tile(np.arange(w), h) for h, w in self.sizes])

    def __repr__(self) -> str:
        return f"<LevelIndexMap sizes={self.sizes}>"

    @property
    def num_levels(self) -> int:
        return len(self.sizes)

    @property
    def num_rows(self) -> int:
        return int(sum(self.counts))

    def rows(self, level: int) -> slice:
        return slice(self.starts[level], self.starts[level] + self.counts[level])

    def reference_points(self) -> np.ndarray:
        """Normalized pixel-center location of every row, shape (rows, 2)."""
        heights = np.array([self.sizes[n][0] for n in self.level], dtype=np.float64)
        widths = np.array([self.sizes[n][1] for n in self.level], dtype=np.float64)
        return np.stack([(self.col + 0.5) / widths, (self.row + 0.5) / heights], axis=-1)


class DeformAttention(Module):
    """Value, offset, weight and output projections of one attention block."""

    def __init__(self, dim: int, num_heads: int, num_levels: int, num_points: int,
                 rng: np.random.Generator):
        if dim % num_heads:
            raise ValueError(f"channels {dim} not divisible by {num_heads} heads")
        self.dim = dim
        self.num_heads = num_heads
        self.num_levels = num_levels
        self.num_points = num_points
        samples = num_heads * num_levels * num_points
        self.value_weight = init_linear(rng, dim, dim)
        self.value_bias = zeros(dim)
        # zero heads: first pass is a uniform average at the reference points
        self.offset_weight = zeros(dim, 2 * samples)
        self.offset_bias = zeros(2 * samples)
        self.attn_weight = zeros(dim, samples)
        self.attn_bias = zeros(samples)
        self.output_weight = init_linear(rng, dim, dim)
        self.output_bias = zeros(dim)


class CrossDeformAttention(DeformAttention):
    """Deformable attention whose reference points are predicted from the queries."""

    def __init__(self, dim: int, num_heads: int, num_levels: int, num_points: int,
                 rng: np.random.Generator):
        super().__init__(dim, num_heads, num_levels, num_points, rng)
        self.ref_weight = init_linear(rng, dim, 2)
        self.ref_bias = zeros(2)


def predict_offsets_weights(queries: Tensor, params: DeformAttention) -> Tuple[Tensor, Tensor]:
    """
    Sampling offsets and attention weights from the query features.

    Args:
        queries: Query features of shape (Q, C_h)
        params: Attention block

    Returns:
        Tuple[Tensor, Tensor]: offsets (Q, M, L, K, 2) in level pixels and
            weights (Q, M, L, K) summing to one over L·K per query and head
    """
    queries = as_tensor(queries)
    if queries.ndim != 2 or queries.shape[1] != params.dim:
        raise ShapeError(f"queries must be Q×{params.dim}, got shape {queries.shape}")
    q = queries.shape[0]
    m, l, k = params.num_heads, params.num_levels, params.num_points
    offsets = ops.linear(queries, params.offset_weight, params.offset_bias).reshape(q, m, l, k, 2)
    logits = ops.linear(queries, params.attn_weight, params.attn_bias).reshape(q, m, l * k)
    weights = ops.softmax(logits, axis=-1).reshape(q, m, l, k)
    return offsets, weights


def project_values(x: Tensor, lvmap: LevelIndexMap, params: DeformAttention) -> List[Tensor]:
    """Apply the value projection to unfolded rows and return per-level C_h×H×W maps."""
    values = ops.linear(x, params.value_weight, params.value_bias)
    maps = []
    for n, (h, w) in enumerate(lvmap.sizes):
        maps.append(values[lvmap.rows(n)].reshape(h, w, params.dim).transpose(2, 0, 1))
    return maps


def deform_attend(
    values: Sequence[Tensor],
    refs: Tensor,
    offsets: Tensor,
    weights: Tensor,
    params: DeformAttention,
) -> Tensor:
    """
    Weighted sum of bilinear samples around the reference points.

    Args:
        values: Per-level value-projected maps, each (C_h, H_l, W_l)
        refs: Normalized reference points, (Q, 2) shared across levels or (Q, L, 2)
        offsets: Sampling offsets (Q, M, L, K, 2)
        weights: Normalized sample weights (Q, M, L, K)
        params: Attention block (head layout and output projection)

    Returns:
        Tensor: Output of shape (Q, C_h)
    """
    refs, offsets, weights = as_tensor(refs), as_tensor(offsets), as_tensor(weights)
    q, m, l, k, _ = offsets.shape
    c = params.dim
    head_dim = c // m
    if len(values) != l:
        raise ShapeError(f"{len(values)} value maps given for {l} levels")
    if weights.shape != (q, m, l, k):
        raise ShapeError(f"weights shape {weights.shape} does not match offsets {offsets.shape}")

    total = None
    for level, value in enumerate(values):
        value = as_tensor(value)
        if value.ndim != 3 or value.shape[0] != c:
            raise ShapeError(f"value map {level} must be {c}×H×W, got shape {value.shape}")
        _, h, w = value.shape
        ref = refs if refs.ndim == 2 else refs[:, level]
        ref_px = ref * np.array([w, h], dtype=np.float64) - 0.5
        points = ref_px.reshape(q, 1, 1, 2) + offsets[:, :, level]
        points = points.transpose(1, 0, 2, 3).reshape(m, q * k, 2)
        sampled = ops.bilinear_sample(value.reshape(m, head_dim, h, w), points).reshape(m, head_dim, q, k)
        level_weights = weights[:, :, level].transpose(1, 0, 2).reshape(m, 1, q, k)
        contribution = (sampled * level_weights).sum(axis=-1)
        total = contribution if total is None else total + contribution

    heads = total.transpose(2, 0, 1).reshape(q, c)
    return ops.linear(heads, params.output_weight, params.output_bias)


def dsa_queries(x: Tensor, lvmap: LevelIndexMap, level_embed: Tensor) -> Tensor:
    """Rows of X tagged with the embedding of their level."""
    level_embed = as_tensor(level_embed)
    if level_embed.shape[0] != lvmap.num_levels:
        raise ShapeError(f"{level_embed.shape[0]} level embeddings for {lvmap.num_levels} levels")
    return as_tensor(x) + level_embed[lvmap.level]


def deform_self_attention(
    x: Tensor,
    lvmap: LevelIndexMap,
    level_embed: Tensor,
    params: DeformAttention,
) -> Tensor:
    """
    Deformable self-attention over an unfolded pyramid.

    Every row queries all levels from its own normalized location.

    Args:
        x: Unfolded features of shape (ΣH_nW_n, C_h)
        lvmap: Row provenance
        level_embed: Per-level embeddings of shape (L, C_h)
        params: Attention block with L levels

    Returns:
        Tensor: Enhanced rows X̂ of the same shape as x
    """
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[0] != lvmap.num_rows:
        raise ShapeError(f"X has shape {x.shape}, level map covers {lvmap.num_rows} rows")
    if params.num_levels != lvmap.num_levels:
        raise ShapeError(f"attention built for {params.num_levels} levels, pyramid has {lvmap.num_levels}")
    queries = dsa_queries(x, lvmap, level_embed)
    refs = Tensor(lvmap.reference_points())
    offsets, weights = predict_offsets_weights(queries, params)
    return deform_attend(project_values(x, lvmap, params), refs, offsets, weights, params)


def predict_reference_points(queries: Tensor, params: CrossDeformAttention) -> Tensor:
    """Normalized reference points sigmoid(affine(query)), shape (Q, 2)."""
    return ops.sigmoid(ops.linear(queries, params.ref_weight, params.ref_bias))


def deform_cross_attention(
    queries: Tensor,
    x_hat: Tensor,
    lvmap: LevelIndexMap,
    params: CrossDeformAttention,
) -> Tensor:
    """
    Deformable cross-attention from external queries into an unfolded pyramid.

    Args:
        queries: Query rows of shape (Qg, C_h)
        x_hat: Unfolded pyramid features of shape (ΣH_nW_n, C_h)
        lvmap: Row provenance of x_hat
        params: Attention block with a reference-point head

    Returns:
        Tensor: Attended features of shape (Qg, C_h)
    """
    x_hat = as_tensor(x_hat)
    if x_hat.ndim != 2 or x_hat.shape[0] != lvmap.num_rows:
        raise ShapeError(f"X̂ has shape {x_hat.shape}, level map covers {lvmap.num_rows} rows")
    if params.num_levels != lvmap.num_levels:
        raise ShapeError(f"attention built for {params.num_levels} levels, pyramid has {lvmap.num_levels}")
    refs = predict_reference_points(queries, params)
    offsets, weights = predict_offsets_weights(queries, params)
    return deform_attend(project_values(x_hat, lvmap, params), refs, offsets, weights, params)
