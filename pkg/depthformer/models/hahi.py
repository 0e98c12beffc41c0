"""
Hierarchical aggregation and heterogeneous interaction neck.

The Transformer levels are projected to a common width, flattened into one
matrix, enhanced by deformable self-attention and folded back; each level is
then fused with its original features. The convolution feature map G queries
the enhanced levels through deformable cross-attention and is fused the same
way.
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from depthformer.core import ops
from depthformer.core.tensor import Tensor, as_tensor, parameter
from depthformer.exceptions import ShapeError
from depthformer.models.deform_attn import (
    CrossDeformAttention,
    DeformAttention,
    LevelIndexMap,
    deform_cross_attention,
    deform_self_attention,
)
from depthformer.models.module import Module, init_conv, zeros
from depthformer.models.swin import FeaturePyramid
from depthformer.schemas.network import DsaMode, HahiConfig

logger = logging.getLogger(__name__)


class Hahi(Module):
    """Weights of the fusion neck."""

    def __init__(self, cfg: HahiConfig, level_channels: Sequence[int], rng: np.random.Generator,
                 g_channels: Optional[int] = None):
        self.config = cfg
        self.level_channels = [int(c) for c in level_channels]
        self.g_channels = g_channels
        c_h = cfg.resolve_channels(self.level_channels)
        self.channels = c_h
        heads, points = cfg.attention.num_heads, cfg.attention.num_points
        n_levels = len(self.level_channels)

        self.proj_weights = [init_conv(rng, c_h, c, 1) for c in self.level_channels]
        self.proj_biases = [zeros(c_h) for _ in self.level_channels]
        self.level_embed = parameter(rng.normal(size=(n_levels, c_h)))
        if cfg.dsa_mode == DsaMode.MULTI_LEVEL:
            self.dsa = DeformAttention(c_h, heads, n_levels, points, rng)
        elif cfg.dsa_mode == DsaMode.SINGLE_LEVEL:
            self.dsa = [DeformAttention(c_h, heads, 1, points, rng) for _ in self.level_channels]
        else:
            self.dsa = None
        self.fuse_weights = [init_conv(rng, c, c + c_h, 1) for c in self.level_channels]
        self.fuse_biases = [zeros(c) for c in self.level_channels]

        self.dca = None
        if g_channels is not None and cfg.use_dca:
            self.g_proj_weight = init_conv(rng, c_h, g_channels, 1)
            self.g_proj_bias = zeros(c_h)
            self.dca = CrossDeformAttention(c_h, heads, n_levels, points, rng)
            self.g_fuse_weight = init_conv(rng, g_channels, g_channels + c_h, 1)
            self.g_fuse_bias = zeros(g_channels)

    def forward(self, pyramid: FeaturePyramid, g: Optional[Tensor] = None) -> Tuple[FeaturePyramid, Optional[Tensor]]:
        return hahi_forward(pyramid, g, self)


def project_levels(pyramid: FeaturePyramid, params: Hahi) -> FeaturePyramid:
    """
    1×1-convolve every level to the common width C_h.

    Raises:
        ShapeError: If the level channels differ from those the neck was built for
    """
    if pyramid.channels != params.level_channels:
        raise ShapeError(f"pyramid channels {pyramid.channels} do not match neck channels {params.level_channels}")
    return FeaturePyramid([
        ops.conv2d(level, w, b) for level, w, b in zip(pyramid, params.proj_weights, params.proj_biases)
    ])


def unfold(pyramid: FeaturePyramid) -> Tuple[Tensor, LevelIndexMap]:
    """
    Flatten equal-width levels into one row per pixel.

    Returns:
        Tuple[Tensor, LevelIndexMap]: X of shape (ΣH_nW_n, C_h) and its row map
    """
    widths = set(pyramid.channels)
    if len(widths) != 1:
        raise ShapeError(f"unfold needs a common channel count, got {pyramid.channels}")
    c = widths.pop()
    rows = [level.reshape(c, -1).transpose(1, 0) for level in pyramid]
    x = rows[0] if len(rows) == 1 else ops.concat(rows, axis=0)
    return x, LevelIndexMap(pyramid.sizes)


def fold(x_hat: Tensor, lvmap: LevelIndexMap) -> FeaturePyramid:
    """
    Inverse of unfold.

    Raises:
        ShapeError: If the row count differs from the map's
    """
    x_hat = as_tensor(x_hat)
    if x_hat.ndim != 2 or x_hat.shape[0] != lvmap.num_rows:
        raise ShapeError(f"cannot fold {x_hat.shape} rows into levels {lvmap.sizes}")
    c = x_hat.shape[1]
    return FeaturePyramid([
        x_hat[lvmap.rows(n)].transpose(1, 0).reshape(c, h, w) for n, (h, w) in enumerate(lvmap.sizes)
    ])


def _enhance(x: Tensor, lvmap: LevelIndexMap, params: Hahi) -> Tensor:
    mode = params.config.dsa_mode
    if mode == DsaMode.MULTI_LEVEL:
        return deform_self_attention(x, lvmap, params.level_embed, params.dsa)
    if mode == DsaMode.SINGLE_LEVEL:
        enhanced: List[Tensor] = []
        for n, size in enumerate(lvmap.sizes):
            enhanced.append(deform_self_attention(
                x[lvmap.rows(n)], LevelIndexMap([size]), params.level_embed[n:n + 1], params.dsa[n]
            ))
        return enhanced[0] if len(enhanced) == 1 else ops.concat(enhanced, axis=0)
    return x


def hahi_forward(
    pyramid: FeaturePyramid,
    g: Optional[Tensor],
    params: Hahi,
) -> Tuple[FeaturePyramid, Optional[Tensor]]:
    """
    Enhance the Transformer levels and let G interact with them.

    Args:
        pyramid: Transformer features F
        g: Convolution features G, or None when the branch is disabled
        params: Neck weights

    Returns:
        Tuple[FeaturePyramid, Optional[Tensor]]: F_o with F's shapes and G_o
            with G's shape (None when G is None; G itself when the neck was
            built without cross-attention)
    """
    projected = project_levels(pyramid, params)
    x, lvmap = unfold(projected)
    x_hat = _enhance(x, lvmap, params)
    enhanced = fold(x_hat, lvmap)

    fused = FeaturePyramid([
        ops.conv2d(ops.concat([f, e], axis=0), w, b)
        for f, e, w, b in zip(pyramid, enhanced, params.fuse_weights, params.fuse_biases)
    ])

    if g is None:
        return fused, None
    if params.dca is None:
        if params.g_channels is None and params.config.use_dca:
            raise ShapeError("G given to a neck built without a convolution branch")
        return fused, as_tensor(g)

    g = as_tensor(g)
    if g.ndim != 3 or g.shape[0] != params.g_channels:
        raise ShapeError(f"G must have {params.g_channels} channels, got shape {g.shape}")
    c_h = params.channels
    _, hg, wg = g.shape
    g_h = ops.conv2d(g, params.g_proj_weight, params.g_proj_bias)
    queries = g_h.reshape(c_h, hg * wg).transpose(1, 0)
    attended = deform_cross_attention(queries, x_hat, lvmap, params.dca)
    g_att = attended.transpose(1, 0).reshape(c_h, hg, wg)
    g_o = ops.conv2d(ops.concat([g, g_att], axis=0), params.g_fuse_weight, params.g_fuse_bias)
    return fused, g_o
