"""
Windowed-Transformer encoder branch.

Patch partition and linear embedding, stages of shifted-window Transformer
layers separated by patch merging, and the hierarchical feature pyramid taken
from the stage ends. Token grids are C×H×W at the public boundary; inside a
stage they are kept H×W×C so projections act on the last axis.
"""
import logging
from functools import lru_cache
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from depthformer.core import ops
from depthformer.core.tensor import Tensor, as_tensor
from depthformer.exceptions import ShapeError
from depthformer.models.module import Module, init_linear, ones, zeros
from depthformer.schemas.network import BranchConfig

logger = logging.getLogger(__name__)

MASK_VALUE = -1e9


class FeaturePyramid:
    """
    Ordered per-level feature maps, finest level first.

    Each level is a C_n×H_n×W_n tensor.
    """

    def __init__(self, levels: Sequence[Tensor]):
        self.levels = [as_tensor(level) for level in levels]
        for n, level in enumerate(self.levels):
            if level.ndim != 3:
                raise ShapeError(f"pyramid level {n} must be C×H×W, got shape {level.shape}")

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, index: int) -> Tensor:
        return self.levels[index]

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self.levels)

    @property
    def shapes(self) -> List[Tuple[int, int, int]]:
        return [level.shape for level in self.levels]

    @property
    def channels(self) -> List[int]:
        return [level.shape[0] for level in self.levels]

    @property
    def sizes(self) -> List[Tuple[int, int]]:
        return [level.shape[1:] for level in self.levels]

    def check_hierarchy(self) -> None:
        """Raise ShapeError unless every level halves the extents and doubles the channels."""
        for n in range(1, len(self.levels)):
            (c0, h0, w0), (c1, h1, w1) = self.shapes[n - 1], self.shapes[n]
            if (2 * h1, 2 * w1, c1) != (h0, w0, 2 * c0):
                raise ShapeError(f"levels {n - 1} {self.shapes[n - 1]} and {n} {self.shapes[n]} break the halving rule")


# Window bookkeeping

def window_geometry(height: int, width: int, window: int, shift: bool) -> Tuple[int, int, int, int]:
    """
    Effective window extents and cyclic shifts for one grid.

    A window at least as large as the grid collapses to the grid and is
    never shifted.

    Returns:
        Tuple[int, int, int, int]: (window_h, window_w, shift_h, shift_w)
    """
    wh, ww = min(window, height), min(window, width)
    if height % wh or width % ww:
        raise ShapeError(f"window size {window} does not divide the {height}x{width} token grid")
    sh = wh // 2 if shift and wh < height else 0
    sw = ww // 2 if shift and ww < width else 0
    return wh, ww, sh, sw


def _axis_regions(extent: int, window: int, shift: int) -> np.ndarray:
    regions = np.zeros(extent, dtype=np.int64)
    if shift:
        regions[extent - window:extent - shift] = 1
        regions[extent - shift:] = 2
    return regions


@lru_cache(maxsize=64)
def shift_mask(height: int, width: int, wh: int, ww: int, sh: int, sw: int) -> np.ndarray:
    """
    Additive attention mask for a cyclically shifted grid.

    Tokens that were not neighbours before the shift get MASK_VALUE.

    Returns:
        np.ndarray: Mask of shape (num_windows, 1, T, T), T = wh·ww
    """
    ids = 3 * _axis_regions(height, wh, sh)[:, None] + _axis_regions(width, ww, sw)[None, :]
    ids = ids.reshape(height // wh, wh, width // ww, ww).transpose(0, 2, 1, 3).reshape(-1, wh * ww)
    mask = np.where(ids[:, :, None] != ids[:, None, :], MASK_VALUE, 0.0)
    mask = mask[:, None, :, :]
    mask.setflags(write=False)
    return mask


def window_partition(x: Tensor, wh: int, ww: int) -> Tensor:
    """H×W×C grid → (num_windows, wh·ww, C), windows and tokens row-major."""
    h, w, c = x.shape
    x = x.reshape(h // wh, wh, w // ww, ww, c).transpose(0, 2, 1, 3, 4)
    return x.reshape(-1, wh * ww, c)


def window_reverse(windows: Tensor, height: int, width: int, wh: int, ww: int) -> Tensor:
    c = windows.shape[-1]
    x = windows.reshape(height // wh, width // ww, wh, ww, c).transpose(0, 2, 1, 3, 4)
    return x.reshape(height, width, c)


# Parameters

class WindowAttention(Module):
    """Multi-head self-attention projections for one layer."""

    def __init__(self, dim: int, num_heads: int, rng: np.random.Generator):
        if dim % num_heads:
            raise ValueError(f"channels {dim} not divisible by {num_heads} heads")
        self.dim = dim
        self.num_heads = num_heads
        self.qkv_weight = init_linear(rng, dim, 3 * dim)
        self.qkv_bias = zeros(3 * dim)
        self.proj_weight = init_linear(rng, dim, dim)
        self.proj_bias = zeros(dim)
        # Optional (M, T, T) additive bias; unset means no position information
        self.position_bias: Optional[Tensor] = None


class TransformerLayer(Module):
    """Pre-norm Transformer layer: windowed MSA and MLP, each with a residual."""

    def __init__(self, dim: int, num_heads: int, window_size: int, shift: bool,
                 mlp_ratio: int, rng: np.random.Generator):
        self.window_size = window_size
        self.shift = shift
        self.norm1_gamma = ones(dim)
        self.norm1_beta = zeros(dim)
        self.attn = WindowAttention(dim, num_heads, rng)
        self.norm2_gamma = ones(dim)
        self.norm2_beta = zeros(dim)
        self.mlp_fc1_weight = init_linear(rng, dim, mlp_ratio * dim)
        self.mlp_fc1_bias = zeros(mlp_ratio * dim)
        self.mlp_fc2_weight = init_linear(rng, mlp_ratio * dim, dim)
        self.mlp_fc2_bias = zeros(dim)

    def forward_hwc(self, x: Tensor) -> Tensor:
        y = x + _window_msa_hwc(
            ops.layer_norm(x, self.norm1_gamma, self.norm1_beta), self.attn, self.window_size, self.shift
        )
        hidden = ops.gelu(ops.linear(ops.layer_norm(y, self.norm2_gamma, self.norm2_beta),
                                     self.mlp_fc1_weight, self.mlp_fc1_bias))
        return y + ops.linear(hidden, self.mlp_fc2_weight, self.mlp_fc2_bias)


class PatchEmbed(Module):
    def __init__(self, in_channels: int, patch_size: int, dim: int, rng: np.random.Generator):
        self.patch_size = patch_size
        self.weight = init_linear(rng, in_channels * patch_size * patch_size, dim)
        self.bias = zeros(dim)


class PatchMerge(Module):
    def __init__(self, dim: int, rng: np.random.Generator):
        self.norm_gamma = ones(4 * dim)
        self.norm_beta = zeros(4 * dim)
        self.reduction_weight = init_linear(rng, 4 * dim, 2 * dim)


class SwinStage(Module):
    def __init__(self, dim: int, depth: int, num_heads: int, window_size: int,
                 mlp_ratio: int, rng: np.random.Generator):
        self.layers = [
            TransformerLayer(dim, num_heads, window_size, shift=bool(j % 2), mlp_ratio=mlp_ratio, rng=rng)
            for j in range(depth)
        ]


class SwinBranch(Module):
    """All parameters of the Transformer branch."""

    def __init__(self, cfg: BranchConfig, rng: np.random.Generator, in_channels: int = 3):
        self.config = cfg
        channels = cfg.stage_channels
        self.patch_embed = PatchEmbed(in_channels, cfg.patch_size, cfg.embed_dim, rng)
        self.stages = [
            SwinStage(channels[i], cfg.depths[i], cfg.num_heads[i], cfg.window_size, cfg.mlp_ratio, rng)
            for i in range(cfg.num_levels)
        ]
        self.merges = [PatchMerge(channels[i], rng) for i in range(cfg.num_levels - 1)]

    def forward(self, image: Tensor) -> FeaturePyramid:
        return encode_transformer(image, self.config, self)


# Operations

def _attend(windows: Tensor, params: WindowAttention, mask: Optional[np.ndarray],
            position_bias: Optional[Tensor] = None) -> Tuple[Tensor, Tensor]:
    n_windows, tokens, c = windows.shape
    heads = params.num_heads
    head_dim = c // heads
    qkv = ops.linear(windows, params.qkv_weight, params.qkv_bias)
    qkv = qkv.reshape(n_windows, tokens, 3, heads, head_dim).transpose(2, 0, 3, 1, 4)
    q = qkv[0] * (head_dim ** -0.5)
    k, v = qkv[1], qkv[2]
    scores = ops.matmul(q, k.transpose(0, 1, 3, 2))
    if position_bias is not None:
        scores = scores + position_bias
    if mask is not None:
        scores = scores + mask
    weights = ops.softmax(scores, axis=-1)
    out = ops.matmul(weights, v).transpose(0, 2, 1, 3).reshape(n_windows, tokens, c)
    return ops.linear(out, params.proj_weight, params.proj_bias), weights


def _window_msa_hwc(x: Tensor, params: WindowAttention, window: int, shift: bool,
                    return_weights: bool = False):
    h, w, c = x.shape
    if c != params.dim:
        raise ShapeError(f"grid has {c} channels, attention expects {params.dim}")
    wh, ww, sh, sw = window_geometry(h, w, window, shift)
    if sh or sw:
        x = ops.roll(x, (-sh, -sw), (0, 1))
    mask = shift_mask(h, w, wh, ww, sh, sw) if (sh or sw) else None
    out, weights = _attend(window_partition(x, wh, ww), params, mask, params.position_bias)
    out = window_reverse(out, h, w, wh, ww)
    if sh or sw:
        out = ops.roll(out, (sh, sw), (0, 1))
    return (out, weights) if return_weights else out


def _to_hwc(grid: Tensor) -> Tensor:
    grid = as_tensor(grid)
    if grid.ndim != 3:
        raise ShapeError(f"token grid must be C×H×W, got shape {grid.shape}")
    return grid.transpose(1, 2, 0)


def _to_chw(x: Tensor) -> Tensor:
    return x.transpose(2, 0, 1)


def window_msa(grid: Tensor, params: WindowAttention, window: int, shift: bool) -> Tensor:
    """
    Multi-head self-attention inside non-overlapping windows.

    With `shift` set the grid is cyclically rolled by half a window first and
    attention between tokens that were not neighbours before the roll is
    masked out; the result is rolled back.

    Args:
        grid: Token grid of shape (C, Hg, Wg)
        params: Projection weights
        window: Window side w; values ≥ the grid extent give one window
        shift: Whether to shift the window partition

    Returns:
        Tensor: Attention output of shape (C, Hg, Wg), without residual

    Raises:
        ShapeError: If the window does not divide the grid
    """
    return _to_chw(_window_msa_hwc(_to_hwc(grid), params, window, shift))


def window_attention_weights(grid: Tensor, params: WindowAttention, window: int, shift: bool) -> np.ndarray:
    """Softmax attention weights of window_msa, shaped (num_windows, M, T, T)."""
    _, weights = _window_msa_hwc(_to_hwc(grid), params, window, shift, return_weights=True)
    return weights.numpy()


def transformer_layer(z_prev: Tensor, params: TransformerLayer) -> Tensor:
    """
    One pre-norm Transformer layer over a token grid.

    ẑ = MSA(LN(z)) + z, then MLP(LN(ẑ)) + ẑ.

    Args:
        z_prev: Token grid of shape (C, Hg, Wg)
        params: Layer weights, window size and shift flag

    Returns:
        Tensor: Token grid of the same shape
    """
    return _to_chw(params.forward_hwc(_to_hwc(z_prev)))


def _embed_hwc(image: Tensor, params: PatchEmbed) -> Tensor:
    image = as_tensor(image)
    if image.ndim != 3:
        raise ShapeError(f"image must be C×H×W, got shape {image.shape}")
    c, h, w = image.shape
    p = params.patch_size
    if h % p or w % p:
        raise ShapeError(f"image {h}x{w} extents must be multiples of the patch size {p}")
    if c * p * p != params.weight.shape[0]:
        raise ShapeError(f"image has {c} channels, embedding expects {params.weight.shape[0] // (p * p)}")
    patches = image.reshape(c, h // p, p, w // p, p).transpose(1, 3, 0, 2, 4).reshape(h // p, w // p, c * p * p)
    return ops.linear(patches, params.weight, params.bias)


def patch_partition_embed(image: Tensor, cfg: BranchConfig, params: PatchEmbed) -> Tensor:
    """
    Split the image into p×p patches and embed each one linearly.

    A patch vector lists its pixel values channel by channel, each channel
    row-major.

    Args:
        image: Image of shape (3, H, W)
        cfg: Branch configuration (patch size)
        params: Embedding weights of shape (3·p·p, C) and bias (C,)

    Returns:
        Tensor: Token grid of shape (C, H/p, W/p)
    """
    if params.patch_size != cfg.patch_size:
        raise ValueError(f"embedding built for patch size {params.patch_size}, config has {cfg.patch_size}")
    return _to_chw(_embed_hwc(image, params))


def _merge_hwc(x: Tensor, params: PatchMerge) -> Tensor:
    h, w, c = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"patch merging needs even extents, got {h}x{w}")
    if 4 * c != params.norm_gamma.shape[0]:
        raise ShapeError(f"grid has {c} channels, merge expects {params.norm_gamma.shape[0] // 4}")
    x0 = x[0::2, 0::2]
    x1 = x[1::2, 0::2]
    x2 = x[0::2, 1::2]
    x3 = x[1::2, 1::2]
    merged = ops.concat([x0, x1, x2, x3], axis=-1)
    merged = ops.layer_norm(merged, params.norm_gamma, params.norm_beta)
    return ops.matmul(merged, params.reduction_weight)


def patch_merge(grid: Tensor, params: PatchMerge) -> Tensor:
    """
    Concatenate each 2×2 neighbourhood, normalize and reduce to 2C channels.

    Args:
        grid: Token grid of shape (C, Hg, Wg) with even extents

    Returns:
        Tensor: Token grid of shape (2C, Hg/2, Wg/2)
    """
    return _to_chw(_merge_hwc(_to_hwc(grid), params))


def encode_transformer(image: Tensor, cfg: BranchConfig, params: SwinBranch) -> FeaturePyramid:
    """
    Run the Transformer branch and collect the end of every stage.

    Args:
        image: Image of shape (3, H, W)
        cfg: Branch configuration
        params: Branch weights built for `cfg`

    Returns:
        FeaturePyramid: cfg.num_levels levels, C·2^n × H/(p·2^n) × W/(p·2^n)
    """
    image = as_tensor(image)
    if image.ndim != 3:
        raise ShapeError(f"image must be C×H×W, got shape {image.shape}")
    cfg.level_sizes(image.shape[1], image.shape[2])

    x = _embed_hwc(image, params.patch_embed)
    levels = []
    for i, stage in enumerate(params.stages):
        for layer in stage.layers:
            x = layer.forward_hwc(x)
        levels.append(_to_chw(x))
        if i < len(params.merges):
            x = _merge_hwc(x, params.merges[i])
    pyramid = FeaturePyramid(levels)
    pyramid.check_hierarchy()
    return pyramid
