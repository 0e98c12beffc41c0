"""
UpConv decoder and bounded depth head.
"""
import logging
from typing import List, Optional, Sequence

import numpy as np

from depthformer.core import ops
from depthformer.core.tensor import Tensor, as_tensor
from depthformer.exceptions import ShapeError
from depthformer.models.module import Module, init_conv, zeros
from depthformer.models.swin import FeaturePyramid
from depthformer.schemas.depth import DepthMap
from depthformer.schemas.network import DecoderConfig

logger = logging.getLogger(__name__)


class UpConv(Module):
    """2× nearest upsample, then 3×3 conv and GELU."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        self.weight = init_conv(rng, out_channels, in_channels, 3)
        self.bias = zeros(out_channels)

    def __call__(self, x: Tensor, skips: Sequence[Tensor] = ()) -> Tensor:
        x = ops.upsample_nearest(x, 2)
        if skips:
            x = ops.concat([x, *skips], axis=0)
        return ops.gelu(ops.conv2d(x, self.weight, self.bias, pad=1))


class Decoder(Module):
    """
    One UpConv per pyramid level plus a 3×3 output conv.

    Stages walk from the coarsest level towards the finest, each fusing the
    next finer level; G joins at the finest level. The last UpConv has no
    skip and lands at twice the finest resolution.
    """

    def __init__(self, cfg: DecoderConfig, level_channels: Sequence[int], rng: np.random.Generator,
                 g_channels: Optional[int] = None):
        self.config = cfg
        self.level_channels = [int(c) for c in level_channels]
        self.g_channels = g_channels
        n_levels = len(self.level_channels)

        self.stages: List[UpConv] = []
        width = self.level_channels[-1]
        for n in range(n_levels - 2, -1, -1):
            skip = self.level_channels[n] + (g_channels if n == 0 and g_channels else 0)
            self.stages.append(UpConv(width + skip, self.level_channels[n], rng))
            width = self.level_channels[n]
        if n_levels == 1 and g_channels:
            width += g_channels
        self.head = UpConv(width, cfg.head_channels, rng)
        self.out_weight = init_conv(rng, 1, cfg.head_channels, 3)
        self.out_bias = zeros(1)


def decode(pyramid: FeaturePyramid, g: Optional[Tensor], params: Decoder) -> Tensor:
    """
    Aggregate the fused pyramid (and G) into one logit map.

    Args:
        pyramid: F_o, finest level first
        g: G_o at the finest level's resolution, or None
        params: Decoder weights

    Returns:
        Tensor: Logits of shape (1, 2·H_1, 2·W_1)

    Raises:
        ShapeError: Naming the stage whose inputs disagree
    """
    if pyramid.channels != params.level_channels:
        raise ShapeError(f"pyramid channels {pyramid.channels} do not match decoder channels {params.level_channels}")
    if (g is not None) != bool(params.g_channels):
        raise ShapeError("G must be given exactly when the decoder was built with a G input")

    n_levels = len(pyramid)
    x = pyramid[-1]
    for stage, n in zip(params.stages, range(n_levels - 2, -1, -1)):
        skips = [pyramid[n]]
        if n == 0 and g is not None:
            skips.append(as_tensor(g))
        target = pyramid[n].shape[1:]
        for skip in skips:
            if skip.shape[1:] != target or (2 * x.shape[1], 2 * x.shape[2]) != target:
                raise ShapeError(
                    f"decoder stage fusing level {n}: upsampled {x.shape} does not meet skip {skip.shape}"
                )
        x = stage(x, skips)
    if n_levels == 1 and g is not None:
        g = as_tensor(g)
        if g.shape[1:] != x.shape[1:]:
            raise ShapeError(f"decoder head: G {g.shape} does not meet level {x.shape}")
        x = ops.concat([x, g], axis=0)
    x = params.head(x)
    return ops.conv2d(x, params.out_weight, params.out_bias, pad=1)


def depth_head(logits: Tensor, d_min: float, d_max: float) -> DepthMap:
    """
    Map logits to depths d_min + (d_max − d_min)·sigmoid(logit).

    Args:
        logits: Tensor of shape (1, H, W) or (H, W)
        d_min: Lower depth bound in meters
        d_max: Upper depth bound in meters

    Returns:
        DepthMap: H×W depths, all valid
    """
    if not 0 < d_min < d_max:
        raise ValueError(f"depth range must satisfy 0 < d_min < d_max, got ({d_min}, {d_max})")
    logits = as_tensor(logits)
    if logits.ndim == 3:
        if logits.shape[0] != 1:
            raise ShapeError(f"depth head expects one channel, got shape {logits.shape}")
        logits = logits.reshape(logits.shape[1:])
    depth = d_min + (d_max - d_min) * ops.sigmoid(logits)
    return DepthMap(values=depth)
