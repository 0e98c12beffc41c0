"""
Convolution branch: a stride-2 stem followed by one downsampling residual unit.
"""
import logging

import numpy as np

from depthformer.core import ops
from depthformer.core.tensor import Tensor, as_tensor
from depthformer.exceptions import ShapeError
from depthformer.models.module import Module, init_conv, ones, zeros
from depthformer.schemas.network import ConvStemConfig

logger = logging.getLogger(__name__)


def _affine(x: Tensor, scale: Tensor, shift: Tensor) -> Tensor:
    # per-channel affine in place of batch statistics
    return x * scale.reshape(-1, 1, 1) + shift.reshape(-1, 1, 1)


class ConvStem(Module):
    """
    Weights of the convolution branch.

    stem:   3×3 conv, stride 2 → affine → GELU
    unit:   3×3 conv, stride 2 → affine → GELU → 3×3 conv → affine
    skip:   1×1 conv, stride 2
    output: GELU(unit + skip)
    """

    def __init__(self, cfg: ConvStemConfig, rng: np.random.Generator, in_channels: int = 3):
        self.config = cfg
        cs, cg = cfg.stem_channels, cfg.out_channels
        self.stem_weight = init_conv(rng, cs, in_channels, 3)
        self.stem_scale = ones(cs)
        self.stem_shift = zeros(cs)
        self.conv1_weight = init_conv(rng, cg, cs, 3)
        self.conv1_scale = ones(cg)
        self.conv1_shift = zeros(cg)
        self.conv2_weight = init_conv(rng, cg, cg, 3)
        self.conv2_scale = ones(cg)
        self.conv2_shift = zeros(cg)
        self.proj_weight = init_conv(rng, cg, cs, 1)

    def forward(self, image: Tensor) -> Tensor:
        return encode_conv(image, self)


def stem(image: Tensor, params: ConvStem) -> Tensor:
    x = ops.conv2d(image, params.stem_weight, stride=2, pad=1)
    return ops.gelu(_affine(x, params.stem_scale, params.stem_shift))


def encode_conv(image: Tensor, params: ConvStem) -> Tensor:
    """
    Produce the high-resolution local feature map G.

    Args:
        image: Image of shape (3, H, W) with H, W divisible by 4
        params: Branch weights

    Returns:
        Tensor: G of shape (C_g, H/4, W/4)

    Raises:
        ShapeError: If H or W is not a multiple of 4
    """
    image = as_tensor(image)
    if image.ndim != 3:
        raise ShapeError(f"image must be C×H×W, got shape {image.shape}")
    h, w = image.shape[1:]
    if h % 4 or w % 4:
        raise ShapeError(f"image {h}x{w} extents must be multiples of 4 for the convolution branch")

    s = stem(image, params)
    f = ops.conv2d(s, params.conv1_weight, stride=2, pad=1)
    f = ops.gelu(_affine(f, params.conv1_scale, params.conv1_shift))
    f = ops.conv2d(f, params.conv2_weight, stride=1, pad=1)
    f = _affine(f, params.conv2_scale, params.conv2_shift)
    skip = ops.conv2d(s, params.proj_weight, stride=2, pad=0)
    return ops.gelu(f + skip)
