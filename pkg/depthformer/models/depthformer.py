"""
Whole-network assembly: Transformer branch, optional convolution branch,
optional fusion neck, decoder and depth head.
"""
import logging
from typing import Optional, Tuple, Union

import numpy as np

from depthformer.core import ops
from depthformer.core.tensor import Tensor, as_tensor
from depthformer.exceptions import ShapeError
from depthformer.models.conv_stem import ConvStem, encode_conv
from depthformer.models.decoder import Decoder, decode, depth_head
from depthformer.models.hahi import Hahi, hahi_forward
from depthformer.models.module import Module
from depthformer.models.swin import FeaturePyramid, SwinBranch, encode_transformer
from depthformer.schemas.depth import DepthMap
from depthformer.schemas.network import NetworkConfig, Variant

logger = logging.getLogger(__name__)


class DepthFormer(Module):
    """
    Monocular depth network.

    Which parts exist follows `cfg.use_conv_branch` and `cfg.use_hahi`, so the
    four ablation variants are the same class with different flags.
    """

    def __init__(self, cfg: NetworkConfig, seed: Union[int, np.random.Generator] = 0):
        if cfg.use_conv_branch and cfg.branch.patch_size != 4:
            raise ValueError(
                f"the convolution branch works at 1/4 resolution and needs patch size 4, got {cfg.branch.patch_size}"
            )
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.config = cfg
        level_channels = cfg.branch.level_channels
        g_channels = cfg.conv.out_channels if cfg.use_conv_branch else None

        self.swin = SwinBranch(cfg.branch, rng)
        self.conv = ConvStem(cfg.conv, rng) if cfg.use_conv_branch else None
        self.hahi = Hahi(cfg.hahi, level_channels, rng, g_channels) if cfg.use_hahi else None
        self.decoder = Decoder(cfg.decoder, level_channels, rng, g_channels)
        logger.debug(f"Built {self.variant.value} network with {self.num_parameters()} parameters")

    @property
    def variant(self) -> Variant:
        return self.config.variant

    def features(self, image: Tensor) -> Tuple[FeaturePyramid, Optional[Tensor]]:
        """Encoder and neck outputs (F_o, G_o)."""
        pyramid = encode_transformer(image, self.config.branch, self.swin)
        g = encode_conv(image, self.conv) if self.conv is not None else None
        if self.hahi is not None:
            pyramid, g = hahi_forward(pyramid, g, self.hahi)
        return pyramid, g

    def logits(self, image: Tensor) -> Tensor:
        """Decoder output at half the input resolution, shape (1, H/2, W/2)."""
        pyramid, g = self.features(image)
        return decode(pyramid, g, self.decoder)

    def forward(self, image: Tensor) -> DepthMap:
        """
        Predict depth at full input resolution.

        The half-resolution depth map is bilinearly upsampled to H×W outside
        the parameterized layers; gradients flow through the resize.

        Args:
            image: Image of shape (3, H, W)

        Returns:
            DepthMap: H×W depths inside (d_min, d_max)
        """
        image = as_tensor(image)
        if image.ndim != 3:
            raise ShapeError(f"image must be C×H×W, got shape {image.shape}")
        dec = self.config.decoder
        half = depth_head(self.logits(image), dec.d_min, dec.d_max)
        full = ops.resize_bilinear(half.values, image.shape[1:])
        return DepthMap(values=full)

    def predict(self, image: np.ndarray) -> DepthMap:
        """Forward pass without gradient bookkeeping in the result."""
        return self.forward(Tensor(image)).detach()


def build_model(cfg: NetworkConfig, seed: int = 0, variant: Optional[Variant] = None) -> DepthFormer:
    """
    Construct a network, optionally switching to an ablation variant.

    Args:
        cfg: Network description
        seed: Initialization seed
        variant: Overrides cfg's branch/neck flags when given

    Returns:
        DepthFormer: Freshly initialized network
    """
    if variant is not None:
        cfg = cfg.with_variant(variant)
    return DepthFormer(cfg, seed)
