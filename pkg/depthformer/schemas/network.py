"""
Pydantic schemas for network configuration.
"""
import math
from enum import Enum
from typing import List, Optional, Sequence, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from depthformer.exceptions import ShapeError


def _split_ints(value):
    if isinstance(value, str):
        return [int(v) for v in value.replace(" ", "").split(",") if v]
    return value


class BranchConfig(BaseModel):
    """Windowed-Transformer branch dimensions."""
    patch_size: int = Field(4, ge=1, description="Side of the square patches p")
    embed_dim: int = Field(32, ge=1, description="Channels C of the first stage")
    depths: List[int] = Field(default_factory=lambda: [2, 2, 2, 2], description="Layers per stage")
    window_size: int = Field(4, ge=1, description="Side of the attention windows w")
    num_heads: List[int] = Field(default_factory=lambda: [2, 4, 8, 16], description="Attention heads per stage")
    num_levels: int = Field(4, ge=1, description="Pyramid levels N, taken from the first N stage ends")
    mlp_ratio: int = Field(4, ge=1, description="Hidden width of the MLP relative to C")

    @field_validator("depths", "num_heads", mode="before")
    @classmethod
    def split_lists(cls, value):
        return _split_ints(value)

    @model_validator(mode="after")
    def check_stages(self) -> "BranchConfig":
        if len(self.depths) != len(self.num_heads):
            raise ValueError(f"depths {self.depths} and num_heads {self.num_heads} differ in length")
        if self.num_levels > len(self.depths):
            raise ValueError(f"num_levels {self.num_levels} exceeds the {len(self.depths)} configured stages")
        if any(d < 1 for d in self.depths):
            raise ValueError(f"every stage needs at least one layer, got {self.depths}")
        for i, heads in enumerate(self.num_heads[:self.num_levels]):
            if heads < 1 or self.stage_channels[i] % heads:
                raise ValueError(f"stage {i} channels {self.stage_channels[i]} not divisible by {heads} heads")
        return self

    @property
    def stage_channels(self) -> List[int]:
        return [self.embed_dim * 2 ** i for i in range(len(self.depths))]

    @property
    def level_channels(self) -> List[int]:
        return self.stage_channels[:self.num_levels]

    @property
    def required_multiple(self) -> int:
        """Image extents must be divisible by this for every level to exist."""
        return self.patch_size * 2 ** (self.num_levels - 1)

    def level_sizes(self, height: int, width: int) -> List[Tuple[int, int]]:
        """
        Token-grid extents of every pyramid level.

        Args:
            height: Image height
            width: Image width

        Returns:
            List[Tuple[int, int]]: (H_n, W_n) per level, finest first

        Raises:
            ShapeError: If the image cannot be partitioned or windowed
        """
        m = self.required_multiple
        if height % m or width % m:
            raise ShapeError(
                f"image {height}x{width} must have extents divisible by {m} "
                f"(patch size {self.patch_size} and {self.num_levels - 1} merges)"
            )
        sizes = []
        for i in range(self.num_levels):
            h = height // (self.patch_size * 2 ** i)
            w = width // (self.patch_size * 2 ** i)
            for extent in (h, w):
                window = min(self.window_size, extent)
                if extent % window:
                    raise ShapeError(
                        f"window size {self.window_size} does not divide stage {i} grid {h}x{w}; "
                        f"use image extents that are multiples of {m * self.window_size}"
                    )
            sizes.append((h, w))
        return sizes


class ConvStemConfig(BaseModel):
    """Convolution branch widths."""
    stem_channels: int = Field(32, ge=1, description="Channels after the stride-2 stem conv")
    out_channels: int = Field(64, ge=1, description="Channels C_g of G")


class DeformAttnConfig(BaseModel):
    """Deformable attention sampling layout."""
    num_heads: int = Field(8, ge=1, description="Heads M")
    num_points: int = Field(8, ge=1, description="Sampling points per head and level K")


class DsaMode(str, Enum):
    """How the neck enhances the Transformer levels."""
    OFF = "off"
    SINGLE_LEVEL = "single_level"
    MULTI_LEVEL = "multi_level"


def median_channels(channels: Sequence[int], multiple: int) -> int:
    """
    Median of the level channels, rounded to the nearest multiple.

    An even count takes the mean of the two middle values, so
    {32, 64, 128, 256} gives 96.

    Args:
        channels: Per-level channel counts
        multiple: Rounding unit (the head count)

    Returns:
        int: Common channel count, at least `multiple`
    """
    ordered = sorted(channels)
    n = len(ordered)
    if n == 0:
        raise ValueError("median_channels needs at least one level")
    if n % 2:
        middle = float(ordered[n // 2])
    else:
        middle = (ordered[n // 2 - 1] + ordered[n // 2]) / 2.0
    return max(multiple, int(math.floor(middle / multiple + 0.5)) * multiple)


class HahiConfig(BaseModel):
    """Fusion neck options."""
    channels: Optional[int] = Field(None, ge=1, description="Common channel C_h; None applies the median rule")
    attention: DeformAttnConfig = Field(default_factory=DeformAttnConfig)
    dsa_mode: DsaMode = Field(DsaMode.MULTI_LEVEL, description="Deformable self-attention variant")
    use_dca: bool = Field(True, description="Run deformable cross-attention from G")

    def resolve_channels(self, level_channels: Sequence[int]) -> int:
        c_h = self.channels if self.channels is not None else median_channels(
            level_channels, self.attention.num_heads
        )
        if c_h % self.attention.num_heads:
            raise ValueError(f"HAHI channels {c_h} not divisible by {self.attention.num_heads} heads")
        return c_h


class DecoderConfig(BaseModel):
    """UpConv decoder and depth range."""
    head_channels: int = Field(16, ge=1, description="Channels of the last, skip-free UpConv stage")
    d_min: float = Field(1e-3, gt=0, description="Smallest predictable depth in meters")
    d_max: float = Field(10.0, gt=0, description="Largest predictable depth in meters")

    @model_validator(mode="after")
    def check_range(self) -> "DecoderConfig":
        if self.d_min >= self.d_max:
            raise ValueError(f"d_min {self.d_min} must be below d_max {self.d_max}")
        return self


class LossConfig(BaseModel):
    """Scale-invariant log loss weights."""
    lam: float = Field(0.85, ge=0, le=1, description="Variance-focus weight λ")
    alpha: float = Field(10.0, gt=0, description="Output scale α")


class Variant(str, Enum):
    """Encoder/neck combinations compared in the ablation."""
    BASELINE = "baseline"
    CB = "+CB"
    HAHI = "+HAHI"
    CB_HAHI = "+CB+HAHI"

    @property
    def flags(self) -> Tuple[bool, bool]:
        """(use_conv_branch, use_hahi)"""
        return {
            Variant.BASELINE: (False, False),
            Variant.CB: (True, False),
            Variant.HAHI: (False, True),
            Variant.CB_HAHI: (True, True),
        }[self]


class NetworkConfig(BaseModel):
    """Complete network description."""
    branch: BranchConfig = Field(default_factory=BranchConfig)
    conv: ConvStemConfig = Field(default_factory=ConvStemConfig)
    hahi: HahiConfig = Field(default_factory=HahiConfig)
    decoder: DecoderConfig = Field(default_factory=DecoderConfig)
    use_conv_branch: bool = True
    use_hahi: bool = True

    @property
    def variant(self) -> Variant:
        for v in Variant:
            if v.flags == (self.use_conv_branch, self.use_hahi):
                return v
        raise AssertionError("unreachable")

    def with_variant(self, variant: Variant) -> "NetworkConfig":
        use_cb, use_hahi = Variant(variant).flags
        return self.model_copy(update={"use_conv_branch": use_cb, "use_hahi": use_hahi})
