"""
Pydantic schema for training runs.

Every field is a flat key so config files and `--set key=value` overrides
can address it directly.
"""
from typing import List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from depthformer.schemas.depth import SceneSpec
from depthformer.schemas.network import (
    BranchConfig,
    ConvStemConfig,
    DecoderConfig,
    DeformAttnConfig,
    DsaMode,
    HahiConfig,
    LossConfig,
    NetworkConfig,
)


class TrainConfig(BaseModel):
    """Optimizer, data and network knobs for one training run."""
    # Optimization
    iterations: int = Field(3000, ge=0, description="Optimizer steps T")
    batch_size: int = Field(2, ge=1)
    lr: float = Field(1e-4, gt=0, description="Peak learning rate")
    weight_decay: float = Field(0.01, ge=0, description="Decoupled weight decay")
    warmup_fraction: float = Field(0.3, ge=0, lt=1, description="Share of T spent in linear warm-up")
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)
    lam: float = Field(0.85, ge=0, le=1, description="SILog variance-focus weight")
    alpha: float = Field(10.0, gt=0, description="SILog scale")
    seed: int = Field(0, description="Seed for parameter init and batch order")

    # Data
    height: int = Field(64, ge=1)
    width: int = Field(64, ge=1)
    n_scenes: int = Field(8, ge=1, description="Size of the fixed synthetic training set")
    scene_seed: int = Field(1000, description="Seed of the first training scene")
    scene_d_min: float = Field(1.0, gt=0)
    scene_d_max: float = Field(10.0, gt=0)
    scene_rects: int = Field(4, ge=0)

    # Transformer branch
    patch_size: int = Field(4, ge=1)
    embed_dim: int = Field(32, ge=1)
    depths: List[int] = Field(default_factory=lambda: [2, 2, 2, 2])
    window_size: int = Field(4, ge=1)
    num_heads: List[int] = Field(default_factory=lambda: [2, 4, 8, 16])
    num_levels: int = Field(4, ge=1)
    mlp_ratio: int = Field(4, ge=1)

    # Convolution branch
    stem_channels: int = Field(32, ge=1)
    conv_channels: int = Field(64, ge=1)

    # Neck
    hahi_channels: Optional[int] = Field(None, ge=1)
    attn_heads: int = Field(8, ge=1)
    attn_points: int = Field(8, ge=1)
    dsa_mode: DsaMode = DsaMode.MULTI_LEVEL
    use_dca: bool = True
    use_conv_branch: bool = True
    use_hahi: bool = True

    # Decoder
    head_channels: int = Field(16, ge=1)
    d_min: float = Field(1e-3, gt=0)
    d_max: float = Field(10.0, gt=0)

    # Run control
    log_every: int = Field(50, ge=1, description="Iterations between progress log lines")
    workers: int = Field(1, ge=1, description="Threads evaluating batch samples; 1 is sequential")

    @field_validator("depths", "num_heads", mode="before")
    @classmethod
    def split_lists(cls, value):
        if isinstance(value, str):
            return [int(v) for v in value.replace(" ", "").split(",") if v]
        return value

    @field_validator("hahi_channels", mode="before")
    @classmethod
    def none_string(cls, value):
        if isinstance(value, str) and value.strip().lower() in ("", "none", "auto"):
            return None
        return value

    @model_validator(mode="after")
    def check_consistency(self) -> "TrainConfig":
        if self.scene_d_min >= self.scene_d_max:
            raise ValueError(f"scene_d_min {self.scene_d_min} must be below scene_d_max {self.scene_d_max}")
        self.network_config()
        return self

    @property
    def warmup_iterations(self) -> int:
        return int(self.warmup_fraction * self.iterations)

    def network_config(self) -> NetworkConfig:
        return NetworkConfig(
            branch=BranchConfig(
                patch_size=self.patch_size,
                embed_dim=self.embed_dim,
                depths=self.depths,
                window_size=self.window_size,
                num_heads=self.num_heads,
                num_levels=self.num_levels,
                mlp_ratio=self.mlp_ratio,
            ),
            conv=ConvStemConfig(stem_channels=self.stem_channels, out_channels=self.conv_channels),
            hahi=HahiConfig(
                channels=self.hahi_channels,
                attention=DeformAttnConfig(num_heads=self.attn_heads, num_points=self.attn_points),
                dsa_mode=self.dsa_mode,
                use_dca=self.use_dca,
            ),
            decoder=DecoderConfig(head_channels=self.head_channels, d_min=self.d_min, d_max=self.d_max),
            use_conv_branch=self.use_conv_branch,
            use_hahi=self.use_hahi,
        )

    def loss_config(self) -> LossConfig:
        return LossConfig(lam=self.lam, alpha=self.alpha)

    def scene_specs(self) -> List[SceneSpec]:
        return [
            SceneSpec(
                seed=self.scene_seed + i,
                height=self.height,
                width=self.width,
                d_min=self.scene_d_min,
                d_max=self.scene_d_max,
                n_rects=self.scene_rects,
            )
            for i in range(self.n_scenes)
        ]
