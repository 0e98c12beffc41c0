"""
Pydantic schemas shared across the package.
"""
from depthformer.schemas.depth import DepthMap, Intrinsics, SceneSpec
from depthformer.schemas.evaluation import CropKind, EvalConfig, MetricReport, RangeBinReport
from depthformer.schemas.network import (
    BranchConfig,
    ConvStemConfig,
    DecoderConfig,
    DeformAttnConfig,
    DsaMode,
    HahiConfig,
    LossConfig,
    NetworkConfig,
    Variant,
)
from depthformer.schemas.training import TrainConfig

__all__ = [
    "BranchConfig",
    "ConvStemConfig",
    "CropKind",
    "DecoderConfig",
    "DeformAttnConfig",
    "DepthMap",
    "DsaMode",
    "EvalConfig",
    "HahiConfig",
    "Intrinsics",
    "LossConfig",
    "MetricReport",
    "NetworkConfig",
    "RangeBinReport",
    "SceneSpec",
    "TrainConfig",
    "Variant",
]
