"""
Network components.
"""
from depthformer.models.conv_stem import ConvStem, encode_conv
from depthformer.models.decoder import Decoder, decode, depth_head
from depthformer.models.deform_attn import (
    CrossDeformAttention,
    DeformAttention,
    LevelIndexMap,
    deform_attend,
    deform_cross_attention,
    deform_self_attention,
    predict_offsets_weights,
)
from depthformer.models.depthformer import DepthFormer, build_model
from depthformer.models.hahi import Hahi, fold, hahi_forward, project_levels, unfold
from depthformer.models.losses import silog_loss
from depthformer.models.module import Module
from depthformer.models.swin import (
    FeaturePyramid,
    SwinBranch,
    encode_transformer,
    patch_merge,
    patch_partition_embed,
    transformer_layer,
    window_msa,
)
