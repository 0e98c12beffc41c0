"""
Shared configurations for tests that train or evaluate whole networks.
"""
from depthformer.schemas.training import TrainConfig


def tiny_train_config(**overrides) -> TrainConfig:
    """A two-level network on 16x16 scenes; a few iterations run in seconds."""
    values = dict(
        iterations=2,
        batch_size=1,
        lr=1e-3,
        warmup_fraction=0.0,
        height=16,
        width=16,
        n_scenes=2,
        scene_rects=2,
        embed_dim=8,
        depths=[1, 1],
        num_heads=[2, 2],
        num_levels=2,
        window_size=2,
        mlp_ratio=2,
        stem_channels=4,
        conv_channels=6,
        hahi_channels=8,
        attn_heads=2,
        attn_points=2,
        head_channels=4,
        d_min=0.5,
        d_max=12.0,
    )
    values.update(overrides)
    return TrainConfig(**values)
