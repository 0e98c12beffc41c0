"""
Procedural depth scenes.

A scene is a tilted background plane with axis-aligned rectangles in front
of it. Colours are a fixed smooth function of depth plus a per-rectangle
albedo offset, so depth can be read back from appearance.
"""
import logging
import os
from pathlib import Path
from typing import List, NamedTuple, Sequence, Tuple, Union

import numpy as np
from PIL import Image

from depthformer.schemas.depth import DepthMap, SceneSpec

logger = logging.getLogger(__name__)

ALBEDO_JITTER = 0.15


class Rect(NamedTuple):
    top: int
    bottom: int
    left: int
    right: int
    depth: float
    albedo: Tuple[float, float, float]


def scene_layout(spec: SceneSpec) -> Tuple[Tuple[float, float, float], List[Rect]]:
    """
    Draw the background plane and rectangles of a scene.

    Args:
        spec: Scene recipe

    Returns:
        Tuple: (base, slope_x, slope_y) of the background and the rectangles
    """
    rng = np.random.default_rng(spec.seed)
    span = spec.d_max - spec.d_min
    if spec.background is not None:
        background = tuple(float(v) for v in spec.background)
    else:
        background = (
            float(rng.uniform(spec.d_min + 0.5 * span, spec.d_max)),
            float(rng.uniform(-0.3, 0.3) * span),
            float(rng.uniform(-0.3, 0.3) * span),
        )

    rects = []
    h, w = spec.height, spec.width
    for _ in range(spec.n_rects):
        rh = int(rng.integers(max(1, h // 8), max(2, h // 2) + 1))
        rw = int(rng.integers(max(1, w // 8), max(2, w // 2) + 1))
        rh, rw = min(rh, h), min(rw, w)
        top = int(rng.integers(0, h - rh + 1))
        left = int(rng.integers(0, w - rw + 1))
        depth = float(rng.uniform(spec.d_min, spec.d_max))
        albedo = tuple(float(a) for a in rng.uniform(-ALBEDO_JITTER, ALBEDO_JITTER, size=3))
        rects.append(Rect(top, top + rh, left, left + rw, depth, albedo))
    return background, rects


def depth_to_color(depth: np.ndarray, d_min: float, d_max: float) -> np.ndarray:
    """Fixed depth → RGB map, shape (3, H, W); the red channel is monotone in log depth."""
    t = (np.log(depth) - np.log(d_min)) / (np.log(d_max) - np.log(d_min))
    return np.stack([t, 1.0 - t, 0.5 + 0.5 * np.cos(np.pi * t)])


def gen_scene(spec: SceneSpec) -> Tuple[np.ndarray, DepthMap]:
    """
    Render one scene.

    Args:
        spec: Scene recipe

    Returns:
        Tuple[np.ndarray, DepthMap]: image (3, H, W) and its depth map, every
            pixel valid and inside [d_min, d_max]
    """
    background, rects = scene_layout(spec)
    h, w = spec.height, spec.width
    base, slope_x, slope_y = background
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    depth = np.clip(base + slope_x * xs / w + slope_y * ys / h, spec.d_min, spec.d_max)

    albedo = np.zeros((3, h, w))
    # far to near, so nearer rectangles overwrite farther ones
    for rect in sorted(rects, key=lambda r: -r.depth):
        depth[rect.top:rect.bottom, rect.left:rect.right] = rect.depth
        albedo[:, rect.top:rect.bottom, rect.left:rect.right] = np.array(rect.albedo)[:, None, None]

    image = depth_to_color(depth, spec.d_min, spec.d_max) + albedo
    return image, DepthMap(values=depth)


def gen_scenes(specs: Sequence[SceneSpec]) -> List[Tuple[np.ndarray, DepthMap]]:
    return [gen_scene(spec) for spec in specs]


def save_preview(image: np.ndarray, path: Union[str, Path]) -> None:
    """Write a (3, H, W) image in [0, 1] as an 8-bit RGB PNG."""
    pixels = np.clip(np.round(image.transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    Image.fromarray(pixels).save(path)
