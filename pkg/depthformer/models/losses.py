"""
Scale-invariant logarithmic depth loss.
"""
import logging
from typing import Optional

import numpy as np

from depthformer.core import ops
from depthformer.core.tensor import Tensor, as_tensor
from depthformer.exceptions import EmptyMaskError, ShapeError
from depthformer.schemas.depth import DepthMap
from depthformer.schemas.network import LossConfig

logger = logging.getLogger(__name__)


def silog_loss(pred: DepthMap, gt: DepthMap, cfg: Optional[LossConfig] = None) -> Tensor:
    """
    α·sqrt(mean(h²) − λ·mean(h)²) with h = log pred − log gt over valid pixels.

    The radicand is clamped at zero before the square root.

    Args:
        pred: Predicted depths (values may be a Tensor to differentiate through)
        gt: Ground truth; its mask selects the pixels
        cfg: λ and α (defaults 0.85 and 10)

    Returns:
        Tensor: Single-element loss

    Raises:
        ShapeError: If the maps differ in shape
        EmptyMaskError: If no ground-truth pixel is valid
        ValueError: If a valid pixel has a non-positive depth
    """
    cfg = cfg or LossConfig()
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    mask = gt.valid
    count = int(mask.sum())
    if count == 0:
        raise EmptyMaskError("silog_loss needs at least one valid ground-truth pixel")
    index = np.nonzero(mask)
    if np.any(gt.array[index] <= 0):
        raise ValueError("ground truth has non-positive depths on valid pixels")
    if np.any(pred.array[index] <= 0):
        raise ValueError("prediction has non-positive depths on valid pixels")

    h = ops.log(as_tensor(pred.values)[index]) - np.log(gt.array[index])
    mean_sq = (h * h).mean()
    mean = h.mean()
    radicand = ops.clamp_min(mean_sq - cfg.lam * (mean * mean), 0.0)
    return cfg.alpha * ops.sqrt(radicand)
