"""
Depth evaluation protocol: masks, metrics, range bins and aggregation.

Every mean is an exactly rounded sum (math.fsum) divided by the pixel count
and logarithms come from libm, so results do not depend on summation order
or on the vector math backend.
"""
import logging
import math
from typing import List, Sequence, Tuple, Union

import numpy as np

from depthformer.core.ops import resize_matrix
from depthformer.exceptions import EmptyMaskError, ShapeError
from depthformer.schemas.depth import DepthMap
from depthformer.schemas.evaluation import CropKind, EvalConfig, MetricReport, RangeBinReport, bin_label

logger = logging.getLogger(__name__)

# Community crop conventions
GARG_CROP = (0.40810811, 0.99189189, 0.03594771, 0.96405229)
EIGEN_CENTER_CROP = (45, 471, 41, 601)
EIGEN_REFERENCE_SIZE = (480, 640)

THRESHOLDS = (1.25, 1.25 ** 2, 1.25 ** 3)


def _mean(values: np.ndarray) -> float:
    return math.fsum(values.tolist()) / values.size


def _log(values: np.ndarray, fn=math.log) -> np.ndarray:
    # libm per pixel, identical to a scalar loop
    return np.fromiter(map(fn, values.tolist()), dtype=np.float64, count=values.size)


def _index(position: float) -> int:
    return int(math.floor(position + 0.5))


def crop_mask(height: int, width: int, kind: Union[CropKind, str]) -> np.ndarray:
    """
    Boolean mask of the pixels a crop convention keeps.

    Crop bounds are fraction·extent rounded to the nearest index and are
    half-open, so Garg at 370×1224 keeps rows 151–366 and cols 44–1179, and
    the Eigen center crop at 480×640 keeps a 426×560 block.

    Args:
        height: Ground-truth height
        width: Ground-truth width
        kind: "none", "garg" or "eigen_center"

    Returns:
        np.ndarray: H×W boolean mask

    Raises:
        ValueError: For an unknown crop kind
    """
    kind = CropKind(kind)
    mask = np.zeros((height, width), dtype=bool)
    if kind == CropKind.NONE:
        mask[:] = True
    elif kind == CropKind.GARG:
        top, bottom, left, right = GARG_CROP
        mask[_index(top * height):_index(bottom * height),
             _index(left * width):_index(right * width)] = True
    else:
        ref_h, ref_w = EIGEN_REFERENCE_SIZE
        top, bottom, left, right = EIGEN_CENTER_CROP
        mask[_index(top * height / ref_h):_index(bottom * height / ref_h),
             _index(left * width / ref_w):_index(right * width / ref_w)] = True
    return mask


def evaluation_mask(pred: DepthMap, gt: DepthMap, cfg: EvalConfig) -> np.ndarray:
    """Valid ground truth inside the crop and inside (min_depth, max_depth]."""
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape; align first")
    depth = gt.array
    with np.errstate(invalid="ignore"):
        in_range = (depth > cfg.min_depth) & (depth <= cfg.max_depth)
    return gt.valid & pred.valid & crop_mask(*gt.shape, cfg.crop) & in_range


def metrics_from_pixels(pred: np.ndarray, gt: np.ndarray) -> MetricReport:
    """
    Metric set over matched 1-D arrays of positive depths.

    Args:
        pred: Predicted depths in meters
        gt: Ground-truth depths in meters

    Returns:
        MetricReport: Threshold accuracies and error metrics

    Raises:
        EmptyMaskError: If no pixels are given
    """
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1)
    n = gt.size
    if n == 0:
        raise EmptyMaskError("no pixels left to evaluate")
    if np.any(pred <= 0) or np.any(gt <= 0):
        raise ValueError("metrics need positive depths on every evaluated pixel")

    ratio = np.maximum(pred / gt, gt / pred)
    d1, d2, d3 = (int(np.count_nonzero(ratio < t)) / n for t in THRESHOLDS)

    diff = pred - gt
    abs_rel = _mean(np.abs(diff) / gt)
    sq_rel = _mean(diff * diff / gt)
    rmse = math.sqrt(_mean(diff * diff))

    log_diff = _log(pred) - _log(gt)
    rmse_log = math.sqrt(_mean(log_diff * log_diff))
    log10 = _mean(np.abs(_log(pred, math.log10) - _log(gt, math.log10)))
    mean_log = _mean(log_diff)
    silog = 100.0 * math.sqrt(max(_mean(log_diff * log_diff) - mean_log * mean_log, 0.0))

    inv_diff = 1000.0 / pred - 1000.0 / gt
    irmse = math.sqrt(_mean(inv_diff * inv_diff))

    return MetricReport(
        d1=d1, d2=d2, d3=d3,
        abs_rel=abs_rel, sq_rel=sq_rel, rmse=rmse, rmse_log=rmse_log, log10=log10,
        silog=silog, irmse=irmse,
        abs_error_rel=100.0 * abs_rel, sq_error_rel=100.0 * sq_rel,
        n_pixels=n,
    )


def _masked_pixels(pred: DepthMap, gt: DepthMap, mask: np.ndarray, cfg: EvalConfig) -> Tuple[np.ndarray, np.ndarray]:
    p = pred.array[mask]
    if cfg.clamp_predictions:
        p = np.clip(p, cfg.min_depth, cfg.max_depth)
    return p, gt.array[mask]


def compute_metrics(pred: DepthMap, gt: DepthMap, cfg: EvalConfig = None) -> MetricReport:
    """
    Score a prediction against ground truth over the evaluation mask.

    Args:
        pred: Prediction already aligned to the ground-truth shape
        gt: Ground truth with its validity mask
        cfg: Crop, depth range and clamping options

    Returns:
        MetricReport: Metrics over the masked pixels

    Raises:
        EmptyMaskError: If the mask keeps no pixel
    """
    cfg = cfg or EvalConfig()
    mask = evaluation_mask(pred, gt, cfg)
    if not mask.any():
        raise EmptyMaskError(f"evaluation mask is empty (crop={cfg.crop.value}, range=({cfg.min_depth}, {cfg.max_depth}))")
    return metrics_from_pixels(*_masked_pixels(pred, gt, mask, cfg))


def range_binned_report(pred: DepthMap, gt: DepthMap, cfg: EvalConfig = None) -> List[RangeBinReport]:
    """
    One report per ground-truth depth range plus an "Overall" row.

    Bins without pixels are left out.

    Args:
        pred: Aligned prediction
        gt: Ground truth
        cfg: Bins (lo, hi] and the base mask options

    Returns:
        List[RangeBinReport]: Non-empty bins in order, then "Overall"
    """
    cfg = cfg or EvalConfig()
    base = evaluation_mask(pred, gt, cfg)
    if not base.any():
        raise EmptyMaskError("evaluation mask is empty")
    depth = gt.array
    rows = []
    for lo, hi in cfg.bins:
        mask = base & (depth > lo) & (depth <= hi)
        if not mask.any():
            logger.debug(f"Range bin ({lo}, {hi}] has no pixels")
            continue
        rows.append(RangeBinReport(label=bin_label(lo, hi), report=metrics_from_pixels(*_masked_pixels(pred, gt, mask, cfg))))
    rows.append(RangeBinReport(label="Overall", report=metrics_from_pixels(*_masked_pixels(pred, gt, base, cfg))))
    return rows


def interval_profile(pred: DepthMap, gt: DepthMap, cfg: EvalConfig = None,
                     width: float = None) -> List[Tuple[float, float, float]]:
    """
    abs_rel per fixed-width ground-truth depth interval.

    Args:
        pred: Aligned prediction
        gt: Ground truth
        cfg: Base mask options; cfg.interval_width is the default width
        width: Interval width in meters

    Returns:
        List[Tuple[float, float, float]]: (lo, hi, abs_rel) for each non-empty
            interval (lo, hi] from 0 up to max_depth
    """
    cfg = cfg or EvalConfig()
    width = width or cfg.interval_width
    base = evaluation_mask(pred, gt, cfg)
    depth = gt.array
    profile = []
    for i in range(int(math.ceil(cfg.max_depth / width))):
        lo, hi = i * width, min((i + 1) * width, cfg.max_depth)
        mask = base & (depth > lo) & (depth <= hi)
        if not mask.any():
            continue
        p, g = _masked_pixels(pred, gt, mask, cfg)
        profile.append((lo, hi, _mean(np.abs(p - g) / g)))
    return profile


def align_to_gt(pred: DepthMap, gt_shape: Tuple[int, int]) -> DepthMap:
    """
    Bilinearly upsample a prediction to the ground-truth resolution.

    Uses the align-corners-false convention with edge clamping, so a 1×2 map
    [1, 3] becomes [1, 1.5, 2.5, 3] at 1×4.

    Args:
        pred: Prediction no larger than the ground truth
        gt_shape: Target (H, W)

    Returns:
        DepthMap: Resized prediction, every pixel valid

    Raises:
        ShapeError: If the prediction is larger than the ground truth
    """
    h, w = pred.shape
    gh, gw = gt_shape
    if h > gh or w > gw:
        raise ShapeError(f"prediction {pred.shape} is larger than ground truth {tuple(gt_shape)}")
    values = pred.array
    if (h, w) != (gh, gw):
        values = resize_matrix(h, gh) @ values @ resize_matrix(w, gw).T
    return DepthMap(values=values.copy())


def aggregate_reports(reports: Sequence[MetricReport]) -> MetricReport:
    """
    Dataset-level report: per-image metrics averaged over images.

    Args:
        reports: One report per image

    Returns:
        MetricReport: Mean of every metric; n_pixels is the total
    """
    if not reports:
        raise ValueError("aggregate_reports needs at least one report")
    fields = {
        name: math.fsum(getattr(r, name) for r in reports) / len(reports)
        for name in MetricReport.metric_names()
    }
    return MetricReport(n_pixels=sum(r.n_pixels for r in reports), **fields)
