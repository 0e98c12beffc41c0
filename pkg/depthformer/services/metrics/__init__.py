"""
Depth evaluation metrics package.
"""
from depthformer.services.metrics.depth_metrics import (
    aggregate_reports,
    align_to_gt,
    compute_metrics,
    crop_mask,
    interval_profile,
    range_binned_report,
)
