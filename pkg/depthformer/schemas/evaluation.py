"""
Pydantic schemas for evaluation settings and metric reports.
"""
from enum import Enum
from typing import List, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

KITTI_BINS: List[Tuple[float, float]] = [(0.0, 20.0), (20.0, 60.0), (60.0, 80.0)]


class CropKind(str, Enum):
    """Evaluation crop conventions."""
    NONE = "none"
    GARG = "garg"
    EIGEN_CENTER = "eigen_center"


def parse_bins(value):
    """Accept "0-20,20-60" strings as well as lists of pairs."""
    if isinstance(value, str):
        bins = []
        for item in value.replace(" ", "").split(","):
            if not item:
                continue
            lo, hi = item.split("-")
            bins.append((float(lo), float(hi)))
        return bins
    return value


class EvalConfig(BaseModel):
    """Evaluation mask and reporting options."""
    crop: CropKind = Field(CropKind.NONE, description="Crop convention applied before scoring")
    min_depth: float = Field(1e-3, ge=0, description="Ground truth at or below this is ignored")
    max_depth: float = Field(80.0, gt=0, description="Ground truth above this is ignored; exactly max_depth is kept")
    bins: List[Tuple[float, float]] = Field(
        default_factory=lambda: list(KITTI_BINS),
        description="Half-open depth ranges (lo, hi] for the range-binned report",
    )
    binned: bool = Field(False, description="Also emit per-range reports")
    interval_width: float = Field(1.0, gt=0, description="Width of the fine-grained abs_rel profile intervals")
    clamp_predictions: bool = Field(
        True, description="Clip predictions into [min_depth, max_depth] before scoring"
    )

    @field_validator("bins", mode="before")
    @classmethod
    def split_bins(cls, value):
        return parse_bins(value)

    @model_validator(mode="after")
    def check_bins(self) -> "EvalConfig":
        if self.min_depth >= self.max_depth:
            raise ValueError(f"min_depth {self.min_depth} must be below max_depth {self.max_depth}")
        previous_hi = None
        for lo, hi in self.bins:
            if lo >= hi:
                raise ValueError(f"bin ({lo}, {hi}] is empty")
            if previous_hi is not None and lo < previous_hi:
                raise ValueError(f"bin ({lo}, {hi}] overlaps or precedes the previous bin")
            previous_hi = hi
        return self


class MetricReport(BaseModel):
    """Standard monocular depth metrics over one set of pixels."""
    d1: float = Field(..., ge=0, le=1, description="Fraction with max ratio below 1.25")
    d2: float = Field(..., ge=0, le=1, description="Fraction with max ratio below 1.25²")
    d3: float = Field(..., ge=0, le=1, description="Fraction with max ratio below 1.25³")
    abs_rel: float = Field(..., ge=0)
    sq_rel: float = Field(..., ge=0)
    rmse: float = Field(..., ge=0, description="Meters")
    rmse_log: float = Field(..., ge=0)
    log10: float = Field(..., ge=0)
    silog: float = Field(..., ge=0, description="100 × standard deviation of the log residual")
    irmse: float = Field(..., ge=0, description="Inverse-depth RMSE in 1/km")
    abs_error_rel: float = Field(..., ge=0, description="Percent")
    sq_error_rel: float = Field(..., ge=0, description="Percent")
    n_pixels: int = Field(..., ge=1)

    @classmethod
    def metric_names(cls) -> List[str]:
        return [name for name in cls.model_fields if name != "n_pixels"]


class RangeBinReport(BaseModel):
    """Metrics restricted to one ground-truth depth range."""
    label: str = Field(..., description='Row label such as "0-20" or "Overall"')
    report: MetricReport


def bin_label(lo: float, hi: float) -> str:
    return f"{lo:g}-{hi:g}"
