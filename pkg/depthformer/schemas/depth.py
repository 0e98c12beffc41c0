"""
Pydantic schemas for depth maps, scenes and cameras.
"""
from typing import Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from depthformer.core.tensor import Tensor
from depthformer.exceptions import ShapeError


class DepthMap(BaseModel):
    """
    H×W depths in meters with a validity mask.

    `values` is a Tensor when the map comes out of the network (so losses can
    differentiate through it) and a plain array otherwise.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    values: Union[Tensor, np.ndarray]
    valid: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def default_mask(cls, data):
        if isinstance(data, dict):
            values = data.get("values")
            if not isinstance(values, Tensor):
                data["values"] = np.asarray(values, dtype=np.float64)
            shape = data["values"].shape
            if data.get("valid") is None:
                data["valid"] = np.ones(shape, dtype=bool)
            else:
                data["valid"] = np.asarray(data["valid"], dtype=bool)
        return data

    @model_validator(mode="after")
    def check_shapes(self) -> "DepthMap":
        if len(self.values.shape) != 2:
            raise ShapeError(f"depth map must be H×W, got shape {self.values.shape}")
        if self.valid.shape != tuple(self.values.shape):
            raise ShapeError(f"validity mask {self.valid.shape} does not match depths {self.values.shape}")
        return self

    @property
    def shape(self) -> Tuple[int, int]:
        return tuple(self.values.shape)

    @property
    def array(self) -> np.ndarray:
        """Depth values as a NumPy array (no gradient tracking)."""
        if isinstance(self.values, Tensor):
            return self.values.data
        return self.values

    def detach(self) -> "DepthMap":
        return DepthMap(values=self.array.copy(), valid=self.valid.copy())


class SceneSpec(BaseModel):
    """Recipe for one procedural scene."""
    seed: int = Field(0, description="RNG seed; identical specs give identical scenes")
    height: int = Field(64, ge=1)
    width: int = Field(64, ge=1)
    d_min: float = Field(1.0, gt=0, description="Nearest depth in meters")
    d_max: float = Field(10.0, gt=0, description="Farthest depth in meters")
    n_rects: int = Field(4, ge=0, description="Number of occluding rectangles")
    background: Optional[Tuple[float, float, float]] = Field(
        None,
        description="Planar background (base, slope_x, slope_y): depth = base + slope_x·x/W + slope_y·y/H; "
                    "drawn from the seed when omitted",
    )

    @model_validator(mode="after")
    def check_range(self) -> "SceneSpec":
        if self.d_min >= self.d_max:
            raise ValueError(f"scene d_min {self.d_min} must be below d_max {self.d_max}")
        return self


class Intrinsics(BaseModel):
    """Pinhole camera intrinsics in pixels."""
    fx: float = Field(..., gt=0)
    fy: float = Field(..., gt=0)
    cx: float
    cy: float
