"""
Pinhole unprojection of depth maps into point clouds.
"""
import logging
import os
from pathlib import Path
from typing import Union

import numpy as np

from depthformer.schemas.depth import DepthMap, Intrinsics

logger = logging.getLogger(__name__)


def unproject(depth: DepthMap, intrinsics: Intrinsics) -> np.ndarray:
    """
    Lift every valid pixel to camera coordinates.

    Pixel (u, v) is column u, row v. X = (u − cx)·Z/fx, Y = (v − cy)·Z/fy.

    Args:
        depth: Depth map in meters
        intrinsics: Focal lengths and principal point in pixels

    Returns:
        np.ndarray: (P, 3) points in meters, row-major pixel order
    """
    v, u = np.nonzero(depth.valid)
    z = depth.array[v, u]
    x = (u - intrinsics.cx) * z / intrinsics.fx
    y = (v - intrinsics.cy) * z / intrinsics.fy
    return np.stack([x, y, z], axis=-1)


def write_point_cloud(points: np.ndarray, path: Union[str, Path]) -> None:
    """Write one "X Y Z" line per point."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    np.savetxt(path, np.asarray(points, dtype=np.float64).reshape(-1, 3), fmt="%.9g")
    logger.info(f"Wrote {len(points)} points to {path}")


def read_point_cloud(path: Union[str, Path]) -> np.ndarray:
    return np.loadtxt(path, dtype=np.float64, ndmin=2).reshape(-1, 3)
