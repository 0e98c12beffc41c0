"""
Depth raster readers and writers.

Supported formats, chosen by file extension:

  .png   16-bit single-channel PNG, meters = value × scale (default 1/256)
  .dr16  uncompressed raster: an ASCII header line "DR16 H W scale" followed
         by H·W little-endian uint16 values, row-major
  .txt   text fixture: "H W" then H·W row-major depths in meters

A stored zero marks a pixel without ground truth.
"""
import logging
import os
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from PIL import Image

from depthformer.exceptions import DepthFormatError, ShapeError
from depthformer.schemas.depth import DepthMap

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DEFAULT_SCALE = 1.0 / 256.0
DR16_MAGIC = "DR16"
UINT16_MAX = 65535


def _format(path: PathLike) -> str:
    suffix = Path(path).suffix.lower()
    if suffix not in (".png", ".dr16", ".txt"):
        raise DepthFormatError(f"unsupported depth format '{suffix}' for {path}; use .png, .dr16 or .txt")
    return suffix


def _to_depth_map(values: np.ndarray) -> DepthMap:
    values = np.asarray(values, dtype=np.float64)
    valid = values > 0
    return DepthMap(values=np.where(valid, values, 0.0), valid=valid)


def _quantize(depth: DepthMap, scale: float) -> np.ndarray:
    units = np.where(depth.valid, np.round(depth.array / scale), 0.0)
    if np.any(units > UINT16_MAX) or np.any(units < 0):
        raise DepthFormatError(f"depths exceed the 16-bit range at scale {scale} m per unit")
    return units.astype(np.uint16)


def read_png(path: PathLike, scale: float = DEFAULT_SCALE) -> DepthMap:
    with Image.open(path) as img:
        if img.mode not in ("I;16", "I;16B", "I", "L"):
            raise DepthFormatError(f"{path} is a {img.mode} image, expected a single-channel 16-bit raster")
        raw = np.array(img)
    return _to_depth_map(raw.astype(np.float64) * scale)


def write_png(path: PathLike, depth: DepthMap, scale: float = DEFAULT_SCALE) -> None:
    Image.fromarray(_quantize(depth, scale)).save(path)


def read_dr16(path: PathLike, scale: Optional[float] = None) -> DepthMap:
    """
    Read an uncompressed 16-bit raster; `scale` overrides the header's.

    Raises:
        DepthFormatError: On a malformed header or a wrong payload size
    """
    with open(path, "rb") as f:
        header = f.readline().decode("ascii", errors="replace").split()
        payload = f.read()
    if len(header) != 4 or header[0] != DR16_MAGIC:
        raise DepthFormatError(f"{path}: expected header '{DR16_MAGIC} H W scale', got {' '.join(header)!r}")
    try:
        h, w, file_scale = int(header[1]), int(header[2]), float(header[3])
    except ValueError as e:
        raise DepthFormatError(f"{path}: malformed header values {header[1:]}") from e
    if h <= 0 or w <= 0 or file_scale <= 0:
        raise DepthFormatError(f"{path}: header declares a {h}x{w} raster at scale {file_scale}")
    if len(payload) != 2 * h * w:
        raise DepthFormatError(f"{path}: expected {2 * h * w} payload bytes for {h}x{w}, found {len(payload)}")
    raw = np.frombuffer(payload, dtype="<u2").reshape(h, w)
    return _to_depth_map(raw.astype(np.float64) * (scale or file_scale))


def write_dr16(path: PathLike, depth: DepthMap, scale: float = DEFAULT_SCALE) -> None:
    h, w = depth.shape
    with open(path, "wb") as f:
        f.write(f"{DR16_MAGIC} {h} {w} {scale!r}\n".encode("ascii"))
        f.write(_quantize(depth, scale).astype("<u2").tobytes())


def read_txt(path: PathLike) -> DepthMap:
    """
    Read the text fixture format.

    Raises:
        DepthFormatError: On a malformed header or a wrong value count
    """
    with open(path, "r") as f:
        tokens = f.read().split()
    if len(tokens) < 2:
        raise DepthFormatError(f"{path}: missing 'H W' header")
    try:
        h, w = int(tokens[0]), int(tokens[1])
        values = np.array([float(t) for t in tokens[2:]], dtype=np.float64)
    except ValueError as e:
        raise DepthFormatError(f"{path}: non-numeric content ({e})") from e
    if h <= 0 or w <= 0:
        raise DepthFormatError(f"{path}: header declares a {h}x{w} map")
    if values.size != h * w:
        raise DepthFormatError(f"{path}: header declares {h}x{w} = {h * w} values, found {values.size}")
    return _to_depth_map(values.reshape(h, w))


def write_txt(path: PathLike, depth: DepthMap) -> None:
    h, w = depth.shape
    values = np.where(depth.valid, depth.array, 0.0)
    with open(path, "w") as f:
        f.write(f"{h} {w}\n")
        for row in values:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_depth(path: PathLike, scale: Optional[float] = None) -> DepthMap:
    """
    Read a depth map in any supported format.

    Args:
        path: File path; the extension selects the format
        scale: Meters per stored unit for 16-bit formats

    Returns:
        DepthMap: Depths in meters, zero pixels marked invalid
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"depth file not found: {path}")
    kind = _format(path)
    if kind == ".png":
        return read_png(path, scale or DEFAULT_SCALE)
    if kind == ".dr16":
        return read_dr16(path, scale)
    return read_txt(path)


def write_depth(path: PathLike, depth: DepthMap, scale: float = DEFAULT_SCALE) -> None:
    """Write a depth map in the format named by the extension; invalid pixels become 0."""
    kind = _format(path)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    if kind == ".png":
        write_png(path, depth, scale)
    elif kind == ".dr16":
        write_dr16(path, depth, scale)
    else:
        write_txt(path, depth)
    logger.debug(f"Wrote {depth.shape[0]}x{depth.shape[1]} depth map to {path}")


def ingest_depth_pair(
    pred_path: PathLike,
    gt_path: PathLike,
    pred_scale: Optional[float] = None,
    gt_scale: Optional[float] = None,
) -> Tuple[DepthMap, DepthMap]:
    """
    Load an external prediction and its ground truth.

    Args:
        pred_path: Predicted depth file
        gt_path: Ground-truth depth file
        pred_scale: Meters per unit for a 16-bit prediction
        gt_scale: Meters per unit for 16-bit ground truth

    Returns:
        Tuple[DepthMap, DepthMap]: (prediction, ground truth)

    Raises:
        DepthFormatError: For malformed files
        ShapeError: If the two maps differ in shape
    """
    pred = read_depth(pred_path, pred_scale)
    gt = read_depth(gt_path, gt_scale)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred_path} is {pred.shape}, ground truth {gt_path} is {gt.shape}")
    logger.info(f"Ingested {pred_path} / {gt_path}: {int(gt.valid.sum())} valid ground-truth pixels")
    return pred, gt
