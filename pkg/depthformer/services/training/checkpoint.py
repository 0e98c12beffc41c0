"""
Checkpoint persistence.

File layout, all integers little-endian:

    DEPTHFORMER-CHECKPOINT\n
    version 1\n
    iteration <n>\n
    config <one-line JSON, sorted keys>\n
    tensors <count>\n
    <name> <d0>x<d1>x...\n          one line per tensor, "-" for a scalar
    end\n
    then per tensor, in manifest order:
    <uint64 byte length><float64 data, row-major>

Writing the same checkpoint twice gives identical bytes.
"""
import json
import logging
import os
import struct
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from depthformer.exceptions import (
    CheckpointError,
    CheckpointSchemaError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)
from depthformer.models.depthformer import DepthFormer
from depthformer.schemas.network import NetworkConfig
from depthformer.schemas.training import TrainConfig

logger = logging.getLogger(__name__)

MAGIC = b"DEPTHFORMER-CHECKPOINT"
FORMAT_VERSION = 1
LENGTH = struct.Struct("<Q")


class Checkpoint(BaseModel):
    """Named parameter arrays plus the configuration that produced them."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    version: int = FORMAT_VERSION
    iteration: int = Field(0, ge=0, description="Optimizer steps taken")
    config: Dict[str, Any] = Field(default_factory=dict, description="Network (and training) config echo")
    tensors: Dict[str, np.ndarray] = Field(default_factory=dict, description="Parameter arrays in manifest order")

    @classmethod
    def from_model(cls, model: DepthFormer, iteration: int = 0,
                   train_config: Optional[TrainConfig] = None) -> "Checkpoint":
        config = {"network": model.config.model_dump(mode="json")}
        if train_config is not None:
            config["train"] = train_config.model_dump(mode="json")
        return cls(iteration=iteration, config=config, tensors=model.state_dict())

    def network_config(self) -> NetworkConfig:
        if "network" not in self.config:
            raise CheckpointSchemaError("checkpoint carries no network config", ["network"])
        return NetworkConfig.model_validate(self.config["network"])

    def train_config(self) -> Optional[TrainConfig]:
        train = self.config.get("train")
        return TrainConfig.model_validate(train) if train is not None else None

    def build_model(self) -> DepthFormer:
        """Instantiate the network this checkpoint describes and load its tensors."""
        model = DepthFormer(self.network_config())
        model.load_state_dict(self.tensors)
        return model


def _shape_token(shape: Tuple[int, ...]) -> str:
    return "x".join(str(d) for d in shape) if shape else "-"


def _parse_shape(token: str) -> Tuple[int, ...]:
    if token == "-":
        return ()
    return tuple(int(d) for d in token.split("x"))


def checkpoint_bytes(checkpoint: Checkpoint) -> bytes:
    """Serialize a checkpoint to its on-disk byte string."""
    config = json.dumps(checkpoint.config, sort_keys=True, separators=(",", ":"))
    lines = [
        MAGIC.decode("ascii"),
        f"version {checkpoint.version}",
        f"iteration {checkpoint.iteration}",
        f"config {config}",
        f"tensors {len(checkpoint.tensors)}",
    ]
    for name, array in checkpoint.tensors.items():
        if any(c.isspace() for c in name):
            raise CheckpointSchemaError(f"tensor name {name!r} contains whitespace", [name])
        lines.append(f"{name} {_shape_token(np.shape(array))}")
    lines.append("end")
    chunks = ["\n".join(lines).encode("utf-8") + b"\n"]
    for array in checkpoint.tensors.values():
        blob = np.ascontiguousarray(array, dtype="<f8").tobytes()
        chunks.append(LENGTH.pack(len(blob)))
        chunks.append(blob)
    return b"".join(chunks)


def save_checkpoint(path: Union[str, Path], checkpoint: Union[Checkpoint, DepthFormer],
                    iteration: int = 0, train_config: Optional[TrainConfig] = None) -> Path:
    """
    Write a checkpoint atomically.

    Args:
        path: Destination file
        checkpoint: A Checkpoint, or a model to snapshot
        iteration: Step counter when a model is given
        train_config: Training config to echo when a model is given

    Returns:
        Path: The written file
    """
    if isinstance(checkpoint, DepthFormer):
        checkpoint = Checkpoint.from_model(checkpoint, iteration, train_config)
    path = Path(path)
    os.makedirs(path.parent.resolve(), exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(checkpoint_bytes(checkpoint))
    os.replace(tmp, path)
    logger.info(f"Saved checkpoint {path} ({len(checkpoint.tensors)} tensors, iteration {checkpoint.iteration})")
    return path


def _read_line(data: bytes, offset: int, path: Union[str, Path]) -> Tuple[str, int]:
    end = data.find(b"\n", offset)
    if end < 0:
        raise CheckpointTruncatedError(f"{path}: manifest ends before its 'end' line")
    return data[offset:end].decode("utf-8", errors="replace"), end + 1


def _field(line: str, key: str, path: Union[str, Path]) -> str:
    head, _, value = line.partition(" ")
    if head != key:
        raise CheckpointError(f"{path}: expected '{key}' manifest line, got {line[:40]!r}")
    return value


def parse_checkpoint(data: bytes, path: Union[str, Path] = "<bytes>") -> Checkpoint:
    """
    Decode checkpoint bytes.

    Raises:
        CheckpointVersionError: For a different format version
        CheckpointTruncatedError: If the data ends early
        CheckpointError: For any other malformation
    """
    line, offset = _read_line(data, 0, path)
    if line.encode("utf-8") != MAGIC:
        raise CheckpointError(f"{path} is not a DepthFormer checkpoint")
    line, offset = _read_line(data, offset, path)
    try:
        version = int(_field(line, "version", path))
    except ValueError as e:
        raise CheckpointError(f"{path}: malformed version line {line!r}") from e
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {version}, this build reads version {FORMAT_VERSION}")

    try:
        line, offset = _read_line(data, offset, path)
        iteration = int(_field(line, "iteration", path))
        line, offset = _read_line(data, offset, path)
        config = json.loads(_field(line, "config", path))
        line, offset = _read_line(data, offset, path)
        count = int(_field(line, "tensors", path))
        manifest: List[Tuple[str, Tuple[int, ...]]] = []
        for _ in range(count):
            line, offset = _read_line(data, offset, path)
            name, _, shape = line.partition(" ")
            manifest.append((name, _parse_shape(shape)))
    except ValueError as e:
        raise CheckpointError(f"{path}: malformed manifest ({e})") from e
    line, offset = _read_line(data, offset, path)
    if line != "end":
        raise CheckpointError(f"{path}: manifest lists more tensors than declared")

    tensors: Dict[str, np.ndarray] = {}
    for name, shape in manifest:
        if offset + LENGTH.size > len(data):
            raise CheckpointTruncatedError(f"{path}: data ends before tensor {name}")
        (length,) = LENGTH.unpack_from(data, offset)
        offset += LENGTH.size
        expected = 8 * int(np.prod(shape, dtype=np.int64))
        if length != expected:
            raise CheckpointError(f"{path}: tensor {name} declares {length} bytes, shape {shape} needs {expected}")
        if offset + length > len(data):
            raise CheckpointTruncatedError(f"{path}: tensor {name} is cut off after {len(data) - offset} of {length} bytes")
        tensors[name] = np.frombuffer(data, dtype="<f8", count=length // 8, offset=offset).astype(np.float64).reshape(shape)
        offset += length
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} unexpected trailing bytes")
    return Checkpoint(version=version, iteration=iteration, config=config, tensors=tensors)


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Read a checkpoint file.

    Args:
        path: Checkpoint written by save_checkpoint

    Returns:
        Checkpoint: Decoded manifest and tensors
    """
    with open(path, "rb") as f:
        data = f.read()
    checkpoint = parse_checkpoint(data, path)
    logger.info(f"Loaded checkpoint {path} ({len(checkpoint.tensors)} tensors, iteration {checkpoint.iteration})")
    return checkpoint


def load_model(path: Union[str, Path], expected: Optional[NetworkConfig] = None) -> DepthFormer:
    """
    Rebuild a network from a checkpoint file.

    Args:
        path: Checkpoint file
        expected: When given, the network the caller wants; the checkpoint's
            tensors must fit it exactly

    Returns:
        DepthFormer: Network with the stored parameters

    Raises:
        CheckpointSchemaError: Listing every missing, unknown or mis-shaped tensor
    """
    checkpoint = load_checkpoint(path)
    if expected is None:
        return checkpoint.build_model()
    model = DepthFormer(expected)
    model.load_state_dict(checkpoint.tensors)
    return model
