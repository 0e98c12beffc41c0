"""
Exception hierarchy for the DepthFormer package.
"""


class DepthFormerError(Exception):
    """Base class for all package errors."""


class ShapeError(DepthFormerError, ValueError):
    """A tensor or map does not satisfy a shape contract."""


class EmptyMaskError(DepthFormerError, ValueError):
    """No pixel survives the evaluation or loss mask."""


class DepthFormatError(DepthFormerError, ValueError):
    """A depth raster or fixture file is malformed."""


class CheckpointError(DepthFormerError):
    """Base class for checkpoint persistence failures."""


class CheckpointVersionError(CheckpointError):
    """The checkpoint was written by an unsupported format version."""


class CheckpointTruncatedError(CheckpointError):
    """The checkpoint file ends before all declared data was read."""


class CheckpointSchemaError(CheckpointError):
    """Checkpoint tensor names or shapes do not match the model."""

    def __init__(self, message: str, names=None):
        super().__init__(message)
        self.names = list(names or [])


class TrainingDivergedError(DepthFormerError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, iteration: int, checkpoint_path=None):
        super().__init__(message)
        self.iteration = iteration
        self.checkpoint_path = checkpoint_path
