"""
Validation utilities for DepthFormer inputs.
"""
import logging
from typing import Dict, List, Sequence, Tuple, Type

from pydantic import BaseModel

from depthformer.schemas.network import BranchConfig

logger = logging.getLogger(__name__)


def validate_config_keys(values: Dict[str, str], models: Sequence[Type[BaseModel]]) -> Tuple[bool, List[str]]:
    """
    Check that every config key names a field of one of the models.

    Args:
        values: Raw key/value pairs
        models: Config models the keys may address

    Returns:
        Tuple[bool, List[str]]: Validation result and list of issues
    """
    known = set()
    for model in models:
        known.update(model.model_fields)
    issues = [
        f"Unknown config key: {key} (known keys: {', '.join(sorted(known))})"
        for key in values if key not in known
    ]
    return len(issues) == 0, issues


def validate_image_size(height: int, width: int, branch: BranchConfig) -> Tuple[bool, List[str]]:
    """
    Check that an image size fits the Transformer branch.

    Args:
        height: Image height
        width: Image width
        branch: Branch configuration

    Returns:
        Tuple[bool, List[str]]: Validation result and list of issues
    """
    issues = []
    try:
        branch.level_sizes(height, width)
    except ValueError as e:
        issues.append(str(e))
    return len(issues) == 0, issues

