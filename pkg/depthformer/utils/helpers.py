"""
Helper utilities for DepthFormer command-line runs.
"""
import logging
import os
from pathlib import Path
from typing import Dict, Optional, Sequence, Type, TypeVar, Union

from dotenv import dotenv_values
from pydantic import BaseModel

from depthformer.utils.validators import validate_config_keys

logger = logging.getLogger(__name__)

ModelT = TypeVar("ModelT", bound=BaseModel)


def create_directory_if_not_exists(path: Union[str, Path]) -> bool:
    """
    Create a directory if it doesn't exist.

    Args:
        path: Directory path

    Returns:
        bool: True if directory exists or was created, False otherwise
    """
    try:
        os.makedirs(path, exist_ok=True)
        return True
    except OSError as e:
        logger.error(f"Error creating directory {path}: {str(e)}")
        return False


def parse_config_file(path: Optional[Union[str, Path]]) -> Dict[str, str]:
    """
    Read a flat `key = value` config file.

    Lines starting with # are comments. Keys are lower-cased.

    Args:
        path: Config file, or None for no file

    Returns:
        Dict[str, str]: Raw values by key

    Raises:
        FileNotFoundError: If the file does not exist
    """
    if path is None:
        return {}
    if not os.path.exists(path):
        raise FileNotFoundError(f"config file not found: {path}")
    values = dotenv_values(path)
    return {key.strip().lower(): (value or "").strip() for key, value in values.items()}


def parse_overrides(items: Optional[Sequence[str]]) -> Dict[str, str]:
    """
    Parse `key=value` command-line overrides.

    Raises:
        ValueError: For an item without '='
    """
    overrides = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"override {item!r} must look like key=value")
        overrides[key.strip().lower()] = value.strip()
    return overrides


def split_values(values: Dict[str, str], models: Sequence[Type[BaseModel]]) -> Dict[Type[BaseModel], Dict[str, str]]:
    """
    Route each key to the config model that declares it.

    Raises:
        ValueError: Naming every key no model declares
    """
    valid, issues = validate_config_keys(values, models)
    if not valid:
        raise ValueError("; ".join(issues))
    routed: Dict[Type[BaseModel], Dict[str, str]] = {model: {} for model in models}
    for key, value in values.items():
        for model in models:
            if key in model.model_fields:
                routed[model][key] = value
    return routed


def build_config(model: Type[ModelT], values: Dict[str, str]) -> ModelT:
    """Validate raw string values into a config model; empty strings mean the default."""
    return model.model_validate({key: value for key, value in values.items() if value != ""})
