"""
Logger utility for DepthFormer.
"""
import os
import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional, Union

from depthformer.config import settings


def setup_logging(
    log_level: Union[int, str, None] = None,
    log_format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    log_file_path: Optional[Union[str, Path]] = None,
    max_file_size: int = 10485760,  # 10MB
    backup_count: int = 5,
    to_file: Optional[bool] = None,
) -> None:
    """
    Set up logging for command-line runs.

    Args:
        log_level: Logging level (default: settings.LOG_LEVEL)
        log_format: Format string for log messages
        log_file_path: Path to log file (default: <LOG_DIR>/depthformer.log)
        max_file_size: Maximum size of log file before rotation
        backup_count: Number of backup log files to keep
        to_file: Whether to attach the rotating file handler (default: settings.LOG_TO_FILE)
    """
    if log_level is None:
        log_level = settings.LOG_LEVEL
    if isinstance(log_level, str):
        log_level = logging.getLevelName(log_level.upper())
    if to_file is None:
        to_file = settings.LOG_TO_FILE

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)

    # Remove existing handlers to avoid duplicates
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    formatter = logging.Formatter(log_format)

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)

    if to_file:
        if log_file_path is None:
            logs_dir = Path(settings.LOG_DIR)
            os.makedirs(logs_dir, exist_ok=True)
            log_file_path = logs_dir / "depthformer.log"
        file_handler = RotatingFileHandler(
            log_file_path,
            maxBytes=max_file_size,
            backupCount=backup_count
        )
        file_handler.setFormatter(formatter)
        root_logger.addHandler(file_handler)

    # Pillow logs every decoder lookup at DEBUG
    logging.getLogger("PIL").setLevel(logging.WARNING)

    root_logger.info(f"Logging initialized. Level: {logging.getLevelName(log_level)}")
    root_logger.info(f"Environment: {settings.APP_ENV}")


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger for a specific module.

    Args:
        name: Name of the module

    Returns:
        Logger: Configured logger instance
    """
    return logging.getLogger(name)
