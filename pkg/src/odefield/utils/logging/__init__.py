# ABOUTME: Logging configuration, progress tracking, and logger helpers
# ABOUTME: Provides structured loguru logging and rich restart progress for the CLI

from .config import LoggingMode, configure_logging, get_logging_status
from .progress import RestartProgressTracker, create_restart_progress
from .utils import (
    get_logger,
    with_async_operation_context,
    with_operation_context,
    with_run_context,
)

__all__ = [
    # Configuration
    "LoggingMode",
    "configure_logging",
    "get_logging_status",
    # Progress
    "RestartProgressTracker",
    "create_restart_progress",
    # Utilities
    "get_logger",
    "with_async_operation_context",
    "with_operation_context",
    "with_run_context",
]
