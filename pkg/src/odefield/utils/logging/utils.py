# ABOUTME: Logger utilities with context binding and operation tracking decorators
# ABOUTME: Provides get_logger and decorators/context managers for consistent structured logging

import functools
import inspect
import time
import uuid
from collections.abc import Callable
from typing import Any, TypeVar

import asyncclick as click
from loguru import logger

F = TypeVar("F", bound=Callable[..., Any])


def get_logger(name: str | None = None) -> Any:
    """Get a logger instance with automatic module detection.

    Args:
        name: Logger name, auto-detected from caller if None

    Returns:
        Configured loguru logger instance with bound context
    """
    if name is None:
        frame = inspect.currentframe()
        if frame and frame.f_back:
            name = frame.f_back.f_globals.get("__name__", "unknown")

    return logger.bind(name=name or "odefield")


def generate_operation_id() -> str:
    """Generate a short unique id for tracking one operation across log lines."""
    return str(uuid.uuid4())[:8]


def with_operation_context(operation: str, **context) -> Callable[[F], F]:
    """Decorator to add operation context to function logging.

    Args:
        operation: Operation name for logging
        **context: Additional context to bind to logger

    Returns:
        Decorated function with operation logging
    """

    def decorator(func: F) -> F:
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            bound_logger = get_logger(func.__module__).bind(
                operation=operation, operation_id=generate_operation_id(), function=func.__name__, **context
            )

            bound_logger.info(f"Starting {operation}")
            start_time = time.perf_counter()

            try:
                result = func(*args, **kwargs)
            except Exception as e:
                bound_logger.error(
                    f"Failed {operation}",
                    duration_seconds=round(time.perf_counter() - start_time, 3),
                    error=str(e),
                    error_type=type(e).__name__,
                    success=False,
                )
                raise

            bound_logger.info(
                f"Completed {operation}", duration_seconds=round(time.perf_counter() - start_time, 3), success=True
            )
            return result

        return wrapper  # type: ignore[return-value]

    return decorator


def with_async_operation_context(operation: str, **context) -> Callable[[F], F]:
    """Decorator to add operation context to async function logging."""

    def decorator(func: F) -> F:
        @functools.wraps(func)
        async def wrapper(*args, **kwargs):
            bound_logger = get_logger(func.__module__).bind(
                operation=operation, operation_id=generate_operation_id(), function=func.__name__, **context
            )

            bound_logger.info(f"Starting {operation}")
            start_time = time.perf_counter()

            try:
                result = await func(*args, **kwargs)
            except Exception as e:
                bound_logger.error(
                    f"Failed {operation}",
                    duration_seconds=round(time.perf_counter() - start_time, 3),
                    error=str(e),
                    error_type=type(e).__name__,
                    success=False,
                )
                raise

            bound_logger.info(
                f"Completed {operation}", duration_seconds=round(time.perf_counter() - start_time, 3), success=True
            )
            return result

        return wrapper  # type: ignore[return-value]

    return decorator


class LogContext:
    """Context manager for binding logger context.

    Click exceptions pass through unlogged; the CLI reports them itself.
    """

    def __init__(self, logger_instance: Any, **context):
        self.logger = logger_instance
        self.context = context
        self.bound_logger = None

    def __enter__(self) -> Any:
        self.bound_logger = self.logger.bind(**self.context)
        return self.bound_logger

    def __exit__(self, exc_type, exc_val, exc_tb):
        if exc_type is None or self.bound_logger is None:
            return
        if issubclass(exc_type, (click.ClickException, click.exceptions.Exit, click.Abort)):
            return
        self.bound_logger.error("Context operation failed", error=str(exc_val), error_type=exc_type.__name__)


def with_run_context(command: str, **context) -> LogContext:
    """Create a logging context for one CLI command run.

    Args:
        command: Name of the command being run
        **context: Additional context to bind (paths, seed, ...)

    Returns:
        LogContext manager with command context
    """
    return LogContext(get_logger("odefield.main"), command=command, operation_id=generate_operation_id(), **context)
