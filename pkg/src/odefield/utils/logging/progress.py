# ABOUTME: Progress tracking for restart batches using Rich's built-in progress bar
# ABOUTME: Counts finished optimisation restarts; transient so it never pollutes command output

from typing import Any

from rich.console import Console
from rich.progress import BarColumn, MofNCompleteColumn, Progress, SpinnerColumn, TextColumn, TimeElapsedColumn


class RestartProgressTracker:
    """Advances a rich task once per finished restart."""

    def __init__(self, progress: Progress, task_id: Any):
        self.progress = progress
        self.task_id = task_id

    def advance(self, description: str | None = None) -> None:
        if description is not None:
            self.progress.update(self.task_id, description=description)
        self.progress.advance(self.task_id)

    def __enter__(self):
        self.progress.start()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.progress.stop()


def create_restart_progress(
    console: Console, total: int, description: str = "Optimising restarts"
) -> RestartProgressTracker:
    """Create a progress bar counting completed restarts.

    Args:
        console: Rich console instance
        total: Number of restarts that will report completion
        description: Initial progress description

    Returns:
        Tracker to use as a context manager and advance per restart
    """
    progress = Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        TimeElapsedColumn(),
        console=console,
        transient=True,
    )
    task_id = progress.add_task(description, total=total)
    return RestartProgressTracker(progress, task_id)
