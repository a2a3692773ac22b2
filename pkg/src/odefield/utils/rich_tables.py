# ABOUTME: Rich table builders for fit summaries, restart listings, lengthscale searches and experiment reports
# ABOUTME: Shared key-value and multi-column generators keep every command's output styled the same way

from typing import Any

from rich.box import ROUNDED
from rich.console import Console
from rich.table import Table

from odefield.bench.experiments import ExperimentReport
from odefield.model.fit import FitDiagnostics, FittedModel
from odefield.model.selection import SelectionResult


def _fmt(value: float | None, digits: int = 6) -> str:
    return "-" if value is None else f"{value:.{digits}g}"


def _fmt_list(values: Any, digits: int = 4) -> str:
    return ", ".join(f"{float(v):.{digits}g}" for v in values)


def create_key_value_table(
    title: str,
    data: dict[str, str],
    title_style: str = "bold cyan",
    key_style: str = "bold blue",
    value_style: str = "green",
    box_style=ROUNDED,
) -> Table:
    """Create a two-column Field/Value table.

    Args:
        title: Table title
        data: Dictionary of key-value pairs to display
        title_style: Style for the table title
        key_style: Style for the key column
        value_style: Style for the value column
        box_style: Border style for the table

    Returns:
        Formatted Rich table ready for printing
    """
    table = Table(
        title=f"[{title_style}]{title}[/{title_style}]",
        box=box_style,
        show_header=True,
        header_style="bold magenta",
        border_style="cyan",
        title_justify="left",
        expand=False,
    )
    table.add_column("Field", style=key_style, no_wrap=False)
    table.add_column("Value", style=value_style, no_wrap=False)
    for key, value in data.items():
        table.add_row(key, str(value))
    return table


def create_multi_column_table(
    title: str,
    columns: list[tuple[str, str]],
    rows: list[list[str]],
    title_style: str = "bold cyan",
    header_style: str = "bold magenta",
    alternate_row_styles: list[str] | None = None,
    box_style=ROUNDED,
) -> Table:
    """Create a multi-column table with zebra striping.

    Args:
        title: Table title
        columns: List of (column_name, column_style) tuples
        rows: List of row data
        title_style: Style for the table title
        header_style: Style for column headers
        alternate_row_styles: Alternating row styles
        box_style: Border style for the table

    Returns:
        Formatted Rich table ready for printing
    """
    table = Table(
        title=f"[{title_style}]{title}[/{title_style}]",
        box=box_style,
        show_header=True,
        header_style=header_style,
        border_style="cyan",
        title_justify="left",
        row_styles=alternate_row_styles or ["", "dim"],
        expand=True,
    )
    for name, style in columns:
        table.add_column(name, style=style)
    for row in rows:
        table.add_row(*row)
    return table


def create_fit_summary_table(model: FittedModel, log_posterior: float | None = None) -> Table:
    """Hyperparameters and restart outcome of a fitted model."""
    params = model.params
    data = {
        "🧮 Inducing points": str(params.n_inducing),
        "📐 Dimension": str(params.dim),
        "🔁 Series": str(params.n_series),
        "📈 Signal std (σ_f)": _fmt(params.sigma_f),
        "📏 Lengthscales": _fmt_list(params.lengthscales),
        "🔊 Noise std (ω)": _fmt_list(params.omega),
    }
    if log_posterior is not None:
        data["🎯 Log posterior"] = _fmt(log_posterior, 10)
    diagnostics = model.diagnostics
    if diagnostics is not None:
        data["🏆 Best restart"] = str(diagnostics.best_index)
        data["❌ Failed restarts"] = f"{diagnostics.failures} / {len(diagnostics.restarts)}"
        if diagnostics.init_scale is not None:
            data["⚖️ Init scale"] = _fmt(diagnostics.init_scale)
    return create_key_value_table(title="📊 Fitted Vector Field", data=data, title_style="bold green")


def create_restart_table(diagnostics: FitDiagnostics, limit: int = 10) -> Table:
    """The best ``limit`` restarts by final log posterior; failed restarts sort last."""
    ranked = sorted(
        diagnostics.restarts,
        key=lambda r: (r.value is None, -(r.value or 0.0), r.index),
    )[:limit]
    columns = [
        ("#", "cyan"),
        ("Start", "white"),
        ("Final", "green"),
        ("Status", "yellow"),
        ("Iterations", "blue"),
        ("Evaluations", "blue"),
    ]
    rows = [
        [
            ("★ " if r.index == diagnostics.best_index else "") + str(r.index),
            _fmt(r.initial_value),
            _fmt(r.value),
            r.status if r.error is None else f"{r.status}: {r.error}",
            str(r.iterations),
            str(r.evaluations),
        ]
        for r in ranked
    ]
    return create_multi_column_table(
        title=f"🔁 Restarts (top {len(rows)} of {len(diagnostics.restarts)})", columns=columns, rows=rows
    )


def create_selection_table(result: SelectionResult) -> Table:
    columns = [("Lengthscales", "cyan"), ("Validation RMSE", "green"), ("Note", "yellow")]
    rows = []
    for score in result.candidates:
        chosen = tuple(score.lengthscales) == tuple(result.best)
        note = "selected" if chosen else (score.error or "")
        rows.append([_fmt_list(score.lengthscales), _fmt(score.rmse), note])
    return create_multi_column_table(title="🔍 Lengthscale Search", columns=columns, rows=rows)


def create_experiment_table(report: ExperimentReport) -> Table:
    data = {
        "🧪 Experiment": report.kind.value,
        "🎯 RMSE": _fmt(report.rmse),
        "📐 RMSE per dimension": _fmt_list(report.rmse_per_dimension),
        "🎞️ Frames (train / test)": f"{report.n_frames} ({report.n_train} / {report.n_test})",
        "📦 Observed dimension": str(report.observed_dim),
        "🗜️ PCA dimension": str(report.pca_dim) if report.pca_dim else "off",
        "🧾 Log posterior": _fmt(report.log_posterior, 10),
        "📈 Signal std (σ_f)": _fmt(report.sigma_f),
        "📏 Lengthscales": _fmt_list(report.lengthscales),
        "🔊 Noise std (ω)": _fmt_list(report.omega),
    }
    if report.explained_variance is not None:
        data["📊 Explained variance"] = _fmt_list(report.explained_variance)
    for name, path in report.artifacts.items():
        data[f"📝 {name}"] = path
    return create_key_value_table(title="🧪 Experiment Report", data=data, title_style="bold magenta")


def create_logging_status_table(status: dict[str, Any]) -> Table:
    """Create a logging configuration status table.

    Args:
        status: Logging status dictionary

    Returns:
        Styled logging configuration table
    """
    logging_data = {
        "🔧 Mode": status["mode"].title(),
        "📁 Log Directory": status["log_directory"] or "N/A (production mode)",
        "🔇 Suppressed Libraries": ", ".join(status["third_party_suppressed"]),
    }
    if status["log_files"]["main"]:
        logging_data["📝 Main Log"] = status["log_files"]["main"]
    if status["log_files"]["json"]:
        logging_data["📊 JSON Log"] = status["log_files"]["json"]
    if status["log_files"]["errors"]:
        logging_data["🚨 Error Log"] = status["log_files"]["errors"]

    return create_key_value_table(
        title="🔍 Logging Configuration",
        data=logging_data,
        title_style="bold green",
        key_style="blue",
        value_style="white",
    )


def print_rich_table(console: Console, table: Table) -> None:
    """Print a rich table with consistent spacing."""
    console.print()
    console.print(table)
    console.print()
