# ABOUTME: Flat key = value text reports for fits, experiments and lengthscale searches
# ABOUTME: Nested models flatten to dotted keys; floats use round-trip repr so reports are byte-reproducible

from __future__ import annotations

from collections.abc import Iterator, Mapping
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel

from odefield.io.atomic import write_atomic


def _scalar(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, float | np.floating):
        return repr(float(value))
    if isinstance(value, int | np.integer):
        return str(int(value))
    return str(value)


def _is_scalar(value: Any) -> bool:
    return not isinstance(value, Mapping | BaseModel | list | tuple | np.ndarray)


def flatten_report(report: BaseModel | Mapping[str, Any], prefix: str = "") -> Iterator[tuple[str, str]]:
    """Yield (dotted key, text) pairs; lists of scalars are joined with commas, other lists are indexed."""
    data = report.model_dump() if isinstance(report, BaseModel) else report
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, BaseModel | Mapping):
            yield from flatten_report(value, f"{name}.")
        elif isinstance(value, list | tuple | np.ndarray):
            items = list(value)
            if all(_is_scalar(item) for item in items):
                yield name, ", ".join(_scalar(item) for item in items)
            else:
                for index, item in enumerate(items):
                    if _is_scalar(item):
                        yield f"{name}.{index}", _scalar(item)
                    else:
                        yield from flatten_report(item, f"{name}.{index}.")
        else:
            yield name, _scalar(value)


def format_report(report: BaseModel | Mapping[str, Any]) -> str:
    return "".join(f"{key} = {value}\n" for key, value in flatten_report(report))


def write_report(path: str | Path, report: BaseModel | Mapping[str, Any]) -> Path:
    return write_atomic(path, format_report(report))
