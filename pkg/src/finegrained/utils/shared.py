"""Shared report utilities: JSON sanitizing, deterministic serialization and output."""

import dataclasses
import enum
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

logger = logging.getLogger(__name__)

JSONSerializable = str | int | float | bool | None | dict[str, "JSONSerializable"] | list["JSONSerializable"]


def sanitize_for_json(data: Any) -> JSONSerializable:  # noqa: ANN401, PLR0911
    """Convert report values to JSON-compatible types.

    Args:
        data: Value to convert; numpy scalars and arrays, fractions, enums, paths and
            dataclasses are supported in addition to plain containers

    Returns:
        JSONSerializable: JSON-compatible data
    """
    if isinstance(data, bool | type(None) | str):
        return data
    if isinstance(data, enum.Enum):
        return sanitize_for_json(data.value)
    if isinstance(data, int | float):
        return data
    if isinstance(data, np.bool_):
        return bool(data)
    if isinstance(data, np.integer):
        return int(data)
    if isinstance(data, np.floating):
        return float(data)
    if isinstance(data, np.ndarray):
        return sanitize_for_json(data.tolist())
    if isinstance(data, Fraction):
        return f"{data.numerator}/{data.denominator}"
    if isinstance(data, Path):
        return str(data)
    if dataclasses.is_dataclass(data) and not isinstance(data, type):
        return sanitize_for_json(dataclasses.asdict(data))
    if isinstance(data, dict):
        return {str(k): sanitize_for_json(v) for k, v in data.items()}
    if isinstance(data, list | tuple | set | frozenset):
        items = sorted(data) if isinstance(data, set | frozenset) else data
        return [sanitize_for_json(item) for item in items]

    return str(data)


def serialize_report(data: Any) -> str:  # noqa: ANN401
    """Serialize report data to deterministic JSON.

    Keys are sorted so that identical inputs give byte-identical output.

    Args:
        data: Report data

    Returns:
        str: JSON text with a trailing newline
    """
    return json.dumps(sanitize_for_json(data), indent=2, sort_keys=True) + "\n"


def write_output(text: str, path: Path | None) -> None:
    """Write text to a file, or to stdout when no path is given.

    Args:
        text: Content to write
        path: Destination file or None
    """
    if path is None:
        sys.stdout.write(text)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    logger.info("Wrote %s", path)
