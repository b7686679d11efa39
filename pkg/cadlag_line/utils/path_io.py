"""JSON and CSV serialization of paths.

The JSON document has exactly the fields horizon, breakpoints, values,
slopes, terminal in that order. Reading is strict: missing, extra or
mistyped fields raise PathFormatError.
"""
import csv
import io
import json
import logging
from typing import Optional, Sequence

import numpy as np

from ..core.paths import PiecewisePath, evaluate
from .errors import PathFormatError, ValidationError

logger = logging.getLogger(__name__)

PATH_FIELDS = ("horizon", "breakpoints", "values", "slopes", "terminal")


def path_to_dict(path: PiecewisePath) -> dict:
    return {
        "horizon": path.horizon,
        "breakpoints": [float(v) for v in path.breakpoints],
        "values": [float(v) for v in path.values],
        "slopes": [float(v) for v in path.slopes],
        "terminal": path.terminal,
    }


def _number(name, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise PathFormatError(f"Field '{name}' must be a number, got {type(value).__name__}")
    return float(value)


def _numbers(name, value) -> list:
    if not isinstance(value, list):
        raise PathFormatError(f"Field '{name}' must be an array")
    return [_number(f"{name}[{i}]", v) for i, v in enumerate(value)]


def path_from_dict(data) -> PiecewisePath:
    if not isinstance(data, dict):
        raise PathFormatError("Path document must be a JSON object")
    missing = [f for f in PATH_FIELDS if f not in data]
    extra = sorted(set(data) - set(PATH_FIELDS))
    if missing or extra:
        raise PathFormatError(f"Path fields mismatch (missing: {missing}, unexpected: {extra})")
    try:
        return PiecewisePath(
            horizon=_number("horizon", data["horizon"]),
            breakpoints=_numbers("breakpoints", data["breakpoints"]),
            values=_numbers("values", data["values"]),
            slopes=_numbers("slopes", data["slopes"]),
            terminal=_number("terminal", data["terminal"]),
        )
    except PathFormatError:
        raise
    except ValidationError as e:
        raise PathFormatError(f"Invalid path: {e}") from e


def dumps_path(path: PiecewisePath) -> str:
    return json.dumps(path_to_dict(path))


def loads_path(text: str) -> PiecewisePath:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise PathFormatError(f"Malformed path JSON: {e}") from e
    return path_from_dict(data)


def load_path(filepath: str) -> PiecewisePath:
    try:
        with open(filepath, "r") as f:
            text = f.read()
    except OSError as e:
        raise PathFormatError(f"Cannot read path file {filepath}: {e}") from e
    return loads_path(text)


def save_path(path: PiecewisePath, filepath: str):
    with open(filepath, "w") as f:
        f.write(dumps_path(path))
        f.write("\n")


def csv_rows(path: PiecewisePath, mesh: Optional[int] = None) -> list:
    """(t, value) rows at every breakpoint, plus `mesh` uniform intervals if requested.

    Breakpoints other than 0 also get a row with the left limit so a plot of
    the rows shows the jumps; those rows are marked with side "left".
    """
    times = set(float(t) for t in path.breakpoints)
    if mesh:
        times.update(float(t) for t in np.linspace(0.0, path.horizon, int(mesh) + 1))
    ts = np.array(sorted(times))
    values = np.atleast_1d(evaluate(path, ts))
    lefts = path.left_limits
    left_at = dict(zip((float(t) for t in path.breakpoints[1:]), lefts))
    rows = []
    for t, v in zip(ts, values):
        if t in left_at and left_at[t] != v:
            rows.append((float(t), float(left_at[t]), "left"))
        rows.append((float(t), float(v), "right"))
    return rows


def path_csv(path: PiecewisePath, mesh: Optional[int] = None) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["t", "value", "side"])
    for t, v, side in csv_rows(path, mesh):
        writer.writerow([repr(t), repr(v), side])
    return buffer.getvalue()


def paths_csv(paths: Sequence[PiecewisePath], mesh: Optional[int] = None) -> str:
    """Long-format CSV of several paths: sample,t,value,side."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["sample", "t", "value", "side"])
    for i, path in enumerate(paths):
        for t, v, side in csv_rows(path, mesh):
            writer.writerow([i, repr(t), repr(v), side])
    return buffer.getvalue()
