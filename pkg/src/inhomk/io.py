"""File formats: pattern CSV, covariate raster, curve and matrix CSV.

Patterns are plain CSV with an ``x,y[,...]`` header and one point per line;
the window travels in a JSON sidecar ``<file>.window.json`` (or is supplied
explicitly on read). Covariate rasters are a one-line JSON header followed by
CSV rows, one cell per line in row-major order. All numeric output uses 17
significant digits so round trips are exact and diffs meaningful.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .geometry import PointPattern, Window
from .intensity import CovariateField
from .kstat import Curve

__all__ = [
    "write_pattern_csv",
    "read_pattern_csv",
    "write_covariate_field",
    "read_covariate_field",
    "write_curve_csv",
    "write_matrix_csv",
    "read_matrix_csv",
]

_AXIS_NAMES = ("x", "y", "z")


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def _axis_header(dim: int) -> list[str]:
    if dim <= len(_AXIS_NAMES):
        return list(_AXIS_NAMES[:dim])
    return [f"x{k + 1}" for k in range(dim)]


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".window.json")


def write_pattern_csv(path, pattern: PointPattern) -> None:
    path = Path(path)
    lines = [",".join(_axis_header(pattern.window.dim))]
    for point in pattern.points:
        lines.append(",".join(_fmt(v) for v in point))
    path.write_text("\n".join(lines) + "\n")
    _sidecar(path).write_text(
        json.dumps({"dim": pattern.window.dim, "side": pattern.window.side}) + "\n"
    )


def read_pattern_csv(path, side: float | None = None, dim: int | None = None) -> PointPattern:
    """Read a pattern CSV; window from explicit arguments or the JSON sidecar."""
    path = Path(path)
    if side is None or dim is None:
        sidecar = _sidecar(path)
        if not sidecar.exists():
            raise ValueError(
                f"window unknown: pass side/dim or provide {sidecar.name}"
            )
        meta = json.loads(sidecar.read_text())
        side = meta["side"] if side is None else side
        dim = meta["dim"] if dim is None else dim
    text = path.read_text().strip().splitlines()
    if not text:
        raise ValueError(f"{path}: empty pattern file")
    header = text[0].split(",")
    if len(header) != dim:
        raise ValueError(f"{path}: header has {len(header)} columns, expected {dim}")
    window = Window(int(dim), float(side))
    if len(text) == 1:
        return PointPattern(window, np.empty((0, dim)))
    try:
        pts = np.array(
            [[float(v) for v in line.split(",")] for line in text[1:]], dtype=float
        )
    except ValueError as err:
        raise ValueError(f"{path}: malformed pattern CSV") from err
    return PointPattern(window, pts)


def write_covariate_field(path, field: CovariateField) -> None:
    path = Path(path)
    header = {
        "side": field.window.side,
        "dim": field.window.dim,
        "resolution": list(field.resolution),
        "p": field.p,
    }
    lines = [json.dumps(header)]
    for row in field.flat():
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def read_covariate_field(path) -> CovariateField:
    path = Path(path)
    text = path.read_text().strip().splitlines()
    try:
        header = json.loads(text[0])
        window = Window(int(header["dim"]), float(header["side"]))
        resolution = tuple(int(r) for r in header["resolution"])
        p = int(header["p"])
        body = np.array(
            [[float(v) for v in line.split(",")] for line in text[1:]], dtype=float
        )
    except (ValueError, KeyError, IndexError, json.JSONDecodeError) as err:
        raise ValueError(f"{path}: malformed covariate raster") from err
    expected = int(np.prod(resolution))
    if body.shape != (expected, p):
        raise ValueError(
            f"{path}: raster body is {body.shape}, expected ({expected}, {p})"
        )
    return CovariateField(window, body.reshape(resolution + (p,)))


def write_curve_csv(path, curve: Curve, value_names=("khat",)) -> None:
    path = Path(path)
    vals = curve.values if curve.values.ndim > 1 else curve.values[:, None]
    if len(value_names) != vals.shape[1]:
        raise ValueError("one name per value column required")
    lines = [",".join(("r",) + tuple(value_names))]
    for r, row in zip(curve.grid.values, vals):
        lines.append(",".join([_fmt(r)] + [_fmt(v) for v in row]))
    path.write_text("\n".join(lines) + "\n")


def write_matrix_csv(path, matrix: np.ndarray) -> None:
    path = Path(path)
    lines = [",".join(_fmt(v) for v in row) for row in np.atleast_2d(matrix)]
    path.write_text("\n".join(lines) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    path = Path(path)
    try:
        return np.array(
            [
                [float(v) for v in line.split(",")]
                for line in path.read_text().strip().splitlines()
            ],
            dtype=float,
        )
    except ValueError as err:
        raise ValueError(f"{path}: malformed matrix CSV") from err
