"""CSV/TSV emission for matrices, grid heatmaps and report tables."""

from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path

import numpy as np
import pandas as pd

FLOAT_FORMAT = "%.17g"


def write_matrix(matrix: np.ndarray, path: Path) -> Path:
    """Row-major CSV at full precision; vectors are written as one column."""
    values = np.asarray(matrix, dtype=float)
    if values.ndim == 1:
        values = values[:, np.newaxis]
    pd.DataFrame(values).to_csv(path, header=False, index=False, float_format=FLOAT_FORMAT)
    return path


def grid_frame(
    coordinates: Sequence[tuple[int, int]], values: np.ndarray, width: int, height: int
) -> pd.DataFrame:
    """Lay per-state values out as height rows x width columns, top row first.

    Cells without a state (walls) stay empty.
    """
    values = np.asarray(values, dtype=float)
    if len(coordinates) != values.size:
        msg = f"{len(coordinates)} coordinates for {values.size} values"
        raise ValueError(msg)
    grid = np.full((height, width), np.nan)
    for (x, y), value in zip(coordinates, values, strict=True):
        grid[height - y, x - 1] = value
    return pd.DataFrame(grid)


def write_grid(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, header=False, index=False, na_rep="", float_format=FLOAT_FORMAT)
    return path


def write_table(frame: pd.DataFrame, path: Path, sep: str = ",") -> Path:
    frame.to_csv(path, sep=sep, index=False, float_format=FLOAT_FORMAT)
    return path
