"""Field and trajectory construction plus file round trips.

A field is a flat float array over grid cells; a trajectory stacks one
field per time level, shape (N+1, cells).  CSV files carry one row per
cell in flat order with a coordinate header, written at full float
precision so a write/read round trip is bit identical.  All writes are
atomic: content goes to a temporary file in the target directory which
is then renamed over the destination.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .errors import ShapeMismatch
from .mesh import Grid, TimeGrid

# %.17g prints the shortest decimal that reproduces the exact float64.
_FMT = "%.17g"


def as_field(grid: Grid, value) -> np.ndarray:
    """Make a field from a scalar or an array of matching size."""
    if np.isscalar(value):
        return np.full(grid.num_cells, float(value))
    v = np.asarray(value, dtype=float).ravel()
    if v.size != grid.num_cells:
        raise ShapeMismatch(
            "field data has %d entries, grid has %d cells"
            % (v.size, grid.num_cells))
    return v


def as_trajectory(tg: TimeGrid, grid: Grid, value) -> np.ndarray:
    """Make a trajectory from a scalar, a single field, or a full stack.

    A scalar or single field is replicated across all N+1 time levels.
    """
    if np.isscalar(value):
        return np.full((tg.N + 1, grid.num_cells), float(value))
    v = np.asarray(value, dtype=float)
    if v.ndim == 1:
        v = as_field(grid, v)
        return np.repeat(v[None, :], tg.N + 1, axis=0)
    if v.shape != (tg.N + 1, grid.num_cells):
        raise ShapeMismatch(
            "trajectory data has shape %r, expected (%d, %d)"
            % (v.shape, tg.N + 1, grid.num_cells))
    return v.copy()


def atomic_write_text(path: str, text: str) -> None:
    """Write text to path via a same-directory temp file and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str, payload: dict) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def field_header(grid: Grid) -> str:
    return "x,value" if grid.dim == 1 else "x,y,value"


def write_field_csv(path: str, grid: Grid, v: np.ndarray) -> None:
    """Write one field as CSV: coordinate columns then the value column."""
    v = grid.check_field(v)
    coords = grid.cell_centers()
    lines = [field_header(grid)]
    for row, val in zip(coords, v):
        cols = [_FMT % c for c in row] + [_FMT % val]
        lines.append(",".join(cols))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_field_csv(path: str, grid: Grid) -> np.ndarray:
    """Read a field CSV written for an identical grid."""
    with open(path) as f:
        header = f.readline().strip()
        if header != field_header(grid):
            raise ShapeMismatch(
                "%s: header %r does not match grid (expected %r)"
                % (path, header, field_header(grid)))
        data = np.loadtxt(f, delimiter=",", ndmin=2)
    if data.shape != (grid.num_cells, grid.dim + 1):
        raise ShapeMismatch(
            "%s: %d rows for a grid of %d cells" % (path, data.shape[0], grid.num_cells))
    coords = grid.cell_centers()
    scale = max(grid.h)
    if np.max(np.abs(data[:, : grid.dim] - coords)) > 1e-9 * scale:
        raise ShapeMismatch("%s: cell coordinates do not match the grid" % path)
    return np.ascontiguousarray(data[:, -1])


def snapshot_name(base: str, level: int) -> str:
    return "%s_%04d.csv" % (base, level)


def snapshot_levels(tg: TimeGrid, stride: int) -> list:
    """Levels written for a given stride: every stride-th plus the last."""
    stride = max(int(stride), 1)
    levels = list(range(0, tg.N + 1, stride))
    if levels[-1] != tg.N:
        levels.append(tg.N)
    return levels


def write_snapshots(directory: str, base: str, tg: TimeGrid, grid: Grid,
                    traj: np.ndarray, stride: int = 1) -> list:
    """Write trajectory levels as numbered field CSVs; returns the paths."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for level in snapshot_levels(tg, stride):
        path = os.path.join(directory, snapshot_name(base, level))
        write_field_csv(path, grid, traj[level])
        paths.append(path)
    return paths


def read_snapshot_dir(directory: str, base: str, tg: TimeGrid,
                      grid: Grid) -> np.ndarray:
    """Read a full trajectory from numbered field CSVs.

    Every level 0..N must be present; partial snapshot sets cannot be
    promoted to a trajectory.
    """
    traj = np.zeros((tg.N + 1, grid.num_cells))
    for level in range(tg.N + 1):
        path = os.path.join(directory, snapshot_name(base, level))
        if not os.path.exists(path):
            raise ShapeMismatch(
                "missing snapshot %s for levels 0..%d" % (path, tg.N))
        traj[level] = read_field_csv(path, grid)
    return traj
