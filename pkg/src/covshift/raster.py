"""Pixel-grid scalar fields.

Row 0 of ``values`` is the southernmost row, so ``values[r, c]`` is the cell
centred at ``(x0 + (c + 0.5) h, y0 + (r + 0.5) h)``. Esri ASCII files are
north-up and get flipped on read/write.

Every integral in the package is the midpoint rule over cells whose centres
fall inside the integration window; the same cells double as the quadrature
points of :mod:`covshift.loglin`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .geom import UnsupportedGeometryError, Window

__all__ = [
    "OutOfDomainError",
    "Grid",
    "ScalarField",
    "lookup",
    "integrate",
    "snap_shift",
    "shift_field",
    "read_ascii_grid",
    "write_ascii_grid",
]

DEFAULT_CELLS = 128


class OutOfDomainError(ValueError):
    """A location falls outside the field's window."""


@dataclass(frozen=True)
class Grid:
    """Square-cell raster geometry covering ``window``."""

    x0: float
    y0: float
    cellsize: float
    nrows: int
    ncols: int
    window: Window

    def __post_init__(self):
        if self.cellsize <= 0 or self.nrows < 1 or self.ncols < 1:
            raise ValueError("grid needs positive cell size and dimensions")
        wx0, wy0, wx1, wy1 = self.window.bounds
        eps = 1e-9 * self.cellsize
        x1 = self.x0 + self.ncols * self.cellsize
        y1 = self.y0 + self.nrows * self.cellsize
        if wx0 < self.x0 - eps or wy0 < self.y0 - eps or wx1 > x1 + eps or wy1 > y1 + eps:
            raise ValueError("grid does not cover its window")

    @classmethod
    def for_window(cls, window: Window, cells: int = DEFAULT_CELLS) -> "Grid":
        """Grid with ``cells`` cells along the shorter window side."""
        x0, y0, x1, y1 = window.bounds
        h = min(x1 - x0, y1 - y0) / cells
        ncols = max(1, int(math.ceil((x1 - x0) / h - 1e-9)))
        nrows = max(1, int(math.ceil((y1 - y0) / h - 1e-9)))
        return cls(x0, y0, h, nrows, ncols, window)

    @classmethod
    def with_cellsize(cls, window: Window, cellsize: float) -> "Grid":
        x0, y0, x1, y1 = window.bounds
        ncols = max(1, int(math.ceil((x1 - x0) / cellsize - 1e-9)))
        nrows = max(1, int(math.ceil((y1 - y0) / cellsize - 1e-9)))
        return cls(x0, y0, cellsize, nrows, ncols, window)

    @property
    def shape(self) -> tuple[int, int]:
        return self.nrows, self.ncols

    @property
    def cell_area(self) -> float:
        return self.cellsize * self.cellsize

    @cached_property
    def xc(self) -> np.ndarray:
        return self.x0 + (np.arange(self.ncols) + 0.5) * self.cellsize

    @cached_property
    def yc(self) -> np.ndarray:
        return self.y0 + (np.arange(self.nrows) + 0.5) * self.cellsize

    @cached_property
    def mask(self) -> np.ndarray:
        """Cells whose centres lie in the window."""
        return self.mask_for(self.window)

    def mask_for(self, window: Window | None) -> np.ndarray:
        if window is None:
            return np.zeros(self.shape, dtype=bool)
        xx, yy = np.meshgrid(self.xc, self.yc)
        return window.contains(xx, yy)

    @property
    def tiles_window(self) -> bool:
        """True when the grid is exactly the window rectangle (torus-ready)."""
        if not self.window.is_rectangle:
            return False
        wx0, wy0, wx1, wy1 = self.window.bounds
        tol = 1e-9 * self.cellsize
        return (
            abs(self.x0 - wx0) < tol
            and abs(self.y0 - wy0) < tol
            and abs(self.x0 + self.ncols * self.cellsize - wx1) < tol
            and abs(self.y0 + self.nrows * self.cellsize - wy1) < tol
        )

    def cell_index(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        """Row and column of the cells containing the given locations (clipped)."""
        c = np.floor((np.asarray(x, dtype=float) - self.x0) / self.cellsize).astype(np.intp)
        r = np.floor((np.asarray(y, dtype=float) - self.y0) / self.cellsize).astype(np.intp)
        return np.clip(r, 0, self.nrows - 1), np.clip(c, 0, self.ncols - 1)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.xc, self.yc)

    def same_geometry(self, other: "Grid") -> bool:
        tol = 1e-9 * self.cellsize
        return (
            self.shape == other.shape
            and abs(self.cellsize - other.cellsize) < tol
            and abs(self.x0 - other.x0) < tol
            and abs(self.y0 - other.y0) < tol
        )


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Raster of real values on ``grid``.

    ``mask`` marks the cells that belong to the field's domain; it defaults
    to the grid window. Cells outside the mask may hold NaN.
    """

    grid: Grid
    values: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {self.grid.shape}")
        mask = self.grid.mask if self.mask is None else np.asarray(self.mask, dtype=bool)
        if not np.isfinite(values[mask]).all():
            raise ValueError("field values must be finite inside the window")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def window(self) -> Window:
        return self.grid.window

    @classmethod
    def constant(cls, value: float, grid: Grid) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(cls, func, grid: Grid) -> "ScalarField":
        """Evaluate ``func(x, y)`` at cell centres."""
        xx, yy = grid.meshgrid()
        return cls(grid, np.broadcast_to(func(xx, yy), grid.shape))

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, values, self.mask)

    def masked_values(self, fill: float = 0.0) -> np.ndarray:
        return np.where(self.mask, self.values, fill)

    def window_values(self) -> np.ndarray:
        return self.values[self.mask]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def lookup(field: ScalarField, xy) -> np.ndarray | float:
    """Nearest-cell value at each location; raises outside the window."""
    xy = np.asarray(xy, dtype=float)
    single = xy.ndim == 1
    xy = xy.reshape(-1, 2)
    inside = field.window.contains(xy[:, 0], xy[:, 1])
    if not inside.all():
        bad = xy[~inside][0]
        raise OutOfDomainError(f"location ({bad[0]}, {bad[1]}) outside window")
    r, c = field.grid.cell_index(xy[:, 0], xy[:, 1])
    out = field.values[r, c]
    return float(out[0]) if single else out


def integrate(field: ScalarField, over: Window | None = None) -> float:
    """Midpoint-rule integral over cells whose centres lie in ``over``.

    ``over=None`` integrates over the field's own domain.
    """
    if over is None:
        mask = field.mask
    else:
        mask = field.grid.mask_for(over) & field.mask
    return float(field.values[mask].sum() * field.grid.cell_area)


def snap_shift(v, cellsize: float) -> tuple[int, int]:
    """Shift vector rounded to whole cells, as ``(row_shift, col_shift)``."""
    return int(np.rint(v[1] / cellsize)), int(np.rint(v[0] / cellsize))


def shift_field(field: ScalarField, v, mode: str = "torus") -> ScalarField:
    """``(field + v)(u) = field(u - v)`` with ``v`` snapped to the grid.

    Torus mode cyclically permutes the grid. Euclid mode keeps the grid and
    masks every cell outside ``W ∩ (W + v)``.
    """
    grid = field.grid
    kr, kc = snap_shift(v, grid.cellsize)
    if mode == "torus":
        if not grid.tiles_window:
            raise UnsupportedGeometryError("torus shift needs a grid that tiles a rectangular window")
        return ScalarField(grid, np.roll(field.values, (kr, kc), axis=(0, 1)), field.mask)
    if mode != "euclid":
        raise ValueError(f"unknown shift mode {mode!r}")
    nr, nc = grid.shape
    shifted = np.full(grid.shape, np.nan)
    valid = np.zeros(grid.shape, dtype=bool)
    dst_r = slice(max(kr, 0), nr + min(kr, 0))
    src_r = slice(max(-kr, 0), nr + min(-kr, 0))
    dst_c = slice(max(kc, 0), nc + min(kc, 0))
    src_c = slice(max(-kc, 0), nc + min(-kc, 0))
    shifted[dst_r, dst_c] = field.values[src_r, src_c]
    valid[dst_r, dst_c] = field.mask[src_r, src_c]
    mask = valid & field.mask
    shifted[~mask] = np.nan
    return ScalarField(grid, shifted, mask)


def read_ascii_grid(path, window: Window | None = None) -> ScalarField:
    """Read an Esri ASCII grid; the window defaults to the raster extent."""
    path = Path(path)
    header = {}
    with open(path) as fh:
        lines = fh.read().split("\n")
    i = 0
    while i < len(lines):
        parts = lines[i].split()
        if len(parts) == 2 and parts[0][0].isalpha():
            header[parts[0].lower()] = parts[1]
            i += 1
        elif not parts:
            i += 1
        else:
            break
    try:
        ncols, nrows = int(header["ncols"]), int(header["nrows"])
        h = float(header["cellsize"])
        if "xllcorner" in header:
            x0, y0 = float(header["xllcorner"]), float(header["yllcorner"])
        else:
            x0 = float(header["xllcenter"]) - h / 2
            y0 = float(header["yllcenter"]) - h / 2
    except KeyError as exc:
        raise ValueError(f"{path}: missing ASCII grid header key {exc}") from None
    nodata = float(header.get("nodata_value", "-9999"))
    data = np.array(" ".join(lines[i:]).split(), dtype=float)
    if data.size != nrows * ncols:
        raise ValueError(f"{path}: expected {nrows * ncols} values, found {data.size}")
    values = data.reshape(nrows, ncols)[::-1].copy()
    values[values == nodata] = np.nan
    if window is None:
        window = Window.rectangle(x0, y0, x0 + ncols * h, y0 + nrows * h)
    grid = Grid(x0, y0, h, nrows, ncols, window)
    return ScalarField(grid, values)


def write_ascii_grid(field: ScalarField, path, nodata: float = -9999.0) -> None:
    grid = field.grid
    values = np.where(field.mask & np.isfinite(field.values), field.values, nodata)
    with open(path, "w") as fh:
        fh.write(f"ncols {grid.ncols}\n")
        fh.write(f"nrows {grid.nrows}\n")
        fh.write(f"xllcorner {grid.x0!r}\n")
        fh.write(f"yllcorner {grid.y0!r}\n")
        fh.write(f"cellsize {grid.cellsize!r}\n")
        fh.write(f"NODATA_value {nodata!r}\n")
        for row in values[::-1]:
            fh.write(" ".join(repr(float(v)) for v in row))
            fh.write("\n")
