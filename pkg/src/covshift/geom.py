"""Observation windows, point patterns and shift geometry.

Windows are either axis-aligned rectangles or (for the variance correction
only) polygons backed by :mod:`shapely`. Point coordinates are never snapped
to the raster grid; see :mod:`covshift.raster` for the grid side of shifting.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import shapely
from shapely import affinity
from scipy.optimize import minimize_scalar
from shapely.geometry import Polygon, box

__all__ = [
    "UnsupportedGeometryError",
    "Window",
    "PointPattern",
    "ShiftVector",
    "torus_shift",
    "euclid_shift_intersection",
    "draw_shift_vectors",
    "default_shift_radius",
]


class UnsupportedGeometryError(ValueError):
    """Raised when an operation needs a rectangular window."""


class ShiftVector(NamedTuple):
    dx: float
    dy: float


@dataclass(frozen=True)
class Window:
    """Compact observation window.

    Use :meth:`rectangle` or :meth:`polygon` to build one. ``bounds`` is
    ``(x0, y0, x1, y1)``; for polygons ``geometry`` holds the shapely shape.
    """

    kind: str
    bounds: tuple[float, float, float, float]
    geometry: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind == "rectangle":
            x0, y0, x1, y1 = self.bounds
            if not (np.isfinite(self.bounds).all() and x0 < x1 and y0 < y1):
                raise ValueError(f"degenerate rectangle {self.bounds}")
        elif self.kind == "polygon":
            geom = self.geometry
            if geom is None or not geom.is_valid or geom.area <= 0:
                raise ValueError("polygon window must be simple with positive area")
        else:
            raise ValueError(f"unknown window kind {self.kind!r}")

    @classmethod
    def rectangle(cls, x0: float, y0: float, x1: float, y1: float) -> "Window":
        return cls("rectangle", (float(x0), float(y0), float(x1), float(y1)))

    @classmethod
    def unit_square(cls) -> "Window":
        return cls.rectangle(0.0, 0.0, 1.0, 1.0)

    @classmethod
    def polygon(cls, vertices: Sequence[tuple[float, float]]) -> "Window":
        geom = Polygon(vertices)
        return cls._from_geometry(geom)

    @classmethod
    def _from_geometry(cls, geom) -> "Window":
        return cls("polygon", tuple(float(b) for b in geom.bounds), geom)

    @property
    def is_rectangle(self) -> bool:
        return self.kind == "rectangle"

    @property
    def area(self) -> float:
        if self.is_rectangle:
            x0, y0, x1, y1 = self.bounds
            return (x1 - x0) * (y1 - y0)
        return float(self.geometry.area)

    @property
    def side_lengths(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.bounds
        return x1 - x0, y1 - y0

    def shape(self):
        """The window as a shapely geometry."""
        if self.is_rectangle:
            return box(*self.bounds)
        return self.geometry

    def contains(self, x, y) -> np.ndarray:
        """Boundary-inclusive membership test, vectorized over coordinates."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.is_rectangle:
            x0, y0, x1, y1 = self.bounds
            return (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
        return shapely.intersects_xy(self.geometry, x, y)

    def translate(self, v) -> "Window":
        dx, dy = float(v[0]), float(v[1])
        if self.is_rectangle:
            x0, y0, x1, y1 = self.bounds
            return Window.rectangle(x0 + dx, y0 + dy, x1 + dx, y1 + dy)
        return Window._from_geometry(affinity.translate(self.geometry, dx, dy))

    def intersection(self, other: "Window") -> "Window | None":
        """Intersection window, or ``None`` when it has zero area."""
        if self.is_rectangle and other.is_rectangle:
            a, b = self.bounds, other.bounds
            x0, y0 = max(a[0], b[0]), max(a[1], b[1])
            x1, y1 = min(a[2], b[2]), min(a[3], b[3])
            if x0 >= x1 or y0 >= y1:
                return None
            return Window.rectangle(x0, y0, x1, y1)
        geom = self.shape().intersection(other.shape())
        if geom.is_empty or geom.area <= 0:
            return None
        return Window._from_geometry(geom)


@dataclass(frozen=True, eq=False)
class PointPattern:
    """Finite planar point set observed in ``window``.

    ``xy`` is an ``(n, 2)`` float array. Duplicates are allowed.
    """

    xy: np.ndarray
    window: Window

    def __post_init__(self):
        xy = np.array(self.xy, dtype=float).reshape(-1, 2)
        if not np.isfinite(xy).all():
            raise ValueError("point coordinates must be finite")
        if xy.size and not self.window.contains(xy[:, 0], xy[:, 1]).all():
            raise ValueError("point pattern has points outside its window")
        xy.setflags(write=False)
        object.__setattr__(self, "xy", xy)

    @property
    def n(self) -> int:
        return self.xy.shape[0]

    def __len__(self) -> int:
        return self.n

    @property
    def x(self) -> np.ndarray:
        return self.xy[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.xy[:, 1]

    def restrict(self, window: Window) -> "PointPattern":
        keep = window.contains(self.x, self.y)
        return PointPattern(self.xy[keep], window)

    def count_in(self, window: Window | None) -> int:
        if window is None:
            return 0
        return int(window.contains(self.x, self.y).sum())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y"])
            for x, y in self.xy:
                writer.writerow([repr(float(x)), repr(float(y))])

    @classmethod
    def from_csv(cls, path, window: Window) -> "PointPattern":
        with open(Path(path), newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip().lower() for h in next(reader, [])]
            if header[:2] != ["x", "y"]:
                raise ValueError(f"{path}: expected header 'x,y', got {header}")
            rows = [(float(r[0]), float(r[1])) for r in reader if r]
        return cls(np.array(rows, dtype=float).reshape(-1, 2), window)


def _require_rectangle(window: Window, what: str) -> None:
    if not window.is_rectangle:
        raise UnsupportedGeometryError(f"{what} requires a rectangular window")


def torus_shift(xy, v, window: Window) -> np.ndarray:
    """Translate coordinates by ``v`` and wrap them on the rectangle torus.

    The wrap is half-open, so the output lies in ``[x0, x1) x [y0, y1)``.
    """
    _require_rectangle(window, "torus shift")
    x0, y0, x1, y1 = window.bounds
    lengths = np.array([x1 - x0, y1 - y0])
    lo = np.array([x0, y0])
    xy = np.asarray(xy, dtype=float)
    rel = np.mod(xy - lo + np.asarray(v, dtype=float), lengths)
    rel = np.where(rel >= lengths, rel - lengths, rel)
    return rel + lo


def euclid_shift_intersection(window: Window, v) -> Window | None:
    """``W ∩ (W + v)``; ``None`` signals an empty overlap."""
    return window.intersection(window.translate(v))


def draw_shift_vectors(n: int, radius: float, rng) -> np.ndarray:
    """``n`` vectors uniform on the disc of the given radius, as an ``(n, 2)`` array."""
    if radius <= 0 or n < 1:
        raise ValueError("need radius > 0 and n >= 1")
    r = radius * np.sqrt(rng.random(n))
    theta = 2.0 * np.pi * rng.random(n)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def draw_torus_vectors(n: int, window: Window, rng) -> np.ndarray:
    """Shift vectors uniform on the rectangle itself (torus alternative)."""
    _require_rectangle(window, "uniform-on-window shifts")
    lx, ly = window.side_lengths
    return rng.random((n, 2)) * np.array([lx, ly])


def _min_overlap_ratio(radius: float, lx: float, ly: float) -> float:
    # worst direction lies in the first quadrant by symmetry
    def ratio(theta):
        dx, dy = radius * math.cos(theta), radius * math.sin(theta)
        return max(lx - dx, 0.0) * max(ly - dy, 0.0) / (lx * ly)

    grid = np.linspace(0.0, math.pi / 2, 721)
    vals = [ratio(t) for t in grid]
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(ratio, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    return min(vals[i], float(res.fun))


def default_shift_radius(window: Window, min_ratio: float = 0.25, tol: float = 1e-12) -> float:
    """Largest R keeping ``|W ∩ (W+v)| / |W| >= min_ratio`` for every ``|v| <= R``."""
    _require_rectangle(window, "default shift radius (supply R explicitly)")
    lx, ly = window.side_lengths
    return _rectangle_radius(lx, ly, min_ratio, tol)


@lru_cache(maxsize=64)
def _rectangle_radius(lx: float, ly: float, min_ratio: float, tol: float) -> float:
    lo, hi = 0.0, math.hypot(lx, ly)
    while hi - lo > tol * max(lx, ly):
        mid = 0.5 * (lo + hi)
        if _min_overlap_ratio(mid, lx, ly) >= min_ratio:
            lo = mid
        else:
            hi = mid
    return lo
