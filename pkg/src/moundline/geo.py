"""Geometry and georeferencing core.

Everything downstream (tiles, post-processing, evaluation, mosaics) shares
these primitives: points and polygons in a projected metric CRS, rasters, and
the affine mapping between pixel and world coordinates.

Conventions
-----------
* World coordinates are meters in a projected CRS (e.g. a UTM zone). Inputs
  in geographic degrees must be projected before they reach this module.
* A raster's origin is the *top-left corner* of pixel (0, 0). World y
  decreases as the pixel row increases.
* Polygon rings are closed (first point repeated last). Exterior rings are
  counter-clockwise in world coordinates, holes clockwise, matching the
  GeoJSON convention; `polygon_area` is orientation-agnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import shapely
import shapely.geometry as _sgeom
from shapely.validation import make_valid as _make_valid

XY = tuple[float, float]

# Intersection results are snapped to this grid; degenerate slivers below it
# count as empty.
SNAP_GRID_M = 1e-9


class InvalidRing(ValueError):
    """A polygon ring is open, too short, or otherwise unusable."""


@dataclass(frozen=True)
class GeoTransform:
    """Affine pixel-to-world mapping without rotation terms.

    origin_x, origin_y are the world coordinates of the top-left corner of
    pixel (0, 0); pixel_w and pixel_h are positive pixel sizes in meters,
    pixel_h applied downward.
    """

    origin_x: float
    origin_y: float
    pixel_w: float
    pixel_h: float

    def __post_init__(self) -> None:
        if not (self.pixel_w > 0 and self.pixel_h > 0):
            raise ValueError(f"pixel sizes must be positive, got {self.pixel_w}, {self.pixel_h}")

    def world_to_pixel(self, x: float, y: float) -> XY:
        """Map world (x, y) to fractional (col, row)."""
        return (x - self.origin_x) / self.pixel_w, (self.origin_y - y) / self.pixel_h

    def pixel_to_world(self, col: float, row: float) -> XY:
        """Map fractional (col, row) to world (x, y). Inverse of world_to_pixel."""
        return self.origin_x + col * self.pixel_w, self.origin_y - row * self.pixel_h

    def shifted(self, col_off: float, row_off: float) -> "GeoTransform":
        """Transform of a sub-raster whose pixel (0,0) sits at (col_off, row_off)."""
        x, y = self.pixel_to_world(col_off, row_off)
        return GeoTransform(x, y, self.pixel_w, self.pixel_h)

    def scaled(self, factor: float) -> "GeoTransform":
        """Same origin, pixel size multiplied by `factor` (2.0 = half resolution)."""
        return GeoTransform(self.origin_x, self.origin_y, self.pixel_w * factor, self.pixel_h * factor)


def _as_ring(ring) -> tuple[XY, ...]:
    return tuple((float(x), float(y)) for x, y in ring)


@dataclass(frozen=True)
class Polygon:
    """A polygon with an exterior ring and optional holes, in world meters."""

    exterior: tuple[XY, ...]
    holes: tuple[tuple[XY, ...], ...] = ()

    def __init__(self, exterior, holes=()):
        object.__setattr__(self, "exterior", _as_ring(exterior))
        object.__setattr__(self, "holes", tuple(_as_ring(h) for h in holes))

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(min_x, min_y, max_x, max_y) of the exterior ring."""
        xs = [p[0] for p in self.exterior]
        ys = [p[1] for p in self.exterior]
        return min(xs), min(ys), max(xs), max(ys)

    def translated(self, dx: float, dy: float) -> "Polygon":
        move = lambda ring: tuple((x + dx, y + dy) for x, y in ring)
        return Polygon(move(self.exterior), tuple(move(h) for h in self.holes))


def check_ring(ring: tuple[XY, ...]) -> None:
    """Raise InvalidRing unless the ring is closed with at least 4 points."""
    if len(ring) < 4:
        raise InvalidRing(f"ring has {len(ring)} points, need >= 4 including closure")
    if ring[0] != ring[-1]:
        raise InvalidRing(f"ring is not closed: {ring[0]} != {ring[-1]}")


def ring_area_signed(ring: tuple[XY, ...]) -> float:
    """Signed shoelace area of a closed ring (positive = counter-clockwise).

    Coordinates are taken relative to the first vertex so large projected
    offsets (e.g. UTM eastings) do not wash out the area in cancellation.
    """
    check_ring(ring)
    ox, oy = ring[0]
    acc = 0.0
    for (x0, y0), (x1, y1) in zip(ring[:-1], ring[1:]):
        acc += (x0 - ox) * (y1 - oy) - (x1 - ox) * (y0 - oy)
    return acc / 2.0


def polygon_area(p: Polygon) -> float:
    """Area in m²: shoelace of the exterior minus the holes, never negative."""
    area = abs(ring_area_signed(p.exterior))
    for hole in p.holes:
        area -= abs(ring_area_signed(hole))
    return max(area, 0.0)


def polygon_centroid(p: Polygon) -> XY:
    """Area centroid of the exterior ring (holes ignored); falls back to the
    vertex mean for zero-area rings."""
    ring = p.exterior
    check_ring(ring)
    ox, oy = ring[0]
    a = cx = cy = 0.0
    for (x0, y0), (x1, y1) in zip(ring[:-1], ring[1:]):
        x0, y0, x1, y1 = x0 - ox, y0 - oy, x1 - ox, y1 - oy
        cross = x0 * y1 - x1 * y0
        a += cross
        cx += (x0 + x1) * cross
        cy += (y0 + y1) * cross
    if a == 0.0:
        xs = [x for x, _ in ring[:-1]]
        ys = [y for _, y in ring[:-1]]
        return sum(xs) / len(xs), sum(ys) / len(ys)
    return ox + cx / (3.0 * a), oy + cy / (3.0 * a)


def to_shapely(p: Polygon) -> _sgeom.Polygon:
    check_ring(p.exterior)
    for h in p.holes:
        check_ring(h)
    return _sgeom.Polygon(p.exterior, [list(h) for h in p.holes])


def from_shapely(g: _sgeom.Polygon) -> Polygon:
    return Polygon(tuple(g.exterior.coords), tuple(tuple(r.coords) for r in g.interiors))


def _valid(g):
    return g if g.is_valid else _make_valid(g)


def polygon_intersection_area(a: Polygon, b: Polygon) -> float:
    """Area of a ∩ b in m². Zero-area (point or line) contact contributes nothing."""
    ga, gb = _valid(to_shapely(a)), _valid(to_shapely(b))
    inter = ga.intersection(gb, grid_size=SNAP_GRID_M)
    return float(inter.area)


def polygon_intersects(a: Polygon, b: Polygon, min_area: float = 0.0) -> bool:
    """True iff area(a ∩ b) strictly exceeds min_area.

    With min_area = 0 a mere boundary touch does not count.
    """
    if min_area < 0:
        raise ValueError("min_area must be >= 0")
    bxa, bxb = a.bounds, b.bounds
    if bxa[2] < bxb[0] or bxb[2] < bxa[0] or bxa[3] < bxb[1] or bxb[3] < bxa[1]:
        return False if min_area >= 0 else True
    return polygon_intersection_area(a, b) > min_area


def _segments(ring: tuple[XY, ...]):
    return list(zip(ring[:-1], ring[1:]))


def _segs_cross(p1, p2, p3, p4) -> bool:
    """Proper crossing test for open segments (shared endpoints do not count)."""

    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return (v > 0) - (v < 0)

    o1, o2 = orient(p1, p2, p3), orient(p1, p2, p4)
    o3, o4 = orient(p3, p4, p1), orient(p3, p4, p2)
    return o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4)


def ring_is_simple(ring: tuple[XY, ...]) -> bool:
    """True when no two non-adjacent edges of the ring properly cross."""
    check_ring(ring)
    segs = _segments(ring)
    n = len(segs)
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue  # first and last edge share the closure vertex
            if _segs_cross(*segs[i], *segs[j]):
                return False
    return True


def polygon_is_valid(p: Polygon) -> bool:
    """Cheap validity: rings closed, simple, and holes inside the exterior."""
    try:
        check_ring(p.exterior)
        for h in p.holes:
            check_ring(h)
    except InvalidRing:
        return False
    if not all(ring_is_simple(r) for r in (p.exterior, *p.holes)):
        return False
    return to_shapely(p).is_valid


@dataclass(frozen=True)
class Raster:
    """A georeferenced row-major grid: (h, w) or (h, w, channels) values."""

    values: np.ndarray
    transform: GeoTransform
    nodata: float | None = None

    def __post_init__(self) -> None:
        if self.values.ndim not in (2, 3):
            raise ValueError(f"raster values must be 2-D or 3-D, got ndim={self.values.ndim}")

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(min_x, min_y, max_x, max_y) covered by the pixel grid."""
        t = self.transform
        x0, y0 = t.pixel_to_world(0, self.height)
        x1, y1 = t.pixel_to_world(self.width, 0)
        return x0, y0, x1, y1


def prob_raster(values: np.ndarray, transform: GeoTransform, nodata: float | None = None) -> Raster:
    """Validate and wrap a probability grid: every finite value must be in [0, 1]."""
    arr = np.asarray(values, dtype=np.float64)
    finite = arr[np.isfinite(arr)]
    if finite.size and (finite.min() < 0.0 or finite.max() > 1.0):
        raise ValueError(f"probabilities outside [0,1]: min={finite.min()}, max={finite.max()}")
    return Raster(arr, transform, nodata)


def rect_polygon(min_x: float, min_y: float, max_x: float, max_y: float) -> Polygon:
    """Axis-aligned rectangle as a closed CCW ring."""
    return Polygon(
        ((min_x, min_y), (max_x, min_y), (max_x, max_y), (min_x, max_y), (min_x, min_y))
    )


def regular_polygon(cx: float, cy: float, radius: float, n: int, phase: float = 0.0) -> Polygon:
    """Regular n-gon, useful for synthetic shapes and tests."""
    pts = []
    for k in range(n):
        a = phase + 2.0 * math.pi * k / n
        pts.append((cx + radius * math.cos(a), cy + radius * math.sin(a)))
    pts.append(pts[0])
    return Polygon(tuple(pts))
