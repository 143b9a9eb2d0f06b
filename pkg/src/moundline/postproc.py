"""Probability rasters to reviewable vector candidates.

The chain is blur -> threshold -> polygonize -> filter/stats. Polygonization
traces exact pixel boundaries of 4-connected components (8-connected by
flag), keeping holes, so the summed polygon area equals foreground pixel
count times pixel area exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geo import GeoTransform, Polygon, Raster, polygon_area, prob_raster, ring_area_signed


class DegenerateResult(ValueError):
    pass


@dataclass(frozen=True)
class CandidateShape:
    id: str
    shape: Polygon
    peak_prob: float
    mean_prob: float
    area_m2: float
    source_tile: str = ""

    def __post_init__(self) -> None:
        if self.peak_prob < self.mean_prob - 1e-12:
            raise ValueError("peak_prob must be >= mean_prob")
        if self.area_m2 <= 0:
            raise ValueError("candidate area must be positive")


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1-D kernel with radius ceil(3*sigma), normalized to sum 1."""
    radius = int(math.ceil(3.0 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(r: Raster, sigma: float) -> Raster:
    """Separable Gaussian blur with edge-mirroring borders.

    sigma = 0 returns the input unchanged. Nodata cells are treated as 0 for
    the convolution and restored afterwards.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return r
    vals = np.asarray(r.values, dtype=np.float64)
    nodata_mask = None
    if r.nodata is not None:
        nodata_mask = np.isnan(vals) if np.isnan(r.nodata) else vals == r.nodata
        vals = np.where(nodata_mask, 0.0, vals)
    k = gaussian_kernel(sigma)
    # scipy 'reflect' mirrors including the edge pixel
    out = ndimage.correlate1d(vals, k, axis=0, mode="reflect")
    out = ndimage.correlate1d(out, k, axis=1, mode="reflect")
    out = np.clip(out, 0.0, 1.0)
    if nodata_mask is not None:
        out[nodata_mask] = r.nodata
    return prob_raster(out, r.transform, r.nodata)


def threshold_clip(r: Raster, t: float) -> Raster:
    """Binary raster: 1 where value >= t, else 0; nodata counts as 0."""
    if not (0.0 <= t <= 1.0):
        raise ValueError("threshold must be in [0, 1]")
    vals = np.asarray(r.values, dtype=np.float64)
    if r.nodata is not None:
        invalid = np.isnan(vals) if np.isnan(r.nodata) else vals == r.nodata
    else:
        invalid = np.isnan(vals)
    out = (vals >= t) & ~invalid
    return Raster(out.astype(np.uint8), r.transform)


# --- polygonization ------------------------------------------------------------

_FOUR = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
_EIGHT = np.ones((3, 3), dtype=int)


def _component_edges(lab: np.ndarray, n: int):
    """Directed boundary edges per label, component interior on the left in
    world orientation (exterior rings close counter-clockwise).

    Vertices are pixel corners (x=col, y=row); returns, per label, a dict
    start_vertex -> list of end vertices.
    """
    h, w = lab.shape
    padded = np.zeros((h + 2, w + 2), dtype=lab.dtype)
    padded[1:-1, 1:-1] = lab
    edges: list[dict] = [dict() for _ in range(n + 1)]
    core = padded[1:-1, 1:-1]
    fg = core > 0
    sides = (
        (padded[1:-1, :-2], lambda r, c: ((c, r), (c, r + 1))),  # left: down
        (padded[2:, 1:-1], lambda r, c: ((c, r + 1), (c + 1, r + 1))),  # bottom: right
        (padded[1:-1, 2:], lambda r, c: ((c + 1, r + 1), (c + 1, r))),  # right: up
        (padded[:-2, 1:-1], lambda r, c: ((c + 1, r), (c, r))),  # top: left
    )
    for neighbor, seg in sides:
        diff = fg & (neighbor != core)
        for r, c in zip(*np.nonzero(diff)):
            start, end = seg(int(r), int(c))
            edges[core[r, c]].setdefault(start, []).append(end)
    return edges


def _right_turn(d: tuple[int, int]) -> tuple[int, int]:
    """Clockwise quarter turn of a grid direction, in world orientation."""
    return (-d[1], d[0])


def _trace_loops(adj: dict) -> list[list[tuple[int, int]]]:
    """Stitch directed edges into closed loops.

    At a pinch vertex (two incoming, two outgoing edges) the walk takes the
    right-hand turn in world orientation; with interior-on-the-left edges
    this keeps each component to exactly one exterior ring and one ring per
    hole, and lets 8-connected diagonal joins pass through the shared corner.
    """

    def pick(current, d_in, outs):
        if len(outs) == 1:
            return outs[0]
        want = _right_turn(d_in)
        for end in outs:
            if (end[0] - current[0], end[1] - current[1]) == want:
                return end
        return outs[0]

    loops = []
    for start in list(adj.keys()):
        while adj.get(start):
            first = adj[start][0]
            adj[start].remove(first)
            first_dir = (first[0] - start[0], first[1] - start[1])
            loop = [start, first]
            prev, current = start, first
            while True:
                d_in = (current[0] - prev[0], current[1] - prev[1])
                outs = adj.get(current, [])
                if current == start:
                    # close only if the turn policy pairs this arrival with
                    # the edge the loop started on; otherwise pass through
                    if not outs or _right_turn(d_in) == first_dir:
                        break
                if not outs:
                    raise RuntimeError("boundary tracing hit a dead end")
                nxt = pick(current, d_in, outs)
                outs.remove(nxt)
                if not outs:
                    adj.pop(current, None)
                loop.append(nxt)
                prev, current = current, nxt
            loops.append(_merge_collinear(loop))
    return loops


def _merge_collinear(loop: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Drop vertices interior to straight runs; loop stays closed."""
    pts = loop[:-1]
    n = len(pts)
    keep = []
    for i in range(n):
        a, b, c = pts[i - 1], pts[i], pts[(i + 1) % n]
        if (b[0] - a[0]) * (c[1] - b[1]) != (b[1] - a[1]) * (c[0] - b[0]):
            keep.append(b)
    keep.append(keep[0])
    return keep


def polygonize(m: Raster, transform: GeoTransform | None = None, connectivity: int = 4) -> list[Polygon]:
    """One polygon per foreground component, exact pixel boundaries, holes kept.

    Ring coordinates are pixel corners mapped through the transform; exterior
    rings are counter-clockwise in world coordinates, holes clockwise.
    """
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    t = transform or m.transform
    arr = np.asarray(m.values)
    if arr.ndim != 2:
        raise ValueError("polygonize expects a single-band binary raster")
    structure = _FOUR if connectivity == 4 else _EIGHT
    lab, n = ndimage.label(arr != 0, structure=structure)
    if n == 0:
        return []
    per_label = _component_edges(lab, n)
    polys = []
    for k in range(1, n + 1):
        loops = _trace_loops(per_label[k])
        rings = []
        for loop in loops:
            world = tuple(t.pixel_to_world(x, y) for x, y in loop)
            rings.append((ring_area_signed(world), world))
        exteriors = [r for r in rings if r[0] > 0]
        holes = [r[1] for r in rings if r[0] < 0]
        if len(exteriors) != 1:
            raise RuntimeError(
                f"component {k}: expected exactly one exterior ring, got {len(exteriors)}"
            )
        polys.append(Polygon(exteriors[0][1], tuple(holes)))
    return polys


# --- simplification --------------------------------------------------------------

def _dp(points: list[tuple[float, float]], tol: float) -> list[tuple[float, float]]:
    """Douglas-Peucker on an open polyline, endpoints kept."""
    if len(points) <= 2:
        return list(points)
    ax, ay = points[0]
    bx, by = points[-1]
    dx, dy = bx - ax, by - ay
    norm = math.hypot(dx, dy)
    worst, worst_i = -1.0, -1
    for i in range(1, len(points) - 1):
        px, py = points[i]
        if norm == 0:
            d = math.hypot(px - ax, py - ay)
        else:
            d = abs(dx * (py - ay) - dy * (px - ax)) / norm
        if d > worst:
            worst, worst_i = d, i
    if worst <= tol:
        return [points[0], points[-1]]
    left = _dp(points[: worst_i + 1], tol)
    right = _dp(points[worst_i:], tol)
    return left[:-1] + right


def _simplify_ring(ring, tol: float):
    pts = list(ring[:-1])
    # anchor at the vertex farthest from the first to keep the split stable
    anchor = max(range(1, len(pts)), key=lambda i: (pts[i][0] - pts[0][0]) ** 2 + (pts[i][1] - pts[0][1]) ** 2)
    first = _dp(pts[: anchor + 1], tol)
    second = _dp(pts[anchor:] + [pts[0]], tol)
    out = first[:-1] + second[:-1]
    out.append(out[0])
    return tuple(out)


def simplify(p: Polygon, tolerance: float) -> Polygon:
    """Douglas-Peucker per ring; tolerance 0 returns the polygon unchanged."""
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    if tolerance == 0:
        return p
    ext = _simplify_ring(p.exterior, tolerance)
    if len(ext) < 4:
        raise DegenerateResult("exterior collapsed below a valid ring")
    holes = []
    for h in p.holes:
        hs = _simplify_ring(h, tolerance)
        if len(hs) < 4:
            raise DegenerateResult("hole collapsed below a valid ring")
        holes.append(hs)
    return Polygon(ext, tuple(holes))


def buffer_square(p: Polygon, d: float) -> Polygon:
    """Minkowski sum with an axis-aligned square of side 2d (optional smoothing)."""
    if d <= 0:
        return p
    import shapely
    import shapely.geometry as sgeom
    from shapely.ops import unary_union

    from .geo import from_shapely, to_shapely

    pieces = [to_shapely(p)]
    offsets = [(-d, -d), (-d, d), (d, -d), (d, d)]
    for ring in (p.exterior, *p.holes):
        for (x0, y0), (x1, y1) in zip(ring[:-1], ring[1:]):
            pts = [(x + ox, y + oy) for x, y in ((x0, y0), (x1, y1)) for ox, oy in offsets]
            pieces.append(sgeom.MultiPoint(pts).convex_hull)
    merged = unary_union(pieces)
    if merged.geom_type == "MultiPolygon":
        merged = max(merged.geoms, key=lambda g: g.area)
    return from_shapely(merged)


# --- candidate extraction ---------------------------------------------------------

def extract_candidates(
    r: Raster,
    sigma: float = 2.0,
    t: float = 0.5,
    min_area: float = 0.0,
    source_tile: str = "",
    connectivity: int = 4,
) -> list[CandidateShape]:
    """Blur, threshold, polygonize, then keep components of at least min_area.

    Candidate stats (peak/mean) come from the blurred raster over the
    component's own pixels. Ids are deterministic:
    `<source_tile>@t<threshold>#<k>` in component label order.
    """
    blurred = gaussian_blur(r, sigma)
    binary = threshold_clip(blurred, t)
    arr = binary.values
    structure = _FOUR if connectivity == 4 else _EIGHT
    lab, n = ndimage.label(arr != 0, structure=structure)
    if n == 0:
        return []
    polys = polygonize(binary, r.transform, connectivity)
    pixel_area = r.transform.pixel_w * r.transform.pixel_h
    bvals = np.asarray(blurred.values, dtype=np.float64)
    out = []
    for k, poly in enumerate(polys, start=1):
        sel = lab == k
        area = float(sel.sum()) * pixel_area
        if area < min_area:
            continue
        inside = bvals[sel]
        out.append(
            CandidateShape(
                id=f"{source_tile}@t{t:.4f}#{k}",
                shape=poly,
                peak_prob=float(inside.max()),
                mean_prob=float(inside.mean()),
                area_m2=area,
                source_tile=source_tile,
            )
        )
    return out


def candidates_to_features(cands: list[CandidateShape]) -> list[dict]:
    from . import formats

    return [
        formats.feature(
            c.shape,
            {
                "id": c.id,
                "peak_prob": c.peak_prob,
                "mean_prob": c.mean_prob,
                "area_m2": c.area_m2,
                "source_tile": c.source_tile,
            },
        )
        for c in cands
    ]


def candidates_from_features(feats: list[dict]) -> list[CandidateShape]:
    from . import formats

    out = []
    for f in feats:
        p = f["properties"]
        out.append(
            CandidateShape(
                id=p["id"],
                shape=formats.geojson_to_polygon(f["geometry"]),
                peak_prob=p["peak_prob"],
                mean_prob=p["mean_prob"],
                area_m2=p["area_m2"],
                source_tile=p.get("source_tile", ""),
            )
        )
    return out
