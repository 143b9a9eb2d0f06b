"""Region sweeps and heatmap mosaics.

A sweep covers a rectangular extent with overlapping prediction windows; the
stitcher averages every covering prediction per cell (plain sum/count in
double precision, so tile order never changes the result) and leaves
uncovered cells as nodata.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geo import GeoTransform, Raster, prob_raster


class ExtentTooSmall(ValueError):
    pass


class PixelSizeMismatch(ValueError):
    pass


Extent = tuple[float, float, float, float]  # min_x, min_y, max_x, max_y


@dataclass(frozen=True)
class RegionSweep:
    extent: Extent
    tile_side: int
    stride: int
    ppm: float = 1.0

    def __post_init__(self) -> None:
        if not (0 < self.stride <= self.tile_side):
            raise ValueError("need 0 < stride <= tile_side")
        if self.ppm <= 0:
            raise ValueError("ppm must be positive")
        x0, y0, x1, y1 = self.extent
        if not (x1 > x0 and y1 > y0):
            raise ValueError("degenerate extent")


@dataclass(frozen=True)
class SweepWindow:
    col_off: int
    row_off: int
    side: int
    transform: GeoTransform


def region_grid(extent: Extent, ppm: float) -> tuple[int, int, GeoTransform]:
    """Pixel dimensions and transform of the region raster."""
    x0, y0, x1, y1 = extent
    w = max(1, int(round((x1 - x0) * ppm)))
    h = max(1, int(round((y1 - y0) * ppm)))
    return w, h, GeoTransform(x0, y1, 1.0 / ppm, 1.0 / ppm)


def _axis_offsets(length: int, side: int, stride: int) -> list[int]:
    if length < side:
        raise ExtentTooSmall(f"extent of {length}px is smaller than one {side}px tile")
    count = math.ceil((length - side) / stride) + 1
    return [min(i * stride, length - side) for i in range(count)]


def plan_sweep(s: RegionSweep) -> list[SweepWindow]:
    """Grid of windows covering the extent; the last row/column is clamped
    inward so every window stays inside."""
    w, h, grid = region_grid(s.extent, s.ppm)
    cols = _axis_offsets(w, s.tile_side, s.stride)
    rows = _axis_offsets(h, s.tile_side, s.stride)
    out = []
    for r in rows:
        for c in cols:
            out.append(SweepWindow(c, r, s.tile_side, grid.shifted(c, r)))
    return out


def stitch(preds: list[Raster], extent: Extent, ppm: float) -> Raster:
    """Average overlapping probability rasters onto the region grid.

    Each prediction is placed by its own transform; all must share the region
    pixel size. Cells no prediction covers become NaN nodata.
    """
    w, h, grid = region_grid(extent, ppm)
    acc = np.zeros((h, w), dtype=np.float64)
    cnt = np.zeros((h, w), dtype=np.int64)
    px = 1.0 / ppm
    for p in preds:
        t = p.transform
        if not (math.isclose(t.pixel_w, px, rel_tol=1e-9) and math.isclose(t.pixel_h, px, rel_tol=1e-9)):
            raise PixelSizeMismatch(f"prediction pixel {t.pixel_w} != region pixel {px}")
        col = int(round((t.origin_x - grid.origin_x) / px))
        row = int(round((grid.origin_y - t.origin_y) / px))
        vals = np.asarray(p.values, dtype=np.float64)
        ph, pw = vals.shape
        r0, c0 = max(row, 0), max(col, 0)
        r1, c1 = min(row + ph, h), min(col + pw, w)
        if r0 >= r1 or c0 >= c1:
            continue
        sub = vals[r0 - row : r1 - row, c0 - col : c1 - col]
        valid = ~np.isnan(sub)
        acc[r0:r1, c0:c1] += np.where(valid, sub, 0.0)
        cnt[r0:r1, c0:c1] += valid
    out = np.full((h, w), np.nan)
    covered = cnt > 0
    out[covered] = acc[covered] / cnt[covered]
    return prob_raster(out, grid, nodata=float("nan"))


# --- rendering ---------------------------------------------------------------

def heat_ramp() -> np.ndarray:
    """256-entry ramp: black (0) -> red (85) -> yellow (170) -> white (255),
    linear in between."""
    ramp = np.zeros((256, 3), dtype=np.uint8)
    for i in range(256):
        if i <= 85:
            f = i / 85.0
            rgb = (255 * f, 0, 0)
        elif i <= 170:
            f = (i - 85) / 85.0
            rgb = (255, 255 * f, 0)
        else:
            f = (i - 170) / 85.0
            rgb = (255, 255, 255 * f)
        ramp[i] = [int(v + 0.5) for v in rgb]
    return ramp


def render_heatmap(r: Raster, ramp: str = "heat") -> Raster:
    """8-bit RGBA render: gray maps p to round(255*p) on all channels, heat
    uses the documented black-red-yellow-white ramp; nodata is transparent."""
    if ramp not in ("gray", "heat"):
        raise ValueError(f"unknown ramp {ramp!r}")
    vals = np.asarray(r.values, dtype=np.float64)
    invalid = np.isnan(vals)
    if r.nodata is not None and not np.isnan(r.nodata):
        invalid |= vals == r.nodata
    # round half up, per the documented rule round(255 * p)
    level = np.floor(np.nan_to_num(vals, nan=0.0) * 255.0 + 0.5).astype(np.int64).clip(0, 255)
    if ramp == "gray":
        rgb = np.repeat(level[:, :, None], 3, axis=2).astype(np.uint8)
    else:
        rgb = heat_ramp()[level]
    alpha = np.where(invalid, 0, 255).astype(np.uint8)
    rgba = np.concatenate([rgb, alpha[:, :, None]], axis=2)
    return Raster(rgba, r.transform)


def write_heatmap_png(path, r: Raster, ramp: str = "heat") -> None:
    from PIL import Image

    from .formats import world_file_for, write_world_file

    rgba = render_heatmap(r, ramp)
    Image.fromarray(rgba.values, "RGBA").save(path)
    write_world_file(world_file_for(path), r.transform)
