"""Synthetic floodplain scenes: the desk-scale stand-in for real imagery.

Each scene is a smooth, lightly speckled ground with a few bright elliptical
mounds (the ground truth), plus distractors with no ground-truth entry:
contrast-inverted mounds and field-boundary strips. Everything derives from
one seed, so scenes are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .catalog import NegativeKind, NegativeRegion, SiteRecord, Visibility
from .geo import GeoTransform, Polygon, Raster, polygon_area, rect_polygon


class PlacementFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class SceneSpec:
    extent_m: tuple[float, float] = (256.0, 256.0)
    ppm: float = 1.0
    n_mounds: int = 1
    mound_radius_m: tuple[float, float] = (10.0, 22.0)
    eccentricity: tuple[float, float] = (0.0, 0.6)
    mound_contrast: tuple[float, float] = (30.0, 60.0)
    background_noise: float = 6.0
    clutter: int = 2
    seed: int = 0
    margin_m: float | None = None  # min distance of mound centers from scene edges

    def __post_init__(self) -> None:
        if self.ppm <= 0:
            raise ValueError("ppm must be positive")
        for name in ("mound_radius_m", "eccentricity", "mound_contrast"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ValueError(f"{name} range is empty")
        if not (0 <= self.eccentricity[0] and self.eccentricity[1] < 1):
            raise ValueError("eccentricity must stay in [0, 1)")


@dataclass(frozen=True)
class Scene:
    image: Raster
    sites: tuple[SiteRecord, ...]
    spec: SceneSpec


ELLIPSE_VERTICES = 32

# channel tint of the rendered ground (sandy earth tones)
_TINT = (1.06, 1.0, 0.92)


def _ellipse_polygon(cx, cy, a, b, theta, transform) -> Polygon:
    """World-coordinate 32-gon approximation of a rotated ellipse given in
    pixel units."""
    ct, st = math.cos(theta), math.sin(theta)
    pts = []
    for k in range(ELLIPSE_VERTICES):
        phi = 2.0 * math.pi * k / ELLIPSE_VERTICES
        ex, ey = a * math.cos(phi), b * math.sin(phi)
        px = cx + ex * ct - ey * st
        py = cy + ex * st + ey * ct
        pts.append(transform.pixel_to_world(px, py))
    pts.append(pts[0])
    return Polygon(tuple(pts))


def _bump(shape, cx, cy, a, b, theta) -> np.ndarray:
    """Radial profile (1 - d^2) over a rotated ellipse. Mean over the ellipse
    is 1/2, so a peak of 2c lifts the mean interior brightness by c."""
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    ct, st = math.cos(theta), math.sin(theta)
    dx, dy = xx + 0.5 - cx, yy + 0.5 - cy
    u = (dx * ct + dy * st) / a
    v = (-dx * st + dy * ct) / b
    d2 = u * u + v * v
    return np.maximum(0.0, 1.0 - d2)


def generate_scene(spec: SceneSpec, origin: tuple[float, float] = (0.0, 0.0), scene_id: str = "scene") -> Scene:
    """Deterministic scene for one seed; mounds never overlap each other or
    the clutter. `origin` is the world position of the scene's lower-left
    corner."""
    rng = np.random.default_rng(spec.seed)
    w_px = int(round(spec.extent_m[0] * spec.ppm))
    h_px = int(round(spec.extent_m[1] * spec.ppm))
    transform = GeoTransform(origin[0], origin[1] + spec.extent_m[1], 1.0 / spec.ppm, 1.0 / spec.ppm)

    # smooth ground: low-frequency field + speckle
    coarse = rng.normal(0.0, 1.0, (5, 5))
    lowfreq = ndimage.zoom(coarse, (h_px / 5.0, w_px / 5.0), order=3, mode="nearest")
    lowfreq = lowfreq[:h_px, :w_px]
    ground = 115.0 + 14.0 * lowfreq + rng.normal(0.0, spec.background_noise, (h_px, w_px))

    margin = spec.margin_m if spec.margin_m is not None else spec.mound_radius_m[1] * spec.ppm + 4.0
    placed: list[tuple[float, float, float]] = []  # cx, cy, clearance radius

    def place(radius_px: float):
        lo_x, hi_x = margin, w_px - margin
        lo_y, hi_y = margin, h_px - margin
        if hi_x <= lo_x or hi_y <= lo_y:
            raise PlacementFailed("margins leave no room for placement")
        for _ in range(1000):
            cx = rng.uniform(lo_x, hi_x)
            cy = rng.uniform(lo_y, hi_y)
            if all(math.hypot(cx - px, cy - py) > radius_px + pr + 4.0 for px, py, pr in placed):
                placed.append((cx, cy, radius_px))
                return cx, cy
        raise PlacementFailed(f"no room for an object of radius {radius_px}px")

    sites = []
    for j in range(spec.n_mounds):
        a = rng.uniform(*spec.mound_radius_m) * spec.ppm
        ecc = rng.uniform(*spec.eccentricity)
        b = a * math.sqrt(1.0 - ecc * ecc)
        theta = rng.uniform(0.0, math.pi)
        contrast = rng.uniform(*spec.mound_contrast)
        cx, cy = place(a)
        ground += 2.0 * contrast * _bump((h_px, w_px), cx, cy, a, b, theta)
        shape = _ellipse_polygon(cx, cy, a, b, theta, transform)
        sites.append(
            SiteRecord.make(
                id=f"{scene_id}-m{j}",
                shape=shape,
                visibility=Visibility.VISIBLE,
            )
        )

    for j in range(spec.clutter):
        a = rng.uniform(*spec.mound_radius_m) * spec.ppm
        theta = rng.uniform(0.0, math.pi)
        contrast = rng.uniform(*spec.mound_contrast)
        kind = rng.integers(0, 2)
        if kind == 0:
            # inverted-contrast mound: pond-like dark ellipse, no gt entry;
            # clutter that finds no room is skipped, not fatal
            b = a * math.sqrt(1.0 - rng.uniform(*spec.eccentricity) ** 2)
            try:
                cx, cy = place(a)
            except PlacementFailed:
                continue
            ground -= 1.6 * contrast * _bump((h_px, w_px), cx, cy, a, b, theta)
        else:
            # field boundary: a straight brightness step across the scene
            yy, xx = np.mgrid[0:h_px, 0:w_px]
            nx, ny = math.cos(theta), math.sin(theta)
            offset = rng.uniform(0.25, 0.75) * (nx * w_px + ny * h_px)
            side = (xx * nx + yy * ny - offset) > 0
            ground += np.where(side, rng.uniform(4.0, 10.0), 0.0)

    rgb = np.stack([np.clip(ground * t, 0, 255) for t in _TINT], axis=-1)
    image = Raster(np.floor(rgb + 0.5).astype(np.uint8), transform)
    return Scene(image=image, sites=tuple(sites), spec=spec)


def scene_extent_polygon(scene: Scene) -> Polygon:
    x0, y0, x1, y1 = scene.image.extent
    return rect_polygon(x0, y0, x1, y1)


def scene_negative_region(scene: Scene, scene_id: str, rng: np.random.Generator) -> NegativeRegion:
    kind = list(NegativeKind)[int(rng.integers(0, len(NegativeKind)))]
    return NegativeRegion(id=scene_id, shape=scene_extent_polygon(scene), kind=kind)
