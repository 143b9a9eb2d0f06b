"""Tile production: imagery windows, ground-truth masks, crops, augmentation.

A Tile pairs an RGB window with a co-registered binary mask. Augmentation is
restricted to quarter-turn rotations and mirroring so masks stay pixel-exact,
plus brightness/contrast jitter on the image only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .geo import GeoTransform, Polygon, Raster
from . import formats


class OutOfBounds(ValueError):
    pass


class CropTooLarge(ValueError):
    pass


class OddDimensions(ValueError):
    pass


@dataclass(frozen=True)
class AugSpec:
    rot_quarter: int = 0
    mirror: bool = False
    brightness_shift: float = 0.0
    contrast_scale: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.rot_quarter not in (0, 1, 2, 3):
            raise ValueError(f"rot_quarter must be 0..3, got {self.rot_quarter}")

    def to_json(self) -> dict:
        return {
            "rot_quarter": self.rot_quarter,
            "mirror": self.mirror,
            "brightness_shift": self.brightness_shift,
            "contrast_scale": self.contrast_scale,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, d: dict) -> "AugSpec":
        return cls(**d)


IDENTITY_AUG = AugSpec()


@dataclass(frozen=True)
class Tile:
    image: Raster
    mask: Raster
    source_id: str
    crop_offset: tuple[int, int] = (0, 0)
    aug: AugSpec = IDENTITY_AUG

    def __post_init__(self) -> None:
        if self.image.values.shape[:2] != self.mask.values.shape[:2]:
            raise ValueError("image and mask dimensions differ")
        if self.image.transform != self.mask.transform:
            raise ValueError("image and mask transforms differ")

    @property
    def width(self) -> int:
        return self.image.width

    @property
    def height(self) -> int:
        return self.image.height


def extract_window(
    image: Raster,
    center: tuple[float, float],
    side_m: float,
    ppm: float,
    policy: str = "strict",
) -> Raster:
    """Square window of round(side_m * ppm) pixels centered on a world point.

    Pixels are gathered nearest-neighbor from the source grid, which makes
    the op an exact copy when the window aligns with source pixels. Policy
    'strict' raises OutOfBounds if any target pixel falls outside the source;
    'pad' fills those pixels with zeros.
    """
    if side_m <= 0 or ppm <= 0:
        raise ValueError("side_m and ppm must be positive")
    if policy not in ("strict", "pad"):
        raise ValueError(f"unknown policy {policy!r}")
    side_px = int(round(side_m * ppm))
    pw = 1.0 / ppm
    cx, cy = center
    origin = GeoTransform(cx - side_px * pw / 2.0, cy + side_px * pw / 2.0, pw, pw)

    rows = np.arange(side_px) + 0.5
    cols = np.arange(side_px) + 0.5
    xs = origin.origin_x + cols * pw
    ys = origin.origin_y - rows * pw
    src = image.transform
    src_cols = np.floor((xs - src.origin_x) / src.pixel_w).astype(np.int64)
    src_rows = np.floor((src.origin_y - ys) / src.pixel_h).astype(np.int64)

    in_c = (src_cols >= 0) & (src_cols < image.width)
    in_r = (src_rows >= 0) & (src_rows < image.height)
    if policy == "strict" and not (in_c.all() and in_r.all()):
        raise OutOfBounds(
            f"window {side_px}px at {center} leaves the source raster"
        )
    cc = np.clip(src_cols, 0, image.width - 1)
    rr = np.clip(src_rows, 0, image.height - 1)
    out = image.values[np.ix_(rr, cc)]
    if policy == "pad":
        valid = np.outer(in_r, in_c)
        out = out.copy()
        out[~valid] = 0
    return Raster(np.ascontiguousarray(out), origin, image.nodata)


def rasterize_mask(
    shapes: list[Polygon],
    transform: GeoTransform,
    width: int,
    height: int,
) -> Raster:
    """Binary mask: pixel = 1 iff its center lies inside any polygon.

    Even-odd scanline fill per polygon (holes included in the parity), OR-ed
    across polygons.
    """
    out = np.zeros((height, width), dtype=np.uint8)
    if not shapes:
        return Raster(out, transform)
    centers_x = transform.origin_x + (np.arange(width) + 0.5) * transform.pixel_w
    for poly in shapes:
        rings = (poly.exterior, *poly.holes)
        edges = []
        for ring in rings:
            arr = np.asarray(ring, dtype=np.float64)
            x0, y0 = arr[:-1, 0], arr[:-1, 1]
            x1, y1 = arr[1:, 0], arr[1:, 1]
            keep = y0 != y1
            edges.append((x0[keep], y0[keep], x1[keep], y1[keep]))
        ex0 = np.concatenate([e[0] for e in edges])
        ey0 = np.concatenate([e[1] for e in edges])
        ex1 = np.concatenate([e[2] for e in edges])
        ey1 = np.concatenate([e[3] for e in edges])
        if ex0.size == 0:
            continue
        min_y, max_y = min(ey0.min(), ey1.min()), max(ey0.max(), ey1.max())
        for row in range(height):
            y = transform.origin_y - (row + 0.5) * transform.pixel_h
            if y < min_y or y > max_y:
                continue
            # half-open span [min(y0,y1), max(y0,y1)) counts each vertex once
            lo = np.minimum(ey0, ey1)
            hi = np.maximum(ey0, ey1)
            hit = (lo <= y) & (y < hi)
            if not hit.any():
                continue
            t = (y - ey0[hit]) / (ey1[hit] - ey0[hit])
            xs = np.sort(ex0[hit] + t * (ex1[hit] - ex0[hit]))
            idx = np.searchsorted(xs, centers_x, side="right")
            out[row] |= (idx % 2).astype(np.uint8)
    return Raster(out, transform)


def random_crop(t: Tile, out_side: int, seed: int) -> Tile:
    """Crop a square of out_side pixels at a seed-deterministic uniform offset."""
    if out_side > min(t.width, t.height):
        raise CropTooLarge(f"crop {out_side} exceeds tile {t.width}x{t.height}")
    rng = np.random.default_rng(seed)
    max_off_c = t.width - out_side
    max_off_r = t.height - out_side
    off_c = int(rng.integers(0, max_off_c + 1))
    off_r = int(rng.integers(0, max_off_r + 1))
    return crop_at(t, off_c, off_r, out_side)


def crop_at(t: Tile, off_c: int, off_r: int, out_side: int) -> Tile:
    if off_c < 0 or off_r < 0 or off_c + out_side > t.width or off_r + out_side > t.height:
        raise CropTooLarge("crop window leaves the tile")
    shifted = t.image.transform.shifted(off_c, off_r)
    img = Raster(
        np.ascontiguousarray(t.image.values[off_r : off_r + out_side, off_c : off_c + out_side]),
        shifted,
        t.image.nodata,
    )
    msk = Raster(
        np.ascontiguousarray(t.mask.values[off_r : off_r + out_side, off_c : off_c + out_side]),
        shifted,
        t.mask.nodata,
    )
    return replace(t, image=img, mask=msk, crop_offset=(off_c, off_r))


def _dihedral(arr: np.ndarray, rot_quarter: int, mirror: bool) -> np.ndarray:
    out = np.rot90(arr, k=rot_quarter, axes=(0, 1))
    if mirror:
        out = out[:, ::-1]
    return np.ascontiguousarray(out)


def augment(t: Tile, spec: AugSpec) -> Tile:
    """Rotate/mirror image and mask together; jitter brightness/contrast on
    the image only. The geotransform is kept nominal: training augmentation
    does not need to stay geodetically meaningful."""
    img = _dihedral(t.image.values, spec.rot_quarter, spec.mirror).astype(np.float64)
    msk = _dihedral(t.mask.values, spec.rot_quarter, spec.mirror)
    img = np.clip(img + spec.brightness_shift, 0.0, 255.0)
    img = np.clip(127.5 + (img - 127.5) * spec.contrast_scale, 0.0, 255.0)
    image = Raster(img.astype(np.uint8), t.image.transform, t.image.nodata)
    mask = Raster(msk, t.mask.transform, t.mask.nodata)
    return replace(t, image=image, mask=mask, aug=spec)


def sample_aug(rng: np.random.Generator, max_brightness: float = 16.0, max_contrast: float = 0.1) -> AugSpec:
    """Draw an AugSpec within the configured jitter bounds."""
    return AugSpec(
        rot_quarter=int(rng.integers(0, 4)),
        mirror=bool(rng.integers(0, 2)),
        brightness_shift=float(rng.uniform(-max_brightness, max_brightness)),
        contrast_scale=float(rng.uniform(1.0 - max_contrast, 1.0 + max_contrast)),
        seed=int(rng.integers(0, 2**31 - 1)),
    )


def downscale_half(t: Tile) -> Tile:
    """Halve both dimensions: 2x2 box average on the image, 2x2 majority on
    the mask (ties count as foreground), pixel size doubled."""
    h, w = t.height, t.width
    if h % 2 or w % 2:
        raise OddDimensions(f"dimensions must be even, got {w}x{h}")
    img = t.image.values.astype(np.float64)
    if img.ndim == 3:
        blocks = img.reshape(h // 2, 2, w // 2, 2, img.shape[2])
        small = blocks.mean(axis=(1, 3))
    else:
        blocks = img.reshape(h // 2, 2, w // 2, 2)
        small = blocks.mean(axis=(1, 3))
    mblocks = t.mask.values.reshape(h // 2, 2, w // 2, 2)
    msum = mblocks.sum(axis=(1, 3))
    msk = (msum >= 2).astype(np.uint8)
    tr = t.image.transform.scaled(2.0)
    img_r = Raster(np.floor(small + 0.5).astype(np.uint8), tr, t.image.nodata)
    msk_r = Raster(msk, tr, t.mask.nodata)
    return replace(t, image=img_r, mask=msk_r)


# --- tile and manifest IO ------------------------------------------------------

def write_tile(dir_path: str | Path, tile_id: str, t: Tile, split: str | None = None) -> None:
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    formats.write_rgb_png(d / f"{tile_id}.png", t.image)
    formats.write_mask_png(d / f"{tile_id}_mask.png", t.mask)
    sidecar = {
        "source_id": t.source_id,
        "crop_offset": list(t.crop_offset),
        "aug": t.aug.to_json(),
        "split": split,
    }
    (d / f"{tile_id}.json").write_text(json.dumps(sidecar, sort_keys=True))


def read_tile(dir_path: str | Path, tile_id: str) -> tuple[Tile, str | None]:
    d = Path(dir_path)
    image = formats.read_rgb_png(d / f"{tile_id}.png")
    mask = formats.read_mask_png(d / f"{tile_id}_mask.png")
    meta = json.loads((d / f"{tile_id}.json").read_text())
    tile = Tile(
        image=image,
        mask=mask,
        source_id=meta["source_id"],
        crop_offset=tuple(meta["crop_offset"]),
        aug=AugSpec.from_json(meta["aug"]),
    )
    return tile, meta.get("split")


def list_tiles(dir_path: str | Path) -> list[str]:
    d = Path(dir_path)
    return sorted(p.stem for p in d.glob("*.json") if not p.stem.endswith("_mask"))


@dataclass(frozen=True)
class ImageryEntry:
    path: Path
    transform: GeoTransform
    width: int
    height: int

    @property
    def extent(self) -> tuple[float, float, float, float]:
        x0, y0 = self.transform.pixel_to_world(0, self.height)
        x1, y1 = self.transform.pixel_to_world(self.width, 0)
        return x0, y0, x1, y1


def read_manifest(path: str | Path) -> list[ImageryEntry]:
    """Ingestion manifest: JSON listing image files and their extents."""
    meta = json.loads(Path(path).read_text())
    root = Path(path).parent
    entries = []
    for item in meta["images"]:
        t = item["transform"]
        entries.append(
            ImageryEntry(
                path=root / item["path"],
                transform=GeoTransform(t["origin_x"], t["origin_y"], t["pixel_w"], t["pixel_h"]),
                width=int(item["width"]),
                height=int(item["height"]),
            )
        )
    return entries


def write_manifest(path: str | Path, entries: list[ImageryEntry]) -> None:
    root = Path(path).parent
    items = []
    for e in entries:
        items.append(
            {
                "path": str(e.path.relative_to(root)) if e.path.is_absolute() else str(e.path),
                "width": e.width,
                "height": e.height,
                "transform": {
                    "origin_x": e.transform.origin_x,
                    "origin_y": e.transform.origin_y,
                    "pixel_w": e.transform.pixel_w,
                    "pixel_h": e.transform.pixel_h,
                },
                "extent": list(e.extent),
            }
        )
    Path(path).write_text(json.dumps({"images": items}, indent=2, sort_keys=True))


def find_source(entries: list[ImageryEntry], x: float, y: float) -> ImageryEntry | None:
    """First manifest entry whose extent contains the point."""
    for e in entries:
        x0, y0, x1, y1 = e.extent
        if x0 <= x <= x1 and y0 <= y <= y1:
            return e
    return None
