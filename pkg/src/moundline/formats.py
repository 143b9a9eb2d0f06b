"""File formats: world files, GeoJSON, PNG tiles/masks, raw probability rasters.

All vector data travels as GeoJSON FeatureCollections with a top-level
foreign member ``crs_epsg`` naming the projected CRS. Rasters carry an ESRI
world file sidecar; note the world file stores the *center* of pixel (0, 0)
while GeoTransform stores its top-left corner.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .geo import GeoTransform, Polygon, Raster, prob_raster

DEFAULT_EPSG = 32638  # configuration, not inference; any projected metric CRS works


# --- world files -----------------------------------------------------------

def write_world_file(path: str | Path, t: GeoTransform) -> None:
    """Six lines: pixel_w, 0, 0, -pixel_h, center x and y of pixel (0, 0)."""
    cx = t.origin_x + 0.5 * t.pixel_w
    cy = t.origin_y - 0.5 * t.pixel_h
    lines = [t.pixel_w, 0.0, 0.0, -t.pixel_h, cx, cy]
    Path(path).write_text("".join(f"{v!r}\n" for v in lines))


def read_world_file(path: str | Path) -> GeoTransform:
    vals = [float(line.strip()) for line in Path(path).read_text().splitlines() if line.strip()]
    if len(vals) != 6:
        raise ValueError(f"world file {path} has {len(vals)} lines, expected 6")
    pw, _, _, nph, cx, cy = vals
    ph = -nph
    return GeoTransform(cx - 0.5 * pw, cy + 0.5 * ph, pw, ph)


def world_file_for(image_path: str | Path) -> Path:
    """Sidecar naming: first+last letter of the extension + 'w' (png -> pgw)."""
    p = Path(image_path)
    ext = p.suffix.lstrip(".")
    side = (ext[0] + ext[-1] + "w") if len(ext) >= 2 else (ext + "w")
    return p.with_suffix("." + side)


# --- PNG images and masks ----------------------------------------------------

def write_rgb_png(path: str | Path, raster: Raster) -> None:
    arr = np.asarray(raster.values, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] not in (3, 4):
        raise ValueError(f"expected (h, w, 3|4) uint8 image, got {arr.shape}")
    Image.fromarray(arr, "RGB" if arr.shape[2] == 3 else "RGBA").save(path)
    write_world_file(world_file_for(path), raster.transform)


def read_rgb_png(path: str | Path) -> Raster:
    arr = np.asarray(Image.open(path).convert("RGB"))
    return Raster(arr, read_world_file(world_file_for(path)))


def write_mask_png(path: str | Path, raster: Raster) -> None:
    """Binary mask saved as 8-bit gray, 0/255."""
    arr = np.asarray(raster.values)
    Image.fromarray((arr > 0).astype(np.uint8) * 255, "L").save(path)
    write_world_file(world_file_for(path), raster.transform)


def read_mask_png(path: str | Path) -> Raster:
    arr = np.asarray(Image.open(path).convert("L"))
    return Raster((arr >= 128).astype(np.uint8), read_world_file(world_file_for(path)))


# --- probability rasters -----------------------------------------------------

def write_prob_raster(base_path: str | Path, raster: Raster) -> Path:
    """Raw little-endian float32, row-major, with a JSON sidecar.

    `base_path` should end in `.f32`; the sidecar is `<base>.f32.json`.
    """
    base = Path(base_path)
    arr = np.asarray(raster.values, dtype="<f4")
    base.write_bytes(arr.tobytes(order="C"))
    t = raster.transform
    sidecar = {
        "width": raster.width,
        "height": raster.height,
        "transform": {
            "origin_x": t.origin_x,
            "origin_y": t.origin_y,
            "pixel_w": t.pixel_w,
            "pixel_h": t.pixel_h,
        },
        "nodata": raster.nodata if raster.nodata is None or np.isfinite(raster.nodata) else "nan",
    }
    Path(str(base) + ".json").write_text(json.dumps(sidecar, sort_keys=True))
    return base


def read_prob_raster(base_path: str | Path) -> Raster:
    base = Path(base_path)
    meta = json.loads(Path(str(base) + ".json").read_text())
    w, h = int(meta["width"]), int(meta["height"])
    arr = np.frombuffer(base.read_bytes(), dtype="<f4").reshape(h, w).astype(np.float64)
    t = meta["transform"]
    nodata = meta.get("nodata")
    nodata = float("nan") if nodata == "nan" else nodata
    transform = GeoTransform(t["origin_x"], t["origin_y"], t["pixel_w"], t["pixel_h"])
    if nodata is not None and np.isnan(nodata):
        valid = arr[~np.isnan(arr)]
    else:
        valid = arr[arr != nodata] if nodata is not None else arr
    arr = np.clip(arr, 0.0, 1.0, out=arr.copy()) if valid.size and (valid.min() < 0 or valid.max() > 1) else arr
    return prob_raster(arr, transform, nodata)


def write_prob_png(path: str | Path, raster: Raster) -> None:
    """Optional 8-bit grayscale render: value = round(255 * p), nodata -> 0."""
    arr = np.asarray(raster.values, dtype=np.float64)
    vals = np.floor(np.nan_to_num(arr, nan=0.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(vals, "L").save(path)
    write_world_file(world_file_for(path), raster.transform)


# --- GeoJSON -----------------------------------------------------------------

def polygon_to_geojson(p: Polygon) -> dict:
    """RFC 7946 geometry: exterior CCW, holes CW."""
    from .geo import ring_area_signed

    def oriented(ring, ccw: bool):
        flip = (ring_area_signed(ring) > 0) != ccw
        pts = list(reversed(ring)) if flip else list(ring)
        return [[float(x), float(y)] for x, y in pts]

    rings = [oriented(p.exterior, True)] + [oriented(h, False) for h in p.holes]
    return {"type": "Polygon", "coordinates": rings}


def geojson_to_polygon(geom: dict) -> Polygon:
    if geom.get("type") != "Polygon":
        raise ValueError(f"expected Polygon geometry, got {geom.get('type')}")
    coords = geom["coordinates"]
    rings = [tuple((float(x), float(y)) for x, y in ring) for ring in coords]
    return Polygon(rings[0], tuple(rings[1:]))


def feature(p: Polygon, properties: dict) -> dict:
    return {"type": "Feature", "geometry": polygon_to_geojson(p), "properties": properties}


def write_feature_collection(path: str | Path, features: list[dict], crs_epsg: int = DEFAULT_EPSG) -> None:
    fc = {"type": "FeatureCollection", "crs_epsg": int(crs_epsg), "features": features}
    Path(path).write_text(json.dumps(fc, sort_keys=True))


def read_feature_collection(path: str | Path) -> tuple[list[dict], int | None]:
    fc = json.loads(Path(path).read_text())
    if fc.get("type") != "FeatureCollection":
        raise ValueError(f"{path} is not a GeoJSON FeatureCollection")
    return fc.get("features", []), fc.get("crs_epsg")


# --- JSON helpers ------------------------------------------------------------

def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True))


def read_json(path: str | Path):
    return json.loads(Path(path).read_text())


def append_jsonl(path: str | Path, obj) -> None:
    with open(path, "a", encoding="utf-8") as f:
        f.write(json.dumps(obj, sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> list:
    p = Path(path)
    if not p.exists():
        return []
    return [json.loads(line) for line in p.read_text().splitlines() if line.strip()]
