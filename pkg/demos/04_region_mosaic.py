#!/usr/bin/env python3
"""Sweep a region with overlapping prediction windows and stitch the
overlap-averaged heatmap a reviewer would drape over base imagery."""

from pathlib import Path

import numpy as np

from moundline import formats
from moundline.geo import polygon_centroid
from moundline.mosaic import RegionSweep, plan_sweep, stitch, write_heatmap_png
from moundline.segmenter import SegmenterSpec, train_baseline
from moundline.synth import SceneSpec, generate_scene
from moundline.tiles import Tile, extract_window, rasterize_mask

out = Path(__file__).parent / "out" / "04"
out.mkdir(parents=True, exist_ok=True)

# One larger scene plays the region; train on windows from other scenes.
region = generate_scene(
    SceneSpec(extent_m=(384, 384), n_mounds=4, clutter=3, seed=9, margin_m=80.0), scene_id="region"
)
formats.write_rgb_png(out / "region.png", region.image)


def training_tile(seed):
    scene = generate_scene(SceneSpec(n_mounds=1, clutter=2, seed=seed, margin_m=70.0), scene_id=f"s{seed}")
    center = polygon_centroid(scene.sites[0].shape)
    window = extract_window(scene.image, center, 128.0, 1.0)
    mask = rasterize_mask([s.shape for s in scene.sites], window.transform, window.width, window.height)
    return Tile(window, mask, source_id=f"s{seed}")


model = train_baseline([training_tile(s) for s in range(10)], SegmenterSpec(epochs=10, seed=0))

sweep = RegionSweep(extent=region.image.extent, tile_side=128, stride=64, ppm=1.0)
windows = plan_sweep(sweep)
print(f"{len(windows)} windows, stride 64 of 128 (2x overlap per axis)")

preds = []
for win in windows:
    cx = win.transform.origin_x + win.side / 2.0
    cy = win.transform.origin_y - win.side / 2.0
    image = extract_window(region.image, (cx, cy), float(win.side), 1.0, policy="pad")
    preds.append(model.predict(image))

heat = stitch(preds, region.image.extent, 1.0)
covered = np.isfinite(heat.values).mean()
print(f"stitched {heat.width}x{heat.height}, coverage {covered:.0%}, max p {np.nanmax(heat.values):.2f}")
formats.write_prob_raster(out / "stitched.f32", heat)
write_heatmap_png(out / "heatmap.png", heat, ramp="heat")
write_heatmap_png(out / "heatmap_gray.png", heat, ramp="gray")
print(f"wrote {out}")
