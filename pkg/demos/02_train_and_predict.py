#!/usr/bin/env python3
"""Train the baseline segmenter on a handful of synthetic tiles and look at
its loss history and a prediction next to the ground truth."""

from pathlib import Path

import numpy as np

from moundline import formats
from moundline.geo import polygon_centroid
from moundline.segmenter import SegmenterSpec, train_baseline
from moundline.synth import SceneSpec, generate_scene
from moundline.tiles import Tile, extract_window, rasterize_mask

out = Path(__file__).parent / "out" / "02"
out.mkdir(parents=True, exist_ok=True)


def scene_tile(seed):
    scene = generate_scene(SceneSpec(n_mounds=1, clutter=2, seed=seed, margin_m=70.0), scene_id=f"s{seed}")
    center = polygon_centroid(scene.sites[0].shape)
    window = extract_window(scene.image, center, 128.0, 1.0)
    mask = rasterize_mask([s.shape for s in scene.sites], window.transform, window.width, window.height)
    return Tile(window, mask, source_id=f"s{seed}")


train_tiles = [scene_tile(s) for s in range(12)]
val_tiles = [scene_tile(100 + s) for s in range(3)]

spec = SegmenterSpec(loss="focal", epochs=12, feature_radii=(2, 4, 8), seed=0)
model = train_baseline(train_tiles, spec, val_tiles=val_tiles)

print("epoch  train      val")
for i, (tr, vl) in enumerate(zip(model.history["train"], model.history["val"]), 1):
    print(f"{i:>5}  {tr:.6f}  {vl:.6f}")

probe = scene_tile(999)
pred = model.predict(probe.image)
formats.write_rgb_png(out / "probe.png", probe.image)
formats.write_mask_png(out / "probe_gt.png", probe.mask)
formats.write_prob_png(out / "probe_pred.png", pred)

inside = pred.values[probe.mask.values == 1].mean()
outside = pred.values[probe.mask.values == 0].mean()
print(f"mean probability inside mound {inside:.3f}, outside {outside:.3f}")
model.save(out / "checkpoint.json")
print(f"wrote {out}")
