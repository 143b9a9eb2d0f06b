#!/usr/bin/env python3
"""Generate a synthetic scene and walk it through the tile machinery:
window extraction, ground-truth rasterization, augmentation, downscaling.

Outputs land in demos/out/01/.
"""

from pathlib import Path

import numpy as np

from moundline import formats
from moundline.synth import SceneSpec, generate_scene
from moundline.tiles import AugSpec, Tile, augment, downscale_half, extract_window, random_crop, rasterize_mask
from moundline.geo import polygon_centroid

out = Path(__file__).parent / "out" / "01"
out.mkdir(parents=True, exist_ok=True)

# A 256 m scene at 1 px/m with two mounds and some clutter.
spec = SceneSpec(extent_m=(256, 256), n_mounds=2, clutter=2, seed=42, margin_m=70.0)
scene = generate_scene(spec, scene_id="demo")
formats.write_rgb_png(out / "scene.png", scene.image)
print(f"scene: {scene.image.width}x{scene.image.height}px, {len(scene.sites)} mounds")

# Window centered on the first mound, 128 m on a side.
center = polygon_centroid(scene.sites[0].shape)
window = extract_window(scene.image, center, 128.0, 1.0)
mask = rasterize_mask([s.shape for s in scene.sites], window.transform, window.width, window.height)
tile = Tile(window, mask, source_id=scene.sites[0].id)
formats.write_rgb_png(out / "window.png", window)
formats.write_mask_png(out / "window_mask.png", mask)
print(f"window: {window.width}px, mask foreground {int(mask.values.sum())}px")

# Random crop (the anti-centering trick) and a quarter-turn augmentation.
cropped = random_crop(tile, 64, seed=7)
print(f"crop offset: {cropped.crop_offset}")
aug = augment(cropped, AugSpec(rot_quarter=1, mirror=True, brightness_shift=8.0, contrast_scale=1.05))
assert aug.mask.values.sum() == cropped.mask.values.sum()  # co-registration held
formats.write_rgb_png(out / "augmented.png", aug.image)

# Half-resolution input, mask by 2x2 majority.
small = downscale_half(cropped)
print(f"downscaled: {small.width}px at {small.image.transform.pixel_w} m/px")
formats.write_rgb_png(out / "downscaled.png", small.image)
print(f"wrote {out}")
