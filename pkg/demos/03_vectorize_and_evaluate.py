#!/usr/bin/env python3
"""From probability raster to reviewable vectors, then detection accounting:
blur, threshold, polygonize, intersect with ground truth, adjust with a
human ledger."""

from pathlib import Path

import numpy as np

from moundline import formats
from moundline.evals import (
    AdjustmentRecord,
    ImageEval,
    OutcomeClass,
    apply_adjustments,
    count_outcomes,
    detect_outcomes,
    metrics_table,
)
from moundline.geo import GeoTransform, prob_raster, rect_polygon
from moundline.postproc import candidates_to_features, extract_candidates

out = Path(__file__).parent / "out" / "03"
out.mkdir(parents=True, exist_ok=True)

# A fabricated prediction with one strong blob, one faint blob and speckle.
rng = np.random.default_rng(0)
vals = np.clip(rng.uniform(0, 0.25, (96, 96)), 0, 1)
yy, xx = np.mgrid[0:96, 0:96]
vals += 0.85 * (np.hypot(xx - 30, yy - 30) < 10)
vals += 0.45 * (np.hypot(xx - 70, yy - 64) < 8)
pred = prob_raster(np.clip(vals, 0, 1), GeoTransform(0, 96, 1, 1))

for t in (0.5, 0.3):
    cands = extract_candidates(pred, sigma=2.0, t=t, min_area=30.0, source_tile="demo")
    total = sum(c.area_m2 for c in cands)
    print(f"threshold {t}: {len(cands)} candidates, covered {total:.0f} m2")
    formats.write_feature_collection(out / f"candidates_t{t}.geojson", candidates_to_features(cands))

# Detection outcomes: the strong blob sits on a known site, the faint one not.
site = rect_polygon(22, 58, 40, 74)  # overlaps the strong blob in world coords
cands = extract_candidates(pred, sigma=2.0, t=0.5, min_area=30.0, source_tile="demo")
images = [ImageEval("demo", (("site-1", site),), tuple(cands))]
outcomes = detect_outcomes(images)
print("outcome:", outcomes[0].klass.value, "matched:", outcomes[0].matched_candidate_ids)

# Ledger arithmetic on a familiar scale.
auto = count_outcomes(outcomes)
ledger = [AdjustmentRecord("append", OutcomeClass.TN, 3, note="verified empty areas")]
print(metrics_table([("automatic", auto), ("adjusted", apply_adjustments(auto, ledger))]))
print(f"wrote {out}")
