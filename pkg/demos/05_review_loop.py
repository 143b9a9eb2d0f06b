#!/usr/bin/env python3
"""The full loop in one sitting: synthesize a survey, run every stage, then
act as the reviewing archaeologist against the HTTP API (in-process)."""

import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from moundline import runs
from moundline.runs import RunConfig, create_run
from moundline.segmenter import SegmenterSpec
from moundline.service import create_app

data_dir = Path(tempfile.mkdtemp(prefix="moundline-demo-"))

cfg = RunConfig(id="survey", seed=11)
cfg.synth = {
    "scenes": 24,
    "empty_frac": 0.25,
    "side_m": 256.0,
    "ppm": 1.0,
    "mounds_per_scene": 1,
    "clutter": 2,
    "margin_m": 70.0,
}
cfg.splits = {"test_frac": 0.25, "val_frac_of_train": 0.1}
cfg.tile = {"side_m": 128.0, "ppm": 1.0, "crop": None, "downscale": False, "policy": "strict"}
cfg.segmenter = SegmenterSpec(epochs=8, feature_radii=(2, 4, 8), seed=11).to_json()
cfg.postproc = {"sigma": 2.0, "threshold": 0.5, "min_area": 40.0}
run = create_run(cfg, data_dir)

for stage in (runs.stage_synth, runs.stage_curate, runs.stage_tile, runs.stage_train,
              runs.stage_predict, runs.stage_vectorize, runs.stage_evaluate):
    print(f"{stage.__name__:<16}", stage(run))

client = TestClient(create_app(data_dir))

print("\nautomatic metrics:")
print(client.get("/runs/survey/metrics").json()["automatic"])

# Threshold steering without retraining: compare served candidate area.
for t in (0.5, 0.3):
    body = client.get("/runs/survey/candidates", params={"threshold": t}).json()
    print(f"threshold {t}: {body['count']} candidates, {body['covered_area_m2']:.0f} m2 covered")

# Review a candidate and re-read adjusted metrics.
cands = client.get("/runs/survey/candidates", params={"threshold": 0.5}).json()["candidates"]
if cands:
    review = {
        "v": 1,
        "candidate_id": cands[0]["id"],
        "verdict": "accept",
        "reviewer": "demo",
        "timestamp": "2026-01-01T00:00:00Z",
    }
    print("review:", client.post("/runs/survey/reviews", json=review).json())
print("adjusted:", client.get("/runs/survey/metrics", params={"adjusted": "true"}).json()["adjusted"])
print("export:", len(client.get("/runs/survey/export/annotations").json()["features"]), "features")
print(f"\nrun directory: {data_dir}/runs/survey")
