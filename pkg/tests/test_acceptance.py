"""Acceptance suite: one test per release criterion, each printing a
[PASS]/[FAIL] line. Tolerances are pinned here, not configurable."""

import json
import math
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from moundline import formats, runs
from moundline.evals import (
    AdjustmentRecord,
    ConfusionCounts,
    OutcomeClass,
    apply_adjustments,
    metrics,
    repeated_iou,
)
from moundline.geo import GeoTransform, Raster, polygon_area, prob_raster, rect_polygon
from moundline.catalog import SiteRecord, curate, curation_report
from moundline.postproc import gaussian_blur, polygonize
from moundline.mosaic import region_grid, stitch
from moundline.runs import RunConfig, create_run
from moundline.segmenter import SegmenterSpec, gradient_check, train_baseline
from moundline.service import create_app
from moundline.tiles import Tile


def criterion(label):
    def mark(fn):
        fn._criterion = label
        return fn

    return mark


# --- exact metrics reproduction -------------------------------------------------

@criterion("metrics reproduction: four published rows, 5e-5, < 1 s")
def test_metrics_reproduction_exact():
    t0 = time.perf_counter()

    def check(counts, accuracy, recall):
        m = metrics(counts)
        assert abs(m["accuracy"] - accuracy) <= 5e-5, (m["accuracy"], accuracy)
        assert abs(m["recall"] - recall) <= 5e-5, (m["recall"], recall)

    check(ConfusionCounts(228, 98, 70, 125), 0.6257, 0.6459)
    check(ConfusionCounts(209, 104, 57, 151), 0.6008, 0.5806)

    ledger5 = [
        AdjustmentRecord("reclassify", OutcomeClass.TP, 30, frm=OutcomeClass.FP),
        AdjustmentRecord("reclassify", OutcomeClass.TN, 57, frm=OutcomeClass.FN),
        AdjustmentRecord("append", OutcomeClass.TN, 30),
    ]
    adj5 = apply_adjustments(ConfusionCounts(228, 98, 70, 125), ledger5)
    assert (adj5.tp, adj5.tn, adj5.fp, adj5.fn) == (258, 185, 40, 68)
    check(adj5, 0.8040, 0.7914)

    ledger6 = [
        AdjustmentRecord("reclassify", OutcomeClass.TP, 30, frm=OutcomeClass.FP),
        AdjustmentRecord("reclassify", OutcomeClass.TN, 63, frm=OutcomeClass.FN),
        AdjustmentRecord("append", OutcomeClass.TN, 30),
    ]
    adj6 = apply_adjustments(ConfusionCounts(209, 104, 57, 151), ledger6)
    assert (adj6.tp, adj6.tn, adj6.fp, adj6.fn) == (239, 197, 27, 88)
    check(adj6, 0.7913, 0.7309)

    assert time.perf_counter() - t0 < 1.0


# --- end-to-end desk-scale detection ---------------------------------------------

@criterion("end-to-end detection on 120 scenes: recall >= 0.80, precision >= 0.60, < 15 min")
def test_end_to_end_desk_scale_detection(tmp_path):
    t0 = time.perf_counter()
    cfg = RunConfig(id="e2e", seed=1234)
    cfg.synth = {
        "scenes": 120,
        "empty_frac": 0.25,
        "side_m": 256.0,
        "ppm": 1.0,
        "mounds_per_scene": 1,
        "clutter": 2,
        "margin_m": 70.0,
        "mound_radius_m": (10.0, 22.0),
    }
    cfg.splits = {"test_frac": 1.0 / 6.0, "val_frac_of_train": 0.1}
    cfg.tile = {"side_m": 128.0, "ppm": 1.0, "crop": None, "downscale": False, "policy": "strict"}
    cfg.segmenter = SegmenterSpec(
        epochs=20, learning_rate=0.5, feature_radii=(2, 4, 8), seed=1234
    ).to_json()
    cfg.postproc = {"sigma": 2.0, "threshold": 0.5, "min_area": 40.0}
    run = create_run(cfg, tmp_path)

    runs.stage_synth(run)
    runs.stage_curate(run)
    # 100 train+val scenes, 20 test scenes, stratified
    splits = formats.read_jsonl(run.path("curation", "splits.jsonl"))
    by_split = {}
    for row in splits:
        by_split.setdefault(row["split"], []).append(row["id"])
    assert len(by_split["test"]) == 20
    assert len(by_split.get("train", [])) + len(by_split.get("val", [])) == 100

    runs.stage_tile(run)
    runs.stage_train(run)
    runs.stage_predict(run)
    runs.stage_vectorize(run)
    report = runs.stage_evaluate(run)

    m = report["metrics"]
    elapsed = time.perf_counter() - t0
    assert m["recall"] is not None and m["recall"] >= 0.80, report
    assert m["precision"] is not None and m["precision"] >= 0.60, report
    assert elapsed < 15 * 60, f"end-to-end run took {elapsed:.0f}s"


# --- repeated-IoU protocol ---------------------------------------------------------

def _ellipse_tile(side, seed):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:side, 0:side]
    cy, cx = side / 2 + rng.uniform(-4, 4), side / 2 + rng.uniform(-4, 4)
    a, b = rng.uniform(7, 10), rng.uniform(5, 7)
    d2 = ((xx - cx) / a) ** 2 + ((yy - cy) / b) ** 2
    img = 80.0 + rng.normal(0, 2.0, (side, side)) + 60.0 * (d2 < 1.0)
    t = GeoTransform(0, side, 1, 1)
    rgb = np.clip(np.stack([img] * 3, -1), 0, 255).astype(np.uint8)
    return Tile(Raster(rgb, t), Raster((d2 < 1.0).astype(np.uint8), t), source_id=f"e{seed}")


@criterion("repeated-IoU: 10 passes, std exactly 0 without crops, log recomputes to 1e-12")
def test_repeated_iou_protocol():
    train = [_ellipse_tile(32, s) for s in range(4)]
    test = [_ellipse_tile(32, 100 + s) for s in range(3)]
    model = train_baseline(train, SegmenterSpec(epochs=6, feature_radii=(1, 2), seed=3, batch_pixels=512))

    fixed = repeated_iou(test, model, n=10, seed=5, crop_side=None)
    assert fixed.std == 0.0
    assert len(fixed.pass_means) == 10

    cropped = repeated_iou(test, model, n=10, seed=5, crop_side=24)
    # independent recomputation from the per-pass log
    n = len(cropped.pass_means)
    mean = sum(cropped.pass_means) / n
    std = math.sqrt(sum((x - mean) ** 2 for x in cropped.pass_means) / (n - 1))
    assert abs(mean - cropped.mean) <= 1e-12
    assert abs(std - cropped.std) <= 1e-12
    assert min(cropped.pass_means) <= cropped.mean <= max(cropped.pass_means)


# --- oracle equivalences --------------------------------------------------------------

def _conv2d_oracle(vals, sigma):
    """Direct (non-separable) 2-D convolution via a windowed dot product."""
    radius = int(math.ceil(3.0 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k1 = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    k1 /= k1.sum()
    k2 = np.outer(k1, k1)
    padded = np.pad(vals, radius, mode="symmetric")
    windows = np.lib.stride_tricks.sliding_window_view(padded, k2.shape)
    return np.einsum("ijkl,kl->ij", windows, k2)


@criterion("oracle equivalence: blur < 1e-6 on 50 rasters, polygonize exact on 100, stitch exact on 20")
def test_oracle_equivalences():
    rng = np.random.default_rng(77)

    for _ in range(50):
        vals = rng.uniform(0, 1, (64, 64))
        sigma = float(rng.uniform(0.5, 3.0))
        out = gaussian_blur(prob_raster(vals, GeoTransform(0, 64, 1, 1)), sigma)
        assert np.max(np.abs(out.values - _conv2d_oracle(vals, sigma))) < 1e-6

    for _ in range(100):
        h, w = rng.integers(4, 48, 2)
        arr = (rng.uniform(0, 1, (h, w)) < rng.uniform(0.15, 0.85)).astype(np.uint8)
        pw = float(rng.choice([0.5, 1.0, 2.0]))
        t = GeoTransform(float(rng.integers(0, 1000)), float(rng.integers(0, 1000)), pw, pw)
        polys = polygonize(Raster(arr, t))
        assert sum(polygon_area(p) for p in polys) == float(arr.sum()) * pw * pw

    for trial in range(20):
        extent = (0.0, 0.0, 48.0, 40.0)
        tiles_ = []
        for k in range(int(rng.integers(1, 6))):
            side = int(rng.integers(4, 16))
            x, y = float(rng.integers(0, 40)), float(rng.integers(8, 40))
            vals = rng.uniform(0, 1, (side, side))
            tiles_.append(prob_raster(vals, GeoTransform(x, y, 1, 1)))
        out = stitch(tiles_, extent, 1.0)
        oracle = _naive_stitch(tiles_, extent, 1.0)
        both_nan = np.isnan(out.values) & np.isnan(oracle)
        assert (both_nan | (out.values == oracle)).all()


def _naive_stitch(preds, extent, ppm):
    w, h, grid = region_grid(extent, ppm)
    px = 1.0 / ppm
    cells = [[[] for _ in range(w)] for _ in range(h)]
    for p in preds:
        col = int(round((p.transform.origin_x - grid.origin_x) / px))
        row = int(round((grid.origin_y - p.transform.origin_y) / px))
        vals = np.asarray(p.values, dtype=np.float64)
        for r in range(vals.shape[0]):
            for c in range(vals.shape[1]):
                rr, cc = row + r, col + c
                if 0 <= rr < h and 0 <= cc < w:
                    cells[rr][cc].append(vals[r, c])
    out = np.full((h, w), np.nan)
    for r in range(h):
        for c in range(w):
            if cells[r][c]:
                acc = 0.0
                for v in cells[r][c]:
                    acc += v
                out[r, c] = acc / len(cells[r][c])
    return out


# --- gradient checks -------------------------------------------------------------------

@criterion("gradients: focal and dice vs central differences < 1e-4 over 100 draws")
def test_gradient_checks():
    rng = np.random.default_rng(13)
    for draw in range(100):
        loss = "focal" if draw % 2 == 0 else "dice"
        spec = SegmenterSpec(
            loss=loss,
            focal_gamma=float(rng.choice([0.0, 1.0, 2.0, 3.0])),
            focal_alpha=float(rng.uniform(0.1, 0.9)),
            feature_radii=(1,),
        )
        n = int(rng.integers(16, 64))
        f = int(rng.integers(3, 12))
        X = np.concatenate([rng.normal(0, 1, (n, f)), np.ones((n, 1))], axis=1)
        y = rng.integers(0, 2, n).astype(float)
        if y.sum() == 0:
            y[0] = 1.0
        w = rng.normal(0, 0.6, f + 1)
        err = gradient_check(X, y, w, spec, epsilon=1e-5)
        assert err < 1e-4, (draw, loss, err)


# --- curation set-arithmetic --------------------------------------------------------------

@criterion("curation arithmetic: 4934 - 200 - 684 + 1155 -> 4050 kept, 5205 images, mismatch flagged")
def test_curation_set_arithmetic():
    sites = []
    k = 0
    for _ in range(200):  # oversized: the top 200 by area
        sites.append(SiteRecord.make(f"s{k}", rect_polygon(0, 0, 2000 + k, 2000 + k)))
        k += 1
    for _ in range(400):  # too small (< 1000 m2)
        sites.append(SiteRecord.make(f"s{k}", rect_polygon(0, 0, 30, 30)))
        k += 1
    for _ in range(284):  # destroyed, otherwise fine
        sites.append(SiteRecord.make(f"s{k}", rect_polygon(0, 0, 40, 40), destroyed=True))
        k += 1
    while k < 4934:
        sites.append(SiteRecord.make(f"s{k}", rect_polygon(0, 0, 40, 40)))
        k += 1

    result = curate(sites, top_k=200, min_area=1000.0, window_side=1000.0)
    report = curation_report(result, n_negatives=1155, expected_total=5025)

    assert report["summary"]["input"] == 4934
    assert report["summary"]["kept"] == 4050
    assert report["summary"]["removed"] == 884
    by_reason = report["summary"]["removed_by_reason"]
    assert by_reason["TopK"] == 200
    assert by_reason["TooSmall"] == 400
    assert by_reason["Destroyed"] == 284
    assert report["images"]["total"] == 4050 + 1155 == 5205
    assert report["images"]["expected_total"] == 5025
    assert report["images"]["expected_total_mismatch"] is True


# --- event-sourcing determinism --------------------------------------------------------------

@criterion("event sourcing: ledger replay reproduces adjusted metrics byte for byte")
def test_event_sourcing_determinism(service_run):
    client = TestClient(create_app(service_run))

    def post(row):
        r = client.post("/runs/r1/reviews", json=row)
        assert r.status_code == 200

    reviews = [
        {"v": 1, "candidate_id": "img_fp@t0.5000#1", "verdict": "accept", "reviewer": "a", "timestamp": "t1"},
        {"v": 1, "site_id": "s2", "verdict": "mark_not_visible", "reviewer": "a", "timestamp": "t2"},
        {"v": 1, "candidate_id": "img_tp@t0.5000#1", "verdict": "accept", "reviewer": "b", "timestamp": "t3"},
    ]
    for row in reviews:
        post(row)
    reference = client.get("/runs/r1/metrics", params={"adjusted": "true"}).content

    ledger_path = service_run / "runs" / "r1" / "reviews.jsonl"
    stored = [json.loads(l) for l in ledger_path.read_text().splitlines()]
    ledger_path.unlink()

    for _ in range(3):  # replay from empty several times
        fresh = TestClient(create_app(service_run))
        for row in stored:
            assert fresh.post("/runs/r1/reviews", json=row).status_code == 200
        assert fresh.get("/runs/r1/metrics", params={"adjusted": "true"}).content == reference
        (service_run / "runs" / "r1" / "reviews.jsonl").unlink()


# --- secondary: UI contract --------------------------------------------------------------------

@criterion("[secondary] UI contract: served threshold monotonicity and review round-trip")
def test_ui_contract_threshold_and_reviews(service_run):
    client = TestClient(create_app(service_run))

    lo = client.get("/runs/r1/candidates", params={"threshold": 0.3}).json()
    hi = client.get("/runs/r1/candidates", params={"threshold": 0.5}).json()
    assert lo["covered_area_m2"] >= hi["covered_area_m2"]

    before = client.get("/runs/r1/metrics", params={"adjusted": "true"}).json()
    assert before["automatic"]["counts"] == {"tp": 1, "tn": 0, "fp": 1, "fn": 1}
    assert before["adjusted"] == before["automatic"]

    r1 = client.post(
        "/runs/r1/reviews",
        json={"v": 1, "candidate_id": "img_fp@t0.5000#1", "verdict": "accept", "reviewer": "u", "timestamp": "x1"},
    )
    r2 = client.post(
        "/runs/r1/reviews",
        json={"v": 1, "site_id": "s2", "verdict": "mark_not_visible", "reviewer": "u", "timestamp": "x2"},
    )
    assert r1.status_code == r2.status_code == 200

    after = client.get("/runs/r1/metrics", params={"adjusted": "true"}).json()
    # FP -> TP for the accepted overlay, FN -> TN for the invisible site
    assert after["adjusted"]["counts"] == {"tp": 2, "tn": 1, "fp": 0, "fn": 0}
    assert after["automatic"]["counts"] == before["automatic"]["counts"]
