import json

import numpy as np
import pytest


@pytest.hookimpl(tryfirst=True, hookwrapper=True)
def pytest_runtest_makereport(item, call):
    out = yield
    rep = out.get_result()
    if rep.when == "call":
        label = getattr(item.function, "_criterion", None)
        if label:
            print(f"\n[{'PASS' if rep.passed else 'FAIL'}] {label}")

from moundline import formats
from moundline.geo import GeoTransform, Raster, rect_polygon
from moundline.catalog import SiteRecord, sites_to_geojson
from moundline.runs import RunConfig, RunDir
from moundline.tiles import Tile, write_tile


@pytest.fixture()
def service_run(tmp_path):
    """A handcrafted run directory with one TP, one FN and one FP image.

    Candidate geometry is kept trivial (sigma=0, unit pixels) so adjustment
    arithmetic is exact: the FP image's candidate overlays known site s3, the
    FN image's site s2 can be marked not visible.
    """
    root = tmp_path / "data"
    run = RunDir(root / "runs" / "r1")
    cfg = RunConfig(id="r1", seed=0)
    cfg.postproc = {"sigma": 0.0, "threshold": 0.5, "min_area": 0.0}
    cfg.sites = "sites.geojson"
    run.save_config(cfg)

    preds = run.path("preds")
    preds.mkdir(parents=True)

    def write_pred(name, origin_x, values):
        t = GeoTransform(origin_x, 16.0, 1.0, 1.0)
        formats.write_prob_raster(preds / f"{name}.f32", Raster(values, t))
        return t

    tp_vals = np.zeros((16, 16))
    tp_vals[4:8, 4:8] = 0.8
    t_tp = write_pred("img_tp", 0.0, tp_vals)

    fn_vals = np.zeros((16, 16))
    write_pred("img_fn", 100.0, fn_vals)

    fp_vals = np.zeros((16, 16))
    fp_vals[2:12, 2:12] = 0.4
    fp_vals[4:7, 4:7] = 0.8
    write_pred("img_fp", 200.0, fp_vals)

    sites = [
        SiteRecord.make("s1", rect_polygon(4, 8, 8, 12)),
        SiteRecord.make("s2", rect_polygon(104, 4, 110, 10)),
        SiteRecord.make("s3", rect_polygon(204, 9, 207, 12)),
    ]
    sites_to_geojson(run.path("sites.geojson"), sites)

    outcomes = [
        {
            "image_id": "img_tp",
            "klass": "TP",
            "matched_candidate_ids": ["img_tp@t0.5000#1"],
            "site_id": "s1",
            "site_ids": ["s1"],
            "site_hits": {"s1": True},
        },
        {
            "image_id": "img_fn",
            "klass": "FN",
            "matched_candidate_ids": [],
            "site_id": None,
            "site_ids": ["s2"],
            "site_hits": {"s2": False},
        },
        {
            "image_id": "img_fp",
            "klass": "FP",
            "matched_candidate_ids": [],
            "site_id": None,
            "site_ids": [],
            "site_hits": {},
        },
    ]
    edir = run.path("eval")
    edir.mkdir(parents=True)
    with open(edir / "outcomes.jsonl", "w") as f:
        for o in outcomes:
            f.write(json.dumps(o, sort_keys=True) + "\n")
    formats.write_json(
        edir / "report.json",
        {
            "v": 1,
            "images": 3,
            "counts": {"tp": 1, "tn": 0, "fp": 1, "fn": 1},
            "metrics": {"accuracy": 1 / 3, "recall": 0.5, "precision": 0.5},
        },
    )

    tdir = run.path("tiles")
    img = Raster(np.zeros((16, 16, 3), dtype=np.uint8), t_tp)
    mask = Raster(np.zeros((16, 16), dtype=np.uint8), t_tp)
    write_tile(tdir, "img_tp", Tile(img, mask, source_id="img_tp"), split="test")

    return root
