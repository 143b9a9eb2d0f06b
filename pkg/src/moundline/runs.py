"""Run orchestration: configuration, directory layout, and pipeline stages.

A run is a plain directory tree under ``<data_dir>/runs/<run_id>`` — no
database. Every stage reads and writes only the documented file formats, so
runs stay portable between tools and teams:

    config.json                  run configuration
    scenes/                      synthetic imagery + catalog (synth runs)
    curation/report.json         kept/removed ids with reasons
    curation/splits.jsonl        train/val/test assignment
    tiles/<id>.png|_mask.png|.json|.pgw
    model/checkpoint.json        baseline weights + history
    preds/<id>.f32(.json)        per-tile probability rasters
    candidates/candidates.geojson
    eval/outcomes.jsonl, eval/report.json
    mosaic/heatmap.png(.pgw), mosaic/stitched.f32(.json)
    reviews.jsonl                append-only review ledger
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import catalog, formats, mosaic, postproc, synth, tiles
from .evals import ImageEval, count_outcomes, detect_outcomes, metrics
from .geo import GeoTransform, Raster, polygon_centroid, polygon_intersects, rect_polygon
from .segmenter import BaselineModel, ExternalRasterSource, SegmenterSpec, train_baseline
from .synth import SceneSpec

DATA_DIR_ENV = "MOUNDLINE_DATA_DIR"


def data_dir(override: str | None = None) -> Path:
    return Path(override or os.environ.get(DATA_DIR_ENV, "./moundline-data"))


@dataclass
class RunConfig:
    id: str
    seed: int = 0
    crs_epsg: int = formats.DEFAULT_EPSG
    # input paths; synth fills these for synthetic runs
    manifest: str | None = None
    sites: str | None = None
    negatives: str | None = None
    synth: dict = field(default_factory=dict)  # {"scenes", "empty_frac", "side_m", ...}
    curation: dict = field(
        default_factory=lambda: {"top_k": 0, "min_area": 0.0, "window_side": 1e12, "expected_total": None}
    )
    splits: dict = field(default_factory=lambda: {"test_frac": 0.1, "val_frac_of_train": 0.1})
    tile: dict = field(
        default_factory=lambda: {"side_m": 128.0, "ppm": 1.0, "crop": None, "downscale": False, "policy": "strict"}
    )
    segmenter: dict = field(default_factory=lambda: SegmenterSpec().to_json())
    postproc: dict = field(default_factory=lambda: {"sigma": 2.0, "threshold": 0.5, "min_area": 40.0})
    eval: dict = field(default_factory=lambda: {"min_intersection": 0.0})
    sweep: dict = field(default_factory=dict)  # {"extent", "tile", "stride", "ramp"}

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "RunConfig":
        return cls(**d)


class RunDir:
    """Paths and loading helpers for one run directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    @property
    def id(self) -> str:
        return self.root.name

    def path(self, *parts) -> Path:
        return self.root.joinpath(*parts)

    def config(self) -> RunConfig:
        return RunConfig.from_json(json.loads(self.path("config.json").read_text()))

    def save_config(self, cfg: RunConfig) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        self.path("config.json").write_text(json.dumps(cfg.to_json(), indent=2, sort_keys=True))

    def resolve(self, p: str | None) -> Path | None:
        if p is None:
            return None
        cand = Path(p)
        return cand if cand.is_absolute() else self.root / cand

    def status(self) -> dict:
        return {
            "scenes": self.path("scenes").exists(),
            "curation": self.path("curation", "report.json").exists(),
            "tiles": self.path("tiles").exists(),
            "model": self.path("model", "checkpoint.json").exists(),
            "preds": self.path("preds").exists(),
            "candidates": self.path("candidates", "candidates.geojson").exists(),
            "eval": self.path("eval", "report.json").exists(),
            "mosaic": self.path("mosaic", "heatmap.png").exists(),
            "reviews": self.path("reviews.jsonl").exists(),
        }


def create_run(cfg: RunConfig, root_dir: str | Path) -> RunDir:
    run = RunDir(Path(root_dir) / "runs" / cfg.id)
    for key in ("manifest", "sites", "negatives"):
        p = getattr(cfg, key)
        if p is not None and not cfg.synth and not run.resolve(p).exists():
            raise FileNotFoundError(f"config references missing {key}: {p}")
    run.save_config(cfg)
    return run


# --- stages --------------------------------------------------------------------

SCENE_GAP_M = 64.0


def stage_synth(run: RunDir) -> dict:
    """Generate scenes on a world grid; empty scenes become negative regions."""
    cfg = run.config()
    opts = cfg.synth
    n_scenes = int(opts.get("scenes", 24))
    empty_frac = float(opts.get("empty_frac", 0.25))
    side_m = float(opts.get("side_m", 256.0))
    ppm = float(opts.get("ppm", 1.0))
    rng = np.random.default_rng(cfg.seed)

    out = run.path("scenes")
    out.mkdir(parents=True, exist_ok=True)
    n_empty = int(round(n_scenes * empty_frac))
    kinds = ["site"] * (n_scenes - n_empty) + ["empty"] * n_empty

    grid_cols = max(1, int(np.ceil(np.sqrt(n_scenes))))
    entries, sites, negatives = [], [], []
    for i, kind in enumerate(kinds):
        scene_id = f"scene_{i:04d}"
        gx = (i % grid_cols) * (side_m + SCENE_GAP_M)
        gy = (i // grid_cols) * (side_m + SCENE_GAP_M)
        spec = SceneSpec(
            extent_m=(side_m, side_m),
            ppm=ppm,
            n_mounds=int(opts.get("mounds_per_scene", 1)) if kind == "site" else 0,
            mound_radius_m=tuple(opts.get("mound_radius_m", (10.0, 22.0))),
            eccentricity=tuple(opts.get("eccentricity", (0.0, 0.6))),
            mound_contrast=tuple(opts.get("mound_contrast", (30.0, 60.0))),
            background_noise=float(opts.get("background_noise", 6.0)),
            clutter=int(opts.get("clutter", 2)),
            seed=int(rng.integers(0, 2**31 - 1)),
            margin_m=opts.get("margin_m"),
        )
        scene = synth.generate_scene(spec, origin=(gx, gy), scene_id=scene_id)
        formats.write_rgb_png(out / f"{scene_id}.png", scene.image)
        entries.append(
            tiles.ImageryEntry(
                path=Path(f"{scene_id}.png"),
                transform=scene.image.transform,
                width=scene.image.width,
                height=scene.image.height,
            )
        )
        if kind == "site":
            sites.extend(scene.sites)
        else:
            negatives.append(synth.scene_negative_region(scene, scene_id, rng))

    tiles.write_manifest(out / "manifest.json", entries)
    catalog.sites_to_geojson(out / "catalog.geojson", sites, cfg.crs_epsg)
    catalog.negatives_to_geojson(out / "negatives.geojson", negatives, cfg.crs_epsg)

    cfg.manifest = "scenes/manifest.json"
    cfg.sites = "scenes/catalog.geojson"
    cfg.negatives = "scenes/negatives.geojson"
    run.save_config(cfg)
    return {"scenes": n_scenes, "sites": len(sites), "negatives": len(negatives)}


def stage_curate(run: RunDir) -> dict:
    cfg = run.config()
    sites, _ = catalog.sites_from_geojson(run.resolve(cfg.sites))
    negatives, _ = catalog.negatives_from_geojson(run.resolve(cfg.negatives)) if cfg.negatives else ([], None)
    cur = cfg.curation
    result = catalog.curate(
        sites, top_k=int(cur["top_k"]), min_area=float(cur["min_area"]), window_side=float(cur["window_side"])
    )
    report = catalog.curation_report(result, n_negatives=len(negatives), expected_total=cur.get("expected_total"))
    out = run.path("curation")
    out.mkdir(parents=True, exist_ok=True)
    formats.write_json(out / "report.json", report)
    assignments = catalog.make_splits(
        [s.id for s in result.kept],
        [n.id for n in negatives],
        test_frac=float(cfg.splits["test_frac"]),
        val_frac_of_train=float(cfg.splits["val_frac_of_train"]),
        seed=cfg.seed,
    )
    catalog.splits_to_jsonl(out / "splits.jsonl", assignments)
    return report["summary"]


def _window_gt(all_sites, window_raster):
    x0, y0, x1, y1 = window_raster.extent
    frame = rect_polygon(x0, y0, x1, y1)
    return [s for s in all_sites if polygon_intersects(s.shape, frame, 0.0)]


def stage_tile(run: RunDir) -> dict:
    """One tile per curated site and per negative region, window centered on
    the record's centroid."""
    cfg = run.config()
    entries = tiles.read_manifest(run.resolve(cfg.manifest))
    sites, _ = catalog.sites_from_geojson(run.resolve(cfg.sites))
    negatives, _ = catalog.negatives_from_geojson(run.resolve(cfg.negatives)) if cfg.negatives else ([], None)
    assignments = catalog.splits_from_jsonl(run.path("curation", "splits.jsonl"))
    split_of = {a.id: a.split.value for a in assignments}
    kept_sites = {s.id: s for s in sites if s.id in split_of}
    kept_negs = {n.id: n for n in negatives if n.id in split_of}

    topt = cfg.tile
    side_m = float(topt["side_m"])
    ppm = float(topt["ppm"])
    out = run.path("tiles")
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([cfg.seed, 1])
    n = 0
    cache: dict[Path, Raster] = {}
    for rec_id, split in split_of.items():
        rec = kept_sites.get(rec_id) or kept_negs.get(rec_id)
        if rec is None:
            continue
        center = polygon_centroid(rec.shape)
        entry = tiles.find_source(entries, *center)
        if entry is None:
            continue
        if entry.path not in cache:
            cache[entry.path] = formats.read_rgb_png(entry.path)
        window = tiles.extract_window(cache[entry.path], center, side_m, ppm, policy=topt.get("policy", "strict"))
        gt_kept = [s.shape for s in _window_gt(sites, window) if s.id in split_of]
        mask = tiles.rasterize_mask(gt_kept, window.transform, window.width, window.height)
        tile = tiles.Tile(window, mask, source_id=rec_id)
        if topt.get("crop"):
            tile = tiles.random_crop(tile, int(topt["crop"]), seed=int(rng.integers(2**31)))
        if topt.get("downscale"):
            tile = tiles.downscale_half(tile)
        tiles.write_tile(out, rec_id, tile, split=split)
        n += 1
    return {"tiles": n}


def load_split_tiles(run: RunDir, wanted: set[str]) -> list[tuple[str, tiles.Tile]]:
    out = []
    tdir = run.path("tiles")
    for tile_id in tiles.list_tiles(tdir):
        tile, split = tiles.read_tile(tdir, tile_id)
        if split in wanted:
            out.append((tile_id, tile))
    return out


def stage_train(run: RunDir) -> dict:
    cfg = run.config()
    spec = SegmenterSpec.from_json(cfg.segmenter)
    train = [t for _, t in load_split_tiles(run, {"train"})]
    val = [t for _, t in load_split_tiles(run, {"val"})]
    model = train_baseline(train, spec, val_tiles=val)
    mdir = run.path("model")
    mdir.mkdir(parents=True, exist_ok=True)
    model.save(mdir / "checkpoint.json")
    return {"epochs": spec.epochs, "final_train_loss": model.history["train"][-1]}


def load_segmenter(run: RunDir):
    cfg = run.config()
    spec = SegmenterSpec.from_json(cfg.segmenter)
    if spec.kind == "external_raster":
        return ExternalRasterSource(run.resolve(cfg.segmenter.get("external_dir", "external")))
    return BaselineModel.load(run.path("model", "checkpoint.json"))


def stage_predict(run: RunDir, split: str = "test") -> dict:
    model = load_segmenter(run)
    pdir = run.path("preds")
    pdir.mkdir(parents=True, exist_ok=True)
    n = 0
    for tile_id, tile in load_split_tiles(run, {split}):
        pred = model.predict(tile.image)
        formats.write_prob_raster(pdir / f"{tile_id}.f32", pred)
        n += 1
    return {"predictions": n}


def stage_vectorize(run: RunDir, threshold: float | None = None) -> dict:
    cfg = run.config()
    pp = cfg.postproc
    t = float(pp["threshold"] if threshold is None else threshold)
    cands = []
    for base in sorted(run.path("preds").glob("*.f32")):
        pred = formats.read_prob_raster(base)
        tile_id = base.stem
        cands.extend(
            postproc.extract_candidates(
                pred, sigma=float(pp["sigma"]), t=t, min_area=float(pp["min_area"]), source_tile=tile_id
            )
        )
    cdir = run.path("candidates")
    cdir.mkdir(parents=True, exist_ok=True)
    formats.write_feature_collection(
        cdir / "candidates.geojson", postproc.candidates_to_features(cands), cfg.crs_epsg
    )
    return {"candidates": len(cands)}


def candidates_at(run: RunDir, threshold: float) -> list[postproc.CandidateShape]:
    """Recompute candidates from the stored probability rasters at any
    threshold; ids are deterministic, so they work as stable references."""
    cfg = run.config()
    pp = cfg.postproc
    out = []
    for base in sorted(run.path("preds").glob("*.f32")):
        pred = formats.read_prob_raster(base)
        out.extend(
            postproc.extract_candidates(
                pred, sigma=float(pp["sigma"]), t=threshold, min_area=float(pp["min_area"]), source_tile=base.stem
            )
        )
    return out


def _evaluation_images(run: RunDir, cands: list[postproc.CandidateShape]) -> list[ImageEval]:
    cfg = run.config()
    sites, _ = catalog.sites_from_geojson(run.resolve(cfg.sites))
    assignments = catalog.splits_from_jsonl(run.path("curation", "splits.jsonl"))
    split_of = {a.id: a.split.value for a in assignments}
    by_tile: dict[str, list] = {}
    for c in cands:
        by_tile.setdefault(c.source_tile, []).append(c)
    images = []
    tdir = run.path("tiles")
    for tile_id in tiles.list_tiles(tdir):
        tile, split = tiles.read_tile(tdir, tile_id)
        if split != "test":
            continue
        gt = [
            (s.id, s.shape)
            for s in sites
            if s.id in split_of and polygon_intersects(s.shape, rect_polygon(*tile.image.extent), 0.0)
        ]
        images.append(
            ImageEval(
                image_id=tile_id,
                gt_sites=tuple(gt),
                candidates=tuple(by_tile.get(tile_id, ())),
            )
        )
    return images


def stage_evaluate(run: RunDir) -> dict:
    cfg = run.config()
    feats, _ = formats.read_feature_collection(run.path("candidates", "candidates.geojson"))
    cands = postproc.candidates_from_features(feats)
    images = _evaluation_images(run, cands)
    outcomes = detect_outcomes(images, min_intersection=float(cfg.eval["min_intersection"]))
    edir = run.path("eval")
    edir.mkdir(parents=True, exist_ok=True)
    with open(edir / "outcomes.jsonl", "w") as f:
        for o in outcomes:
            f.write(json.dumps(o.to_json(), sort_keys=True) + "\n")
    counts = count_outcomes(outcomes)
    report = {
        "v": 1,
        "images": len(outcomes),
        "counts": counts.to_json(),
        "metrics": metrics(counts),
    }
    formats.write_json(edir / "report.json", report)
    return report


def stage_mosaic(run: RunDir) -> dict:
    cfg = run.config()
    sw = cfg.sweep
    if not sw:
        raise ValueError("run config has no sweep section")
    entries = tiles.read_manifest(run.resolve(cfg.manifest))
    model = load_segmenter(run)
    extent = tuple(float(v) for v in sw["extent"])
    ppm = float(sw.get("ppm", cfg.tile["ppm"]))
    sweep = mosaic.RegionSweep(extent, tile_side=int(sw["tile"]), stride=int(sw["stride"]), ppm=ppm)
    windows = mosaic.plan_sweep(sweep)
    px = 1.0 / ppm
    preds = []
    cache: dict[Path, Raster] = {}
    for win in windows:
        cx = win.transform.origin_x + win.side * px / 2.0
        cy = win.transform.origin_y - win.side * px / 2.0
        entry = tiles.find_source(entries, cx, cy)
        if entry is None:
            continue
        if entry.path not in cache:
            cache[entry.path] = formats.read_rgb_png(entry.path)
        window = tiles.extract_window(cache[entry.path], (cx, cy), win.side * px, ppm, policy="pad")
        preds.append(model.predict(window))
    stitched = mosaic.stitch(preds, extent, ppm)
    mdir = run.path("mosaic")
    mdir.mkdir(parents=True, exist_ok=True)
    formats.write_prob_raster(mdir / "stitched.f32", stitched)
    mosaic.write_heatmap_png(mdir / "heatmap.png", stitched, ramp=sw.get("ramp", "heat"))
    return {"windows": len(windows), "covered": int(np.isfinite(stitched.values).sum())}


def run_all(run: RunDir) -> dict:
    out = {}
    cfg = run.config()
    if cfg.synth:
        out["synth"] = stage_synth(run)
    out["curate"] = stage_curate(run)
    out["tile"] = stage_tile(run)
    out["train"] = stage_train(run)
    out["predict"] = stage_predict(run)
    out["vectorize"] = stage_vectorize(run)
    out["evaluate"] = stage_evaluate(run)
    if cfg.sweep:
        out["mosaic"] = stage_mosaic(run)
    return out
