"""Review service: runs, candidates at any threshold, reviews, metrics.

State is the run directory tree plus an append-only ``reviews.jsonl`` ledger
per run; adjusted metrics are always derived by replaying that ledger, so
identical ledgers produce byte-identical responses.

Candidate ids are deterministic pointers (``<tile>@t<threshold>#<k>``) into
the re-vectorization of stored probability rasters, which lets reviewers
steer the threshold without the server keeping any session state. Thresholds
are quantized to 4 decimals by that scheme.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel

from . import catalog, formats, postproc, runs
from .evals import (
    AdjustReason,
    AdjustmentRecord,
    ConfusionCounts,
    DetectionOutcome,
    OutcomeClass,
    adjustment_to_json,
    apply_adjustments,
    count_outcomes,
    metrics,
)
from .geo import Polygon, polygon_intersects, polygon_is_valid

VERDICTS = {"accept", "reject", "mark_not_visible", "relabel"}


class ReviewBody(BaseModel):
    v: int = 1
    candidate_id: str | None = None
    site_id: str | None = None
    verdict: str
    new_polygon: dict | None = None
    reviewer: str
    timestamp: str


def _json_response(payload: dict, status_code: int = 200) -> Response:
    # canonical rendering so replayed state is byte-identical
    return Response(
        content=json.dumps(payload, sort_keys=True, separators=(",", ":")),
        media_type="application/json",
        status_code=status_code,
    )


def _quantize(t: float) -> float:
    return round(float(t), 4)


class RunState:
    """Read-side helpers over one run directory."""

    def __init__(self, run: runs.RunDir):
        self.run = run

    def outcomes(self) -> list[DetectionOutcome]:
        rows = formats.read_jsonl(self.run.path("eval", "outcomes.jsonl"))
        return [DetectionOutcome.from_json(r) for r in rows]

    def reviews(self) -> list[dict]:
        return formats.read_jsonl(self.run.path("reviews.jsonl"))

    def all_sites(self):
        cfg = self.run.config()
        if not cfg.sites:
            return []
        sites, _ = catalog.sites_from_geojson(self.run.resolve(cfg.sites))
        return sites

    def candidates(self, threshold: float) -> list[postproc.CandidateShape]:
        return runs.candidates_at(self.run, _quantize(threshold))

    def resolve_candidate(self, cand_id: str) -> postproc.CandidateShape | None:
        """Recompute the candidate a deterministic id points to."""
        try:
            tile_part, rest = cand_id.rsplit("@t", 1)
            thr_part, idx_part = rest.split("#", 1)
            threshold = float(thr_part)
            index = int(idx_part)
        except ValueError:
            return None
        base = self.run.path("preds", f"{tile_part}.f32")
        if not base.exists():
            return None
        cfg = self.run.config()
        pp = cfg.postproc
        pred = formats.read_prob_raster(base)
        cands = postproc.extract_candidates(
            pred,
            sigma=float(pp["sigma"]),
            t=threshold,
            min_area=float(pp["min_area"]),
            source_tile=tile_part,
        )
        for c in cands:
            if c.id == cand_id:
                return c
        return None

    def derive_ledger(self) -> list[AdjustmentRecord]:
        """Turn the review log into adjustment records.

        mark_not_visible on a site of an FN image reclassifies that image
        FN -> TN; accepting a candidate on an FP image that overlays a known
        site reclassifies FP -> TP. Each image is adjusted at most once.
        """
        outcomes = self.outcomes()
        klass_of = {o.image_id: o.klass for o in outcomes}
        image_of_site = {}
        for o in outcomes:
            for s in o.site_ids:
                image_of_site.setdefault(s, o.image_id)
        sites = self.all_sites()

        fn_to_tn_images: set[str] = set()
        fp_to_tp_images: set[str] = set()
        for r in self.reviews():
            verdict = r.get("verdict")
            if verdict == "mark_not_visible" and r.get("site_id"):
                img = image_of_site.get(r["site_id"])
                if img is not None and klass_of.get(img) is OutcomeClass.FN:
                    fn_to_tn_images.add(img)
            elif verdict == "accept" and r.get("candidate_id"):
                cand_id = r["candidate_id"]
                tile_part = cand_id.rsplit("@t", 1)[0]
                if klass_of.get(tile_part) is not OutcomeClass.FP or tile_part in fp_to_tp_images:
                    continue
                cand = self.resolve_candidate(cand_id)
                if cand is None:
                    continue
                if any(polygon_intersects(cand.shape, s.shape, 0.0) for s in sites):
                    fp_to_tp_images.add(tile_part)
        ledger = []
        if fp_to_tp_images:
            ledger.append(
                AdjustmentRecord(
                    "reclassify",
                    OutcomeClass.TP,
                    len(fp_to_tp_images),
                    frm=OutcomeClass.FP,
                    reason=AdjustReason.NEARBY_SITE_MATCHED,
                    note=",".join(sorted(fp_to_tp_images)),
                )
            )
        if fn_to_tn_images:
            ledger.append(
                AdjustmentRecord(
                    "reclassify",
                    OutcomeClass.TN,
                    len(fn_to_tn_images),
                    frm=OutcomeClass.FN,
                    reason=AdjustReason.SITE_NOT_VISIBLE,
                    note=",".join(sorted(fn_to_tn_images)),
                )
            )
        return ledger


def _candidate_payload(c: postproc.CandidateShape) -> dict:
    return {
        "id": c.id,
        "source_tile": c.source_tile,
        "peak_prob": c.peak_prob,
        "mean_prob": c.mean_prob,
        "area_m2": c.area_m2,
        "geometry": formats.polygon_to_geojson(c.shape),
    }


def create_app(data_root: str | Path) -> FastAPI:
    app = FastAPI(title="moundline review service")
    root = Path(data_root)
    locks: dict[str, threading.Lock] = {}
    locks_guard = threading.Lock()

    def run_or_404(run_id: str) -> runs.RunDir:
        run = runs.RunDir(root / "runs" / run_id)
        if not run.path("config.json").exists():
            raise HTTPException(status_code=404, detail=f"unknown run {run_id!r}")
        return run

    def ledger_lock(run_id: str) -> threading.Lock:
        with locks_guard:
            return locks.setdefault(run_id, threading.Lock())

    @app.get("/runs")
    def list_runs():
        runs_dir = root / "runs"
        items = []
        if runs_dir.exists():
            for p in sorted(runs_dir.iterdir()):
                if (p / "config.json").exists():
                    run = runs.RunDir(p)
                    items.append({"id": run.id, "status": run.status()})
        return _json_response({"v": 1, "runs": items})

    @app.get("/runs/{run_id}")
    def get_run(run_id: str):
        run = run_or_404(run_id)
        return _json_response({"v": 1, "config": run.config().to_json(), "status": run.status()})

    @app.get("/runs/{run_id}/candidates")
    def get_candidates(run_id: str, threshold: float = 0.5):
        if not (0.0 <= threshold <= 1.0):
            raise HTTPException(status_code=422, detail="threshold must be in [0, 1]")
        run = run_or_404(run_id)
        cands = RunState(run).candidates(threshold)
        return _json_response(
            {
                "v": 1,
                "threshold": _quantize(threshold),
                "count": len(cands),
                "covered_area_m2": sum(c.area_m2 for c in cands),
                "candidates": [_candidate_payload(c) for c in cands],
            }
        )

    @app.get("/runs/{run_id}/heatmap.png")
    def get_heatmap(run_id: str):
        run = run_or_404(run_id)
        path = run.path("mosaic", "heatmap.png")
        if not path.exists():
            raise HTTPException(status_code=404, detail="run has no mosaic yet")
        return Response(content=path.read_bytes(), media_type="image/png")

    @app.get("/runs/{run_id}/tiles/{tile_id}.png")
    def get_tile_image(run_id: str, tile_id: str):
        run = run_or_404(run_id)
        path = run.path("tiles", f"{tile_id}.png")
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"unknown tile {tile_id!r}")
        return Response(content=path.read_bytes(), media_type="image/png")

    @app.post("/runs/{run_id}/reviews")
    def post_review(run_id: str, body: ReviewBody):
        run = run_or_404(run_id)
        state = RunState(run)
        if body.verdict not in VERDICTS:
            raise HTTPException(status_code=422, detail=f"unknown verdict {body.verdict!r}")
        if body.candidate_id is None and body.site_id is None:
            raise HTTPException(status_code=422, detail="review needs candidate_id or site_id")
        if body.candidate_id is not None and state.resolve_candidate(body.candidate_id) is None:
            raise HTTPException(status_code=404, detail=f"unknown candidate {body.candidate_id!r}")
        if body.site_id is not None and body.candidate_id is None:
            known = {s.id for s in state.all_sites()}
            if body.site_id not in known:
                raise HTTPException(status_code=404, detail=f"unknown site {body.site_id!r}")
        if body.verdict == "relabel":
            if body.new_polygon is None:
                raise HTTPException(status_code=422, detail="relabel needs new_polygon")
            try:
                poly = formats.geojson_to_polygon(body.new_polygon)
            except (ValueError, KeyError, TypeError) as e:
                raise HTTPException(status_code=422, detail=f"bad polygon: {e}")
            if not polygon_is_valid(poly):
                raise HTTPException(status_code=422, detail="polygon ring is invalid")

        row = {
            "v": 1,
            "candidate_id": body.candidate_id,
            "site_id": body.site_id,
            "verdict": body.verdict,
            "new_polygon": body.new_polygon,
            "reviewer": body.reviewer,
            "timestamp": body.timestamp,
        }
        key = (body.candidate_id or body.site_id, body.reviewer, body.timestamp)
        with ledger_lock(run_id):
            for existing in state.reviews():
                ekey = (existing.get("candidate_id") or existing.get("site_id"), existing["reviewer"], existing["timestamp"])
                if ekey == key:
                    if existing == row:
                        return _json_response({"v": 1, "accepted": True, "duplicate": True})
                    raise HTTPException(status_code=409, detail="conflicting review for the same key")
            formats.append_jsonl(run.path("reviews.jsonl"), row)
        return _json_response({"v": 1, "accepted": True, "duplicate": False})

    @app.get("/runs/{run_id}/export/annotations")
    def export_annotations(run_id: str):
        run = run_or_404(run_id)
        state = RunState(run)
        feats = []
        for r in state.reviews():
            if r["verdict"] == "accept" and r.get("candidate_id"):
                cand = state.resolve_candidate(r["candidate_id"])
                if cand is not None:
                    feats.append(
                        formats.feature(
                            cand.shape,
                            {
                                "id": cand.id,
                                "origin": "accepted_candidate",
                                "reviewer": r["reviewer"],
                                "timestamp": r["timestamp"],
                            },
                        )
                    )
            elif r["verdict"] == "relabel" and r.get("new_polygon"):
                feats.append(
                    {
                        "type": "Feature",
                        "geometry": r["new_polygon"],
                        "properties": {
                            "id": r.get("candidate_id") or r.get("site_id"),
                            "origin": "relabel",
                            "reviewer": r["reviewer"],
                            "timestamp": r["timestamp"],
                        },
                    }
                )
        cfg = run.config()
        return _json_response(
            {"type": "FeatureCollection", "crs_epsg": cfg.crs_epsg, "features": feats}
        )

    @app.get("/runs/{run_id}/metrics")
    def get_metrics(run_id: str, adjusted: bool = False):
        run = run_or_404(run_id)
        state = RunState(run)
        outcomes = state.outcomes()
        if not outcomes:
            raise HTTPException(status_code=404, detail="run has no evaluation yet")
        auto = count_outcomes(outcomes)
        payload = {
            "v": 1,
            "automatic": {"counts": auto.to_json(), "metrics": metrics(auto)},
        }
        if adjusted:
            ledger = state.derive_ledger()
            adj = apply_adjustments(auto, ledger)
            payload["adjusted"] = {"counts": adj.to_json(), "metrics": metrics(adj)}
            payload["ledger"] = [adjustment_to_json(rec) for rec in ledger]
        return _json_response(payload)

    return app
