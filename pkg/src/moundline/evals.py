"""Two evaluation layers: mask IoU under repeated random crops, and
per-image detection outcomes with automatic plus human-adjusted accounting.

The adjustment ledger is data, not code: adjudications arrive as records
(reclassify one outcome class into another, or append new outcomes) and are
applied in order, so the automatic pipeline stays pure and replayable.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .geo import Polygon, Raster, polygon_intersects
from .postproc import CandidateShape
from .tiles import Tile, random_crop


class DimensionMismatch(ValueError):
    pass


class EmptyTestSet(ValueError):
    pass


class InsufficientCount(ValueError):
    pass


class OutcomeClass(str, enum.Enum):
    TP = "TP"
    TN = "TN"
    FP = "FP"
    FN = "FN"


class AdjustReason(str, enum.Enum):
    SITE_NOT_VISIBLE = "site_not_visible"
    NEARBY_SITE_MATCHED = "nearby_site_matched"
    OTHER = "other"


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be >= 0")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def to_json(self) -> dict:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


@dataclass(frozen=True)
class AdjustmentRecord:
    kind: str  # "reclassify" | "append"
    to: OutcomeClass
    count: int
    frm: OutcomeClass | None = None  # reclassify only
    reason: AdjustReason = AdjustReason.OTHER
    note: str = ""

    def __post_init__(self) -> None:
        if self.kind not in ("reclassify", "append"):
            raise ValueError(f"unknown adjustment kind {self.kind!r}")
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.kind == "reclassify" and self.frm is None:
            raise ValueError("reclassify needs a source class")


@dataclass(frozen=True)
class DetectionOutcome:
    image_id: str
    klass: OutcomeClass
    matched_candidate_ids: tuple[str, ...] = ()
    site_id: str | None = None
    site_ids: tuple[str, ...] = ()
    site_hits: tuple[tuple[str, bool], ...] = ()

    def to_json(self) -> dict:
        return {
            "image_id": self.image_id,
            "klass": self.klass.value,
            "matched_candidate_ids": list(self.matched_candidate_ids),
            "site_id": self.site_id,
            "site_ids": list(self.site_ids),
            "site_hits": {s: hit for s, hit in self.site_hits},
        }

    @classmethod
    def from_json(cls, d: dict) -> "DetectionOutcome":
        return cls(
            image_id=d["image_id"],
            klass=OutcomeClass(d["klass"]),
            matched_candidate_ids=tuple(d.get("matched_candidate_ids", ())),
            site_id=d.get("site_id"),
            site_ids=tuple(d.get("site_ids", ())),
            site_hits=tuple((k, v) for k, v in d.get("site_hits", {}).items()),
        )


# --- IoU ------------------------------------------------------------------------

def iou(a, b) -> float:
    """|a ∩ b| / |a ∪ b| for binary masks; two empty masks count as 1.0."""
    av = np.asarray(a.values if isinstance(a, Raster) else a) != 0
    bv = np.asarray(b.values if isinstance(b, Raster) else b) != 0
    if av.shape != bv.shape:
        raise DimensionMismatch(f"iou shapes differ: {av.shape} vs {bv.shape}")
    union = int((av | bv).sum())
    if union == 0:
        return 1.0
    return int((av & bv).sum()) / union


@dataclass(frozen=True)
class RepeatedIouResult:
    pass_means: tuple[float, ...]
    mean: float
    std: float


def repeated_iou(
    tiles: list[Tile],
    segmenter,
    n: int,
    seed: int,
    crop_side: int | None = None,
    threshold: float = 0.5,
) -> RepeatedIouResult:
    """n evaluation passes with fresh random crops per pass.

    Per pass: mean IoU between the thresholded prediction and the mask over
    all tiles. Returns the mean and sample standard deviation of the n pass
    means; identical pass means yield exactly 0.0.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if not tiles:
        raise EmptyTestSet("no evaluation tiles")
    pass_means = []
    for p in range(n):
        scores = []
        for i, tile in enumerate(tiles):
            t = tile
            if crop_side is not None:
                t = random_crop(tile, crop_side, seed=int(np.random.default_rng([seed, p, i]).integers(2**31)))
            pred = segmenter.predict(t.image)
            pred_mask = np.asarray(pred.values) >= threshold
            scores.append(iou(pred_mask, t.mask.values))
        pass_means.append(float(np.mean(scores)))
    return RepeatedIouResult(tuple(pass_means), *summarize_passes(pass_means))


def summarize_passes(pass_means: list[float]) -> tuple[float, float]:
    """Mean and sample std of the per-pass means; exact 0 std for equal passes."""
    if len(pass_means) < 2:
        raise ValueError("need at least two passes")
    if max(pass_means) == min(pass_means):
        return pass_means[0], 0.0
    return float(np.mean(pass_means)), float(np.std(pass_means, ddof=1))


# --- detection -----------------------------------------------------------------

@dataclass(frozen=True)
class ImageEval:
    """Inputs for one evaluated image: its ground truth and its candidates."""

    image_id: str
    gt_sites: tuple[tuple[str, Polygon], ...]
    candidates: tuple[CandidateShape, ...]


def detect_outcomes(images: list[ImageEval], min_intersection: float = 0.0) -> list[DetectionOutcome]:
    """Per-image confusion assignment by polygon intersection.

    An image with ground truth is TP when any candidate overlaps any of its
    sites by more than `min_intersection`, else FN. An empty image is TN
    without candidates, FP with. Per-site hit flags are recorded so
    multi-site images can be re-scored either way.
    """
    out = []
    for img in images:
        matched_ids: list[str] = []
        site_hits: list[tuple[str, bool]] = []
        matched_site: str | None = None
        for site_id, site_poly in img.gt_sites:
            hit = False
            for cand in img.candidates:
                if polygon_intersects(cand.shape, site_poly, min_intersection):
                    hit = True
                    if cand.id not in matched_ids:
                        matched_ids.append(cand.id)
            site_hits.append((site_id, hit))
            if hit and matched_site is None:
                matched_site = site_id
        if img.gt_sites:
            klass = OutcomeClass.TP if matched_site is not None else OutcomeClass.FN
        else:
            klass = OutcomeClass.FP if img.candidates else OutcomeClass.TN
        out.append(
            DetectionOutcome(
                image_id=img.image_id,
                klass=klass,
                matched_candidate_ids=tuple(matched_ids),
                site_id=matched_site,
                site_ids=tuple(s for s, _ in img.gt_sites),
                site_hits=tuple(site_hits),
            )
        )
    return out


def count_outcomes(outcomes: list[DetectionOutcome]) -> ConfusionCounts:
    c = {k: 0 for k in OutcomeClass}
    for o in outcomes:
        c[o.klass] += 1
    return ConfusionCounts(
        tp=c[OutcomeClass.TP], tn=c[OutcomeClass.TN], fp=c[OutcomeClass.FP], fn=c[OutcomeClass.FN]
    )


def metrics(c: ConfusionCounts) -> dict:
    """accuracy, recall, precision; a metric whose denominator is zero is None."""

    def ratio(num, den):
        return num / den if den > 0 else None

    return {
        "accuracy": ratio(c.tp + c.tn, c.total),
        "recall": ratio(c.tp, c.tp + c.fn),
        "precision": ratio(c.tp, c.tp + c.fp),
    }


def apply_adjustments(c: ConfusionCounts, ledger: list[AdjustmentRecord]) -> ConfusionCounts:
    """Apply ledger records in order. Reclassify moves count between classes
    (total preserved); append grows the target class."""
    counts = {"TP": c.tp, "TN": c.tn, "FP": c.fp, "FN": c.fn}
    for rec in ledger:
        if rec.kind == "reclassify":
            src = rec.frm.value
            if counts[src] < rec.count:
                raise InsufficientCount(
                    f"cannot reclassify {rec.count} from {src}: only {counts[src]} present"
                )
            counts[src] -= rec.count
            counts[rec.to.value] += rec.count
        else:
            counts[rec.to.value] += rec.count
    return ConfusionCounts(tp=counts["TP"], tn=counts["TN"], fp=counts["FP"], fn=counts["FN"])


def adjustment_to_json(rec: AdjustmentRecord) -> dict:
    return {
        "kind": rec.kind,
        "from": rec.frm.value if rec.frm else None,
        "to": rec.to.value,
        "count": rec.count,
        "reason": rec.reason.value,
        "note": rec.note,
    }


def adjustment_from_json(d: dict) -> AdjustmentRecord:
    return AdjustmentRecord(
        kind=d["kind"],
        to=OutcomeClass(d["to"]),
        count=int(d["count"]),
        frm=OutcomeClass(d["from"]) if d.get("from") else None,
        reason=AdjustReason(d.get("reason", "other")),
        note=d.get("note", ""),
    )


def metrics_table(rows: list[tuple[str, ConfusionCounts]]) -> str:
    """Fixed-width report: one row per (label, counts) with derived metrics."""
    header = f"{'Evaluation':<14} {'TP':>5} {'TN':>5} {'FP':>5} {'FN':>5} {'Accuracy':>9} {'Recall':>8} {'Precision':>10}"
    lines = [header, "-" * len(header)]
    for label, c in rows:
        m = metrics(c)
        fmt = lambda v: f"{v:.4f}" if v is not None else "-"
        lines.append(
            f"{label:<14} {c.tp:>5} {c.tn:>5} {c.fp:>5} {c.fn:>5} "
            f"{fmt(m['accuracy']):>9} {fmt(m['recall']):>8} {fmt(m['precision']):>10}"
        )
    return "\n".join(lines)


def metrics_csv(rows: list[tuple[str, ConfusionCounts]]) -> str:
    lines = ["evaluation,tp,tn,fp,fn,accuracy,recall,precision"]
    for label, c in rows:
        m = metrics(c)
        fmt = lambda v: f"{v:.4f}" if v is not None else ""
        lines.append(
            f"{label},{c.tp},{c.tn},{c.fp},{c.fn},{fmt(m['accuracy'])},{fmt(m['recall'])},{fmt(m['precision'])}"
        )
    return "\n".join(lines)
