"""Site catalog: ingestion, curation filters, and stratified splits.

Curation drops records that carry no learnable signal: the very largest
shapes (bigger than the training window), shapes whose bounding box would
overflow the window, tiny placeholder annotations, and sites flagged as
destroyed. Negative regions (known empty land) are kept alongside and
stratified independently when splitting.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .geo import Polygon, polygon_area
from . import formats


class Visibility(str, enum.Enum):
    VISIBLE = "visible"
    NOT_VISIBLE = "not_visible"
    UNKNOWN = "unknown"


class Split(str, enum.Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class RemovalReason(str, enum.Enum):
    # Declaration order is the reporting precedence: a record matching
    # several filters is reported under the first.
    TOP_K = "TopK"
    WINDOW_OVERFLOW = "WindowOverflow"
    TOO_SMALL = "TooSmall"
    DESTROYED = "Destroyed"


class NegativeKind(str, enum.Enum):
    URBAN = "urban"
    AGRICULTURE = "agriculture"
    FLOODED = "flooded"
    ROCKY = "rocky"


AREA_CACHE_RTOL = 1e-6


@dataclass(frozen=True)
class SiteRecord:
    id: str
    shape: Polygon
    area_m2: float
    destroyed: bool = False
    visibility: Visibility = Visibility.UNKNOWN
    category: str | None = None
    preservation: str | None = None

    def __post_init__(self) -> None:
        actual = polygon_area(self.shape)
        if abs(actual - self.area_m2) > AREA_CACHE_RTOL * max(actual, 1.0):
            raise ValueError(
                f"site {self.id}: cached area {self.area_m2} != polygon area {actual}"
            )

    @classmethod
    def make(cls, id: str, shape: Polygon, **kwargs) -> "SiteRecord":
        return cls(id=id, shape=shape, area_m2=polygon_area(shape), **kwargs)


@dataclass(frozen=True)
class NegativeRegion:
    id: str
    shape: Polygon
    kind: NegativeKind = NegativeKind.AGRICULTURE


@dataclass(frozen=True)
class SplitAssignment:
    id: str
    split: Split


@dataclass(frozen=True)
class CurationResult:
    kept: tuple[SiteRecord, ...]
    removed: tuple[tuple[SiteRecord, RemovalReason], ...]


class StratumTooSmall(ValueError):
    pass


def curate(
    sites: list[SiteRecord],
    top_k: int,
    min_area: float,
    window_side: float,
) -> CurationResult:
    """Apply the curation filters, preserving input order in `kept`.

    Removes, in reporting precedence: the `top_k` largest sites by area; any
    remaining site whose bounding-box long side exceeds `window_side`; sites
    smaller than `min_area`; sites flagged destroyed. kept + removed
    partition the input exactly.
    """
    if top_k < 0 or min_area < 0:
        raise ValueError("top_k and min_area must be >= 0")
    reasons: dict[str, RemovalReason] = {}

    by_area = sorted(sites, key=lambda s: (-s.area_m2, s.id))
    for s in by_area[:top_k]:
        reasons[s.id] = RemovalReason.TOP_K

    for s in sites:
        if s.id in reasons:
            continue
        minx, miny, maxx, maxy = s.shape.bounds
        if max(maxx - minx, maxy - miny) > window_side:
            reasons[s.id] = RemovalReason.WINDOW_OVERFLOW
        elif s.area_m2 < min_area:
            reasons[s.id] = RemovalReason.TOO_SMALL
        elif s.destroyed:
            reasons[s.id] = RemovalReason.DESTROYED

    kept = tuple(s for s in sites if s.id not in reasons)
    removed = tuple((s, reasons[s.id]) for s in sites if s.id in reasons)
    return CurationResult(kept, removed)


def select_by_labels(
    sites: list[SiteRecord],
    categories: set[str],
    preservations: set[str],
) -> list[SiteRecord]:
    """Sites whose category and preservation both fall in the given sets."""
    return [
        s
        for s in sites
        if s.category in categories and s.preservation in preservations
    ]


def make_splits(
    curated_ids: list[str],
    negative_ids: list[str],
    test_frac: float,
    val_frac_of_train: float,
    seed: int,
) -> list[SplitAssignment]:
    """Stratified train/val/test assignment, deterministic per seed.

    Sites and negatives are stratified independently: each stratum gives
    floor(test_frac * n) ids to test, then floor(val_frac_of_train * m) of
    the remainder to val.
    """
    if not (0 < test_frac < 1) or not (0 < val_frac_of_train < 1):
        raise ValueError("fractions must be in (0, 1)")
    rng = np.random.default_rng(seed)
    out: list[SplitAssignment] = []
    for stratum in (list(curated_ids), list(negative_ids)):
        if not stratum:
            continue
        if len(stratum) < 3:
            raise StratumTooSmall(f"stratum of {len(stratum)} ids cannot be split three ways")
        order = [stratum[i] for i in rng.permutation(len(stratum))]
        n_test = int(np.floor(test_frac * len(order)))
        test, rest = order[:n_test], order[n_test:]
        n_val = int(np.floor(val_frac_of_train * len(rest)))
        val, train = rest[:n_val], rest[n_val:]
        out.extend(SplitAssignment(i, Split.TEST) for i in test)
        out.extend(SplitAssignment(i, Split.VAL) for i in val)
        out.extend(SplitAssignment(i, Split.TRAIN) for i in train)
    order_index = {i: k for k, i in enumerate(list(curated_ids) + list(negative_ids))}
    out.sort(key=lambda a: order_index[a.id])
    return out


def curation_report(
    result: CurationResult,
    n_negatives: int = 0,
    expected_total: int | None = None,
) -> dict:
    """JSON-ready curation summary with per-reason and deduplicated totals."""
    by_reason: dict[str, int] = {r.value: 0 for r in RemovalReason}
    for _, reason in result.removed:
        by_reason[reason.value] += 1
    n_kept = len(result.kept)
    total_images = n_kept + n_negatives
    report = {
        "kept": [s.id for s in result.kept],
        "removed": [{"id": s.id, "reason": r.value} for s, r in result.removed],
        "summary": {
            "input": n_kept + len(result.removed),
            "kept": n_kept,
            "removed": len(result.removed),
            "removed_by_reason": by_reason,
        },
        "images": {
            "sites": n_kept,
            "negatives": n_negatives,
            "total": total_images,
        },
    }
    if expected_total is not None:
        report["images"]["expected_total"] = expected_total
        report["images"]["expected_total_mismatch"] = total_images != expected_total
    return report


# --- GeoJSON ingestion -------------------------------------------------------

def sites_from_geojson(path) -> tuple[list[SiteRecord], int | None]:
    feats, epsg = formats.read_feature_collection(path)
    sites = []
    for f in feats:
        props = f.get("properties") or {}
        shape = formats.geojson_to_polygon(f["geometry"])
        sites.append(
            SiteRecord.make(
                id=str(props["id"]),
                shape=shape,
                destroyed=bool(props.get("destroyed", False)),
                visibility=Visibility(props.get("visibility", "unknown")),
                category=props.get("category"),
                preservation=props.get("preservation"),
            )
        )
    return sites, epsg


def sites_to_geojson(path, sites: list[SiteRecord], crs_epsg: int = formats.DEFAULT_EPSG) -> None:
    feats = []
    for s in sites:
        feats.append(
            formats.feature(
                s.shape,
                {
                    "id": s.id,
                    "destroyed": s.destroyed,
                    "visibility": s.visibility.value,
                    "category": s.category,
                    "preservation": s.preservation,
                },
            )
        )
    formats.write_feature_collection(path, feats, crs_epsg)


def negatives_from_geojson(path) -> tuple[list[NegativeRegion], int | None]:
    feats, epsg = formats.read_feature_collection(path)
    regions = [
        NegativeRegion(
            id=str(f["properties"]["id"]),
            shape=formats.geojson_to_polygon(f["geometry"]),
            kind=NegativeKind(f["properties"].get("kind", "agriculture")),
        )
        for f in feats
    ]
    return regions, epsg


def negatives_to_geojson(path, regions: list[NegativeRegion], crs_epsg: int = formats.DEFAULT_EPSG) -> None:
    feats = [formats.feature(r.shape, {"id": r.id, "kind": r.kind.value}) for r in regions]
    formats.write_feature_collection(path, feats, crs_epsg)


def splits_to_jsonl(path, assignments: list[SplitAssignment]) -> None:
    from pathlib import Path

    Path(path).write_text(
        "".join(f'{{"id": "{a.id}", "split": "{a.split.value}"}}\n' for a in assignments)
    )


def splits_from_jsonl(path) -> list[SplitAssignment]:
    rows = formats.read_jsonl(path)
    return [SplitAssignment(r["id"], Split(r["split"])) for r in rows]
