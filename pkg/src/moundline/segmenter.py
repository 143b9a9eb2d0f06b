"""Segmenter adapter contract plus a trainable pixel-wise baseline.

The adapter is anything with ``predict(image: Raster) -> Raster`` returning
per-pixel probabilities. Two implementations live here:

* BaselineModel - logistic regression over multi-scale window statistics,
  trained with mini-batch gradient descent on focal or dice loss. It exists
  so the whole pipeline runs and is testable without any pretrained network.
* ExternalRasterSource - pass-through for probability rasters produced by an
  external model and dropped on disk in the documented float format.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .geo import GeoTransform, Raster, prob_raster
from .tiles import Tile
from . import formats

EPS = 1e-7


class DimensionMismatch(ValueError):
    pass


class MissingExternalRaster(FileNotFoundError):
    pass


class EmptyTrainingSet(ValueError):
    pass


@dataclass(frozen=True)
class SegmenterSpec:
    kind: str = "baseline"  # "baseline" | "external_raster"
    loss: str = "focal"  # "focal" | "dice"
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    epochs: int = 20
    learning_rate: float = 0.5
    feature_radii: tuple[int, ...] = (2, 4, 8)
    seed: int = 0
    # optimizer details are artifact configuration, not part of the adapter
    batch_pixels: int = 4096
    balance: bool = True

    def __post_init__(self) -> None:
        if self.kind not in ("baseline", "external_raster"):
            raise ValueError(f"unknown segmenter kind {self.kind!r}")
        if self.loss not in ("focal", "dice"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.focal_gamma < 0:
            raise ValueError("focal_gamma must be >= 0")
        if not (0 < self.focal_alpha < 1):
            raise ValueError("focal_alpha must be in (0, 1)")
        radii = tuple(self.feature_radii)
        if not radii or list(radii) != sorted(radii) or len(set(radii)) != len(radii):
            raise ValueError("feature_radii must be non-empty and strictly ascending")
        object.__setattr__(self, "feature_radii", radii)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "loss": self.loss,
            "focal_gamma": self.focal_gamma,
            "focal_alpha": self.focal_alpha,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "feature_radii": list(self.feature_radii),
            "seed": self.seed,
            "batch_pixels": self.batch_pixels,
            "balance": self.balance,
        }

    @classmethod
    def from_json(cls, d: dict) -> "SegmenterSpec":
        d = dict(d)
        d["feature_radii"] = tuple(d["feature_radii"])
        return cls(**d)


# --- losses ------------------------------------------------------------------

def _clamp(p):
    return np.clip(p, EPS, 1.0 - EPS)


def focal_loss(p, y, gamma: float, alpha: float):
    """Per-sample focal loss; `p` and `y` may be scalars or arrays.

    With p_t = p where y=1 and 1-p elsewhere, and alpha_t likewise:
    loss = -alpha_t * (1 - p_t)**gamma * ln(p_t).
    """
    p = _clamp(np.asarray(p, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    p_t = y * p + (1.0 - y) * (1.0 - p)
    a_t = y * alpha + (1.0 - y) * (1.0 - alpha)
    out = -a_t * (1.0 - p_t) ** gamma * np.log(p_t)
    return float(out) if out.ndim == 0 else out


def focal_grad_logit(p, y, gamma: float, alpha: float):
    """d(focal)/d(logit) with p = sigmoid(logit).

    Simplifies to alpha_t * (2y - 1) * (1-p_t)^gamma * (gamma * p_t * ln(p_t) + p_t - 1).
    """
    p = _clamp(np.asarray(p, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    p_t = y * p + (1.0 - y) * (1.0 - p)
    a_t = y * alpha + (1.0 - y) * (1.0 - alpha)
    sgn = 2.0 * y - 1.0
    return a_t * sgn * (1.0 - p_t) ** gamma * (gamma * p_t * np.log(p_t) + p_t - 1.0)


def dice_loss(pred, target, smooth: float = 1.0) -> float:
    """Soft dice loss over co-registered grids: 1 - (2*sum(p*y)+s) / (sum(p)+sum(y)+s)."""
    p = np.asarray(pred.values if isinstance(pred, Raster) else pred, dtype=np.float64)
    y = np.asarray(target.values if isinstance(target, Raster) else target, dtype=np.float64)
    if p.shape != y.shape:
        raise DimensionMismatch(f"dice_loss shapes differ: {p.shape} vs {y.shape}")
    inter = float((p * y).sum())
    return 1.0 - (2.0 * inter + smooth) / (float(p.sum()) + float(y.sum()) + smooth)


def dice_grad_logit(p, y, smooth: float = 1.0):
    """d(dice)/d(logit) for every sample of the batch the loss was taken over."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    sp, sy = p.sum(), y.sum()
    inter = (p * y).sum()
    denom = sp + sy + smooth
    dl_dp = -(2.0 * y * denom - (2.0 * inter + smooth)) / denom**2
    return dl_dp * p * (1.0 - p)


# --- features ------------------------------------------------------------------

def feature_names(radii: tuple[int, ...]) -> list[str]:
    names = []
    for r in radii:
        names += [f"mean_r{r}", f"std_r{r}", f"min_r{r}", f"max_r{r}", f"gradmag_r{r}"]
    return names + ["red", "green", "blue"]


def extract_features(image: Raster, radii: tuple[int, ...]) -> np.ndarray:
    """Per-pixel feature stack, shape (h, w, n_features), values in [0, 1]-ish.

    For each radius: mean, std, min, max of gray and the window mean of the
    gradient magnitude, all over a (2r+1) square window; plus the raw RGB.
    """
    img = np.asarray(image.values, dtype=np.float64)
    if img.ndim == 3:
        gray = img.mean(axis=2) / 255.0
        rgb = img / 255.0
    else:
        gray = img / 255.0
        rgb = np.repeat(gray[:, :, None], 3, axis=2)
    gy, gx = np.gradient(gray)
    gradmag = np.hypot(gx, gy)
    feats = []
    for r in radii:
        size = 2 * r + 1
        mean = ndimage.uniform_filter(gray, size=size, mode="reflect")
        sq = ndimage.uniform_filter(gray * gray, size=size, mode="reflect")
        var = np.maximum(sq - mean * mean, 0.0)
        feats += [
            mean,
            np.sqrt(var),
            ndimage.minimum_filter(gray, size=size, mode="reflect"),
            ndimage.maximum_filter(gray, size=size, mode="reflect"),
            ndimage.uniform_filter(gradmag, size=size, mode="reflect"),
        ]
    feats += [rgb[:, :, 0], rgb[:, :, 1], rgb[:, :, 2]]
    return np.stack(feats, axis=-1)


# --- baseline model ------------------------------------------------------------

@dataclass
class BaselineModel:
    weights: np.ndarray  # (n_features + 1,), bias last
    spec: SegmenterSpec
    norm_mean: np.ndarray
    norm_std: np.ndarray
    history: dict = field(default_factory=lambda: {"train": [], "val": []})

    def _design(self, feats2d: np.ndarray) -> np.ndarray:
        z = (feats2d - self.norm_mean) / self.norm_std
        return np.concatenate([z, np.ones((z.shape[0], 1))], axis=1)

    def predict_proba_flat(self, feats2d: np.ndarray) -> np.ndarray:
        logits = self._design(feats2d) @ self.weights
        return _sigmoid(logits)

    def predict(self, image: Raster) -> Raster:
        feats = extract_features(image, self.spec.feature_radii)
        h, w, f = feats.shape
        p = self.predict_proba_flat(feats.reshape(-1, f)).reshape(h, w)
        return prob_raster(p, image.transform)

    def save(self, path: str | Path) -> None:
        payload = {
            "v": 1,
            "weights": self.weights.tolist(),
            "norm_mean": self.norm_mean.tolist(),
            "norm_std": self.norm_std.tolist(),
            "spec": self.spec.to_json(),
            "history": self.history,
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "BaselineModel":
        d = json.loads(Path(path).read_text())
        return cls(
            weights=np.asarray(d["weights"], dtype=np.float64),
            spec=SegmenterSpec.from_json(d["spec"]),
            norm_mean=np.asarray(d["norm_mean"], dtype=np.float64),
            norm_std=np.asarray(d["norm_std"], dtype=np.float64),
            history=d.get("history", {"train": [], "val": []}),
        )


def _sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _loss_and_grad(X: np.ndarray, y: np.ndarray, w: np.ndarray, spec: SegmenterSpec):
    p = _sigmoid(X @ w)
    if spec.loss == "focal":
        loss = float(np.mean(focal_loss(p, y, spec.focal_gamma, spec.focal_alpha)))
        dldz = focal_grad_logit(p, y, spec.focal_gamma, spec.focal_alpha) / len(y)
    else:
        loss = dice_loss(p, y)
        dldz = dice_grad_logit(p, y)
    return loss, X.T @ dldz


def _sample_batch(rng: np.random.Generator, mask: np.ndarray, spec: SegmenterSpec):
    """Pixel indices for one step: 1:1 balanced when both classes allow it."""
    flat = mask.reshape(-1)
    n = min(spec.batch_pixels, flat.size)
    pos = np.flatnonzero(flat == 1)
    neg = np.flatnonzero(flat == 0)
    if spec.balance and pos.size and neg.size:
        n_pos = min(pos.size, n // 2)
        n_neg = min(neg.size, n - n_pos)
        take_pos = rng.choice(pos, size=n_pos, replace=False)
        take_neg = rng.choice(neg, size=n_neg, replace=False)
        return np.concatenate([take_pos, take_neg])
    return rng.choice(flat.size, size=n, replace=False)


def _tile_features_flat(tile: Tile, radii) -> tuple[np.ndarray, np.ndarray]:
    feats = extract_features(tile.image, radii)
    h, w, f = feats.shape
    return feats.reshape(-1, f), tile.mask.values.reshape(-1).astype(np.float64)


def train_baseline(
    train_tiles: list[Tile],
    spec: SegmenterSpec,
    val_tiles: list[Tile] | None = None,
) -> BaselineModel:
    """Fit the baseline with mini-batch SGD; deterministic for a given seed.

    One step per tile per epoch; each step draws `batch_pixels` pixels from
    the tile, positive/negative balanced when both classes are present. The
    history records the mean step loss per epoch (train) and the loss on a
    fixed validation sample (val).
    """
    if spec.kind != "baseline":
        raise ValueError("train_baseline requires spec.kind == 'baseline'")
    if not train_tiles:
        raise EmptyTrainingSet("no training tiles")
    val_tiles = val_tiles or []
    rng = np.random.default_rng(spec.seed)

    # normalization stats from a deterministic sample of training pixels
    sample = []
    for tile in train_tiles:
        feats, _ = _tile_features_flat(tile, spec.feature_radii)
        take = min(len(feats), 4096)
        idx = rng.choice(len(feats), size=take, replace=False)
        sample.append(feats[idx])
    stacked = np.concatenate(sample)
    norm_mean = stacked.mean(axis=0)
    norm_std = np.maximum(stacked.std(axis=0), 1e-6)

    n_features = stacked.shape[1]
    model = BaselineModel(
        weights=np.zeros(n_features + 1, dtype=np.float64),
        spec=spec,
        norm_mean=norm_mean,
        norm_std=norm_std,
    )

    # fixed validation sample, drawn once
    val_sets = []
    for tile in val_tiles:
        feats, labels = _tile_features_flat(tile, spec.feature_radii)
        take = min(len(feats), spec.batch_pixels)
        idx = rng.choice(len(feats), size=take, replace=False)
        val_sets.append((feats[idx], labels[idx]))

    for _ in range(spec.epochs):
        order = rng.permutation(len(train_tiles))
        step_losses = []
        for ti in order:
            tile = train_tiles[ti]
            feats, labels = _tile_features_flat(tile, spec.feature_radii)
            idx = _sample_batch(rng, tile.mask.values, spec)
            X = model._design(feats[idx])
            y = labels[idx]
            loss, grad = _loss_and_grad(X, y, model.weights, spec)
            model.weights = model.weights - spec.learning_rate * grad
            step_losses.append(loss)
        model.history["train"].append(float(np.mean(step_losses)))
        if val_sets:
            vl = []
            for feats, labels in val_sets:
                X = model._design(feats)
                loss, _ = _loss_and_grad(X, labels, model.weights, spec)
                vl.append(loss)
            model.history["val"].append(float(np.mean(vl)))
    return model


# --- prediction entry points ------------------------------------------------

class ExternalRasterSource:
    """Serves probability rasters produced elsewhere, matched by georeference.

    The directory holds `<name>.f32` files with JSON sidecars; predict()
    finds the raster co-registered with the query image.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self._index: list[tuple[Path, dict]] = []
        for sidecar in sorted(self.directory.glob("*.f32.json")):
            meta = json.loads(sidecar.read_text())
            self._index.append((Path(str(sidecar)[: -len(".json")]), meta))

    def predict(self, image: Raster) -> Raster:
        t = image.transform
        for base, meta in self._index:
            m = meta["transform"]
            same_grid = (
                meta["width"] == image.width
                and meta["height"] == image.height
                and math.isclose(m["origin_x"], t.origin_x, rel_tol=0, abs_tol=1e-6)
                and math.isclose(m["origin_y"], t.origin_y, rel_tol=0, abs_tol=1e-6)
                and math.isclose(m["pixel_w"], t.pixel_w, rel_tol=1e-9)
                and math.isclose(m["pixel_h"], t.pixel_h, rel_tol=1e-9)
            )
            if same_grid:
                r = formats.read_prob_raster(base)
                if r.values.shape != image.values.shape[:2]:
                    raise DimensionMismatch(
                        f"{base} is {r.values.shape}, image is {image.values.shape[:2]}"
                    )
                return r
        raise MissingExternalRaster(
            f"no probability raster in {self.directory} co-registered with the image"
        )


def predict(model, image: Raster) -> Raster:
    """Run any segmenter (baseline or external source) over one image."""
    out = model.predict(image)
    if out.values.shape[:2] != image.values.shape[:2]:
        raise DimensionMismatch("segmenter returned mismatched dimensions")
    return out


# --- gradient verification -----------------------------------------------------

def finite_diff_check(model: BaselineModel, tile: Tile, epsilon: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Uses every pixel of the tile as the batch, under the model's own loss.
    """
    feats, labels = _tile_features_flat(tile, model.spec.feature_radii)
    X = model._design(feats)
    return gradient_check(X, labels, model.weights, model.spec, epsilon)


def gradient_check(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    spec: SegmenterSpec,
    epsilon: float = 1e-5,
) -> float:
    _, grad = _loss_and_grad(X, y, w, spec)
    worst = 0.0
    for j in range(len(w)):
        wp, wm = w.copy(), w.copy()
        wp[j] += epsilon
        wm[j] -= epsilon
        lp, _ = _loss_and_grad(X, y, wp, spec)
        lm, _ = _loss_and_grad(X, y, wm, spec)
        num = (lp - lm) / (2.0 * epsilon)
        denom = max(abs(grad[j]), abs(num), 1e-6)
        worst = max(worst, abs(grad[j] - num) / denom)
    return worst
