import math

import numpy as np
import pytest

from moundline.geo import GeoTransform, Raster, prob_raster
from moundline.segmenter import (
    BaselineModel,
    DimensionMismatch,
    EmptyTrainingSet,
    ExternalRasterSource,
    SegmenterSpec,
    dice_loss,
    extract_features,
    feature_names,
    finite_diff_check,
    focal_loss,
    gradient_check,
    predict,
    train_baseline,
)
from moundline.tiles import Tile
from moundline import formats


def ellipse_tile(side=64, seed=0, contrast=60.0):
    """Bright ellipse on a darker, lightly noisy ground; linearly separable."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:side, 0:side]
    cy, cx = side / 2 + rng.uniform(-6, 6), side / 2 + rng.uniform(-6, 6)
    a, b = rng.uniform(9, 13), rng.uniform(6, 9)
    d2 = ((xx - cx) / a) ** 2 + ((yy - cy) / b) ** 2
    base = 80.0 + rng.normal(0, 2.0, (side, side))
    img = base + contrast * (d2 < 1.0)
    rgb = np.clip(np.stack([img] * 3, axis=-1), 0, 255).astype(np.uint8)
    t = GeoTransform(0, side, 1, 1)
    mask = (d2 < 1.0).astype(np.uint8)
    return Tile(Raster(rgb, t), Raster(mask, t), source_id=f"ellipse{seed}")


# --- focal loss -------------------------------------------------------------

def test_focal_reduces_to_half_bce():
    rng = np.random.default_rng(0)
    p = rng.uniform(0.01, 0.99, 200)
    y = rng.integers(0, 2, 200).astype(float)
    bce = -(y * np.log(p) + (1 - y) * np.log(1 - p))
    fl = focal_loss(p, y, gamma=0.0, alpha=0.5)
    assert np.max(np.abs(fl - 0.5 * bce)) < 1e-12


def test_focal_perfect_prediction_vanishes():
    assert focal_loss(1.0 - 1e-7, 1, gamma=2.0, alpha=0.25) < 1e-12
    assert focal_loss(1e-7, 0, gamma=2.0, alpha=0.25) < 1e-12


def test_focal_scalar_value():
    # 0.25 * (1-0.5)^2 * ln 2
    expect = 0.25 * 0.25 * math.log(2.0)
    assert focal_loss(0.5, 1, gamma=2.0, alpha=0.25) == pytest.approx(expect, rel=1e-12)
    assert expect == pytest.approx(0.043322, abs=5e-7)


def test_focal_nonnegative_and_monotone_in_pt():
    ps = np.linspace(0.01, 0.99, 99)
    losses = focal_loss(ps, np.ones_like(ps), gamma=2.0, alpha=0.25)
    assert (losses >= 0).all()
    assert (np.diff(losses) < 0).all()  # decreasing as p_t grows


# --- dice loss ---------------------------------------------------------------

def test_dice_identical_binary_is_zero():
    m = np.array([[1, 0], [1, 1]], dtype=float)
    assert dice_loss(m, m) == pytest.approx(0.0, abs=1e-15)


def test_dice_total_miss():
    n = 12
    pred = np.zeros(n)
    target = np.ones(n)
    assert dice_loss(pred, target) == pytest.approx(1.0 - 1.0 / (n + 1), rel=1e-12)


def test_dice_matches_direct_summation_oracle():
    rng = np.random.default_rng(4)
    for _ in range(10):
        p = rng.uniform(0, 1, (4, 4))
        y = rng.integers(0, 2, (4, 4)).astype(float)
        num = 2.0 * sum(p[i, j] * y[i, j] for i in range(4) for j in range(4)) + 1.0
        den = sum(p.flat) + sum(y.flat) + 1.0
        assert dice_loss(p, y) == pytest.approx(1.0 - num / den, abs=1e-12)


def test_dice_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        dice_loss(np.zeros((2, 2)), np.zeros((3, 2)))


# --- spec validation ----------------------------------------------------------

def test_spec_rejects_zero_epochs():
    with pytest.raises(ValueError):
        SegmenterSpec(epochs=0)


def test_spec_rejects_unsorted_radii():
    with pytest.raises(ValueError):
        SegmenterSpec(feature_radii=(4, 2))
    with pytest.raises(ValueError):
        SegmenterSpec(feature_radii=())


def test_spec_json_round_trip():
    spec = SegmenterSpec(loss="dice", epochs=3, feature_radii=(1, 5), seed=9)
    assert SegmenterSpec.from_json(spec.to_json()) == spec


# --- features -------------------------------------------------------------------

def test_feature_shape_and_names():
    tile = ellipse_tile(32)
    feats = extract_features(tile.image, (2, 4))
    assert feats.shape == (32, 32, 13)
    assert len(feature_names((2, 4))) == 13


def test_constant_image_features():
    t = GeoTransform(0, 8, 1, 1)
    img = Raster(np.full((8, 8, 3), 100, dtype=np.uint8), t)
    feats = extract_features(img, (2,))
    mean, std, mn, mx, gm = (feats[4, 4, k] for k in range(5))
    assert mean == pytest.approx(100 / 255)
    assert std == pytest.approx(0.0, abs=1e-12)
    assert mn == mx == pytest.approx(100 / 255)
    assert gm == pytest.approx(0.0, abs=1e-12)


# --- training -------------------------------------------------------------------

def test_train_requires_tiles():
    with pytest.raises(EmptyTrainingSet):
        train_baseline([], SegmenterSpec())


def test_train_separable_scene_reaches_high_pixel_accuracy():
    train = [ellipse_tile(48, seed=s) for s in range(6)]
    val = [ellipse_tile(48, seed=100 + s) for s in range(2)]
    spec = SegmenterSpec(epochs=20, feature_radii=(1, 2, 4), seed=0, batch_pixels=1024)
    model = train_baseline(train, spec, val_tiles=val)
    correct = total = 0
    for tile in val:
        p = model.predict(tile.image).values
        pred = (p >= 0.5).astype(np.uint8)
        correct += int((pred == tile.mask.values).sum())
        total += pred.size
    assert correct / total >= 0.95
    assert len(model.history["train"]) == 20
    assert len(model.history["val"]) == 20


def test_train_deterministic_history():
    tiles = [ellipse_tile(32, seed=s) for s in range(3)]
    spec = SegmenterSpec(epochs=4, feature_radii=(1, 2), seed=7, batch_pixels=512)
    h1 = train_baseline(tiles, spec).history["train"]
    h2 = train_baseline(tiles, spec).history["train"]
    assert h1 == h2  # bitwise


def test_train_loss_monotone_on_convex_problem():
    # full batch, no balancing, focal gamma=0 (0.5*BCE): plain logistic GD
    tile = ellipse_tile(24, seed=1)
    spec = SegmenterSpec(
        epochs=30,
        learning_rate=0.2,
        feature_radii=(1, 2),
        focal_gamma=0.0,
        focal_alpha=0.5,
        seed=0,
        batch_pixels=24 * 24,
        balance=False,
    )
    hist = train_baseline([tile], spec).history["train"]
    diffs = np.diff(hist)
    assert (diffs <= 1e-9).all()


# --- prediction -------------------------------------------------------------------

def test_zero_weight_model_predicts_half():
    spec = SegmenterSpec(feature_radii=(1,))
    nf = len(feature_names((1,)))
    model = BaselineModel(
        weights=np.zeros(nf + 1),
        spec=spec,
        norm_mean=np.zeros(nf),
        norm_std=np.ones(nf),
    )
    tile = ellipse_tile(16)
    out = predict(model, tile.image)
    assert np.allclose(out.values, 0.5)


def test_prediction_range_and_transform():
    tiles = [ellipse_tile(32, seed=s) for s in range(2)]
    model = train_baseline(tiles, SegmenterSpec(epochs=3, feature_radii=(1, 2), batch_pixels=512))
    out = predict(model, tiles[0].image)
    assert out.values.min() >= 0.0 and out.values.max() <= 1.0
    assert out.transform == tiles[0].image.transform


def test_trained_model_separates_inside_from_outside():
    tiles = [ellipse_tile(48, seed=s) for s in range(4)]
    model = train_baseline(tiles, SegmenterSpec(epochs=10, feature_radii=(1, 2, 4), batch_pixels=1024))
    probe = ellipse_tile(48, seed=50)
    p = model.predict(probe.image).values
    inside = p[probe.mask.values == 1].mean()
    outside = p[probe.mask.values == 0].mean()
    assert inside > outside


def test_external_raster_pass_through(tmp_path):
    t = GeoTransform(10, 20, 1, 1)
    vals = np.random.default_rng(0).uniform(0, 1, (8, 8)).astype(np.float32).astype(np.float64)
    formats.write_prob_raster(tmp_path / "a.f32", Raster(vals, t))
    src = ExternalRasterSource(tmp_path)
    img = Raster(np.zeros((8, 8, 3), dtype=np.uint8), t)
    out = predict(src, img)
    assert np.array_equal(out.values, vals)


def test_external_raster_missing(tmp_path):
    from moundline.segmenter import MissingExternalRaster

    src = ExternalRasterSource(tmp_path)
    img = Raster(np.zeros((4, 4, 3), dtype=np.uint8), GeoTransform(0, 4, 1, 1))
    with pytest.raises(MissingExternalRaster):
        src.predict(img)


# --- gradient checks ----------------------------------------------------------

def test_gradient_check_focal_and_dice_small():
    rng = np.random.default_rng(2)
    for loss in ("focal", "dice"):
        spec = SegmenterSpec(loss=loss, feature_radii=(1,))
        X = np.concatenate([rng.normal(0, 1, (64, 8)), np.ones((64, 1))], axis=1)
        y = rng.integers(0, 2, 64).astype(float)
        w = rng.normal(0, 0.5, 9)
        assert gradient_check(X, y, w, spec, epsilon=1e-5) < 1e-4


def test_finite_diff_check_on_tile():
    tile = ellipse_tile(16, seed=3)
    for loss in ("focal", "dice"):
        spec = SegmenterSpec(loss=loss, feature_radii=(1, 2))
        nf = len(feature_names((1, 2)))
        rng = np.random.default_rng(1)
        model = BaselineModel(
            weights=rng.normal(0, 0.3, nf + 1),
            spec=spec,
            norm_mean=np.full(nf, 0.4),
            norm_std=np.full(nf, 0.2),
        )
        assert finite_diff_check(model, tile, epsilon=1e-5) < 1e-4


def test_gradient_zero_at_symmetric_optimum():
    # identical features, half positive half negative, zero weights:
    # p = 0.5 is the optimum and the gradient vanishes
    spec = SegmenterSpec(loss="focal", focal_gamma=0.0, focal_alpha=0.5, feature_radii=(1,))
    X = np.concatenate([np.full((32, 4), 0.7), np.ones((32, 1))], axis=1)
    y = np.array([0.0, 1.0] * 16)
    w = np.zeros(5)
    assert gradient_check(X, y, w, spec, epsilon=1e-5) < 1e-5
