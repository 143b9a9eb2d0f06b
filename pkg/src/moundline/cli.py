"""Command line interface.

Exit codes: 0 success, 2 validation error (bad flags, missing paths, invalid
values), 1 runtime failure. With --json-errors, failures also emit one JSON
object on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import catalog, formats, runs
from .evals import (
    AdjustmentRecord,
    ConfusionCounts,
    adjustment_from_json,
    apply_adjustments,
    metrics_csv,
    metrics_table,
)


class ValidationError(ValueError):
    pass


def _parse_counts(text: str) -> ConfusionCounts:
    try:
        tp, tn, fp, fn = (int(v) for v in text.split(","))
        return ConfusionCounts(tp, tn, fp, fn)
    except (ValueError, TypeError) as e:
        raise ValidationError(f"--counts wants 'tp,tn,fp,fn', got {text!r}") from e


def _parse_extent(text: str):
    try:
        x0, y0, x1, y1 = (float(v) for v in text.split(","))
    except ValueError as e:
        raise ValidationError(f"--extent wants 'minx,miny,maxx,maxy', got {text!r}") from e
    if x1 <= x0 or y1 <= y0:
        raise ValidationError("extent is empty")
    return [x0, y0, x1, y1]


def _run_dir(args) -> runs.RunDir:
    root = runs.data_dir(args.data_dir)
    run = runs.RunDir(root / "runs" / args.run)
    if not run.path("config.json").exists():
        raise ValidationError(f"run {args.run!r} not found under {root}")
    return run


def _ensure_run(args, synth_opts=None) -> runs.RunDir:
    root = runs.data_dir(args.data_dir)
    run_path = root / "runs" / args.run
    if (run_path / "config.json").exists():
        return runs.RunDir(run_path)
    cfg = runs.RunConfig(id=args.run, seed=getattr(args, "seed", 0) or 0)
    if synth_opts:
        cfg.synth = synth_opts
    run = runs.RunDir(run_path)
    run.save_config(cfg)
    return run


def cmd_synth(args) -> int:
    run = _ensure_run(args)
    cfg = run.config()
    cfg.seed = args.seed
    cfg.synth = {
        "scenes": args.scenes,
        "empty_frac": args.empty_frac,
        "side_m": args.side,
        "ppm": args.ppm,
        "mounds_per_scene": args.mounds,
        "clutter": args.clutter,
        "margin_m": args.margin,
    }
    run.save_config(cfg)
    out = runs.stage_synth(run)
    print(json.dumps(out))
    return 0


def cmd_curate(args) -> int:
    run = _run_dir(args)
    cfg = run.config()
    if args.sites:
        cfg.sites = args.sites
    if args.negatives:
        cfg.negatives = args.negatives
    cfg.curation = {
        "top_k": args.top_k,
        "min_area": args.min_area,
        "window_side": args.window_side,
        "expected_total": args.expected_total,
    }
    cfg.splits = {"test_frac": args.test_frac, "val_frac_of_train": args.val_frac}
    run.save_config(cfg)
    out = runs.stage_curate(run)
    print(json.dumps(out))
    return 0


def cmd_tile(args) -> int:
    run = _run_dir(args)
    cfg = run.config()
    cfg.tile = {
        "side_m": args.side,
        "ppm": args.ppm,
        "crop": args.crop,
        "downscale": args.downscale,
        "policy": "pad" if args.pad else "strict",
    }
    run.save_config(cfg)
    print(json.dumps(runs.stage_tile(run)))
    return 0


def cmd_train(args) -> int:
    run = _run_dir(args)
    cfg = run.config()
    spec = dict(cfg.segmenter)
    spec.update(
        {
            "loss": args.loss,
            "epochs": args.epochs,
            "learning_rate": args.learning_rate,
            "seed": cfg.seed,
        }
    )
    if args.focal_gamma is not None:
        spec["focal_gamma"] = args.focal_gamma
    if args.focal_alpha is not None:
        spec["focal_alpha"] = args.focal_alpha
    cfg.segmenter = spec
    run.save_config(cfg)
    print(json.dumps(runs.stage_train(run)))
    return 0


def cmd_predict(args) -> int:
    run = _run_dir(args)
    print(json.dumps(runs.stage_predict(run, split=args.split)))
    return 0


def cmd_vectorize(args) -> int:
    run = _run_dir(args)
    cfg = run.config()
    cfg.postproc = {"sigma": args.sigma, "threshold": args.threshold, "min_area": args.min_area}
    run.save_config(cfg)
    print(json.dumps(runs.stage_vectorize(run)))
    return 0


def cmd_evaluate(args) -> int:
    if args.counts:
        counts = _parse_counts(args.counts)
        rows = [("automatic", counts)]
        if args.ledger:
            ledger_path = Path(args.ledger)
            if not ledger_path.exists():
                raise ValidationError(f"ledger file {args.ledger} not found")
            records = [adjustment_from_json(d) for d in formats.read_json(ledger_path)]
            rows.append(("adjusted", apply_adjustments(counts, records)))
        print(metrics_csv(rows) if args.csv else metrics_table(rows))
        return 0
    run = _run_dir(args)
    report = runs.stage_evaluate(run)
    c = report["counts"]
    rows = [("automatic", ConfusionCounts(c["tp"], c["tn"], c["fp"], c["fn"]))]
    print(metrics_csv(rows) if args.csv else metrics_table(rows))
    return 0


def cmd_mosaic(args) -> int:
    run = _run_dir(args)
    cfg = run.config()
    cfg.sweep = {
        "extent": _parse_extent(args.extent),
        "tile": args.tile,
        "stride": args.stride,
        "ramp": args.ramp,
        "ppm": args.ppm,
    }
    run.save_config(cfg)
    print(json.dumps(runs.stage_mosaic(run)))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(runs.data_dir(args.data_dir))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="moundline", description=__doc__)
    p.add_argument("--data-dir", default=None, help=f"run root (default ${runs.DATA_DIR_ENV} or ./moundline-data)")
    p.add_argument("--json-errors", action="store_true", help="emit machine-readable errors on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate synthetic scenes into a run")
    s.add_argument("--run", required=True)
    s.add_argument("--scenes", type=int, default=24)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--empty-frac", type=float, default=0.25)
    s.add_argument("--side", type=float, default=256.0)
    s.add_argument("--ppm", type=float, default=1.0)
    s.add_argument("--mounds", type=int, default=1)
    s.add_argument("--clutter", type=int, default=2)
    s.add_argument("--margin", type=float, default=None)
    s.set_defaults(fn=cmd_synth)

    s = sub.add_parser("curate", help="filter the catalog and split train/val/test")
    s.add_argument("--run", required=True)
    s.add_argument("--sites", default=None)
    s.add_argument("--negatives", default=None)
    s.add_argument("--top-k", type=int, default=0)
    s.add_argument("--min-area", type=float, default=0.0)
    s.add_argument("--window-side", type=float, default=1e12)
    s.add_argument("--expected-total", type=int, default=None)
    s.add_argument("--test-frac", type=float, default=0.1)
    s.add_argument("--val-frac", type=float, default=0.1)
    s.set_defaults(fn=cmd_curate)

    s = sub.add_parser("tile", help="cut windows and ground-truth masks")
    s.add_argument("--run", required=True)
    s.add_argument("--side", type=float, default=128.0)
    s.add_argument("--ppm", type=float, default=1.0)
    s.add_argument("--crop", type=int, default=None)
    s.add_argument("--downscale", action="store_true")
    s.add_argument("--pad", action="store_true", help="zero-pad windows that leave the source")
    s.set_defaults(fn=cmd_tile)

    s = sub.add_parser("train", help="train the baseline segmenter")
    s.add_argument("--run", required=True)
    s.add_argument("--loss", choices=["focal", "dice"], default="focal")
    s.add_argument("--epochs", type=int, default=20)
    s.add_argument("--learning-rate", type=float, default=0.5)
    s.add_argument("--focal-gamma", type=float, default=None)
    s.add_argument("--focal-alpha", type=float, default=None)
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("predict", help="write probability rasters for a split")
    s.add_argument("--run", required=True)
    s.add_argument("--split", default="test", choices=["train", "val", "test"])
    s.set_defaults(fn=cmd_predict)

    s = sub.add_parser("vectorize", help="blur, threshold and polygonize predictions")
    s.add_argument("--run", required=True)
    s.add_argument("--sigma", type=float, default=2.0)
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--min-area", type=float, default=40.0)
    s.set_defaults(fn=cmd_vectorize)

    s = sub.add_parser("evaluate", help="detection metrics from a run or raw counts")
    s.add_argument("--run", default=None)
    s.add_argument("--counts", default=None, help="tp,tn,fp,fn")
    s.add_argument("--ledger", default=None, help="JSON list of adjustment records")
    s.add_argument("--csv", action="store_true")
    s.set_defaults(fn=cmd_evaluate)

    s = sub.add_parser("mosaic", help="sweep a region and stitch a heatmap")
    s.add_argument("--run", required=True)
    s.add_argument("--extent", required=True, help="minx,miny,maxx,maxy")
    s.add_argument("--tile", type=int, default=512)
    s.add_argument("--stride", type=int, default=256)
    s.add_argument("--ramp", choices=["gray", "heat"], default="heat")
    s.add_argument("--ppm", type=float, default=1.0)
    s.set_defaults(fn=cmd_mosaic)

    s = sub.add_parser("serve", help="serve runs and the review API")
    s.add_argument("--port", type=int, default=8008)
    s.add_argument("--host", default="127.0.0.1")
    s.set_defaults(fn=cmd_serve)

    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        if args.command == "evaluate" and not (args.counts or args.run):
            raise ValidationError("evaluate needs --counts or --run")
        return args.fn(args)
    except (ValidationError, FileNotFoundError, ValueError) as e:
        _report_error(args, e, kind="validation")
        return 2
    except Exception as e:  # noqa: BLE001 - the CLI boundary reports and exits
        _report_error(args, e, kind="runtime")
        return 1


def _report_error(args, e: Exception, kind: str) -> None:
    if getattr(args, "json_errors", False):
        sys.stderr.write(json.dumps({"error": {"kind": kind, "type": type(e).__name__, "message": str(e)}}) + "\n")
    else:
        sys.stderr.write(f"moundline: {kind} error: {e}\n")


if __name__ == "__main__":
    sys.exit(main())
