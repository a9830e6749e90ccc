"""Command-line surface: one subcommand per pipeline stage.

Flags override values from an optional JSON config file; the dataset
root falls back to the HARBORSCAN_DATA environment variable. All
artifact-producing commands are deterministic for fixed inputs and seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import analytics, evaluation
from .anchors import ClusterConfig, cluster_shapes, kmeans_anchors, write_anchor_files
from .annotations import ClassList, scan_dataset, validate_dataset, write_annotation
from .augment import AugmentSpec, augment
from .decode import BackendUnavailable, ReplayBackend, read_detections
from .service import create_app
from .tracking import (
    TrackerConfig,
    frames_from_dir,
    frames_from_manifest,
    run_pipeline,
    write_observations,
)

ENV_DATA_ROOT = "HARBORSCAN_DATA"


class CliError(Exception):
    """Operational failure reported to stderr with exit code 1."""


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise CliError(f"cannot read config {path}: {err}")


def _pick(flag, config: dict, key: str, default=None):
    if flag is not None:
        return flag
    if key in config:
        return config[key]
    return default


def _dataset_root(args, config: dict) -> Path:
    root = _pick(args.root, config, "dataset_root", os.environ.get(ENV_DATA_ROOT))
    if not root:
        raise CliError("no dataset root: pass --root, set dataset_root in the config, "
                       f"or export {ENV_DATA_ROOT}")
    return Path(root)


def _classes(args, config: dict) -> ClassList:
    path = _pick(args.classes, config, "classes")
    if not path:
        raise CliError("no class file: pass --classes or set classes in the config")
    try:
        return ClassList.from_file(path)
    except (OSError, ValueError) as err:
        raise CliError(f"cannot load class file {path}: {err}")


def _out_dir(args, config: dict) -> Path:
    out = Path(_pick(args.out, config, "output_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scan(args, config: dict):
    root = _dataset_root(args, config)
    classes = _classes(args, config)
    try:
        return scan_dataset(root, classes)
    except FileNotFoundError as err:
        raise CliError(str(err))


def cmd_validate(args) -> int:
    config = _load_config(args.config)
    idx = _scan(args, config)
    report = validate_dataset(idx)
    if args.json:
        payload = {
            "ok": report.ok,
            "counts": report.counts(),
            "issues": [
                {"path": i.path, "line": i.line, "kind": i.kind, "message": i.message}
                for i in report.issues
            ],
        }
        Path(args.json).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    if report.ok:
        print(f"OK: {len(idx.entries)} images, no issues")
        return 0
    for issue in report.issues[:50]:
        where = issue.path if issue.line is None else f"{issue.path}:{issue.line}"
        print(f"{issue.kind}: {where}: {issue.message}", file=sys.stderr)
    if len(report.issues) > 50:
        print(f"... and {len(report.issues) - 50} more", file=sys.stderr)
    counts = ", ".join(f"{k}={v}" for k, v in sorted(report.counts().items()))
    print(f"FAIL: {counts}", file=sys.stderr)
    return 1


def _parse_bins(text: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) != 2:
        raise CliError(f"expected BINS as 'X,Y', got {text!r}")
    return int(parts[0]), int(parts[1])


def cmd_stats(args) -> int:
    config = _load_config(args.config)
    idx = _scan(args, config)
    out = _out_dir(args, config)
    hist = analytics.class_counts(idx)
    analytics.write_summary_json(hist, idx, out / "class_summary.json")
    grid_wh = analytics.density_wh(idx, bins=_parse_bins(args.wh_bins))
    analytics.write_grid_csv(grid_wh, out / "density_wh.csv")
    grid_ar = analytics.density_ar_area(idx, bins=_parse_bins(args.ar_bins), ar_max=args.ar_max)
    analytics.write_grid_csv(grid_ar, out / "density_ar_area.csv")
    print(f"{hist.total} objects over {len(idx.annotated())} annotated images -> {out}")
    return 0


def cmd_anchors(args) -> int:
    config = _load_config(args.config)
    idx = _scan(args, config)
    subset = None
    if args.subset:
        subset = set(Path(args.subset).read_text(encoding="utf-8").splitlines())
    shapes = []
    for entry, records in idx.iter_records():
        if subset is not None and idx.rel_path(entry) not in subset:
            continue
        shapes.extend((r.box.w, r.box.h) for r in records)
    cfg = ClusterConfig(k=args.k, seed=args.seed, max_iter=args.max_iter, metric=args.metric)
    try:
        result = cluster_shapes(shapes, cfg)
        anchor_set = kmeans_anchors(shapes, cfg)
    except Exception as err:
        raise CliError(f"anchor clustering failed: {err}")
    out = _out_dir(args, config)
    write_anchor_files(anchor_set, result.mean_cost, out, metric=args.metric)
    print(f"9 anchors from {len(shapes)} shapes, mean cost {result.mean_cost:.6f} -> {out}")
    return 0


def cmd_split(args) -> int:
    config = _load_config(args.config)
    idx = _scan(args, config)
    try:
        split = analytics.stratified_split(idx, test_fraction=args.fraction, seed=args.seed)
    except (analytics.EmptyDataset, ValueError) as err:
        raise CliError(str(err))
    out = _out_dir(args, config)
    analytics.write_split_lists(split, out)
    summary = {
        "seed": args.seed,
        "test_fraction": args.fraction,
        "train_images": len(split.train),
        "test_images": len(split.test),
        "classes": [
            {
                "class_id": c,
                "name": idx.class_list.name(c),
                "train_objects": split.train_counts[c],
                "test_objects": split.test_counts[c],
                "test_share": split.test_share(c),
            }
            for c in range(len(idx.class_list))
        ],
    }
    (out / "split_summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(f"train {len(split.train)} / test {len(split.test)} images -> {out}")
    return 0


def cmd_augment(args) -> int:
    config = _load_config(args.config)
    idx = _scan(args, config)
    out = _out_dir(args, config)
    spec = AugmentSpec(
        scale_min=args.scale_min,
        scale_max=args.scale_max,
        flip_probability=args.flip_prob,
        seed=args.seed,
        pad_value=args.pad,
    )
    n = 0
    for draw_index, (entry, records) in enumerate(idx.iter_records()):
        with Image.open(entry.image_path) as im:
            image = np.asarray(im.convert("RGB"))
        sample = augment(image, records, spec, draw_index)
        rel = entry.image_path.relative_to(idx.root)
        dest = out / rel
        dest.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(sample.image).save(dest)
        dest.with_suffix(".txt").write_text(write_annotation(sample.records), encoding="utf-8")
        n += 1
    print(f"augmented {n} images -> {out}")
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args.config)
    idx = _scan(args, config)
    try:
        preds = read_detections(args.detections)
    except OSError as err:
        raise CliError(f"cannot read detections: {err}")
    gts = {idx.rel_path(entry): records for entry, records in idx.iter_records()}
    thresholds = (args.iou,) if args.iou is not None else evaluation.DEFAULT_THRESHOLDS
    report = evaluation.iou_sweep(preds, gts, thresholds)
    out = _out_dir(args, config)
    names = idx.class_list.names
    evaluation.write_report_json(report, out / "eval.json", class_names=names)
    evaluation.write_report_csv(report, out / "eval.csv", class_names=names)
    for thr in report.thresholds:
        if thr in report.maps:
            print(f"IoU {thr:.2f}: mAP {report.maps[thr]:.4f}")
    return 0


def cmd_track(args) -> int:
    frames_src = Path(args.frames)
    if frames_src.is_dir():
        frames = frames_from_dir(frames_src)
    elif frames_src.is_file():
        frames = frames_from_manifest(frames_src)
    else:
        raise CliError(f"frames source not found: {frames_src}")
    try:
        backend = ReplayBackend(args.detections)
    except BackendUnavailable as err:
        raise CliError(str(err))
    cfg = TrackerConfig(
        pyramid_levels=args.levels,
        window=args.window,
        detect_every_n=args.every,
        reassoc_iou=args.reassoc_iou,
    )
    write_observations(args.out, run_pipeline(frames, backend, cfg))
    print(f"tracks -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    config = _load_config(args.config)
    root = _dataset_root(args, config)
    classes = _classes(args, config)
    app = create_app(
        root,
        classes,
        detections_path=_pick(args.detections, config, "detections"),
        ui_dir=_pick(args.ui, config, "ui_dir"),
    )
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="harborscan",
        description="Maritime detection pipeline toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", help="JSON config file; flags take precedence")
        p.add_argument("--root", help=f"dataset root (default: ${ENV_DATA_ROOT})")
        p.add_argument("--classes", help="class .names file")
        if out:
            p.add_argument("--out", help="output directory")

    p = sub.add_parser("validate", help="check annotation quality")
    common(p, out=False)
    p.add_argument("--json", help="also write the full report as JSON")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stats", help="class histograms and density grids")
    common(p)
    p.add_argument("--wh-bins", default="50,50", help="bins for the (w, h) grid")
    p.add_argument("--ar-bins", default="80,50", help="bins for the (AR, area) grid")
    p.add_argument("--ar-max", type=float, default=8.0)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("anchors", help="cluster anchor priors")
    common(p)
    p.add_argument("--k", type=int, default=9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=300)
    p.add_argument("--metric", choices=("iou", "euclidean"), default="iou")
    p.add_argument("--subset", help="restrict to image paths listed in this file")
    p.set_defaults(func=cmd_anchors)

    p = sub.add_parser("split", help="stratified train/test split")
    common(p)
    p.add_argument("--fraction", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("augment", help="write augmented image/annotation pairs")
    common(p)
    p.add_argument("--scale-min", type=float, default=0.8)
    p.add_argument("--scale-max", type=float, default=1.2)
    p.add_argument("--flip-prob", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pad", type=int, default=114)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("eval", help="score detections against the dataset")
    common(p)
    p.add_argument("--detections", required=True, help="detections JSON-lines file")
    p.add_argument("--iou", type=float, help="single IoU threshold (default: 0.50..0.95 sweep)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("track", help="run the detect-and-track pipeline")
    p.add_argument("--config", help="JSON config file; flags take precedence")
    p.add_argument("--frames", required=True, help="frame directory or manifest JSON")
    p.add_argument("--detections", required=True, help="replay detections file")
    p.add_argument("--out", required=True, help="output JSON-lines file")
    p.add_argument("--every", type=int, default=3, help="detector cadence in frames")
    p.add_argument("--window", type=int, default=15)
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--reassoc-iou", type=float, default=0.3)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("serve", help="run the annotation review service")
    common(p, out=False)
    p.add_argument("--detections", help="detections file for proposals")
    p.add_argument("--ui", help="directory with the built review UI")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
