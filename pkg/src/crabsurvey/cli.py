"""Command-line surface for the survey pipeline.

Subcommands cover the pipeline end to end: tile, degrade, augment, train-sr,
eval-sr, train-det, eval-det, ablate, sweep, merge, density, report. Every
run directory receives a manifest.json describing config, inputs, timings
and artifacts.

Exit codes: 0 success, 2 config error, 3 missing input, 4 training
divergence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import torch

from . import __version__
from .augment import AugmentOp, Sample, expand_dataset
from .boxes import BoundingBox, read_labels, write_labels, write_predictions
from .config import detector_config, detector_train_config, load_config
from .density import (
    build_density_map,
    ground_sample_distance,
    merge_tile_detections,
    render_heatmap,
)
from .detector.infer import detect, save_det_checkpoint
from .detector.model import build_detector
from .detector.train import train_detector
from .deteval import evaluate
from .errors import ConfigError, MissingInputError, TrainingDivergedError
from .harness import (
    RunManifest,
    Stage,
    Table,
    evaluate_prediction_dumps,
    list_images,
    load_detector_method,
    load_labeled_tiles,
    load_paired_images,
    load_sr_method,
    run_ablation,
    run_magnification_sweep,
    run_srr_benchmark,
    train_sr_method,
)
from .imaging import degrade, load_image, save_image
from .tiling import (
    TileGrid,
    extract_tile,
    frame_boxes_to_tile,
    plan_tiles,
    read_tile_manifest,
    write_tile_manifest,
)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _setup(args):
    cfg = load_config(args.config)
    seed = cfg["seed"] if args.seed is None else args.seed
    torch.manual_seed(seed)
    manifest = RunManifest(config=cfg, seed=seed)
    return cfg, seed, manifest


def _parse_kv(items, cast_key=str):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"expected KEY=PATH, got {item!r}")
        key, value = item.split("=", 1)
        out[cast_key(key)] = value
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_tile(args):
    cfg, seed, manifest = _setup(args)
    out = _out_dir(args)
    frame_path = Path(args.frame)
    if not frame_path.is_file():
        raise MissingInputError(f"frame not found: {frame_path}")
    manifest.fingerprint_inputs([frame_path])
    frame = load_image(frame_path)

    policy = args.policy or cfg["tiling"]["edge_policy_train"]
    grid = TileGrid(cfg["tiling"]["window"], cfg["tiling"]["stride"], policy)
    tiles = plan_tiles(frame.width, frame.height, grid, frame_path.stem)

    frame_boxes = []
    if args.labels:
        norm = read_labels(args.labels)
        frame_boxes = [
            BoundingBox(b.class_id, b.cx * frame.width, b.cy * frame.height,
                        b.w * frame.width, b.h * frame.height)
            for b in norm
        ]
        manifest.fingerprint_inputs([args.labels])

    tiles_dir = out / "tiles"
    labels_dir = out / "labels"
    tiles_dir.mkdir(exist_ok=True)
    labels_dir.mkdir(exist_ok=True)
    rows = []
    with Stage(manifest, "tile"):
        for i, tile in enumerate(tiles):
            tile_path = tiles_dir / f"{tile.source_id}_{i:04d}.png"
            save_image(extract_tile(frame, tile), tile_path)
            rows.append((tile, tile_path))
            manifest.outputs.append(tile_path)
            if args.labels:
                tile_boxes = frame_boxes_to_tile(
                    frame_boxes, tile, cfg["tiling"]["min_clipped_area_ratio"]
                )
                label_path = labels_dir / f"{tile_path.stem}.txt"
                write_labels(tile_boxes, label_path)
                manifest.outputs.append(label_path)
    manifest_path = out / "tiles.csv"
    write_tile_manifest(rows, manifest_path)
    manifest.outputs.append(manifest_path)
    manifest.write(out)
    print(f"planned {len(tiles)} tiles -> {out}")


def cmd_degrade(args):
    cfg, seed, manifest = _setup(args)
    out = _out_dir(args)
    factor = args.factor or cfg["degradation"]["factor"]
    paths = list_images(args.images)
    manifest.fingerprint_inputs(paths)
    with Stage(manifest, "degrade"):
        for p in paths:
            lr = degrade(load_image(p), factor, cfg["degradation"]["kernel_a"])
            dst = out / p.name
            save_image(lr, dst)
            manifest.outputs.append(dst)
    manifest.write(out)
    print(f"degraded {len(paths)} images by x{factor} -> {out}")


def cmd_augment(args):
    cfg, seed, manifest = _setup(args)
    out = _out_dir(args)
    tiles = load_labeled_tiles(args.images, args.labels)
    manifest.fingerprint_inputs([p for p in list_images(args.images)])
    recipe = [
        AugmentOp(kind, s)
        for kind in cfg["augment"]["geometric"]
        for s in cfg["augment"]["scales"]
    ]
    samples = [Sample(img, tuple(boxes), stem) for stem, img, boxes in tiles]
    img_dir = out / "images"
    lab_dir = out / "labels"
    img_dir.mkdir(exist_ok=True)
    lab_dir.mkdir(exist_ok=True)
    with Stage(manifest, "augment"):
        expanded = expand_dataset(samples, recipe)
        for s in expanded:
            img_path = img_dir / f"{s.provenance}.png"
            save_image(s.image, img_path)
            write_labels(s.boxes, lab_dir / f"{s.provenance}.txt")
            manifest.outputs += [img_path, lab_dir / f"{s.provenance}.txt"]
    manifest.write(out)
    print(f"{len(samples)} samples x {len(recipe)} ops -> {len(expanded)} augmented samples")


def cmd_train_sr(args):
    cfg, seed, manifest = _setup(args)
    out = _out_dir(args)
    pairs = load_paired_images(args.lr_dir, args.hr_dir)
    model, ckpt_path = train_sr_method(
        cfg, pairs, out, manifest, seed,
        magnification=args.magnification, preset=args.preset,
    )
    manifest.write(out)
    print(f"trained SR model -> {ckpt_path}")


def cmd_eval_sr(args):
    cfg, seed, manifest = _setup(args)
    out = _out_dir(args)
    pairs = load_paired_images(args.lr_dir, args.hr_dir)
    sr_models = {
        name: load_sr_method(path, cfg, preset=name.lower() if name.lower() in
                             ("srcnn", "edsr", "rdn", "rcan", "srfbn") else None)
        for name, path in _parse_kv(args.checkpoint).items()
    }
    detector = labels = None
    if args.det_checkpoint:
        detector = load_detector_method(args.det_checkpoint, cfg)
        if not args.labels_dir:
            raise ConfigError("--labels-dir is required with --det-checkpoint")
        tiles = load_labeled_tiles(args.hr_dir, args.labels_dir)
        labels = {stem: gts for stem, _, gts in tiles}
    with Stage(manifest, "srr_benchmark"):
        results = run_srr_benchmark(cfg, pairs, sr_models, out, manifest,
                                    detector=detector, labels_by_stem=labels)
    manifest.write(out)
    for method, row in results.items():
        print(f"{method}: psnr={row['psnr']:.3f} ssim={row['ssim']:.4f}")


def cmd_train_det(args):
    cfg, seed, manifest = _setup(args)
    out = _out_dir(args)
    tiles = load_labeled_tiles(args.images, args.labels)
    torch.manual_seed(seed)
    model = build_detector(detector_config(cfg))
    dataset = [(img, gts) for _, img, gts in tiles]
    log_path = out / "detector_loss.csv"
    with Stage(manifest, "train_det"):
        ckpt = train_detector(model, dataset, detector_train_config(cfg, seed), log_path=log_path)
    ckpt_path = out / "detector.pt"
    save_det_checkpoint(ckpt, ckpt_path)
    manifest.outputs += [log_path, ckpt_path]
    manifest.write(out)
    print(f"trained detector -> {ckpt_path}")


def cmd_eval_det(args):
    cfg, seed, manifest = _setup(args)
    out = _out_dir(args)
    if bool(args.checkpoint) == bool(args.pred_dir):
        raise ConfigError("give exactly one of --checkpoint or --pred-dir")
    if args.checkpoint and not args.images:
        raise ConfigError("--images is required with --checkpoint")
    if args.pred_dir:
        with Stage(manifest, "eval_det"):
            report = evaluate_prediction_dumps(
                args.pred_dir, args.labels, cfg["eval"]["iou_threshold"]
            )
    else:
        tiles = load_labeled_tiles(args.images, args.labels)
        model = load_detector_method(args.checkpoint, cfg)
        dump_dir = None
        if args.dump_dir:
            dump_dir = Path(args.dump_dir)
            dump_dir.mkdir(parents=True, exist_ok=True)
        with Stage(manifest, "eval_det"):
            pairs = []
            for stem, img, gts in tiles:
                dets = detect(model, img)
                if dump_dir is not None:
                    write_predictions(dets, dump_dir / f"{stem}.txt")
                    manifest.outputs.append(dump_dir / f"{stem}.txt")
                pairs.append((dets, gts))
            report = evaluate(pairs, cfg["eval"]["iou_threshold"])

    table = Table("detection metrics", ["class", "precision", "recall", "f1", "ap50"])
    from .boxes import CLASS_NAMES
    from .deteval import report_to_dict

    for c in report.per_class:
        table.rows.append(
            [CLASS_NAMES[c.class_id], c.precision, c.recall, c.f1,
             c.ap if c.ap is not None else "n/a"]
        )
    table.rows.append(["mAP@50", "", "", "", report.map50])
    table.write_csv(out / "det_metrics.csv")
    table.write_text(out / "det_metrics.txt")
    import json

    (out / "det_metrics.json").write_text(json.dumps(report_to_dict(report), indent=2) + "\n")
    manifest.outputs += [
        out / "det_metrics.csv", out / "det_metrics.txt", out / "det_metrics.json",
    ]
    manifest.write(out)
    print(f"mAP@50 = {report.map50:.4f}")


def cmd_ablate(args):
    cfg, seed, manifest = _setup(args)
    out = _out_dir(args)
    tiles = load_labeled_tiles(args.images, args.labels)
    table = run_ablation(cfg, tiles, out, manifest, seed)
    manifest.write(out)
    print(table.to_text())


def cmd_sweep(args):
    cfg, seed, manifest = _setup(args)
    out = _out_dir(args)
    pairs = load_paired_images(args.lr_dir, args.hr_dir)
    tiles = load_labeled_tiles(args.hr_dir, args.labels_dir)
    labels = {stem: gts for stem, _, gts in tiles}
    sr_models = {
        int(m): load_sr_method(path, cfg, magnification=int(m))
        for m, path in _parse_kv(args.checkpoint).items()
    }
    detector = load_detector_method(args.det_checkpoint, cfg)
    with Stage(manifest, "sweep"):
        table = run_magnification_sweep(cfg, pairs, sr_models, detector, labels, out, manifest)
    manifest.write(out)
    print(table.to_text())


def cmd_merge(args):
    cfg, seed, manifest = _setup(args)
    out = _out_dir(args)
    entries = read_tile_manifest(args.tiles)
    pred_dir = Path(args.pred_dir)
    tile_dets = []
    for tile, tile_path in entries:
        pred_path = pred_dir / f"{Path(tile_path).stem}.txt"
        dets = []
        if pred_path.is_file():
            from .boxes import read_predictions

            dets = read_predictions(pred_path)
        tile_dets.append((tile, dets))
    merged = merge_tile_detections(tile_dets, cfg["merge"]["merge_iou"])
    import csv as _csv

    merged_path = out / "merged_detections.csv"
    with open(merged_path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["class_id", "cx_px", "cy_px", "w_px", "h_px", "confidence"])
        for det in merged:
            writer.writerow([det.class_id, f"{det.cx:.2f}", f"{det.cy:.2f}",
                             f"{det.w:.2f}", f"{det.h:.2f}", f"{det.confidence:.6f}"])
    manifest.outputs.append(merged_path)
    manifest.write(out)
    print(f"merged {sum(len(d) for _, d in tile_dets)} tile detections into {len(merged)}")


def cmd_density(args):
    cfg, seed, manifest = _setup(args)
    out = _out_dir(args)
    import csv as _csv

    dets = []
    with open(args.detections, newline="") as fh:
        for row in _csv.DictReader(fh):
            dets.append(
                BoundingBox(
                    int(row["class_id"]), float(row["cx_px"]), float(row["cy_px"]),
                    float(row["w_px"]), float(row["h_px"]), float(row["confidence"]),
                )
            )
    grid = build_density_map(dets, args.cell_size or cfg["density"]["cell_size"],
                             args.frame_width, args.frame_height)
    cam = cfg["camera"]
    gsd = ground_sample_distance(cam["altitude_m"], cam["fov_deg"], cam["pixel_width"])
    heat_path = out / "density.png"
    render_heatmap(grid, heat_path, cfg["density"]["pixels_per_cell"], gsd_m_per_px=gsd)
    manifest.outputs += [heat_path, Path(f"{heat_path}.csv")]
    manifest.write(out)
    print(f"binned {grid.total()} detections into {grid.rows}x{grid.cols} cells")


def cmd_report(args):
    cfg, seed, manifest = _setup(args)
    out = _out_dir(args)
    pairs = load_paired_images(args.lr_dir, args.hr_dir)
    manifest.fingerprint_inputs(list_images(args.lr_dir) + list_images(args.hr_dir))
    sr_models = {
        name: load_sr_method(path, cfg, preset=name.lower() if name.lower() in
                             ("srcnn", "edsr", "rdn", "rcan", "srfbn") else None)
        for name, path in _parse_kv(args.sr_checkpoint).items()
    }
    detector = labels = None
    if args.det_checkpoint:
        detector = load_detector_method(args.det_checkpoint, cfg)
        if not args.labels_dir:
            raise ConfigError("--labels-dir is required with --det-checkpoint")
        tiles = load_labeled_tiles(args.hr_dir, args.labels_dir)
        labels = {stem: gts for stem, _, gts in tiles}
    with Stage(manifest, "report"):
        run_srr_benchmark(cfg, pairs, sr_models, out, manifest,
                          detector=detector, labels_by_stem=labels)
    manifest.write(out)
    print(f"report written to {out}")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crabsurvey",
        description="Beach-survey pipeline: tile, super-resolve, detect, map.",
    )
    parser.add_argument("--version", action="version", version=f"crabsurvey {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config overriding the built-in defaults")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", required=True, help="output directory for this run")

    p = sub.add_parser("tile", help="slide a window over a frame, write tiles (+labels)")
    common(p)
    p.add_argument("--frame", required=True)
    p.add_argument("--labels", help="frame-normalized label file")
    p.add_argument("--policy", choices=["drop_partial", "pad_reflect"])
    p.set_defaults(func=cmd_tile)

    p = sub.add_parser("degrade", help="bicubic-downsample HR images to LR")
    common(p)
    p.add_argument("--images", required=True)
    p.add_argument("--factor", type=int)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("augment", help="expand a labeled tile set with the configured recipe")
    common(p)
    p.add_argument("--images", required=True)
    p.add_argument("--labels", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train-sr", help="train one super-resolution model")
    common(p)
    p.add_argument("--lr-dir", required=True)
    p.add_argument("--hr-dir", required=True)
    p.add_argument("--preset", help="architecture preset name (default from config)")
    p.add_argument("--magnification", type=int)
    p.set_defaults(func=cmd_train_sr)

    p = sub.add_parser("eval-sr", help="score reconstruction methods (IQ, optional detection)")
    common(p)
    p.add_argument("--lr-dir", required=True)
    p.add_argument("--hr-dir", required=True)
    p.add_argument("--checkpoint", action="append", metavar="NAME=PATH")
    p.add_argument("--det-checkpoint")
    p.add_argument("--labels-dir")
    p.set_defaults(func=cmd_eval_sr)

    p = sub.add_parser("train-det", help="train the configured detector variant")
    common(p)
    p.add_argument("--images", required=True)
    p.add_argument("--labels", required=True)
    p.set_defaults(func=cmd_train_det)

    p = sub.add_parser("eval-det", help="score a checkpoint or stored prediction dumps")
    common(p)
    p.add_argument("--images", help="labeled tiles (with --checkpoint)")
    p.add_argument("--labels", required=True)
    p.add_argument("--checkpoint", help="detector checkpoint to run")
    p.add_argument("--pred-dir", help="directory of per-image prediction dumps to score")
    p.add_argument("--dump-dir", help="also write the detector's predictions here")
    p.set_defaults(func=cmd_eval_det)

    p = sub.add_parser("ablate", help="train+score the four detector variants")
    common(p)
    p.add_argument("--images", required=True)
    p.add_argument("--labels", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="magnification sweep over per-m SR checkpoints")
    common(p)
    p.add_argument("--lr-dir", required=True)
    p.add_argument("--hr-dir", required=True)
    p.add_argument("--labels-dir", required=True)
    p.add_argument("--checkpoint", action="append", metavar="M=PATH", required=True)
    p.add_argument("--det-checkpoint", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("merge", help="merge per-tile predictions into frame detections")
    common(p)
    p.add_argument("--tiles", required=True, help="tile manifest CSV")
    p.add_argument("--pred-dir", required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("density", help="bin merged detections into a density grid + heatmap")
    common(p)
    p.add_argument("--detections", required=True, help="merged_detections.csv")
    p.add_argument("--frame-width", type=float, required=True)
    p.add_argument("--frame-height", type=float, required=True)
    p.add_argument("--cell-size", type=float)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("report", help="assemble the evaluation tables for a test set")
    common(p)
    p.add_argument("--lr-dir", required=True)
    p.add_argument("--hr-dir", required=True)
    p.add_argument("--sr-checkpoint", action="append", metavar="NAME=PATH")
    p.add_argument("--det-checkpoint")
    p.add_argument("--labels-dir")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (MissingInputError, FileNotFoundError) as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return 3
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
