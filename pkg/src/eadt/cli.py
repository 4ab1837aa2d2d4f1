"""Command-line interface.

Ten subcommands wire the on-disk formats to the library operations:
dataset splitting, the augmentation ops, segmentation ensembling and
post-processing with its tuner, detection fusion with its tuner, and the
two evaluators. Every run writes a JSON run-report carrying sha256
digests of the inputs, the effective configuration, the results, and the
wall time, so any artifact can be regenerated from its report.

Exit codes: 0 success, 1 usage, 2 configuration, 3 I/O or file format,
4 invariant violation reported by the library layer.
"""
from __future__ import annotations

import argparse
import hashlib
import os
import sys
import time
from typing import Optional, Sequence

from . import augment, detfuse, segpost
from ._backend import active_backend
from .core import BinaryMask, ProbMap
from .errors import (
    ConfigError,
    EmptyDataset,
    EmptyEnsemble,
    FormatError,
    InvalidTensorData,
    ToolkitError,
)
from .io import (
    JSON_VERSION,
    RunConfig,
    SUBSETS,
    SplitManifest,
    load_run_config,
    read_detections,
    read_mask_tensor,
    split_sequential,
    write_detections,
    write_json,
    write_manifest,
    write_mask_tensor,
)
from .metrics import evaluate_segmentation, mean_ap


class UsageError(Exception):
    """Command-line misuse that argparse cannot express declaratively."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; the contract here is 1.
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


_UNSET = object()


# ---------------------------------------------------------------------------
# Shared plumbing


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _load_config(args) -> RunConfig:
    if getattr(args, "config", None):
        return load_run_config(args.config)
    return RunConfig()


def _resolve_seed(args, cfg: RunConfig) -> int:
    return args.seed if args.seed is not None else cfg.seed


def _finish(args, command: str, config_echo: dict, inputs: Sequence[str],
            outputs: Sequence[str], results: dict, default_report: str,
            started: float) -> int:
    report = {
        "version": JSON_VERSION,
        "command": command,
        "backend": active_backend(),
        "config": config_echo,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "results": results,
        "wall_time_s": round(time.monotonic() - started, 6),
    }
    path = args.report or default_report
    write_json(path, report)
    return 0


def _read_prob(path: str) -> ProbMap:
    t = read_mask_tensor(path)
    if not isinstance(t, ProbMap):
        raise InvalidTensorData(f"{path}: expected a float probability tensor")
    return t


def _read_mask(path: str) -> BinaryMask:
    t = read_mask_tensor(path)
    if not isinstance(t, BinaryMask):
        raise InvalidTensorData(f"{path}: expected a boolean mask tensor")
    return t


def _expand_tensors(paths: Sequence[str], what: str) -> list[str]:
    """A single directory argument expands to its sorted *.eadt files."""
    if len(paths) == 1 and os.path.isdir(paths[0]):
        names = sorted(n for n in os.listdir(paths[0]) if n.endswith(".eadt"))
        if not names:
            raise EmptyDataset(f"no .eadt files in {what} directory {paths[0]}")
        return [os.path.join(paths[0], n) for n in names]
    return list(paths)


def _aligned_datasets(args, cfg: RunConfig) -> tuple[list[str], list[str]]:
    """Prediction and ground-truth tensor paths, aligned pairwise."""
    preds = args.preds or ([cfg.pred_dir] if cfg.pred_dir else None)
    gts = args.gts or ([cfg.gt_dir] if cfg.gt_dir else None)
    if not preds or not gts:
        raise ConfigError("need --preds/--gts or pred_dir/gt_dir in the config")
    pred_paths = _expand_tensors(preds, "prediction")
    gt_paths = _expand_tensors(gts, "ground-truth")
    if len(pred_paths) != len(gt_paths):
        raise ValueError(
            f"{len(pred_paths)} prediction files vs {len(gt_paths)} ground-truth files")
    if (args.preds is None or os.path.isdir(preds[0])) and (
            args.gts is None or os.path.isdir(gts[0])):
        pred_names = [os.path.basename(p) for p in pred_paths]
        gt_names = [os.path.basename(p) for p in gt_paths]
        if pred_names != gt_names:
            raise ValueError("prediction and ground-truth directories hold "
                             "different file names; cannot align pairs")
    return pred_paths, gt_paths


def _parse_optional_float(text: str) -> Optional[float]:
    return None if text.lower() == "none" else float(text)


def _parse_weight_pattern(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"weight pattern must be comma-separated numbers, got {text!r}") from exc


# ---------------------------------------------------------------------------
# Subcommand handlers


def _cmd_split(args) -> int:
    started = time.monotonic()
    with open(args.ids, "r", encoding="utf-8") as fh:
        ids = [line.strip() for line in fh if line.strip()]
    manifest = split_sequential(ids, args.counts)
    os.makedirs(args.out_dir, exist_ok=True)
    outputs = []
    for subset in SUBSETS:
        part = SplitManifest(entries=tuple(
            (i, s) for i, s in manifest.entries if s == subset))
        path = os.path.join(args.out_dir, f"{args.prefix}_{subset}.json")
        write_manifest(path, part)
        outputs.append(path)
    echo = {"ids": args.ids, "counts": list(args.counts), "prefix": args.prefix}
    return _finish(args, "split", echo, [args.ids], outputs,
                   {"counts": manifest.counts()},
                   os.path.join(args.out_dir, "run-report.json"), started)


def _cmd_augment_pad(args) -> int:
    started = time.monotonic()
    tensor = read_mask_tensor(args.input)
    padded, original = augment.pad_to_multiple(tensor, args.multiple)
    write_mask_tensor(args.out, padded)
    echo = {"input": args.input, "multiple": args.multiple}
    results = {"original_size": list(original),
               "padded_size": list(padded.data.shape[1:])}
    return _finish(args, "augment pad", echo, [args.input], [args.out],
                   results, args.out + ".report.json", started)


def _cmd_augment_unpad(args) -> int:
    started = time.monotonic()
    tensor = read_mask_tensor(args.input)
    cropped = augment.unpad(tensor, (args.height, args.width))
    write_mask_tensor(args.out, cropped)
    echo = {"input": args.input, "height": args.height, "width": args.width}
    return _finish(args, "augment unpad", echo, [args.input], [args.out],
                   {"size": [args.height, args.width]},
                   args.out + ".report.json", started)


def _cmd_augment_crop(args) -> int:
    started = time.monotonic()
    cfg = _load_config(args)
    image = read_mask_tensor(args.image)
    explicit = args.offset_x is not None or args.offset_y is not None
    inputs = [args.image]
    outputs = []
    if explicit:
        if args.offset_x is None or args.offset_y is None:
            raise UsageError("--offset-x and --offset-y must be given together")
        spec = augment.CropSpec(offset_x=args.offset_x, offset_y=args.offset_y,
                                size=args.size)
        out_img = augment.apply_crop(image, spec)
        out_mask = None
        if args.mask:
            inputs.append(args.mask)
            out_mask = augment.apply_crop(_read_mask(args.mask), spec)
    else:
        if not args.mask:
            raise UsageError("random crop policies need --mask")
        inputs.append(args.mask)
        mask = _read_mask(args.mask)
        seed = _resolve_seed(args, cfg)
        rng = augment.RandomSource(seed)
        if args.policy == augment.CROP_NONEMPTY:
            out_img, out_mask, spec = augment.crop_nonempty(image, mask,
                                                            args.size, rng)
        else:
            out_img, out_mask, spec = augment.crop_random(image, mask,
                                                          args.size, rng)
    write_mask_tensor(args.out_image, out_img)
    outputs.append(args.out_image)
    if out_mask is not None:
        if not args.out_mask:
            raise UsageError("--out-mask is required when a mask is cropped")
        write_mask_tensor(args.out_mask, out_mask)
        outputs.append(args.out_mask)
    echo = {"size": args.size, "policy": None if explicit else args.policy,
            "seed": None if explicit else _resolve_seed(args, cfg)}
    results = {"offset_x": spec.offset_x, "offset_y": spec.offset_y,
               "size": spec.size}
    return _finish(args, "augment crop", echo, inputs, outputs, results,
                   args.out_image + ".report.json", started)


def _cmd_augment_flip(args) -> int:
    started = time.monotonic()
    if bool(args.input) == bool(args.boxes):
        raise UsageError("pass exactly one of --in (tensors) or --boxes")
    inputs, outputs = [], []
    results: dict = {"axis": args.axis}
    if args.input:
        tensor = read_mask_tensor(args.input)
        write_mask_tensor(args.out, augment.flip_tensor(tensor, args.axis))
        inputs.append(args.input)
        outputs.append(args.out)
        if args.mask:
            if not args.out_mask:
                raise UsageError("--out-mask is required with --mask")
            flipped = augment.flip_tensor(_read_mask(args.mask), args.axis)
            write_mask_tensor(args.out_mask, flipped)
            inputs.append(args.mask)
            outputs.append(args.out_mask)
        primary = args.out
    else:
        if args.width is None or args.height is None:
            raise UsageError("--boxes needs --width and --height")
        dsets = read_detections(args.boxes)
        flipped_sets = [augment.flip_boxes(d, args.axis, args.width, args.height)
                        for d in dsets]
        write_detections(args.out, flipped_sets)
        inputs.append(args.boxes)
        outputs.append(args.out)
        results.update({"width": args.width, "height": args.height})
        primary = args.out
    return _finish(args, "augment flip", {"axis": args.axis}, inputs, outputs,
                   results, primary + ".report.json", started)


def _cmd_augment_cutout(args) -> int:
    started = time.monotonic()
    cfg = _load_config(args)
    seed = _resolve_seed(args, cfg)
    image = read_mask_tensor(args.input)
    out = augment.cutout(image, augment.RandomSource(seed), args.holes,
                         args.hole_size)
    write_mask_tensor(args.out, out)
    echo = {"holes": args.holes, "hole_size": args.hole_size, "seed": seed}
    return _finish(args, "augment cutout", echo, [args.input], [args.out],
                   {}, args.out + ".report.json", started)


def _cmd_augment_photometric(args) -> int:
    started = time.monotonic()
    image = _read_prob(args.input)
    out = augment.photometric(image, args.kind, args.value)
    write_mask_tensor(args.out, out)
    echo = {"kind": args.kind, "value": args.value}
    return _finish(args, "augment photometric", echo, [args.input], [args.out],
                   {}, args.out + ".report.json", started)


def _cmd_augment_cutmix(args) -> int:
    started = time.monotonic()
    cfg = _load_config(args)
    seed = _resolve_seed(args, cfg)
    if len(args.images) != len(args.masks):
        raise UsageError(
            f"{len(args.images)} images but {len(args.masks)} masks")
    batch = [(read_mask_tensor(ip), _read_mask(mp))
             for ip, mp in zip(args.images, args.masks)]
    rng = augment.RandomSource(seed)
    mixed = augment.cutmix(batch, rng, scaled=not args.literal_extent)
    os.makedirs(args.out_dir, exist_ok=True)
    outputs = []
    for i, (img, mask) in enumerate(mixed):
        img_path = os.path.join(args.out_dir, f"mixed_image_{i:03d}.eadt")
        mask_path = os.path.join(args.out_dir, f"mixed_mask_{i:03d}.eadt")
        write_mask_tensor(img_path, img)
        write_mask_tensor(mask_path, mask)
        outputs.extend([img_path, mask_path])
    echo = {"seed": seed, "literal_extent": args.literal_extent,
            "images": list(args.images), "masks": list(args.masks)}
    return _finish(args, "augment cutmix", echo,
                   list(args.images) + list(args.masks), outputs, {},
                   os.path.join(args.out_dir, "run-report.json"), started)


def _cmd_ensemble_seg(args) -> int:
    started = time.monotonic()
    paths = _expand_tensors(args.inputs, "input")
    kept = paths
    selection = None
    if args.dice is not None:
        if len(args.dice) != len(paths):
            raise UsageError(
                f"{len(args.dice)} dice values for {len(paths)} inputs")
        selection = segpost.select_members(list(zip(paths, args.dice)),
                                           threshold=args.select_threshold)
        kept = [mid for mid, _ in selection.members]
        if not kept:
            raise EmptyEnsemble(
                f"no input has dice > {args.select_threshold}")
    maps = [_read_prob(p) for p in kept]
    fused = segpost.pixel_ensemble(maps)
    write_mask_tensor(args.out, fused)
    echo = {"inputs": paths, "select_threshold": args.select_threshold,
            "dice": args.dice}
    results = {"members": kept, "num_members": len(kept)}
    return _finish(args, "ensemble-seg", echo, kept, [args.out], results,
                   args.out + ".report.json", started)


def _resolve_triple(args, cfg: RunConfig
                    ) -> tuple[float, Optional[float], tuple[int, ...]]:
    section = cfg.triple_threshold
    min_thresh = args.min_thresh
    if min_thresh is None:
        if section is None:
            raise ConfigError("need --min-thresh or a triple_threshold config block")
        min_thresh = section.min_prob_thresh
    max_thresh = args.max_thresh
    if max_thresh is _UNSET:
        max_thresh = section.max_prob_thresh if section is not None else None
    areas: tuple[int, ...]
    if args.min_area is not None:
        areas = tuple(args.min_area)
    elif section is not None:
        areas = section.min_area_thresh
    elif max_thresh is not None:
        raise ConfigError("the area gate needs --min-area or a config block")
    else:
        areas = ()
    return float(min_thresh), max_thresh, areas


def _cmd_triple_threshold(args) -> int:
    started = time.monotonic()
    cfg = _load_config(args)
    min_thresh, max_thresh, areas = _resolve_triple(args, cfg)
    prob = _read_prob(args.input)
    mask = segpost.apply_seg_postprocess(prob, min_thresh, max_thresh, areas)
    write_mask_tensor(args.out, mask)
    echo = {"min_thresh": min_thresh, "max_thresh": max_thresh,
            "min_area_thresh": list(areas)}
    results = {"positive_pixels": int(mask.data.sum())}
    return _finish(args, "triple-threshold", echo, [args.input], [args.out],
                   results, args.out + ".report.json", started)


def _cmd_tune_seg(args) -> int:
    started = time.monotonic()
    cfg = _load_config(args)
    pred_paths, gt_paths = _aligned_datasets(args, cfg)
    preds = [_read_prob(p) for p in pred_paths]
    gts = [_read_mask(p) for p in gt_paths]
    if args.min_area is not None:
        areas: Sequence[int] = tuple(args.min_area)
    elif cfg.triple_threshold is not None:
        areas = cfg.triple_threshold.min_area_thresh
    else:
        areas = ()
    weights = tuple(args.weights) if args.weights else cfg.metric_weights
    best, table = segpost.tune_triple_threshold(
        preds, gts,
        min_thresholds=args.min_thresholds,
        max_thresholds=args.max_thresholds,
        min_area_thresh=areas,
        objective=args.objective,
        metric_weights=weights,
        jobs=args.jobs)
    doc = {"version": JSON_VERSION, "objective": args.objective,
           "best": best.as_dict(), "cells": [cell.as_dict() for cell in table]}
    write_json(args.out, doc)
    echo = {"min_thresholds": list(args.min_thresholds),
            "max_thresholds": list(args.max_thresholds),
            "min_area_thresh": list(areas), "objective": args.objective,
            "metric_weights": list(weights)}
    return _finish(args, "tune-seg", echo, pred_paths + gt_paths, [args.out],
                   {"best": best.as_dict()}, args.out + ".report.json", started)


def _cmd_min_area(args) -> int:
    started = time.monotonic()
    gt_paths = _expand_tensors(args.gts, "ground-truth")
    masks = [_read_mask(p) for p in gt_paths]
    areas = segpost.min_area_from_dataset(masks, percentile=args.percentile)
    doc = {"version": JSON_VERSION, "percentile": args.percentile,
           "min_area_thresh": [int(a) for a in areas]}
    write_json(args.out, doc)
    echo = {"percentile": args.percentile}
    return _finish(args, "min-area", echo, gt_paths, [args.out],
                   {"min_area_thresh": [int(a) for a in areas]},
                   args.out + ".report.json", started)


def _resolve_fusion(args, cfg: RunConfig, num_models: int) -> detfuse.FusionConfig:
    section = cfg.fusion
    iou = args.iou_thresh if args.iou_thresh is not None else (
        section.iou_thresh if section else 0.5)
    score = args.score_thresh if args.score_thresh is not None else (
        section.score_thresh if section else 0.5)
    if args.weights is not None:
        weights = tuple(args.weights)
    elif section is not None:
        weights = section.weights
    else:
        weights = (1.0,) * num_models
    try:
        return detfuse.FusionConfig(iou_thresh=iou, score_thresh=score,
                                    weights=weights)
    except ValueError as exc:
        raise ConfigError(f"fusion parameters: {exc}") from exc


def _cmd_ensemble_det(args) -> int:
    started = time.monotonic()
    cfg = _load_config(args)
    fusion = _resolve_fusion(args, cfg, len(args.inputs))
    per_model = [read_detections(p) for p in args.inputs]
    fused = detfuse.fuse_dataset(per_model, fusion,
                                 weighted_coords=not args.unweighted_coords,
                                 suppress=args.suppress, jobs=args.jobs)
    write_detections(args.out, fused)
    echo = fusion.as_dict()
    echo.update({"suppress": args.suppress,
                 "unweighted_coords": args.unweighted_coords})
    results = {"num_images": len(fused),
               "num_boxes": sum(len(d.boxes) for d in fused)}
    return _finish(args, "ensemble-det", echo, list(args.inputs), [args.out],
                   results, args.out + ".report.json", started)


def _cmd_tune_det(args) -> int:
    started = time.monotonic()
    per_model = [read_detections(p) for p in args.preds]
    gts = read_detections(args.gts)
    best_cfg, table = detfuse.tune_fusion(
        per_model, gts,
        iou_thresholds=args.iou_thresholds,
        score_thresholds=args.score_thresholds,
        weight_patterns=args.weight_patterns,
        map_iou_thresh=args.map_iou_thresh,
        weighted_coords=not args.unweighted_coords,
        suppress=args.suppress,
        jobs=args.jobs)
    best_cell = next(cell for cell in table if cell.config == best_cfg)
    doc = {"version": JSON_VERSION, "objective": "mean_ap",
           "map_iou_thresh": args.map_iou_thresh,
           "best": best_cell.as_dict(),
           "cells": [cell.as_dict() for cell in table]}
    write_json(args.out, doc)
    echo = {"iou_thresholds": list(args.iou_thresholds),
            "score_thresholds": list(args.score_thresholds),
            "weight_patterns": [list(w) for w in args.weight_patterns],
            "map_iou_thresh": args.map_iou_thresh,
            "suppress": args.suppress,
            "unweighted_coords": args.unweighted_coords}
    return _finish(args, "tune-det", echo, list(args.preds) + [args.gts],
                   [args.out], {"best": best_cell.as_dict()},
                   args.out + ".report.json", started)


def _cmd_eval_seg(args) -> int:
    started = time.monotonic()
    cfg = _load_config(args)
    pred_paths, gt_paths = _aligned_datasets(args, cfg)
    preds = [_read_mask(p) for p in pred_paths]
    gts = [_read_mask(p) for p in gt_paths]
    weights = tuple(args.weights) if args.weights else cfg.metric_weights
    report = evaluate_segmentation(preds, gts, weights=weights,
                                   average=args.average)
    doc = {"version": JSON_VERSION}
    doc.update(report.as_dict())
    write_json(args.out, doc)
    echo = {"average": args.average, "weights": list(weights)}
    return _finish(args, "eval-seg", echo, pred_paths + gt_paths, [args.out],
                   report.as_dict(), args.out + ".report.json", started)


def _cmd_eval_det(args) -> int:
    started = time.monotonic()
    preds = read_detections(args.preds)
    gts = read_detections(args.gts)
    result = mean_ap(preds, gts, iou_thresh=args.iou_thresh)
    doc = {"version": JSON_VERSION}
    doc.update(result.as_dict())
    write_json(args.out, doc)
    echo = {"iou_thresh": args.iou_thresh}
    return _finish(args, "eval-det", echo, [args.preds, args.gts], [args.out],
                   result.as_dict(), args.out + ".report.json", started)


# ---------------------------------------------------------------------------
# Parser assembly


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="RunConfig JSON path")
    common.add_argument("--seed", type=int, default=None,
                        help="random seed (overrides the config)")
    common.add_argument("--jobs", type=int, default=1,
                        help="worker threads for parallel sections")
    common.add_argument("--report", default=None,
                        help="run-report path (default: next to the output)")

    parser = _Parser(prog="eadt",
                     description="Post-processing and evaluation toolkit for "
                                 "segmentation and detection predictions.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", parents=[common],
                       help="sequential train/validation/holdout split")
    p.add_argument("--ids", required=True, help="text file, one image id per line")
    p.add_argument("--counts", nargs=3, type=int, required=True,
                   metavar=("TRAIN", "VAL", "HOLD"))
    p.add_argument("--out-dir", required=True)
    p.add_argument("--prefix", default="split")
    p.set_defaults(func=_cmd_split)

    aug = sub.add_parser("augment", help="deterministic augmentation ops")
    aug_sub = aug.add_subparsers(dest="augment_op", required=True)

    p = aug_sub.add_parser("pad", parents=[common],
                           help="zero-pad bottom/right to a size multiple")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--multiple", type=int, default=128)
    p.set_defaults(func=_cmd_augment_pad)

    p = aug_sub.add_parser("unpad", parents=[common],
                           help="undo pad by cropping to the original size")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.set_defaults(func=_cmd_augment_unpad)

    p = aug_sub.add_parser("crop", parents=[common],
                           help="square crop, random policy or explicit offsets")
    p.add_argument("--image", required=True)
    p.add_argument("--mask")
    p.add_argument("--out-image", required=True)
    p.add_argument("--out-mask")
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--policy", choices=(augment.CROP_RANDOM, augment.CROP_NONEMPTY),
                   default=augment.CROP_RANDOM)
    p.add_argument("--offset-x", type=int, default=None)
    p.add_argument("--offset-y", type=int, default=None)
    p.set_defaults(func=_cmd_augment_crop)

    p = aug_sub.add_parser("flip", parents=[common],
                           help="mirror tensors or detection boxes")
    p.add_argument("--axis", choices=(augment.HORIZONTAL, augment.VERTICAL),
                   required=True)
    p.add_argument("--in", dest="input")
    p.add_argument("--out", required=True)
    p.add_argument("--mask")
    p.add_argument("--out-mask")
    p.add_argument("--boxes")
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--height", type=int, default=None)
    p.set_defaults(func=_cmd_augment_flip)

    p = aug_sub.add_parser("cutout", parents=[common],
                           help="zero random square holes in an image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--holes", type=int, required=True)
    p.add_argument("--hole-size", type=int, required=True)
    p.set_defaults(func=_cmd_augment_cutout)

    p = aug_sub.add_parser("photometric", parents=[common],
                           help="pointwise gamma/brightness/contrast")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=(augment.GAMMA, augment.BRIGHTNESS,
                                      augment.CONTRAST), required=True)
    p.add_argument("--value", type=float, required=True)
    p.set_defaults(func=_cmd_augment_photometric)

    p = aug_sub.add_parser("cutmix", parents=[common],
                           help="rectangle-swap mixing across a batch")
    p.add_argument("--images", nargs="+", required=True)
    p.add_argument("--masks", nargs="+", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--literal-extent", action="store_true",
                   help="use the unscaled rectangle half-extent variant")
    p.set_defaults(func=_cmd_augment_cutmix)

    p = sub.add_parser("ensemble-seg", parents=[common],
                       help="average probability maps pixel-wise")
    p.add_argument("--inputs", nargs="+", required=True,
                   help="probability tensors (or one directory)")
    p.add_argument("--out", required=True)
    p.add_argument("--dice", nargs="+", type=float, default=None,
                   help="validation dice per input, for member selection")
    p.add_argument("--select-threshold", type=float, default=0.47)
    p.set_defaults(func=_cmd_ensemble_seg)

    p = sub.add_parser("triple-threshold", parents=[common],
                       help="area-gated binarization of a probability map")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-thresh", type=float, default=None)
    p.add_argument("--max-thresh", type=_parse_optional_float, default=_UNSET,
                   help="gate threshold, or 'none' for plain binarization")
    p.add_argument("--min-area", nargs="+", type=int, default=None)
    p.set_defaults(func=_cmd_triple_threshold)

    p = sub.add_parser("tune-seg", parents=[common],
                       help="grid-search the post-processing thresholds")
    p.add_argument("--preds", nargs="+", default=None)
    p.add_argument("--gts", nargs="+", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--min-thresholds", nargs="+", type=float,
                   default=list(segpost.DEFAULT_MIN_THRESHOLDS))
    p.add_argument("--max-thresholds", nargs="+", type=_parse_optional_float,
                   default=list(segpost.DEFAULT_MAX_THRESHOLDS))
    p.add_argument("--min-area", nargs="+", type=int, default=None)
    p.add_argument("--objective", choices=segpost.SEG_OBJECTIVES,
                   default="precision")
    p.add_argument("--weights", nargs=3, type=float, default=None,
                   help="composite-score weights (dice, iou, f2)")
    p.set_defaults(func=_cmd_tune_seg)

    p = sub.add_parser("min-area", parents=[common],
                       help="percentile area thresholds from ground truth")
    p.add_argument("--gts", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--percentile", type=float, default=2.5)
    p.set_defaults(func=_cmd_min_area)

    p = sub.add_parser("ensemble-det", parents=[common],
                       help="fuse detections from multiple models")
    p.add_argument("--inputs", nargs="+", required=True,
                   help="one detections JSON per model")
    p.add_argument("--out", required=True)
    p.add_argument("--iou-thresh", type=float, default=None)
    p.add_argument("--score-thresh", type=float, default=None)
    p.add_argument("--weights", nargs="+", type=float, default=None)
    p.add_argument("--suppress", action="store_true",
                   help="keep only the top box of each cluster")
    p.add_argument("--unweighted-coords", action="store_true",
                   help="plain coordinate mean instead of confidence-weighted")
    p.set_defaults(func=_cmd_ensemble_det)

    p = sub.add_parser("tune-det", parents=[common],
                       help="grid-search the fusion parameters against mAP")
    p.add_argument("--preds", nargs="+", required=True,
                   help="one detections JSON per model")
    p.add_argument("--gts", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iou-thresholds", nargs="+", type=float,
                   default=list(detfuse.DEFAULT_IOU_THRESHOLDS))
    p.add_argument("--score-thresholds", nargs="+", type=float,
                   default=list(detfuse.DEFAULT_SCORE_THRESHOLDS))
    p.add_argument("--weight-patterns", nargs="+", type=_parse_weight_pattern,
                   default=[tuple(w) for w in detfuse.DEFAULT_WEIGHT_PATTERNS],
                   help="comma-separated per-model weights, e.g. 1,1,2")
    p.add_argument("--map-iou-thresh", type=float, default=0.5)
    p.add_argument("--suppress", action="store_true")
    p.add_argument("--unweighted-coords", action="store_true")
    p.set_defaults(func=_cmd_tune_det)

    p = sub.add_parser("eval-seg", parents=[common],
                       help="pixel metrics for mask predictions")
    p.add_argument("--preds", nargs="+", default=None)
    p.add_argument("--gts", nargs="+", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--average", choices=("micro", "macro"), default="micro")
    p.add_argument("--weights", nargs=3, type=float, default=None)
    p.set_defaults(func=_cmd_eval_seg)

    p = sub.add_parser("eval-det", parents=[common],
                       help="AP/mAP for detection predictions")
    p.add_argument("--preds", required=True)
    p.add_argument("--gts", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iou-thresh", type=float, default=0.5)
    p.set_defaults(func=_cmd_eval_det)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        # validate an explicit --config up front, even for commands that
        # take no values from it, so a bad path never passes silently
        _load_config(args)
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except (ToolkitError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
