"""Segmentation prediction post-processing.

Pixel-wise model ensembling, percentile-derived minimum-area thresholds,
the triple-threshold false-positive gate, and its grid-search tuner.

The gate works per class plane: a plane whose high-confidence area (pixels
strictly above max_prob_thresh) falls below the class's minimum area is
zeroed wholesale; surviving planes are binarized at min_prob_thresh. The
output is therefore always a subset of plain binarization at
min_prob_thresh, so the pixel false-positive count can only go down.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._backend import kernels
from .core import BinaryMask, ProbMap, binarize
from .errors import (
    ClassCountMismatch,
    EmptyDataset,
    EmptyEnsemble,
    EmptyGrid,
    ShapeMismatch,
)
from .metrics import composite_seg_score, _metrics_from_counts, _pair_counts, _precision_from_counts


@dataclass(frozen=True)
class TripleThresholdConfig:
    """Gate parameters: probability thresholds plus per-class minimum areas."""

    max_prob_thresh: float
    min_prob_thresh: float
    min_area_thresh: tuple[int, ...]

    def __post_init__(self):
        if not 0.0 <= self.min_prob_thresh <= self.max_prob_thresh <= 1.0:
            raise ValueError(
                "need 0 <= min_prob_thresh <= max_prob_thresh <= 1, got "
                f"min={self.min_prob_thresh}, max={self.max_prob_thresh}")
        areas = tuple(int(a) for a in self.min_area_thresh)
        if any(a < 0 for a in areas):
            raise ValueError(f"min_area_thresh entries must be >= 0, got {areas}")
        object.__setattr__(self, "max_prob_thresh", float(self.max_prob_thresh))
        object.__setattr__(self, "min_prob_thresh", float(self.min_prob_thresh))
        object.__setattr__(self, "min_area_thresh", areas)


@dataclass(frozen=True)
class EnsembleSelection:
    """Models admitted to the ensemble with their validation dice values."""

    members: tuple[tuple[str, float], ...]
    threshold: float


def pixel_ensemble(maps: Sequence[ProbMap]) -> ProbMap:
    """Elementwise arithmetic mean of probability maps."""
    if not maps:
        raise EmptyEnsemble("pixel_ensemble needs at least one map")
    shape = maps[0].data.shape
    for m in maps[1:]:
        if m.data.shape != shape:
            raise ShapeMismatch(f"ensemble members differ: {shape} vs {m.data.shape}")
    if len(maps) == 1:
        return maps[0]
    stack = np.stack([m.data for m in maps])
    out = np.empty(shape, dtype=np.float32)
    kernels.mean_stack(stack, out)
    return ProbMap(out)


def select_members(candidates: Sequence[tuple[str, float]],
                   threshold: float = 0.47) -> EnsembleSelection:
    """Keep candidates with dice strictly greater than the threshold."""
    members = tuple((str(mid), float(d)) for mid, d in candidates
                    if float(d) > threshold)
    return EnsembleSelection(members=members, threshold=float(threshold))


def min_area_from_dataset(gt_masks: Sequence[BinaryMask],
                          percentile: float = 2.5) -> np.ndarray:
    """Per-class minimum-area thresholds from ground-truth areas.

    For each class, the positive-pixel areas of the images where the class
    is present (area > 0) are sorted ascending and the nearest-rank
    percentile value is taken (rank = ceil(percentile/100 * n), 1-indexed).
    A class absent everywhere gets threshold 0.
    """
    if not gt_masks:
        raise EmptyDataset("min_area_from_dataset needs at least one mask")
    if not 0.0 < percentile < 100.0:
        raise ValueError(f"percentile must lie in (0, 100), got {percentile}")
    num_classes = gt_masks[0].num_classes
    areas_by_class: list[list[int]] = [[] for _ in range(num_classes)]
    buf = np.empty(num_classes, dtype=np.int64)
    for m in gt_masks:
        if m.num_classes != num_classes:
            raise ShapeMismatch("all masks must share one class count")
        kernels.positive_areas(m.data.view(np.uint8), buf)
        for c in range(num_classes):
            if buf[c] > 0:
                areas_by_class[c].append(int(buf[c]))
    result = np.zeros(num_classes, dtype=np.int64)
    for c, areas in enumerate(areas_by_class):
        if not areas:
            continue
        areas.sort()
        rank = max(1, math.ceil(percentile / 100.0 * len(areas)))
        result[c] = areas[rank - 1]
    return result


def triple_threshold(p: ProbMap, cfg: TripleThresholdConfig) -> BinaryMask:
    """Apply the high-confidence area gate, then binarize survivors."""
    if len(cfg.min_area_thresh) != p.num_classes:
        raise ClassCountMismatch(
            f"config has {len(cfg.min_area_thresh)} area entries for "
            f"{p.num_classes} classes")
    areas = np.asarray(cfg.min_area_thresh, dtype=np.int64)
    out = np.empty(p.data.shape, dtype=np.uint8)
    kernels.triple_threshold(p.data, cfg.max_prob_thresh, cfg.min_prob_thresh,
                             areas, out)
    return BinaryMask(out.view(bool))


def apply_seg_postprocess(p: ProbMap, min_thresh: float,
                          max_thresh: Optional[float],
                          min_area_thresh: Sequence[int]) -> BinaryMask:
    """Plain binarization when max_thresh is None, the full gate otherwise."""
    if max_thresh is None:
        return binarize(p, min_thresh)
    cfg = TripleThresholdConfig(max_prob_thresh=max_thresh,
                                min_prob_thresh=min_thresh,
                                min_area_thresh=tuple(min_area_thresh))
    return triple_threshold(p, cfg)


SEG_OBJECTIVES = ("precision", "dice", "iou", "f2", "composite")


def _dataset_objective(preds: Sequence[BinaryMask], gts: Sequence[BinaryMask],
                       objective: str,
                       weights: Sequence[float]) -> float:
    """Micro (pooled pixel count) dataset score for the tuner."""
    num_classes = preds[0].num_classes
    pooled = np.zeros((num_classes, 3), dtype=np.int64)
    for pr, gt in zip(preds, gts):
        pooled += _pair_counts(pr, gt)
    if objective == "precision":
        tp = int(pooled[:, 0].sum())
        fp = int(pooled[:, 1].sum()) - tp
        return _precision_from_counts(tp, fp)
    per_class = [_metrics_from_counts(*pooled[c]) for c in range(num_classes)]
    means = {name: float(np.mean([m[name] for m in per_class]))
             for name in ("dice", "iou", "f2")}
    if objective == "composite":
        return composite_seg_score(means["dice"], means["iou"], means["f2"], weights)
    return means[objective]


@dataclass(frozen=True)
class SegTuneCell:
    """One evaluated grid cell; max_thresh None means no gate."""

    min_thresh: float
    max_thresh: Optional[float]
    score: float

    def as_dict(self) -> dict:
        return {"min_thresh": self.min_thresh, "max_thresh": self.max_thresh,
                "score": self.score}


@dataclass(frozen=True)
class SegTuneResult:
    min_thresh: float
    max_thresh: Optional[float]
    min_area_thresh: tuple[int, ...]
    score: float
    objective: str

    def as_dict(self) -> dict:
        return {"min_thresh": self.min_thresh, "max_thresh": self.max_thresh,
                "min_area_thresh": list(self.min_area_thresh),
                "score": self.score, "objective": self.objective}


DEFAULT_MIN_THRESHOLDS = (0.4, 0.5)
DEFAULT_MAX_THRESHOLDS: tuple[Optional[float], ...] = (None, 0.6, 0.7, 0.8)


def tune_triple_threshold(
    val_preds: Sequence[ProbMap],
    val_gts: Sequence[BinaryMask],
    min_thresholds: Sequence[float] = DEFAULT_MIN_THRESHOLDS,
    max_thresholds: Sequence[Optional[float]] = DEFAULT_MAX_THRESHOLDS,
    min_area_thresh: Sequence[int] = (),
    objective: str = "precision",
    metric_weights: Sequence[float] = (1.0, 1.0, 1.0),
    jobs: int = 1,
) -> tuple[SegTuneResult, list[SegTuneCell]]:
    """Evaluate the objective on every (min, max) grid cell.

    max_thresh None rows mean plain binarization at min_thresh. Ties break
    toward less suppression: lower min first, then lower max with None
    ordered last. Returns the winning cell plus the full score table.
    """
    if not min_thresholds or not max_thresholds:
        raise EmptyGrid("tuning grid must contain at least one cell")
    if objective not in SEG_OBJECTIVES:
        raise ValueError(f"objective must be one of {SEG_OBJECTIVES}, got {objective!r}")
    if len(val_preds) != len(val_gts) or not val_preds:
        raise EmptyDataset(
            f"need equal non-empty prediction/gt lists, got {len(val_preds)}/{len(val_gts)}")
    areas = tuple(int(a) for a in min_area_thresh)
    if not areas:
        # no area floor given: zero floors, so the gate never zeroes a plane
        areas = (0,) * val_preds[0].num_classes

    cells = [(float(mn), None if mx is None else float(mx))
             for mn in min_thresholds for mx in max_thresholds]

    def evaluate(cell: tuple[float, Optional[float]]) -> SegTuneCell:
        mn, mx = cell
        masks = [apply_seg_postprocess(p, mn, mx, areas) for p in val_preds]
        score = _dataset_objective(masks, val_gts, objective, metric_weights)
        return SegTuneCell(min_thresh=mn, max_thresh=mx, score=score)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            table = list(pool.map(evaluate, cells))
    else:
        table = [evaluate(cell) for cell in cells]

    def tie_key(cell: SegTuneCell):
        none_last = 1 if cell.max_thresh is None else 0
        return (cell.min_thresh, none_last, cell.max_thresh or 0.0)

    best = sorted(table, key=lambda cell: (-cell.score, tie_key(cell)))[0]
    result = SegTuneResult(min_thresh=best.min_thresh, max_thresh=best.max_thresh,
                           min_area_thresh=areas, score=best.score,
                           objective=objective)
    return result, table
