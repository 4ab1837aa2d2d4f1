"""Segmentation losses with analytic gradients, pixel metrics, the
composite leaderboard score, and detection AP/mAP.

Conventions (documented so the numbers are reproducible): a class empty in
both masks scores dice/jaccard 1.0; an empty prediction has precision 1.0
(no false positives); F2 is 0 when 4P + R is 0. Dataset-level metrics use
global pixel counts ("micro") by default with a per-image ("macro")
alternative. All arithmetic runs in float64.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from ._backend import kernels
from .core import BinaryMask, Detection, DetectionSet, ProbMap, box_iou, require_same_shape
from .errors import EmptyDataset, ShapeMismatch

BCE_CLAMP = 1e-7
SMOOTH = 1.0

LOSS_BCE = "bce"
LOSS_DICE = "dice"
LOSS_JACCARD = "jaccard"


def _pair_counts(a: BinaryMask, b: BinaryMask) -> np.ndarray:
    """Per-class (intersection, |a|, |b|) counts, shape (C, 3)."""
    require_same_shape(a, b, "mask pair")
    out = np.empty((a.num_classes, 3), dtype=np.int64)
    kernels.pair_counts(a.data.view(np.uint8), b.data.view(np.uint8), out)
    return out


def _dice_from_counts(inter: int, sum_a: int, sum_b: int) -> float:
    total = sum_a + sum_b
    return 1.0 if total == 0 else 2.0 * inter / total


def _jaccard_from_counts(inter: int, sum_a: int, sum_b: int) -> float:
    union = sum_a + sum_b - inter
    return 1.0 if union == 0 else inter / union


def _precision_from_counts(tp: int, fp: int) -> float:
    return 1.0 if tp + fp == 0 else tp / (tp + fp)


def _recall_from_counts(tp: int, fn: int) -> float:
    return 1.0 if tp + fn == 0 else tp / (tp + fn)


def _f2_from_counts(tp: int, fp: int, fn: int) -> float:
    p = _precision_from_counts(tp, fp)
    r = _recall_from_counts(tp, fn)
    denom = 4.0 * p + r
    return 0.0 if denom == 0.0 else 5.0 * p * r / denom


def dice(a: BinaryMask, b: BinaryMask, per_class: bool = False):
    """2|A∩B| / (|A|+|B|) per class; both-empty classes score 1.0."""
    counts = _pair_counts(a, b)
    values = np.array([_dice_from_counts(*row) for row in counts])
    return values if per_class else float(values.mean())


def jaccard(a: BinaryMask, b: BinaryMask, per_class: bool = False):
    """|A∩B| / |A∪B| per class; both-empty classes score 1.0."""
    counts = _pair_counts(a, b)
    values = np.array([_jaccard_from_counts(*row) for row in counts])
    return values if per_class else float(values.mean())


def f2_pixel(pred: BinaryMask, gt: BinaryMask) -> float:
    """F-beta with beta=2 over all classes' pixels pooled: 5PR / (4P + R)."""
    counts = _pair_counts(pred, gt)
    tp = int(counts[:, 0].sum())
    fp = int(counts[:, 1].sum()) - tp
    fn = int(counts[:, 2].sum()) - tp
    return _f2_from_counts(tp, fp, fn)


def pixel_precision(pred: BinaryMask, gt: BinaryMask) -> float:
    """TP / (TP + FP) over all classes' pixels; 1.0 for an empty prediction."""
    counts = _pair_counts(pred, gt)
    tp = int(counts[:, 0].sum())
    fp = int(counts[:, 1].sum()) - tp
    return _precision_from_counts(tp, fp)


@dataclass
class LossValue:
    """Scalar loss plus, when requested, d(loss)/d(probability) per pixel."""

    value: float
    gradient: Optional[np.ndarray] = None


def _loss_arrays(p: ProbMap, t: BinaryMask) -> tuple[np.ndarray, np.ndarray]:
    require_same_shape(p, t, "loss inputs")
    return p.data.astype(np.float64), t.data.astype(np.float64)


def bce_loss(p: ProbMap, t: BinaryMask, with_grad: bool = False) -> LossValue:
    """Mean binary cross-entropy with probabilities clamped away from 0/1.

    Gradient is (p - t) / (p (1 - p) N) on unclamped pixels and 0 where
    the clamp is active (zero slope there).
    """
    x, y = _loss_arrays(p, t)
    xc = np.clip(x, BCE_CLAMP, 1.0 - BCE_CLAMP)
    value = float(np.mean(-(y * np.log(xc) + (1.0 - y) * np.log1p(-xc))))
    grad = None
    if with_grad:
        n = x.size
        grad = (xc - y) / (xc * (1.0 - xc) * n)
        grad[(x < BCE_CLAMP) | (x > 1.0 - BCE_CLAMP)] = 0.0
    return LossValue(value, grad)


def soft_dice_loss(p: ProbMap, t: BinaryMask, with_grad: bool = False,
                   smooth: float = SMOOTH) -> LossValue:
    """1 - (2 Σpt + ε) / (Σp + Σt + ε) per class, averaged over classes."""
    x, y = _loss_arrays(p, t)
    sp = x.sum(axis=(1, 2))
    st = y.sum(axis=(1, 2))
    spt = (x * y).sum(axis=(1, 2))
    num = 2.0 * spt + smooth
    den = sp + st + smooth
    value = float(np.mean(1.0 - num / den))
    grad = None
    if with_grad:
        c = x.shape[0]
        # d/dp_i [1 - N/D] = (N - 2 t_i D) / D^2, then mean over classes
        grad = (num[:, None, None] - 2.0 * y * den[:, None, None]) \
            / (den[:, None, None] ** 2) / c
    return LossValue(value, grad)


def soft_jaccard_loss(p: ProbMap, t: BinaryMask, with_grad: bool = False,
                      smooth: float = SMOOTH) -> LossValue:
    """1 - (Σpt + ε) / (Σp + Σt - Σpt + ε) per class, averaged over classes."""
    x, y = _loss_arrays(p, t)
    sp = x.sum(axis=(1, 2))
    st = y.sum(axis=(1, 2))
    spt = (x * y).sum(axis=(1, 2))
    num = spt + smooth
    den = sp + st - spt + smooth
    value = float(np.mean(1.0 - num / den))
    grad = None
    if with_grad:
        c = x.shape[0]
        # d/dp_i [1 - N/D]: dN = t_i, dD = 1 - t_i
        grad = (num[:, None, None] * (1.0 - y) - y * den[:, None, None]) \
            / (den[:, None, None] ** 2) / c
    return LossValue(value, grad)


_LOSS_FNS = {
    LOSS_BCE: bce_loss,
    LOSS_DICE: soft_dice_loss,
    LOSS_JACCARD: soft_jaccard_loss,
}


def combined_loss(p: ProbMap, t: BinaryMask, terms: Mapping[str, float],
                  with_grad: bool = False) -> LossValue:
    """Weighted sum of the component losses; gradients add the same way."""
    if not terms:
        raise ValueError("combined_loss needs at least one term")
    unknown = set(terms) - set(_LOSS_FNS)
    if unknown:
        raise ValueError(f"unknown loss terms {sorted(unknown)}; "
                         f"expected a subset of {sorted(_LOSS_FNS)}")
    value = 0.0
    grad = np.zeros(p.data.shape, dtype=np.float64) if with_grad else None
    for name, weight in terms.items():
        weight = float(weight)
        if weight == 0.0:
            continue
        part = _LOSS_FNS[name](p, t, with_grad=with_grad)
        value += weight * part.value
        if with_grad:
            grad += weight * part.gradient
    return LossValue(value, grad)


def composite_seg_score(dice_value: float, iou_value: float, f2_value: float,
                        weights: Sequence[float] = (1.0, 1.0, 1.0)) -> float:
    """Weighted linear combination of dice, IoU and F2.

    Weights must be non-negative and are normalized to sum to 1.
    """
    w = [float(v) for v in weights]
    if len(w) != 3 or any(v < 0 for v in w):
        raise ValueError(f"weights must be three non-negative values, got {weights}")
    total = sum(w)
    if total == 0:
        raise ValueError("weights must not all be zero")
    w = [v / total for v in w]
    return w[0] * dice_value + w[1] * iou_value + w[2] * f2_value


@dataclass
class MetricReport:
    """Per-class and mean pixel metrics plus the composite score."""

    per_class: dict[str, list[float]]
    mean: dict[str, float]
    composite: float
    weights: tuple[float, float, float]
    average: str

    def as_dict(self) -> dict:
        return {
            "per_class": self.per_class,
            "mean": self.mean,
            "composite": self.composite,
            "weights": list(self.weights),
            "average": self.average,
        }


_METRIC_NAMES = ("dice", "iou", "f2", "precision")


def _metrics_from_counts(inter: int, sum_a: int, sum_b: int) -> dict[str, float]:
    tp = inter
    fp = sum_a - inter
    fn = sum_b - inter
    return {
        "dice": _dice_from_counts(inter, sum_a, sum_b),
        "iou": _jaccard_from_counts(inter, sum_a, sum_b),
        "f2": _f2_from_counts(tp, fp, fn),
        "precision": _precision_from_counts(tp, fp),
    }


def evaluate_segmentation(preds: Sequence[BinaryMask], gts: Sequence[BinaryMask],
                          weights: Sequence[float] = (1.0, 1.0, 1.0),
                          average: str = "micro") -> MetricReport:
    """Dataset-level segmentation report over aligned (pred, gt) pairs.

    micro: per-class metrics from pixel counts pooled over all images.
    macro: per-image per-class metrics, then averaged over images.
    """
    if average not in ("micro", "macro"):
        raise ValueError(f"average must be 'micro' or 'macro', got {average!r}")
    if len(preds) != len(gts):
        raise ShapeMismatch(f"{len(preds)} predictions vs {len(gts)} ground truths")
    if not preds:
        raise EmptyDataset("no prediction/ground-truth pairs to evaluate")
    num_classes = preds[0].num_classes
    for pr, gt in zip(preds, gts):
        require_same_shape(pr, gt, "evaluation pair")
        if pr.num_classes != num_classes:
            raise ShapeMismatch("all masks must share one class count")

    if average == "micro":
        pooled = np.zeros((num_classes, 3), dtype=np.int64)
        for pr, gt in zip(preds, gts):
            pooled += _pair_counts(pr, gt)
        per_class = {name: [] for name in _METRIC_NAMES}
        for c in range(num_classes):
            m = _metrics_from_counts(*pooled[c])
            for name in _METRIC_NAMES:
                per_class[name].append(m[name])
    else:
        sums = {name: np.zeros(num_classes) for name in _METRIC_NAMES}
        for pr, gt in zip(preds, gts):
            counts = _pair_counts(pr, gt)
            for c in range(num_classes):
                m = _metrics_from_counts(*counts[c])
                for name in _METRIC_NAMES:
                    sums[name][c] += m[name]
        per_class = {name: list(sums[name] / len(preds)) for name in _METRIC_NAMES}

    mean = {name: float(np.mean(per_class[name])) for name in _METRIC_NAMES}
    composite = composite_seg_score(mean["dice"], mean["iou"], mean["f2"], weights)
    return MetricReport(per_class=per_class, mean=mean, composite=composite,
                        weights=tuple(float(v) for v in weights), average=average)


@dataclass
class MatchRecord:
    """Audit trail entry: one ranked prediction and what it matched."""

    image_id: str
    class_id: int
    confidence: float
    pred_index: int
    gt_index: Optional[int]
    iou: float


@dataclass
class ClassAP:
    class_id: int
    ap: float
    num_gt: int
    matches: list[MatchRecord] = field(default_factory=list)


@dataclass
class APResult:
    """Per-class average precision and their mean over classes with GT."""

    per_class: dict[int, float]
    mean: float
    num_gt: dict[int, int]
    matches: list[MatchRecord]

    def as_dict(self) -> dict:
        return {
            "per_class": {str(k): v for k, v in sorted(self.per_class.items())},
            "map": self.mean,
            "num_gt": {str(k): v for k, v in sorted(self.num_gt.items())},
        }


def _index_by_image(sets: Sequence[DetectionSet], what: str) -> dict[str, DetectionSet]:
    by_id: dict[str, DetectionSet] = {}
    for ds in sets:
        if ds.image_id in by_id:
            raise ValueError(f"duplicate image_id {ds.image_id!r} in {what}")
        by_id[ds.image_id] = ds
    return by_id


def _envelope_ap(recalls: Sequence[float], precisions: Sequence[float]) -> float:
    """Exact area under the precision envelope (all-point interpolation)."""
    mrec = [0.0, *recalls, 1.0]
    mpre = [0.0, *precisions, 0.0]
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    ap = 0.0
    for i in range(1, len(mrec)):
        ap += (mrec[i] - mrec[i - 1]) * mpre[i]
    return ap


def average_precision(preds: Sequence[DetectionSet], gts: Sequence[DetectionSet],
                      class_id: int, iou_thresh: float = 0.5) -> ClassAP:
    """AP for one class: confidence-ranked greedy matching, then the exact
    area under the precision-envelope/recall curve.

    A prediction is a true positive when its IoU with an unmatched
    same-image ground truth reaches iou_thresh; it takes the highest-IoU
    such ground truth. Confidence ties keep input order. With zero ground
    truths the AP is reported as 0.0 and the class is excluded from mAP
    upstream.
    """
    if not 0.0 < iou_thresh <= 1.0:
        raise ValueError(f"iou_thresh must lie in (0, 1], got {iou_thresh}")
    gt_by_image = _index_by_image(gts, "ground truths")
    _index_by_image(preds, "predictions")

    gt_boxes: dict[str, list[Detection]] = {}
    num_gt = 0
    for image_id, ds in gt_by_image.items():
        boxes = [b for b in ds.boxes if b.class_id == class_id]
        if boxes:
            gt_boxes[image_id] = boxes
            num_gt += len(boxes)

    ranked = []
    for ds in preds:
        for idx, box in enumerate(ds.boxes):
            if box.class_id == class_id:
                ranked.append((ds.image_id, idx, box))
    ranked.sort(key=lambda item: -item[2].confidence)  # stable: ties keep input order

    matched: dict[str, list[bool]] = {img: [False] * len(boxes)
                                      for img, boxes in gt_boxes.items()}
    matches: list[MatchRecord] = []
    tp_flags: list[bool] = []
    for image_id, idx, box in ranked:
        best_iou = 0.0
        best_j = None
        for j, gt_box in enumerate(gt_boxes.get(image_id, [])):
            if matched[image_id][j]:
                continue
            iou = box_iou(box, gt_box)
            if iou >= iou_thresh and iou > best_iou:
                best_iou = iou
                best_j = j
        if best_j is not None:
            matched[image_id][best_j] = True
            tp_flags.append(True)
            matches.append(MatchRecord(image_id, class_id, box.confidence,
                                       idx, best_j, best_iou))
        else:
            tp_flags.append(False)
            matches.append(MatchRecord(image_id, class_id, box.confidence,
                                       idx, None, 0.0))

    if num_gt == 0 or not ranked:
        return ClassAP(class_id=class_id, ap=0.0, num_gt=num_gt, matches=matches)

    recalls = []
    precisions = []
    tp = 0
    for k, flag in enumerate(tp_flags, start=1):
        tp += int(flag)
        recalls.append(tp / num_gt)
        precisions.append(tp / k)
    return ClassAP(class_id=class_id, ap=_envelope_ap(recalls, precisions),
                   num_gt=num_gt, matches=matches)


def mean_ap(preds: Sequence[DetectionSet], gts: Sequence[DetectionSet],
            iou_thresh: float = 0.5) -> APResult:
    """Mean of per-class AP over every class with at least one GT box."""
    class_ids = sorted({b.class_id for ds in gts for b in ds.boxes}
                       | {b.class_id for ds in preds for b in ds.boxes})
    gt_classes = {b.class_id for ds in gts for b in ds.boxes}
    if not gt_classes:
        raise EmptyDataset("ground truth contains no boxes")
    per_class: dict[int, float] = {}
    num_gt: dict[int, int] = {}
    matches: list[MatchRecord] = []
    for class_id in class_ids:
        result = average_precision(preds, gts, class_id, iou_thresh)
        per_class[class_id] = result.ap
        num_gt[class_id] = result.num_gt
        matches.extend(result.matches)
    mean = float(np.mean([per_class[c] for c in sorted(gt_classes)]))
    return APResult(per_class=per_class, mean=mean, num_gt=num_gt, matches=matches)
