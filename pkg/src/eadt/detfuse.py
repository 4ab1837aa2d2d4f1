"""Multi-model detection ensembling.

Boxes from several models are score-filtered, clustered greedily by class
and IoU against each cluster's current fused box, then merged: fused
coordinates are the confidence-weighted mean of the members and fused
confidence is the capped sum of the members' weighted confidences. A
grid-search tuner picks the IoU threshold, score threshold, and per-model
weights that maximize mean average precision on a validation set.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .core import Detection, DetectionSet, box_iou
from .errors import EmptyGrid, MixedImageIds, WeightCountMismatch
from .metrics import mean_ap


@dataclass(frozen=True)
class FusionConfig:
    """Fusion parameters: cluster IoU gate, score filter, per-model weights."""

    iou_thresh: float
    score_thresh: float
    weights: tuple[float, ...]

    def __post_init__(self):
        if not 0.0 < self.iou_thresh < 1.0:
            raise ValueError(f"iou_thresh must lie in (0, 1), got {self.iou_thresh}")
        if not 0.0 <= self.score_thresh <= 1.0:
            raise ValueError(f"score_thresh must lie in [0, 1], got {self.score_thresh}")
        weights = tuple(float(w) for w in self.weights)
        if not weights:
            raise ValueError("weights must name at least one model")
        if any(not w > 0.0 for w in weights):
            raise ValueError(f"weights must be positive, got {weights}")
        object.__setattr__(self, "iou_thresh", float(self.iou_thresh))
        object.__setattr__(self, "score_thresh", float(self.score_thresh))
        object.__setattr__(self, "weights", weights)

    def as_dict(self) -> dict:
        return {"iou_thresh": self.iou_thresh, "score_thresh": self.score_thresh,
                "weights": list(self.weights)}


@dataclass(frozen=True)
class ClusterMember:
    """One merged box: its source model, original box, weighted confidence."""

    model_index: int
    box: Detection
    working_confidence: float


@dataclass(frozen=True)
class FusedCluster:
    """A group of same-class boxes merged into one fused detection."""

    class_id: int
    members: tuple[ClusterMember, ...]
    fused: Detection


def filter_by_score(d: DetectionSet, score_thresh: float) -> DetectionSet:
    """Drop boxes whose confidence falls strictly below the threshold."""
    kept = tuple(b for b in d.boxes if b.confidence >= score_thresh)
    if len(kept) == len(d.boxes):
        return d
    return DetectionSet(image_id=d.image_id, boxes=kept)


class _Cluster:
    """Mutable clustering workspace; exported as a frozen FusedCluster."""

    __slots__ = ("class_id", "members", "fused")

    def __init__(self, class_id: int):
        self.class_id = class_id
        self.members: list[ClusterMember] = []

    def add(self, member: ClusterMember, weighted_coords: bool, suppress: bool):
        self.members.append(member)
        self.fused = self._fuse(weighted_coords, suppress)

    def _fuse(self, weighted_coords: bool, suppress: bool) -> Detection:
        seed = self.members[0]
        if suppress:
            # Rejection semantics: the highest-confidence member stands in
            # for the whole cluster, the rest are discarded.
            return Detection(class_id=self.class_id,
                             x1=seed.box.x1, y1=seed.box.y1,
                             x2=seed.box.x2, y2=seed.box.y2,
                             confidence=min(1.0, seed.working_confidence))
        conf_sum = sum(m.working_confidence for m in self.members)
        if len(self.members) == 1:
            box = seed.box
            coords = (box.x1, box.y1, box.x2, box.y2)
        else:
            coords = []
            for name in ("x1", "y1", "x2", "y2"):
                if weighted_coords:
                    num = sum(m.working_confidence * getattr(m.box, name)
                              for m in self.members)
                    coords.append(num / conf_sum)
                else:
                    coords.append(sum(getattr(m.box, name) for m in self.members)
                                  / len(self.members))
        return Detection(class_id=self.class_id,
                         x1=coords[0], y1=coords[1], x2=coords[2], y2=coords[3],
                         confidence=min(1.0, conf_sum))


def _fuse_clusters(per_model: Sequence[DetectionSet], cfg: FusionConfig,
                   weighted_coords: bool, suppress: bool
                   ) -> tuple[str, list[FusedCluster]]:
    if len(per_model) != len(cfg.weights):
        raise WeightCountMismatch(
            f"{len(per_model)} models but {len(cfg.weights)} weights")
    image_id = per_model[0].image_id
    for d in per_model[1:]:
        if d.image_id != image_id:
            raise MixedImageIds(
                f"cannot fuse across images: {image_id!r} vs {d.image_id!r}")

    # Pool the score-filtered boxes; sort by weighted confidence descending,
    # ties broken by model index then input order so results never depend on
    # sort internals.
    pool = []
    for m, dset in enumerate(per_model):
        w = cfg.weights[m]
        for j, box in enumerate(dset.boxes):
            if box.confidence < cfg.score_thresh:
                continue
            pool.append((box.confidence * w, m, j, box))
    pool.sort(key=lambda e: (-e[0], e[1], e[2]))

    clusters: list[_Cluster] = []
    for cprime, m, _, box in pool:
        member = ClusterMember(model_index=m, box=box, working_confidence=cprime)
        for cluster in clusters:
            if cluster.class_id != box.class_id:
                continue
            if box_iou(box, cluster.fused) > cfg.iou_thresh:
                cluster.add(member, weighted_coords, suppress)
                break
        else:
            cluster = _Cluster(box.class_id)
            cluster.add(member, weighted_coords, suppress)
            clusters.append(cluster)

    fused = [FusedCluster(class_id=c.class_id, members=tuple(c.members),
                          fused=c.fused) for c in clusters]
    return image_id, fused


def fuse_detections_detailed(per_model: Sequence[DetectionSet],
                             cfg: FusionConfig, *,
                             weighted_coords: bool = True,
                             suppress: bool = False
                             ) -> tuple[DetectionSet, list[FusedCluster]]:
    """Fuse one image's detections, returning cluster membership too."""
    image_id, clusters = _fuse_clusters(per_model, cfg, weighted_coords, suppress)
    boxes = sorted((c.fused for c in clusters), key=lambda b: -b.confidence)
    return DetectionSet(image_id=image_id, boxes=tuple(boxes)), clusters


def fuse_detections(per_model: Sequence[DetectionSet], cfg: FusionConfig, *,
                    weighted_coords: bool = True,
                    suppress: bool = False) -> DetectionSet:
    """Fuse one image's detections from several models into one set."""
    fused, _ = fuse_detections_detailed(per_model, cfg,
                                        weighted_coords=weighted_coords,
                                        suppress=suppress)
    return fused


def _index_model(dsets: Sequence[DetectionSet], model: int) -> dict[str, DetectionSet]:
    seen: dict[str, DetectionSet] = {}
    for d in dsets:
        if d.image_id in seen:
            raise ValueError(f"model {model} repeats image_id {d.image_id!r}")
        seen[d.image_id] = d
    return seen


def fuse_dataset(per_model: Sequence[Sequence[DetectionSet]], cfg: FusionConfig, *,
                 weighted_coords: bool = True, suppress: bool = False,
                 jobs: int = 1) -> list[DetectionSet]:
    """Fuse every image of a dataset, aligning models by image id.

    Image order follows first occurrence across models; a model without
    predictions for an image simply contributes nothing there.
    """
    if len(per_model) != len(cfg.weights):
        raise WeightCountMismatch(
            f"{len(per_model)} models but {len(cfg.weights)} weights")
    indexes = [_index_model(dsets, m) for m, dsets in enumerate(per_model)]
    order: list[str] = []
    seen: set[str] = set()
    for index in indexes:
        for image_id in index:
            if image_id not in seen:
                seen.add(image_id)
                order.append(image_id)

    def fuse_one(image_id: str) -> DetectionSet:
        sets = [index.get(image_id) or DetectionSet(image_id=image_id, boxes=())
                for index in indexes]
        return fuse_detections(sets, cfg, weighted_coords=weighted_coords,
                               suppress=suppress)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fuse_one, order))
    return [fuse_one(image_id) for image_id in order]


DEFAULT_IOU_THRESHOLDS = (0.4, 0.5, 0.6)
DEFAULT_SCORE_THRESHOLDS = (0.4, 0.5, 0.6)
DEFAULT_WEIGHT_PATTERNS = (
    (1.0, 1.0, 1.0),
    (1.0, 1.0, 2.0),
    (1.0, 2.0, 1.0),
    (2.0, 1.0, 1.0),
    (1.0, 2.0, 2.0),
    (2.0, 1.0, 2.0),
    (2.0, 2.0, 1.0),
)


@dataclass(frozen=True)
class FusionTuneCell:
    """One evaluated grid cell of the fusion tuner."""

    config: FusionConfig
    score: float

    def as_dict(self) -> dict:
        row = self.config.as_dict()
        row["score"] = self.score
        return row


def tune_fusion(
    per_model: Sequence[Sequence[DetectionSet]],
    gts: Sequence[DetectionSet],
    iou_thresholds: Sequence[float] = DEFAULT_IOU_THRESHOLDS,
    score_thresholds: Sequence[float] = DEFAULT_SCORE_THRESHOLDS,
    weight_patterns: Sequence[Sequence[float]] = DEFAULT_WEIGHT_PATTERNS,
    map_iou_thresh: float = 0.5,
    *,
    weighted_coords: bool = True,
    suppress: bool = False,
    jobs: int = 1,
) -> tuple[FusionConfig, list[FusionTuneCell]]:
    """Grid-search fusion parameters against mean average precision.

    Every (iou_thresh, score_thresh, weights) cell is evaluated; the default
    grid is 3 x 3 x 7 = 63 cells. Ties break to the first maximum in grid
    iteration order (iou outermost, weights innermost). Returns the winning
    config and the full score table.
    """
    if not iou_thresholds or not score_thresholds or not weight_patterns:
        raise EmptyGrid("tuning grid must contain at least one cell")
    if not per_model:
        raise EmptyGrid("need predictions from at least one model")
    configs = [FusionConfig(iou_thresh=it, score_thresh=st, weights=tuple(wp))
               for it in iou_thresholds
               for st in score_thresholds
               for wp in weight_patterns]

    def evaluate(cfg: FusionConfig) -> FusionTuneCell:
        fused = fuse_dataset(per_model, cfg, weighted_coords=weighted_coords,
                             suppress=suppress)
        result = mean_ap(fused, gts, iou_thresh=map_iou_thresh)
        return FusionTuneCell(config=cfg, score=result.mean)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            table = list(pool.map(evaluate, configs))
    else:
        table = [evaluate(cfg) for cfg in configs]

    best = max(table, key=lambda cell: cell.score)
    return best.config, table
