"""Tensor and bounding-box primitives shared by every other module.

Geometry conventions: top-left origin, x rightward, y downward. Boxes are
corner-coded (x1, y1, x2, y2) with x1 < x2 and y1 < y2; box IoU uses plain
area arithmetic with no +1 pixel convention. Grids are stored class-major,
row-major (C, H, W); probabilities as float32 in [0, 1], masks as booleans.
All scalar math runs in float64 regardless of storage precision.

Every type is an immutable value after construction (array payloads are
frozen), so all operations here are pure and thread-safe.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from ._backend import kernels
from .errors import ShapeMismatch


def _validated_grid(data, dtype, what: str) -> np.ndarray:
    arr = np.ascontiguousarray(data, dtype=dtype)
    if arr.ndim != 3:
        raise ValueError(f"{what} data must be (C, H, W), got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ValueError(f"{what} dimensions must all be >= 1, got {arr.shape}")
    return arr


def _check_unit_range(arr: np.ndarray, what: str) -> None:
    # NaN fails both comparisons, so this also rejects non-finite values.
    if arr.size and not bool(np.all((arr >= 0.0) & (arr <= 1.0))):
        raise ValueError(f"{what} values must lie in [0, 1]")


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ImageTensor:
    """Dense image grid, 1 (gray) or 3 (RGB) channels, values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = _validated_grid(self.data, np.float32, "ImageTensor")
        if arr.shape[0] not in (1, 3):
            raise ValueError(f"ImageTensor must have 1 or 3 channels, got {arr.shape[0]}")
        _check_unit_range(arr, "ImageTensor")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class ProbMap:
    """Per-class probability grid (C, H, W) in [0, 1].

    Classes are independent labels; there is no cross-class normalization.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = _validated_grid(self.data, np.float32, "ProbMap")
        _check_unit_range(arr, "ProbMap")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def num_classes(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class BinaryMask:
    """Per-class boolean grid (C, H, W)."""

    data: np.ndarray

    def __post_init__(self):
        arr = _validated_grid(self.data, bool, "BinaryMask")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def num_classes(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


GridTensor = Union[ImageTensor, ProbMap, BinaryMask]


@dataclass(frozen=True)
class Detection:
    """One bounding box: class id, corner coordinates in pixels, confidence."""

    class_id: int
    x1: float
    y1: float
    x2: float
    y2: float
    confidence: float

    def __post_init__(self):
        if int(self.class_id) != self.class_id or self.class_id < 0:
            raise ValueError(f"class_id must be a non-negative integer, got {self.class_id}")
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(np.isfinite(v) for v in coords):
            raise ValueError(f"box coordinates must be finite, got {coords}")
        if not self.x1 < self.x2:
            raise ValueError(f"box requires x1 < x2, got x1={self.x1}, x2={self.x2}")
        if not self.y1 < self.y2:
            raise ValueError(f"box requires y1 < y2, got y1={self.y1}, y2={self.y2}")
        if not (np.isfinite(self.confidence) and 0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")
        object.__setattr__(self, "class_id", int(self.class_id))
        for name in ("x1", "y1", "x2", "y2", "confidence"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


@dataclass(frozen=True)
class DetectionSet:
    """Ordered detections for one image, all in the same coordinate frame."""

    image_id: str
    boxes: tuple[Detection, ...]

    def __post_init__(self):
        if not isinstance(self.image_id, str) or not self.image_id:
            raise ValueError("image_id must be a non-empty string")
        object.__setattr__(self, "boxes", tuple(self.boxes))


def binarize(p: ProbMap, threshold: float) -> BinaryMask:
    """Strict elementwise comparison: mask[c,y,x] = p[c,y,x] > threshold."""
    threshold = float(threshold)
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    out = np.empty(p.data.shape, dtype=np.uint8)
    kernels.binarize(p.data, threshold, out)
    return BinaryMask(out.view(bool))


def positive_area(m: BinaryMask, class_id: int) -> int:
    """Number of true pixels in the given class plane."""
    if not 0 <= class_id < m.num_classes:
        raise IndexError(f"class_id {class_id} out of range for {m.num_classes} classes")
    out = np.empty(m.num_classes, dtype=np.int64)
    kernels.positive_areas(m.data.view(np.uint8), out)
    return int(out[class_id])


def positive_areas(m: BinaryMask) -> np.ndarray:
    """Per-class true-pixel counts, shape (C,), int64."""
    out = np.empty(m.num_classes, dtype=np.int64)
    kernels.positive_areas(m.data.view(np.uint8), out)
    return out


def box_iou(a: Detection, b: Detection) -> float:
    """Intersection-over-union of two boxes; 0.0 when disjoint."""
    ix1 = max(a.x1, b.x1)
    iy1 = max(a.y1, b.y1)
    ix2 = min(a.x2, b.x2)
    iy2 = min(a.y2, b.y2)
    iw = ix2 - ix1
    ih = iy2 - iy1
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return inter / union


def require_same_shape(a: GridTensor, b: GridTensor, context: str) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(
            f"{context}: shapes differ, {a.data.shape} vs {b.data.shape}")
