"""Shared builders for randomized test data."""
import numpy as np

from eadt import BinaryMask, Detection, DetectionSet, ImageTensor, ProbMap


def random_prob(rng, c, h, w) -> ProbMap:
    return ProbMap(rng.random((c, h, w), dtype=np.float32))


def random_mask(rng, c, h, w, density=0.5) -> BinaryMask:
    return BinaryMask(rng.random((c, h, w)) < density)


def random_image(rng, h, w, channels=3) -> ImageTensor:
    return ImageTensor(rng.random((channels, h, w), dtype=np.float32))


def random_box(rng, num_classes=3, extent=100.0) -> Detection:
    x1 = float(rng.uniform(0, extent - 2))
    y1 = float(rng.uniform(0, extent - 2))
    return Detection(
        class_id=int(rng.integers(num_classes)),
        x1=x1, y1=y1,
        x2=x1 + float(rng.uniform(1, extent - x1)),
        y2=y1 + float(rng.uniform(1, extent - y1)),
        confidence=float(rng.uniform(0, 1)),
    )


def random_detections(rng, image_id, max_boxes=5, num_classes=3) -> DetectionSet:
    n = int(rng.integers(0, max_boxes + 1))
    return DetectionSet(image_id=image_id,
                        boxes=tuple(random_box(rng, num_classes) for _ in range(n)))


def grid_boxes(rng, n, num_classes=3, cell=20.0, jitter=4.0):
    """n boxes on disjoint grid cells, so no pair overlaps."""
    boxes = []
    for k in range(n):
        gx, gy = k % 8, k // 8
        x1 = gx * cell + float(rng.uniform(0, jitter))
        y1 = gy * cell + float(rng.uniform(0, jitter))
        boxes.append(Detection(
            class_id=int(rng.integers(num_classes)),
            x1=x1, y1=y1,
            x2=x1 + cell - jitter - 1 + float(rng.uniform(0, jitter / 2)),
            y2=y1 + cell - jitter - 1 + float(rng.uniform(0, jitter / 2)),
            confidence=float(rng.uniform(0.01, 1.0))))
    return boxes
