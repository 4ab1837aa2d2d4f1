"""Deterministic-given-seed augmentation engine.

Padding, crop policies, flips, cutout, pointwise photometrics, the
rectangle-swap batch mix, and the declarative multi-stage schedule.

Reproducibility contract: every stochastic operation documents the exact
sequence of draws it takes from its RandomSource, so a caller holding the
seed can replay the stream. Identical seeds give bit-identical outputs.

Joint geometry: whenever an image and its mask (or boxes) are transformed
together they share one CropSpec / flip axis / rectangle, so pixel
provenance always agrees between the two.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .core import BinaryMask, Detection, DetectionSet, GridTensor, ImageTensor, ProbMap
from .errors import (
    BatchTooSmall,
    CropLargerThanImage,
    NoPositivePixels,
)

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class RandomSource:
    """Deterministic 64-bit stream (SplitMix64 core).

    ``random()`` yields float64 uniforms in [0, 1) built from the top 53
    bits of the next word; ``randint(n)`` yields uniform integers in
    [0, n) via the multiply-shift reduction. Both consume exactly one
    word per call (randint included, even for n == 1), which is what the
    per-operation draw protocols below count.
    """

    def __init__(self, seed: int):
        self._seed = int(seed) & _MASK64
        self._state = self._seed

    @property
    def seed(self) -> int:
        return self._seed

    def _next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float64 in [0, 1)."""
        return (self._next_u64() >> 11) * 2.0 ** -53

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n); n must be >= 1."""
        if n < 1:
            raise ValueError(f"randint needs n >= 1, got {n}")
        return (self._next_u64() * n) >> 64


def derive_seed(master_seed: int, index: int) -> int:
    """Independent per-task seed from a master seed and a task index."""
    z = (int(master_seed) + (int(index) + 1) * _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class CropSpec:
    """Square crop window; offsets are top-left pixel coordinates."""

    offset_x: int
    offset_y: int
    size: int = 512

    def __post_init__(self):
        if self.offset_x < 0 or self.offset_y < 0:
            raise ValueError("crop offsets must be >= 0")
        if self.size < 1:
            raise ValueError("crop size must be >= 1")


def _rewrap(x: GridTensor, data: np.ndarray) -> GridTensor:
    if isinstance(x, BinaryMask):
        return BinaryMask(data)
    if isinstance(x, ProbMap):
        return ProbMap(data)
    return ImageTensor(data)


def pad_to_multiple(x: GridTensor, multiple: int) -> tuple[GridTensor, tuple[int, int]]:
    """Zero-pad bottom/right so height and width become multiples.

    Returns the padded tensor and the original (height, width) for exact
    inversion with unpad().
    """
    if multiple < 1:
        raise ValueError(f"multiple must be >= 1, got {multiple}")
    c, h, w = x.data.shape
    new_h = ((h + multiple - 1) // multiple) * multiple
    new_w = ((w + multiple - 1) // multiple) * multiple
    if (new_h, new_w) == (h, w):
        return x, (h, w)
    padded = np.zeros((c, new_h, new_w), dtype=x.data.dtype)
    padded[:, :h, :w] = x.data
    return _rewrap(x, padded), (h, w)


def unpad(x: GridTensor, original_size: tuple[int, int]) -> GridTensor:
    """Inverse of pad_to_multiple: crop back to the original size."""
    h, w = original_size
    if h > x.data.shape[1] or w > x.data.shape[2]:
        raise ValueError(
            f"original size {original_size} exceeds tensor {x.data.shape[1:]}")
    return _rewrap(x, x.data[:, :h, :w].copy())


def apply_crop(x: GridTensor, spec: CropSpec) -> GridTensor:
    if spec.offset_y + spec.size > x.data.shape[1] or spec.offset_x + spec.size > x.data.shape[2]:
        raise CropLargerThanImage(
            f"crop {spec} exceeds tensor of size {x.data.shape[1:]}")
    window = x.data[:, spec.offset_y:spec.offset_y + spec.size,
                    spec.offset_x:spec.offset_x + spec.size]
    return _rewrap(x, window.copy())


def crop_random(img: GridTensor, mask: BinaryMask, size: int,
                rng: RandomSource) -> tuple[GridTensor, BinaryMask, CropSpec]:
    """Uniform random square crop applied jointly to image and mask.

    Draws: offset_x = randint(W - size + 1), then offset_y = randint(H - size + 1).
    """
    _check_joint_dims(img, mask)
    h, w = img.data.shape[1], img.data.shape[2]
    if size > h or size > w:
        raise CropLargerThanImage(f"crop size {size} exceeds image {h}x{w}")
    ox = rng.randint(w - size + 1)
    oy = rng.randint(h - size + 1)
    spec = CropSpec(offset_x=ox, offset_y=oy, size=size)
    return apply_crop(img, spec), apply_crop(mask, spec), spec


def crop_nonempty(img: GridTensor, mask: BinaryMask, size: int,
                  rng: RandomSource) -> tuple[GridTensor, BinaryMask, CropSpec]:
    """Random square crop guaranteed to contain a positive mask pixel.

    Method: pick a positive pixel uniformly (union over classes, scanned
    row-major), then a uniform window among those containing it and lying
    inside the image. Uniformity over windows is not claimed.

    Draws: pixel = randint(#positive), then offset_x = randint(span_x),
    then offset_y = randint(span_y), where the spans are the feasible
    offset ranges for the chosen pixel.
    """
    _check_joint_dims(img, mask)
    h, w = img.data.shape[1], img.data.shape[2]
    if size > h or size > w:
        raise CropLargerThanImage(f"crop size {size} exceeds image {h}x{w}")
    union = np.any(mask.data, axis=0)
    ys, xs = np.nonzero(union)
    if len(ys) == 0:
        raise NoPositivePixels("mask has no positive pixel in any class")
    idx = rng.randint(len(ys))
    py, px = int(ys[idx]), int(xs[idx])
    lo_x = max(0, px - size + 1)
    hi_x = min(px, w - size)
    lo_y = max(0, py - size + 1)
    hi_y = min(py, h - size)
    ox = lo_x + rng.randint(hi_x - lo_x + 1)
    oy = lo_y + rng.randint(hi_y - lo_y + 1)
    spec = CropSpec(offset_x=ox, offset_y=oy, size=size)
    return apply_crop(img, spec), apply_crop(mask, spec), spec


def _check_joint_dims(img: GridTensor, mask: GridTensor) -> None:
    if img.data.shape[1:] != mask.data.shape[1:]:
        raise ValueError(
            f"image {img.data.shape[1:]} and mask {mask.data.shape[1:]} "
            "must share height and width")


HORIZONTAL = "horizontal"
VERTICAL = "vertical"


def flip_tensor(x: GridTensor, axis: str) -> GridTensor:
    """Mirror a grid left-right (horizontal) or top-bottom (vertical)."""
    if axis == HORIZONTAL:
        return _rewrap(x, x.data[:, :, ::-1])
    if axis == VERTICAL:
        return _rewrap(x, x.data[:, ::-1, :])
    raise ValueError(f"axis must be '{HORIZONTAL}' or '{VERTICAL}', got {axis!r}")


def flip_boxes(dets: DetectionSet, axis: str, width: int, height: int) -> DetectionSet:
    """Mirror boxes: horizontal maps x1' = W - x2, x2' = W - x1; vertical analogous."""
    flipped = []
    for b in dets.boxes:
        if axis == HORIZONTAL:
            flipped.append(Detection(b.class_id, width - b.x2, b.y1,
                                     width - b.x1, b.y2, b.confidence))
        elif axis == VERTICAL:
            flipped.append(Detection(b.class_id, b.x1, height - b.y2,
                                     b.x2, height - b.y1, b.confidence))
        else:
            raise ValueError(f"axis must be '{HORIZONTAL}' or '{VERTICAL}', got {axis!r}")
    return DetectionSet(dets.image_id, tuple(flipped))


def flip(img: GridTensor, target: Union[GridTensor, DetectionSet],
         axis: str) -> tuple[GridTensor, Union[GridTensor, DetectionSet]]:
    """Flip an image together with its mask or its boxes. An involution."""
    out_img = flip_tensor(img, axis)
    if isinstance(target, DetectionSet):
        out_target: Union[GridTensor, DetectionSet] = flip_boxes(
            target, axis, width=img.data.shape[2], height=img.data.shape[1])
    else:
        _check_joint_dims(img, target)
        out_target = flip_tensor(target, axis)
    return out_img, out_target


def cutout(img: GridTensor, rng: RandomSource, num_holes: int,
           hole_size: int) -> GridTensor:
    """Zero out square holes in the image; target masks are never touched.

    Hole centers are uniform over the image; holes are clipped at the
    borders. Draws per hole: cy = randint(H), then cx = randint(W).
    """
    if num_holes < 0:
        raise ValueError("num_holes must be >= 0")
    if num_holes and hole_size < 1:
        raise ValueError("hole_size must be >= 1")
    if num_holes == 0:
        return img
    data = np.array(img.data)
    h, w = data.shape[1], data.shape[2]
    half = hole_size // 2
    for _ in range(num_holes):
        cy = rng.randint(h)
        cx = rng.randint(w)
        y0 = max(0, cy - half)
        x0 = max(0, cx - half)
        y1 = min(h, cy - half + hole_size)
        x1 = min(w, cx - half + hole_size)
        data[:, y0:y1, x0:x1] = 0
    return _rewrap(img, data)


GAMMA = "gamma"
BRIGHTNESS = "brightness"
CONTRAST = "contrast"


def photometric(img: GridTensor, kind: str, value: float) -> GridTensor:
    """Pointwise intensity transform; masks are never altered.

    gamma: p -> p**value (value > 0); brightness: clamp(p + value, 0, 1);
    contrast: clamp((p - 0.5) * value + 0.5, 0, 1).
    """
    x = img.data.astype(np.float64)
    if kind == GAMMA:
        if value <= 0:
            raise ValueError(f"gamma must be > 0, got {value}")
        y = np.power(x, float(value))
    elif kind == BRIGHTNESS:
        y = np.clip(x + float(value), 0.0, 1.0)
    elif kind == CONTRAST:
        y = np.clip((x - 0.5) * float(value) + 0.5, 0.0, 1.0)
    else:
        raise ValueError(f"unknown photometric op {kind!r}")
    return _rewrap(img, y.astype(np.float32))


def _round_half_away(v: float) -> int:
    # Inputs here are always >= 0, so this is round-half-up.
    return int(math.floor(v + 0.5))


def mix_rectangle(width: int, height: int, rng: RandomSource,
                  scaled: bool = True) -> tuple[int, int, int, int]:
    """Draw one swap rectangle for a batch.

    Draws, in order: lam = random(); rx = random() * W; ry = random() * H.
    The half-extents come from sqrt(1 - lam): by default they scale with
    the image (cut width W*sqrt(1-lam), height H*sqrt(1-lam)); with
    scaled=False the literal unscaled sqrt(1-lam) is used, which after
    rounding yields at most one-pixel rectangles (kept for fidelity
    experiments). Corners are clipped to [0, W] / [0, H] and rounded
    half away from zero. Returns (x1, y1, x2, y2) for slicing
    [y1:y2, x1:x2].
    """
    lam = rng.random()
    rx = rng.random() * width
    ry = rng.random() * height
    r = math.sqrt(1.0 - lam)
    if scaled:
        half_w = r * width / 2.0
        half_h = r * height / 2.0
    else:
        half_w = r / 2.0
        half_h = r / 2.0
    x1 = _round_half_away(max(rx - half_w, 0.0))
    x2 = _round_half_away(min(rx + half_w, float(width)))
    y1 = _round_half_away(max(ry - half_h, 0.0))
    y2 = _round_half_away(min(ry + half_h, float(height)))
    return x1, y1, x2, y2


def shuffle_indices(n: int, rng: RandomSource) -> list[int]:
    """Fisher-Yates permutation of range(n).

    Draws: randint(i + 1) for i = n-1 down to 1 (n - 1 draws).
    """
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.randint(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def cutmix(batch: Sequence[tuple[GridTensor, BinaryMask]], rng: RandomSource,
           scaled: bool = True) -> list[tuple[GridTensor, BinaryMask]]:
    """Rectangle-swap mixing over a batch, applied to images and masks alike.

    The batch is paired with a shuffled copy of itself and a single
    rectangle (shared by the whole batch) is swapped in from each sample's
    partner, in both the image and the mask, so supervision stays aligned.

    Draws, in order: the shuffle (see shuffle_indices), then the rectangle
    (see mix_rectangle).
    """
    if len(batch) < 2:
        raise BatchTooSmall(f"cutmix needs a batch of >= 2, got {len(batch)}")
    img_shape = batch[0][0].data.shape
    mask_shape = batch[0][1].data.shape
    for img, mask in batch:
        if img.data.shape != img_shape or mask.data.shape != mask_shape:
            raise ValueError("all batch samples must share one shape")
        _check_joint_dims(img, mask)
    h, w = img_shape[1], img_shape[2]
    perm = shuffle_indices(len(batch), rng)
    x1, y1, x2, y2 = mix_rectangle(w, h, rng, scaled=scaled)
    out = []
    for i, (img, mask) in enumerate(batch):
        partner_img, partner_mask = batch[perm[i]]
        img_data = np.array(img.data)
        mask_data = np.array(mask.data)
        img_data[:, y1:y2, x1:x2] = partner_img.data[:, y1:y2, x1:x2]
        mask_data[:, y1:y2, x1:x2] = partner_mask.data[:, y1:y2, x1:x2]
        out.append((_rewrap(img, img_data), BinaryMask(mask_data)))
    return out


CROP_NONEMPTY = "nonempty"
CROP_RANDOM = "random"


@dataclass(frozen=True)
class Stage:
    """Toggles for one training stage."""

    cutmix_enabled: bool
    encoder_frozen: bool
    crop_policy: str
    epochs: int = 1

    def __post_init__(self):
        if self.crop_policy not in (CROP_NONEMPTY, CROP_RANDOM):
            raise ValueError(f"crop_policy must be '{CROP_NONEMPTY}' or "
                             f"'{CROP_RANDOM}', got {self.crop_policy!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass(frozen=True)
class StageSchedule:
    """Ordered training stages; purely declarative (no training here)."""

    stages: tuple[Stage, ...]

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if not self.stages:
            raise ValueError("schedule needs at least one stage")


def default_schedule() -> StageSchedule:
    """The standard four-stage curriculum.

    1: warm-up on non-empty crops, mixing off, encoder frozen.
    2: mixing on for strong regularization, encoder unfrozen.
    3: random crops so negatives are seen, mixing still on.
    4: short generalization pass, mixing off, encoder frozen again.
    """
    return StageSchedule(stages=(
        Stage(cutmix_enabled=False, encoder_frozen=True, crop_policy=CROP_NONEMPTY),
        Stage(cutmix_enabled=True, encoder_frozen=False, crop_policy=CROP_NONEMPTY),
        Stage(cutmix_enabled=True, encoder_frozen=False, crop_policy=CROP_RANDOM),
        Stage(cutmix_enabled=False, encoder_frozen=True, crop_policy=CROP_RANDOM),
    ))


def stage_config(schedule: StageSchedule, stage_index: int) -> Stage:
    """Stage descriptor by 1-based index; raises IndexError out of range."""
    if not 1 <= stage_index <= len(schedule.stages):
        raise IndexError(
            f"stage {stage_index} out of range (schedule has {len(schedule.stages)})")
    return schedule.stages[stage_index - 1]
