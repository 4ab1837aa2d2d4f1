"""Bit-exact file formats and sequential dataset splitting.

Tensors (masks, probability maps, images) use a small binary container:
magic "EADT", format version u16, dtype tag u8 (0 = boolean stored one
byte per pixel, 1 = 32-bit little-endian float), u32 C/H/W, then C*H*W
values in class-major row-major order. Everything else (detections,
manifests, run configs, reports) is JSON written in one canonical form,
with floats carrying enough digits to round-trip exactly.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .core import BinaryMask, Detection, DetectionSet, ImageTensor, ProbMap
from .detfuse import FusionConfig
from .errors import (
    ConfigError,
    CountMismatch,
    FormatError,
    InvalidBox,
    InvalidTensorData,
    MalformedHeader,
    TruncatedData,
    UnsupportedVersion,
)
from .segpost import TripleThresholdConfig

TENSOR_MAGIC = b"EADT"
TENSOR_VERSION = 1
_HEADER = struct.Struct("<HBIII")
DTYPE_BOOL = 0
DTYPE_FLOAT32 = 1

JSON_VERSION = 1

SUBSET_TRAIN = "train"
SUBSET_VALIDATION = "validation"
SUBSET_HOLDOUT = "holdout"
SUBSETS = (SUBSET_TRAIN, SUBSET_VALIDATION, SUBSET_HOLDOUT)


def dump_json(obj) -> str:
    """Canonical JSON text: sorted keys, two-space indent, no NaN."""
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_json(obj))


def read_json(path, what: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{what} file {path} is not valid JSON: {exc}") from exc


# ---------------------------------------------------------------------------
# EADT binary tensors


def write_mask_tensor(path, m: Union[BinaryMask, ProbMap, ImageTensor]) -> None:
    """Write a tensor to the EADT binary container."""
    if isinstance(m, BinaryMask):
        tag = DTYPE_BOOL
        payload = m.data.astype(np.uint8).tobytes()
    else:
        tag = DTYPE_FLOAT32
        payload = m.data.astype("<f4", copy=False).tobytes()
    c, h, w = m.data.shape
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(_HEADER.pack(TENSOR_VERSION, tag, c, h, w))
        fh.write(payload)


def _parse_tensor(blob: bytes, path) -> tuple[int, np.ndarray]:
    head_len = len(TENSOR_MAGIC) + _HEADER.size
    if len(blob) < head_len:
        raise MalformedHeader(f"{path}: file shorter than the tensor header")
    if blob[:4] != TENSOR_MAGIC:
        raise MalformedHeader(f"{path}: bad magic bytes {blob[:4]!r}")
    version, tag, c, h, w = _HEADER.unpack_from(blob, 4)
    if version != TENSOR_VERSION:
        raise UnsupportedVersion(f"{path}: format version {version}, expected {TENSOR_VERSION}")
    if tag not in (DTYPE_BOOL, DTYPE_FLOAT32):
        raise MalformedHeader(f"{path}: unknown dtype tag {tag}")
    if min(c, h, w) < 1:
        raise MalformedHeader(f"{path}: non-positive dimensions ({c}, {h}, {w})")
    item = 1 if tag == DTYPE_BOOL else 4
    expected = c * h * w * item
    payload = blob[head_len:]
    if len(payload) < expected:
        raise TruncatedData(f"{path}: payload holds {len(payload)} bytes, header promises {expected}")
    if len(payload) > expected:
        raise InvalidTensorData(f"{path}: {len(payload) - expected} trailing bytes after payload")
    if tag == DTYPE_BOOL:
        raw = np.frombuffer(payload, dtype=np.uint8)
        if raw.size and int(raw.max()) > 1:
            raise InvalidTensorData(f"{path}: boolean payload contains bytes other than 0/1")
        data = raw.reshape(c, h, w)
    else:
        data = np.frombuffer(payload, dtype="<f4").reshape(c, h, w)
        as64 = data.astype(np.float64)
        if np.isnan(as64).any() or as64.min() < 0.0 or as64.max() > 1.0:
            raise InvalidTensorData(f"{path}: float payload outside [0, 1]")
    return tag, data


def read_mask_tensor(path) -> Union[BinaryMask, ProbMap]:
    """Read an EADT tensor; the dtype tag picks the return type."""
    with open(path, "rb") as fh:
        blob = fh.read()
    tag, data = _parse_tensor(blob, path)
    if tag == DTYPE_BOOL:
        return BinaryMask(data.view(bool))
    return ProbMap(data)


def read_image_tensor(path) -> ImageTensor:
    """Read a float EADT tensor as an image (1 or 3 channels)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    tag, data = _parse_tensor(blob, path)
    if tag != DTYPE_FLOAT32:
        raise InvalidTensorData(f"{path}: images must use the float32 dtype tag")
    return ImageTensor(data)


# ---------------------------------------------------------------------------
# Detection JSON


def _box_to_json(b: Detection) -> dict:
    return {"class": b.class_id, "x1": b.x1, "y1": b.y1, "x2": b.x2,
            "y2": b.y2, "confidence": b.confidence}


def write_detections(path, dsets: Sequence[DetectionSet]) -> None:
    """Write detections as a JSON array, order and float precision preserved."""
    doc = [{"image_id": d.image_id, "boxes": [_box_to_json(b) for b in d.boxes]}
           for d in dsets]
    write_json(path, doc)


def _require_number(value, what: str, path) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FormatError(f"{path}: {what} must be a number, got {value!r}")
    return float(value)


def read_detections(path) -> list[DetectionSet]:
    doc = read_json(path, "detections")
    if not isinstance(doc, list):
        raise FormatError(f"{path}: detections document must be a JSON array")
    out = []
    for entry in doc:
        if not isinstance(entry, dict) or set(entry) != {"image_id", "boxes"}:
            raise FormatError(f"{path}: each entry needs exactly image_id and boxes")
        image_id = entry["image_id"]
        if not isinstance(image_id, str) or not image_id:
            raise FormatError(f"{path}: image_id must be a non-empty string")
        raw_boxes = entry["boxes"]
        if not isinstance(raw_boxes, list):
            raise FormatError(f"{path}: boxes of {image_id!r} must be an array")
        boxes = []
        for raw in raw_boxes:
            keys = {"class", "x1", "y1", "x2", "y2", "confidence"}
            if not isinstance(raw, dict) or set(raw) != keys:
                raise FormatError(
                    f"{path}: box of {image_id!r} needs exactly the fields {sorted(keys)}")
            cls = raw["class"]
            if isinstance(cls, bool) or not isinstance(cls, int):
                raise FormatError(f"{path}: class of {image_id!r} must be an integer")
            fields = {k: _require_number(raw[k], f"{k} of {image_id!r}", path)
                      for k in ("x1", "y1", "x2", "y2", "confidence")}
            try:
                boxes.append(Detection(class_id=cls, **fields))
            except ValueError as exc:
                raise InvalidBox(f"{path}: invalid box in image {image_id!r}: {exc}") from exc
        out.append(DetectionSet(image_id=image_id, boxes=tuple(boxes)))
    return out


# ---------------------------------------------------------------------------
# Split manifests


@dataclass(frozen=True)
class SplitManifest:
    """Ordered (image_id, subset) assignments covering one dataset."""

    entries: tuple[tuple[str, str], ...]

    def __post_init__(self):
        entries = tuple((str(i), str(s)) for i, s in self.entries)
        seen = set()
        for image_id, subset in entries:
            if subset not in SUBSETS:
                raise ValueError(f"unknown subset {subset!r}, expected one of {SUBSETS}")
            if image_id in seen:
                raise ValueError(f"duplicate image_id {image_id!r} in manifest")
            seen.add(image_id)
        object.__setattr__(self, "entries", entries)

    def subset_ids(self, subset: str) -> list[str]:
        if subset not in SUBSETS:
            raise ValueError(f"unknown subset {subset!r}, expected one of {SUBSETS}")
        return [i for i, s in self.entries if s == subset]

    def counts(self) -> dict[str, int]:
        return {subset: len(self.subset_ids(subset)) for subset in SUBSETS}


def split_sequential(ids: Sequence[str], counts: Sequence[int]) -> SplitManifest:
    """Assign the first n_train ids to train, then validation, then holdout."""
    n_train, n_val, n_hold = (int(c) for c in counts)
    if min(n_train, n_val, n_hold) < 0:
        raise ValueError(f"counts must be non-negative, got {counts}")
    if n_train + n_val + n_hold != len(ids):
        raise CountMismatch(
            f"counts {n_train}+{n_val}+{n_hold} != {len(ids)} ids")
    entries = []
    for i, image_id in enumerate(ids):
        if i < n_train:
            subset = SUBSET_TRAIN
        elif i < n_train + n_val:
            subset = SUBSET_VALIDATION
        else:
            subset = SUBSET_HOLDOUT
        entries.append((str(image_id), subset))
    return SplitManifest(entries=tuple(entries))


def write_manifest(path, manifest: SplitManifest) -> None:
    doc = {"version": JSON_VERSION,
           "entries": [{"image_id": i, "subset": s} for i, s in manifest.entries]}
    write_json(path, doc)


def read_manifest(path) -> SplitManifest:
    doc = read_json(path, "manifest")
    if not isinstance(doc, dict) or "version" not in doc:
        raise FormatError(f"{path}: manifest must be an object with a version field")
    if doc["version"] != JSON_VERSION:
        raise UnsupportedVersion(f"{path}: manifest version {doc['version']}, expected {JSON_VERSION}")
    entries = doc.get("entries")
    if not isinstance(entries, list):
        raise FormatError(f"{path}: manifest entries must be an array")
    pairs = []
    for entry in entries:
        if (not isinstance(entry, dict) or set(entry) != {"image_id", "subset"}
                or not isinstance(entry.get("image_id"), str)
                or not isinstance(entry.get("subset"), str)):
            raise FormatError(f"{path}: each entry needs image_id and subset strings")
        pairs.append((entry["image_id"], entry["subset"]))
    try:
        return SplitManifest(entries=tuple(pairs))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Run configuration


@dataclass(frozen=True)
class RunConfig:
    """Everything a reproducible run needs, loadable from one JSON file."""

    pred_dir: Optional[str] = None
    gt_dir: Optional[str] = None
    triple_threshold: Optional[TripleThresholdConfig] = None
    fusion: Optional[FusionConfig] = None
    metric_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    seed: int = 0

    def as_dict(self) -> dict:
        doc: dict = {"version": JSON_VERSION,
                     "metric_weights": list(self.metric_weights),
                     "seed": self.seed}
        if self.pred_dir is not None:
            doc["pred_dir"] = self.pred_dir
        if self.gt_dir is not None:
            doc["gt_dir"] = self.gt_dir
        if self.triple_threshold is not None:
            cfg = self.triple_threshold
            doc["triple_threshold"] = {
                "max_prob_thresh": cfg.max_prob_thresh,
                "min_prob_thresh": cfg.min_prob_thresh,
                "min_area_thresh": list(cfg.min_area_thresh),
            }
        if self.fusion is not None:
            doc["fusion"] = self.fusion.as_dict()
        return doc


def write_run_config(path, cfg: RunConfig) -> None:
    write_json(path, cfg.as_dict())


_RUN_CONFIG_KEYS = {"version", "pred_dir", "gt_dir", "triple_threshold",
                    "fusion", "metric_weights", "seed"}


def _config_section(doc: dict, key: str, fields: set, path) -> dict:
    section = doc[key]
    if not isinstance(section, dict) or set(section) - fields:
        raise ConfigError(f"{path}: field {key} must be an object with keys {sorted(fields)}")
    missing = fields - set(section)
    if missing:
        raise ConfigError(f"{path}: field {key} is missing {sorted(missing)}")
    return section


def load_run_config(path) -> RunConfig:
    """Parse and validate a RunConfig JSON file.

    Any problem with the file itself (unreadable, bad JSON, unknown or
    invalid fields, missing referenced paths) raises ConfigError naming
    the offending file and field.
    """
    if not os.path.exists(path):
        raise ConfigError(f"config file {path} does not exist")
    try:
        doc = read_json(path, "config")
    except FormatError as exc:
        raise ConfigError(str(exc)) from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    unknown = set(doc) - _RUN_CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown config fields {sorted(unknown)}")
    if doc.get("version") != JSON_VERSION:
        raise ConfigError(f"{path}: config version must be {JSON_VERSION}")

    kwargs: dict = {}
    for key in ("pred_dir", "gt_dir"):
        if key in doc:
            value = doc[key]
            if not isinstance(value, str):
                raise ConfigError(f"{path}: field {key} must be a string path")
            if not os.path.exists(value):
                raise ConfigError(f"{path}: {key} {value!r} does not exist")
            kwargs[key] = value
    if "triple_threshold" in doc:
        section = _config_section(
            doc, "triple_threshold",
            {"max_prob_thresh", "min_prob_thresh", "min_area_thresh"}, path)
        try:
            kwargs["triple_threshold"] = TripleThresholdConfig(
                max_prob_thresh=section["max_prob_thresh"],
                min_prob_thresh=section["min_prob_thresh"],
                min_area_thresh=tuple(section["min_area_thresh"]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: field triple_threshold: {exc}") from exc
    if "fusion" in doc:
        section = _config_section(
            doc, "fusion", {"iou_thresh", "score_thresh", "weights"}, path)
        try:
            kwargs["fusion"] = FusionConfig(
                iou_thresh=section["iou_thresh"],
                score_thresh=section["score_thresh"],
                weights=tuple(section["weights"]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: field fusion: {exc}") from exc
    if "metric_weights" in doc:
        weights = doc["metric_weights"]
        if (not isinstance(weights, list) or len(weights) != 3
                or any(isinstance(w, bool) or not isinstance(w, (int, float))
                       for w in weights)):
            raise ConfigError(f"{path}: metric_weights must be three numbers")
        kwargs["metric_weights"] = tuple(float(w) for w in weights)
    if "seed" in doc:
        seed = doc["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ConfigError(f"{path}: seed must be an integer")
        kwargs["seed"] = seed
    return RunConfig(**kwargs)
