"""Post-processing and evaluation toolkit for segmentation and detection.

Operates on model predictions stored in files: sequential dataset
splitting, seeded augmentation (including rectangle-swap mixing),
segmentation losses and pixel metrics, probability-map ensembling, the
area-gated triple-threshold post-processor with its grid-search tuner,
multi-model detection fusion with its tuner, and AP/mAP evaluation.
"""

from ._backend import active_backend
from .core import (
    BinaryMask,
    Detection,
    DetectionSet,
    ImageTensor,
    ProbMap,
    binarize,
    box_iou,
    positive_area,
    positive_areas,
)
from .augment import (
    CropSpec,
    RandomSource,
    Stage,
    StageSchedule,
    apply_crop,
    cutmix,
    cutout,
    crop_nonempty,
    crop_random,
    default_schedule,
    derive_seed,
    flip,
    flip_boxes,
    flip_tensor,
    pad_to_multiple,
    photometric,
    stage_config,
    unpad,
)
from .metrics import (
    APResult,
    LossValue,
    MetricReport,
    average_precision,
    bce_loss,
    combined_loss,
    composite_seg_score,
    dice,
    evaluate_segmentation,
    f2_pixel,
    jaccard,
    mean_ap,
    pixel_precision,
    soft_dice_loss,
    soft_jaccard_loss,
)
from .segpost import (
    EnsembleSelection,
    TripleThresholdConfig,
    apply_seg_postprocess,
    min_area_from_dataset,
    pixel_ensemble,
    select_members,
    triple_threshold,
    tune_triple_threshold,
)
from .detfuse import (
    FusedCluster,
    FusionConfig,
    filter_by_score,
    fuse_dataset,
    fuse_detections,
    fuse_detections_detailed,
    tune_fusion,
)
from .io import (
    RunConfig,
    SplitManifest,
    load_run_config,
    read_detections,
    read_manifest,
    read_mask_tensor,
    split_sequential,
    write_detections,
    write_manifest,
    write_mask_tensor,
)
from . import errors

__version__ = "0.1.0"

__all__ = [
    "APResult",
    "BinaryMask",
    "CropSpec",
    "Detection",
    "DetectionSet",
    "EnsembleSelection",
    "FusedCluster",
    "FusionConfig",
    "ImageTensor",
    "LossValue",
    "MetricReport",
    "ProbMap",
    "RandomSource",
    "RunConfig",
    "SplitManifest",
    "Stage",
    "StageSchedule",
    "TripleThresholdConfig",
    "active_backend",
    "apply_crop",
    "apply_seg_postprocess",
    "average_precision",
    "bce_loss",
    "binarize",
    "box_iou",
    "combined_loss",
    "composite_seg_score",
    "crop_nonempty",
    "crop_random",
    "cutmix",
    "cutout",
    "default_schedule",
    "derive_seed",
    "dice",
    "errors",
    "evaluate_segmentation",
    "f2_pixel",
    "filter_by_score",
    "flip",
    "flip_boxes",
    "flip_tensor",
    "fuse_dataset",
    "fuse_detections",
    "fuse_detections_detailed",
    "jaccard",
    "load_run_config",
    "mean_ap",
    "min_area_from_dataset",
    "pad_to_multiple",
    "photometric",
    "pixel_ensemble",
    "pixel_precision",
    "positive_area",
    "positive_areas",
    "read_detections",
    "read_manifest",
    "read_mask_tensor",
    "select_members",
    "soft_dice_loss",
    "soft_jaccard_loss",
    "split_sequential",
    "stage_config",
    "triple_threshold",
    "tune_fusion",
    "tune_triple_threshold",
    "unpad",
    "write_detections",
    "write_manifest",
    "write_mask_tensor",
    "__version__",
]
