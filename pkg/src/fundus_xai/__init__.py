"""Explainability and evaluation toolkit for small fundus-image classifiers.

A self-contained micro CNN with exact manual gradients, five class
activation mapping methods over its relu blocks, and full classification
and segmentation metric suites, all reachable from the fundus-xai CLI.
"""

from ._kernels import BACKEND
from .backbone import (
    ForwardTrace,
    ModelParams,
    TrainConfig,
    evaluate_accuracy,
    forward,
    grad_wrt_activation,
    grad_wrt_params,
    init_params,
    load_params,
    save_params,
    train,
)
from .cam import (
    ChannelWeights,
    Heatmap,
    METHODS,
    faster_score_cam,
    grad_cam,
    grad_cam_pp,
    layer_cam,
    run_method,
    score_cam,
)
from .classify_metrics import (
    ClassificationReport,
    PredictionRecord,
    classification_report,
    confusion_matrix,
)
from .segment_metrics import (
    SegEvalConfig,
    SegmentationReport,
    dice_coefficient,
    distance_transform,
    iou,
    modified_hausdorff,
    segmentation_report,
    surface_dice,
)
from .synthetic import make_quadrant_dataset, quadrant_of

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ChannelWeights",
    "ClassificationReport",
    "ForwardTrace",
    "Heatmap",
    "METHODS",
    "ModelParams",
    "PredictionRecord",
    "SegEvalConfig",
    "SegmentationReport",
    "TrainConfig",
    "classification_report",
    "confusion_matrix",
    "dice_coefficient",
    "distance_transform",
    "evaluate_accuracy",
    "faster_score_cam",
    "forward",
    "grad_cam",
    "grad_cam_pp",
    "grad_wrt_activation",
    "grad_wrt_params",
    "init_params",
    "iou",
    "layer_cam",
    "load_params",
    "make_quadrant_dataset",
    "modified_hausdorff",
    "quadrant_of",
    "run_method",
    "save_params",
    "score_cam",
    "segmentation_report",
    "surface_dice",
    "train",
    "__version__",
]
