"""Binary segmentation metrics with exact distance transforms.

Masks are boolean (h, w) arrays, True = foreground. Region metrics (IoU,
Dice, pixel accuracy) come from pixel counts. Distance-based metrics use
the exact Euclidean distance transform (squared two-pass algorithm in the
kernel backend), with pixels as integer grid points. Degenerate empty-mask
cases follow fixed conventions and are flagged per pair instead of raising,
so one bad pair cannot sink a batch report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ArgumentError, DataError, ShapeError

HAUSDORFF_MODES = ("symmetric", "gt_to_pred")

# report mean keys, aligned with the usual result-table column names
MEAN_KEYS = (
    "Intersection over Union (IoU)",
    "Dice Coefficient",
    "Mean Pixel Accuracy",
    "Mean Modified Hausdorff Distance",
    "Mean Surface Dice Overlap",
)


def binarize(values: np.ndarray, threshold: float) -> np.ndarray:
    """Foreground where value >= threshold."""
    return np.asarray(values) >= threshold


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"masks must be 2-d, got {a.shape} and {b.shape}")
    if a.shape != b.shape:
        raise ShapeError(f"mask shapes differ: {a.shape} vs {b.shape}")
    return a, b


def iou(pred: np.ndarray, gt: np.ndarray) -> float:
    """Intersection over union; both masks empty counts as perfect (1.0)."""
    pred, gt = _check_pair(pred, gt)
    union = int(np.logical_or(pred, gt).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(pred, gt).sum()) / union


def dice_coefficient(pred: np.ndarray, gt: np.ndarray) -> float:
    """2|A&B| / (|A|+|B|); both empty -> 1.0.

    Computed via 2*iou/(1+iou) so the identity with iou() holds bitwise;
    the direct count formula can differ from it by one ulp.
    """
    j = iou(pred, gt)
    return 2.0 * j / (1.0 + j)


def pixel_accuracy(pred: np.ndarray, gt: np.ndarray) -> float:
    pred, gt = _check_pair(pred, gt)
    return float(np.mean(pred == gt))


def distance_transform(mask: np.ndarray) -> np.ndarray:
    """Euclidean distance from every pixel to the nearest foreground pixel;
    all +inf when the mask is empty."""
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2:
        raise ShapeError(f"mask must be 2-d, got {m.shape}")
    return np.sqrt(_kernels.edt_sq(np.ascontiguousarray(m, dtype=np.uint8)))


def boundary_map(mask: np.ndarray) -> np.ndarray:
    """Foreground pixels with at least one background 4-neighbor; pixels on
    the array edge treat the outside as background."""
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2:
        raise ShapeError(f"mask must be 2-d, got {m.shape}")
    p = np.pad(m, 1, constant_values=False)
    interior = (p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:])
    return m & ~interior


def _directed_mhd(src: np.ndarray, dst: np.ndarray) -> float:
    """Mean over src foreground of the distance to the nearest dst pixel."""
    return float(np.mean(distance_transform(dst)[src]))


def modified_hausdorff(pred: np.ndarray, gt: np.ndarray,
                       mode: str = "symmetric") -> float:
    """Modified Hausdorff distance in pixels.

    symmetric: max of the two directed means. gt_to_pred: the single
    directed mean from ground-truth pixels to the prediction. Both masks
    empty -> 0.0 (nothing to disagree about); exactly one empty -> nan, the
    caller flags and excludes such rows.
    """
    if mode not in HAUSDORFF_MODES:
        raise ArgumentError(f"unknown hausdorff mode {mode!r}; expected one "
                            f"of {HAUSDORFF_MODES}")
    pred, gt = _check_pair(pred, gt)
    p_any, g_any = bool(pred.any()), bool(gt.any())
    if not p_any and not g_any:
        return 0.0
    if not p_any or not g_any:
        return math.nan
    if mode == "gt_to_pred":
        return _directed_mhd(gt, pred)
    return max(_directed_mhd(pred, gt), _directed_mhd(gt, pred))


def surface_dice(pred: np.ndarray, gt: np.ndarray,
                 tolerance: float = 0.0) -> float:
    """Fraction of boundary pixels lying within `tolerance` (Euclidean,
    pixels) of the other mask's boundary. Both boundaries empty -> 1.0,
    exactly one empty -> 0.0.
    """
    if tolerance < 0:
        raise ArgumentError("tolerance must be non-negative")
    pred, gt = _check_pair(pred, gt)
    sp = boundary_map(pred)
    sg = boundary_map(gt)
    np_, ng = int(sp.sum()), int(sg.sum())
    if np_ == 0 and ng == 0:
        return 1.0
    if np_ == 0 or ng == 0:
        return 0.0
    close_p = int(np.sum(distance_transform(sg)[sp] <= tolerance))
    close_g = int(np.sum(distance_transform(sp)[sg] <= tolerance))
    return (close_p + close_g) / (np_ + ng)


@dataclass
class SegEvalConfig:
    tolerance: float = 0.0
    hausdorff_mode: str = "symmetric"
    threshold: float | None = None  # echoed into the report when set


@dataclass
class SegmentationReport:
    rows: list[dict]
    means: dict[str, float]
    n: int
    config: SegEvalConfig
    hausdorff_n: int  # rows whose distance was defined

    def to_json_dict(self) -> dict:
        def clean(x):
            return None if (isinstance(x, float) and math.isnan(x)) else x

        return {
            "n": self.n,
            "config": {
                "tolerance": self.config.tolerance,
                "hausdorff_mode": self.config.hausdorff_mode,
                "threshold": self.config.threshold,
            },
            "means": {k: clean(v) for k, v in self.means.items()},
            "hausdorff_n": self.hausdorff_n,
            "pairs": [
                {k: clean(v) for k, v in row.items()} for row in self.rows
            ],
        }


def evaluate_pair(pred: np.ndarray, gt: np.ndarray, pair_id: str,
                  config: SegEvalConfig) -> dict:
    try:
        pred, gt = _check_pair(pred, gt)
    except ShapeError as exc:
        raise DataError(f"pair {pair_id!r}: {exc}") from exc
    p_any, g_any = bool(pred.any()), bool(gt.any())
    flags = []
    if not p_any and not g_any:
        flags.append("both_empty")
    elif not p_any:
        flags.append("pred_empty")
    elif not g_any:
        flags.append("gt_empty")
    mhd = modified_hausdorff(pred, gt, config.hausdorff_mode)
    if math.isnan(mhd):
        flags.append("hausdorff_undefined")
    return {
        "pair_id": pair_id,
        "iou": iou(pred, gt),
        "dice": dice_coefficient(pred, gt),
        "pixel_accuracy": pixel_accuracy(pred, gt),
        "modified_hausdorff": mhd,
        "surface_dice": surface_dice(pred, gt, config.tolerance),
        "flags": flags,
    }


def segmentation_report(pairs: list[tuple[np.ndarray, np.ndarray, str]],
                        config: SegEvalConfig | None = None) -> SegmentationReport:
    """Evaluate (pred, gt, pair_id) mask pairs and aggregate.

    Means cover all pairs except that rows with an undefined Hausdorff
    distance (exactly one empty mask) are excluded from that one mean; if no
    row defines it the mean itself is nan.
    """
    if not pairs:
        raise ArgumentError("no mask pairs to evaluate")
    config = config or SegEvalConfig()
    rows = [evaluate_pair(p, g, pid, config) for p, g, pid in pairs]
    mhd_vals = [r["modified_hausdorff"] for r in rows
                if not math.isnan(r["modified_hausdorff"])]
    means = {
        MEAN_KEYS[0]: float(np.mean([r["iou"] for r in rows])),
        MEAN_KEYS[1]: float(np.mean([r["dice"] for r in rows])),
        MEAN_KEYS[2]: float(np.mean([r["pixel_accuracy"] for r in rows])),
        MEAN_KEYS[3]: float(np.mean(mhd_vals)) if mhd_vals else math.nan,
        MEAN_KEYS[4]: float(np.mean([r["surface_dice"] for r in rows])),
    }
    return SegmentationReport(rows=rows, means=means, n=len(rows),
                              config=config, hausdorff_n=len(mhd_vals))
