"""Multi-class classification metrics over probabilistic predictions.

Inputs are per-item probability rows (one float per class) with an integer
true label. The hard prediction is the argmax, ties to the lowest index.
Counts come from a C x C confusion matrix (rows = true, cols = predicted);
per-class precision/recall/F1/Jaccard treat each class one-vs-rest, and the
aggregate schemes are macro (unweighted class mean), micro (pooled counts),
and weighted (support-weighted class mean). Undefined 0/0 ratios score 0
and are flagged rather than silently dropped.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DataError, ParseError

PROB_SUM_TOLERANCE = 1e-6
LOG_CLIP = 1e-15
SCHEMES = ("macro", "micro", "weighted")


@dataclass
class PredictionRecord:
    item_id: str
    true_label: int
    probs: np.ndarray


@dataclass
class ConfusionMatrix:
    """counts[i, j] = items with true class i predicted as class j."""

    counts: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def true_positives(self) -> np.ndarray:
        return np.diag(self.counts).astype(np.int64)

    def false_positives(self) -> np.ndarray:
        return self.counts.sum(axis=0).astype(np.int64) - self.true_positives()

    def false_negatives(self) -> np.ndarray:
        return self.counts.sum(axis=1).astype(np.int64) - self.true_positives()

    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1).astype(np.int64)


def make_record(item_id: str, true_label: int, probs,
                num_classes: int | None = None, context: str = "") -> PredictionRecord:
    """Validate and normalize one probability row.

    Probabilities must be finite and non-negative and sum to 1 within 1e-6;
    rows inside the tolerance are renormalized exactly, anything further off
    is rejected as a data error.
    """
    where = f" ({context})" if context else ""
    p = np.asarray(probs, dtype=np.float64)
    if num_classes is not None and p.shape != (num_classes,):
        raise DataError(f"expected {num_classes} probabilities, got {p.shape[0]}{where}")
    if p.ndim != 1 or p.size < 2:
        raise DataError(f"need at least two class probabilities{where}")
    if not np.all(np.isfinite(p)):
        raise DataError(f"non-finite probability{where}")
    if np.any(p < 0.0):
        raise DataError(f"negative probability{where}")
    s = float(p.sum())
    if abs(s - 1.0) > PROB_SUM_TOLERANCE:
        raise DataError(f"probabilities sum to {s:.9g}, not 1{where}")
    lbl = int(true_label)
    if not 0 <= lbl < p.size:
        raise DataError(f"true label {lbl} out of range for {p.size} classes{where}")
    if s != 1.0:  # skip the no-op division so clean rows round-trip bitwise
        p = p / s
    return PredictionRecord(item_id=str(item_id), true_label=lbl, probs=p)


def predicted_label(record: PredictionRecord) -> int:
    """Argmax with ties to the lowest class index."""
    return int(np.argmax(record.probs))


def confusion_matrix(records: list[PredictionRecord],
                     num_classes: int) -> ConfusionMatrix:
    if not records:
        raise ArgumentError("no prediction records")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    for r in records:
        if not 0 <= r.true_label < num_classes:
            raise DataError(f"record {r.item_id!r}: label {r.true_label} out of "
                            f"range for {num_classes} classes")
        counts[r.true_label, predicted_label(r)] += 1
    return ConfusionMatrix(counts=counts)


def accuracy(cm: ConfusionMatrix) -> float:
    return float(np.trace(cm.counts)) / cm.total


def _safe_div(num: np.ndarray, den: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise num/den with 0 where den == 0; second array flags those."""
    undefined = den == 0
    out = np.zeros(num.shape, dtype=np.float64)
    np.divide(num, den, out=out, where=~undefined)
    return out, undefined


def per_class_metrics(cm: ConfusionMatrix) -> dict[str, np.ndarray]:
    """Per-class precision, recall, f1, jaccard plus undefined flags."""
    tp = cm.true_positives().astype(np.float64)
    fp = cm.false_positives().astype(np.float64)
    fn = cm.false_negatives().astype(np.float64)
    precision, p_undef = _safe_div(tp, tp + fp)
    recall, r_undef = _safe_div(tp, tp + fn)
    jac, j_undef = _safe_div(tp, tp + fp + fn)
    # derive f1 from jaccard so f1 == 2j/(1+j) holds bitwise; the direct
    # 2tp/(2tp+fp+fn) form can land one ulp away. Denominators vanish for
    # exactly the same classes, so the undefined flags coincide.
    f1, f_undef = 2.0 * jac / (1.0 + jac), j_undef.copy()
    return {
        "precision": precision, "recall": recall, "f1": f1, "jaccard": jac,
        "precision_undefined": p_undef, "recall_undefined": r_undef,
        "f1_undefined": f_undef, "jaccard_undefined": j_undef,
        "support": cm.support(),
    }


def _aggregate(per_class: np.ndarray, support: np.ndarray, scheme: str,
               micro_value: float) -> float:
    if scheme == "macro":
        return float(per_class.mean())
    if scheme == "micro":
        return micro_value
    if scheme == "weighted":
        return float((per_class * support).sum() / support.sum())
    raise ArgumentError(f"unknown averaging scheme {scheme!r}; expected one "
                        f"of {SCHEMES}")


def aggregate_metrics(cm: ConfusionMatrix, scheme: str) -> dict[str, float]:
    """Scheme-aggregated precision/recall/f1/jaccard.

    Micro pooling makes precision, recall and F1 all equal the accuracy in
    single-label classification (every false positive is another class's
    false negative); micro Jaccard pools to tp / (tp + fp + fn).
    """
    pc = per_class_metrics(cm)
    tp = float(np.trace(cm.counts))
    n = float(cm.total)
    micro_acc = tp / n
    micro_jac = tp / (2.0 * n - tp) if (2.0 * n - tp) > 0 else 0.0
    support = pc["support"]
    return {
        "precision": _aggregate(pc["precision"], support, scheme, micro_acc),
        "recall": _aggregate(pc["recall"], support, scheme, micro_acc),
        "f1": _aggregate(pc["f1"], support, scheme, micro_acc),
        "jaccard": _aggregate(pc["jaccard"], support, scheme, micro_jac),
    }


def log_loss(records: list[PredictionRecord]) -> float:
    """Mean negative log of the probability assigned to the true class,
    clipped to [1e-15, 1 - 1e-15] before the log."""
    if not records:
        raise ArgumentError("no prediction records")
    total = 0.0
    for r in records:
        p = min(max(float(r.probs[r.true_label]), LOG_CLIP), 1.0 - LOG_CLIP)
        total -= math.log(p)
    return total / len(records)


@dataclass
class ClassificationReport:
    cm: ConfusionMatrix
    accuracy: float
    per_class: dict[str, np.ndarray]
    macro: dict[str, float]
    micro: dict[str, float]
    weighted: dict[str, float]
    log_loss: float
    n: int

    def to_json_dict(self) -> dict:
        per_class_rows = []
        pc = self.per_class
        for i in range(self.cm.num_classes):
            flags = [name for name in ("precision", "recall", "f1", "jaccard")
                     if bool(pc[f"{name}_undefined"][i])]
            per_class_rows.append({
                "class": i,
                "precision": float(pc["precision"][i]),
                "recall": float(pc["recall"][i]),
                "f1": float(pc["f1"][i]),
                "jaccard": float(pc["jaccard"][i]),
                "support": int(pc["support"][i]),
                "undefined": flags,
            })
        return {
            "accuracy": self.accuracy,
            "per_class": per_class_rows,
            "macro": self.macro,
            "micro": self.micro,
            "weighted": self.weighted,
            "log_loss": self.log_loss,
            "n": self.n,
            "confusion_matrix": self.cm.counts.tolist(),
        }


def classification_report(records: list[PredictionRecord],
                          num_classes: int) -> ClassificationReport:
    cm = confusion_matrix(records, num_classes)
    return ClassificationReport(
        cm=cm,
        accuracy=accuracy(cm),
        per_class=per_class_metrics(cm),
        macro=aggregate_metrics(cm, "macro"),
        micro=aggregate_metrics(cm, "micro"),
        weighted=aggregate_metrics(cm, "weighted"),
        log_loss=log_loss(records),
        n=len(records),
    )


def read_predictions(path: str | os.PathLike,
                     num_classes: int | None = None
                     ) -> tuple[list[PredictionRecord], int]:
    """Parse a predictions table: header row, then
    item_id,true_label,p_0,...,p_{C-1} per line. Errors cite line numbers."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty predictions file") from None
        header = [h.strip() for h in header]
        if len(header) < 4 or header[0] != "item_id" or header[1] != "true_label":
            raise ParseError(f"{path}: header must be item_id,true_label,"
                             f"p_0,...,p_{{C-1}}, got {header!r}")
        expected_probs = [f"p_{i}" for i in range(len(header) - 2)]
        if header[2:] != expected_probs:
            raise ParseError(f"{path}: probability columns must be "
                             f"{expected_probs}, got {header[2:]!r}")
        c = len(header) - 2
        if num_classes is not None and c != num_classes:
            raise ParseError(f"{path}: header has {c} probability columns, "
                             f"expected {num_classes}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2 + c:
                raise ParseError(f"{path}:{lineno}: expected {2 + c} fields, "
                                 f"got {len(row)}")
            try:
                label = int(row[1])
                probs = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            records.append(make_record(row[0], label, probs, num_classes=c,
                                       context=f"{path}:{lineno}"))
    if not records:
        raise ParseError(f"{path}: no prediction rows")
    return records, c


def write_predictions(path: str | os.PathLike,
                      records: list[PredictionRecord]) -> None:
    if not records:
        raise ArgumentError("no prediction records to write")
    c = records[0].probs.shape[0]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["item_id", "true_label"] + [f"p_{i}" for i in range(c)])
        for r in records:
            writer.writerow([r.item_id, r.true_label]
                            + [repr(float(p)) for p in r.probs])
