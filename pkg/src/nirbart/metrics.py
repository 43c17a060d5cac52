"""Confusion matrices and classification metrics.

Six binary metrics (accuracy, sensitivity, specificity, precision, F1, MCC)
are computed per class by one-vs-rest collapse of the confusion matrix and
macro-averaged. Ratios with a zero denominator yield NaN sentinels which are
excluded from the macro averages, with the number of exclusions reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

METRIC_NAMES = ("accuracy", "sensitivity", "specificity", "precision", "f1", "mcc")

LOG_LOSS_EPS = 1e-15


@dataclass
class ConfusionMatrix:
    """K x K counts with rows = actual class, columns = predicted class."""

    counts: np.ndarray
    labels: list

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def collapse(self, index: int) -> tuple[int, int, int, int]:
        """One-vs-rest (tp, tn, fp, fn) for the class at ``index``."""
        tp = int(self.counts[index, index])
        fn = int(self.counts[index].sum()) - tp
        fp = int(self.counts[:, index].sum()) - tp
        tn = self.total - tp - fn - fp
        return tp, tn, fp, fn


def confusion(actual, predicted, labels=None) -> ConfusionMatrix:
    """Tally a confusion matrix over paired label sequences."""
    actual = np.asarray(actual)
    predicted = np.asarray(predicted)
    if actual.shape != predicted.shape:
        raise DataError("actual and predicted label lengths differ")
    if labels is None:
        labels = sorted(set(actual.tolist()) | set(predicted.tolist()))
    index = {lab: i for i, lab in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for a, p in zip(actual.tolist(), predicted.tolist()):
        counts[index[a], index[p]] += 1
    return ConfusionMatrix(counts, list(labels))


def binary_metrics(tp: int, tn: int, fp: int, fn: int) -> dict[str, float]:
    """The six confusion-matrix metrics for one binary collapse.

    Zero-denominator ratios come back as NaN (never silently 0);
    callers decide how to aggregate around them.
    """
    total = tp + tn + fp + fn
    if total <= 0:
        raise DataError("empty confusion matrix")

    def ratio(num, den):
        return num / den if den > 0 else math.nan

    accuracy = (tp + tn) / total
    sensitivity = ratio(tp, tp + fn)
    specificity = ratio(tn, tn + fp)
    precision = ratio(tp, tp + fp)
    if math.isnan(precision) or math.isnan(sensitivity) or precision + sensitivity == 0:
        f1 = math.nan
    else:
        f1 = 2.0 * precision * sensitivity / (precision + sensitivity)
    mcc_den = (tp + fn) * (tp + fp) * (tn + fn) * (tn + fp)
    mcc = (tp * tn - fp * fn) / math.sqrt(mcc_den) if mcc_den > 0 else math.nan
    return {
        "accuracy": accuracy,
        "sensitivity": sensitivity,
        "specificity": specificity,
        "precision": precision,
        "f1": f1,
        "mcc": mcc,
    }


@dataclass
class EvalReport:
    """Per-class metrics, their macro averages, and scalar summaries."""

    labels: list
    per_class: dict = field(default_factory=dict)  # label -> metric dict
    macro: dict = field(default_factory=dict)  # metric -> mean over defined classes
    macro_exclusions: dict = field(default_factory=dict)  # metric -> #NaN classes skipped
    overall_accuracy: float = math.nan
    log_loss: float | None = None

    def to_jsonable(self) -> dict:
        def clean(v):
            return None if (isinstance(v, float) and math.isnan(v)) else v

        return {
            "labels": self.labels,
            "per_class": {
                str(lab): {k: clean(v) for k, v in row.items()}
                for lab, row in self.per_class.items()
            },
            "macro": {k: clean(v) for k, v in self.macro.items()},
            "macro_exclusions": self.macro_exclusions,
            "overall_accuracy": clean(self.overall_accuracy),
            "log_loss": self.log_loss,
        }


def multiclass_report(cm: ConfusionMatrix) -> EvalReport:
    """One-vs-rest metrics per class plus unweighted macro averages."""
    report = EvalReport(labels=list(cm.labels))
    for i, lab in enumerate(cm.labels):
        report.per_class[lab] = binary_metrics(*cm.collapse(i))
    for name in METRIC_NAMES:
        values = [row[name] for row in report.per_class.values()]
        defined = [v for v in values if not math.isnan(v)]
        report.macro_exclusions[name] = len(values) - len(defined)
        report.macro[name] = sum(defined) / len(defined) if defined else math.nan
    report.overall_accuracy = float(np.trace(cm.counts)) / cm.total
    return report


def log_loss(probs: np.ndarray, actual, labels=None) -> float:
    """Mean negative log probability of the true class.

    Probabilities are clipped to ``[1e-15, 1 - 1e-15]`` before the log.
    """
    probs = np.asarray(probs, dtype=float)
    actual = np.asarray(actual)
    if probs.ndim != 2 or probs.shape[0] != actual.shape[0]:
        raise DataError("probability matrix and label vector shapes disagree")
    if labels is None:
        labels = sorted(set(actual.tolist()))
    index = {lab: i for i, lab in enumerate(labels)}
    if len(labels) != probs.shape[1]:
        raise DataError(f"{probs.shape[1]} probability columns for {len(labels)} classes")
    try:
        cols = np.array([index[a] for a in actual.tolist()])
    except KeyError as exc:
        raise DataError(f"label {exc.args[0]!r} missing from class list") from exc
    picked = probs[np.arange(len(actual)), cols]
    picked = np.clip(picked, LOG_LOSS_EPS, 1.0 - LOG_LOSS_EPS)
    return float(-np.log(picked).mean())
