"""Classification quality: confusion matrix, accuracy, macro-averaged
precision/recall/F1, per-class breakdown, and CSV export."""
import csv
from dataclasses import dataclass

import numpy as np


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # [n, n] int64, rows = true class, cols = predicted

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class PerClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class MetricsReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class: list
    flagged_classes: list  # indices where a zero denominator forced a 0 score


def confusion(true_labels, predicted_labels, n_classes: int) -> ConfusionMatrix:
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted_labels, dtype=np.int64)
    if t.shape != p.shape or t.ndim != 1:
        raise ValueError(f"label sequences must be equal-length 1-D, got {t.shape} and {p.shape}")
    for name, arr in (("true", t), ("predicted", p)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"{name} labels outside 0..{n_classes - 1}")
    counts = np.bincount(t * n_classes + p, minlength=n_classes * n_classes)
    return ConfusionMatrix(counts.reshape(n_classes, n_classes).astype(np.int64))


def compute_metrics(cm: ConfusionMatrix) -> MetricsReport:
    """accuracy = trace/total; per-class precision over column sums and
    recall over row sums; macro = unweighted mean over every class.

    Classes with a zero denominator (no predictions, no support, or
    p + r = 0) score 0 there and are listed in flagged_classes.
    """
    counts = cm.counts
    total = counts.sum()
    if total < 1:
        raise ValueError("confusion matrix is empty")
    diag = np.diag(counts).astype(np.float64)
    col_sums = counts.sum(axis=0).astype(np.float64)
    row_sums = counts.sum(axis=1).astype(np.float64)
    per_class = []
    flagged = []
    for c in range(cm.n_classes):
        zero_denominator = False
        if col_sums[c] > 0:
            precision = diag[c] / col_sums[c]
        else:
            precision, zero_denominator = 0.0, True
        if row_sums[c] > 0:
            recall = diag[c] / row_sums[c]
        else:
            recall, zero_denominator = 0.0, True
        if precision + recall > 0:
            f1 = 2.0 * precision * recall / (precision + recall)
        else:
            f1, zero_denominator = 0.0, True
        if zero_denominator:
            flagged.append(c)
        per_class.append(PerClassMetrics(float(precision), float(recall), float(f1), int(row_sums[c])))
    macro = lambda xs: float(np.mean(xs)) if xs else 0.0
    return MetricsReport(
        accuracy=float(diag.sum() / total),
        macro_precision=macro([m.precision for m in per_class]),
        macro_recall=macro([m.recall for m in per_class]),
        macro_f1=macro([m.f1 for m in per_class]),
        per_class=per_class,
        flagged_classes=flagged,
    )


def export_confusion_csv(cm: ConfusionMatrix, class_names, path):
    """Grid with class names on both axes; round-trips counts exactly."""
    if len(class_names) != cm.n_classes:
        raise ValueError(f"{len(class_names)} names for {cm.n_classes} classes")
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["true\\predicted"] + list(class_names))
        for name, row in zip(class_names, cm.counts):
            writer.writerow([name] + [int(x) for x in row])


def load_confusion_csv(path):
    """Inverse of export_confusion_csv: (ConfusionMatrix, class_names)."""
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    names = rows[0][1:]
    counts = np.array([[int(x) for x in row[1:]] for row in rows[1:]], dtype=np.int64)
    return ConfusionMatrix(counts), names


def format_percent(fraction: float) -> str:
    """0.98171 -> '98.17 %'"""
    return f"{fraction * 100.0:.2f} %"


def report_to_dict(report: MetricsReport) -> dict:
    return {
        "accuracy": report.accuracy,
        "macro_precision": report.macro_precision,
        "macro_recall": report.macro_recall,
        "macro_f1": report.macro_f1,
        "per_class": [
            {"precision": m.precision, "recall": m.recall, "f1": m.f1, "support": m.support}
            for m in report.per_class
        ],
        "flagged_classes": list(report.flagged_classes),
    }


def format_report(report: MetricsReport, class_names=None) -> str:
    lines = [
        f"Accuracy        {format_percent(report.accuracy)}",
        f"Macro precision {format_percent(report.macro_precision)}",
        f"Macro recall    {format_percent(report.macro_recall)}",
        f"Macro F1        {format_percent(report.macro_f1)}",
        "",
        f"{'class':<42} {'precision':>9} {'recall':>9} {'f1':>9} {'support':>8}",
    ]
    for c, m in enumerate(report.per_class):
        name = class_names[c] if class_names else str(c)
        flag = " *" if c in report.flagged_classes else ""
        lines.append(f"{name:<42} {m.precision:>9.4f} {m.recall:>9.4f} {m.f1:>9.4f} {m.support:>8}{flag}")
    if report.flagged_classes:
        lines.append("* zero-denominator class, scored 0")
    return "\n".join(lines)
