"""Confusion matrices and the derived per-class screening metrics.

Multi-class metrics come from a one-vs-rest reduction: per class,
sensitivity TP/(TP+FN), specificity TN/(TN+FP), precision TP/(TP+FP),
F1 the harmonic mean of precision and sensitivity. Ratios with a zero
denominator are reported as None, never as 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMatrix, EmptyRow, LabelOutOfRange


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[actual][predicted]; rows and columns share label_names order."""

    counts: np.ndarray
    label_names: tuple[str, ...]

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        k = len(self.label_names)
        if counts.shape != (k, k):
            raise EmptyMatrix(f"counts {counts.shape} vs {k} labels")
        if np.any(counts < 0):
            raise ValueError("confusion counts must be nonnegative")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ClassMetrics:
    name: str
    sensitivity: float | None
    specificity: float | None
    precision: float | None
    f1: float | None


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    per_class: tuple[ClassMetrics, ...]

    def for_class(self, name: str) -> ClassMetrics:
        for cm in self.per_class:
            if cm.name == name:
                return cm
        raise KeyError(name)


def confusion_matrix(pairs, label_names) -> ConfusionMatrix:
    """Count (actual, predicted) index pairs into a K x K grid."""
    k = len(label_names)
    counts = np.zeros((k, k), dtype=np.int64)
    for i, (actual, predicted) in enumerate(pairs):
        if not (0 <= actual < k and 0 <= predicted < k):
            raise LabelOutOfRange(f"pair {i}: ({actual}, {predicted}) outside [0, {k})")
        counts[actual, predicted] += 1
    return ConfusionMatrix(counts, tuple(label_names))


def _ratio(num: float, denom: float) -> float | None:
    return num / denom if denom > 0 else None


def derive_metrics(cm: ConfusionMatrix) -> MetricsReport:
    total = cm.total
    if total == 0:
        raise EmptyMatrix("cannot derive metrics from an empty matrix")
    counts = cm.counts
    accuracy = float(np.trace(counts)) / total

    per_class = []
    for c, name in enumerate(cm.label_names):
        tp = float(counts[c, c])
        fn = float(counts[c].sum() - tp)
        fp = float(counts[:, c].sum() - tp)
        tn = float(total - tp - fn - fp)
        sensitivity = _ratio(tp, tp + fn)
        specificity = _ratio(tn, tn + fp)
        precision = _ratio(tp, tp + fp)
        if precision is None or sensitivity is None or precision + sensitivity == 0:
            f1 = None
        else:
            f1 = 2.0 * precision * sensitivity / (precision + sensitivity)
        per_class.append(ClassMetrics(name, sensitivity, specificity, precision, f1))
    return MetricsReport(accuracy, tuple(per_class))


def normalize_rows(cm: ConfusionMatrix) -> np.ndarray:
    """Row percentages (unrounded); renderers round to one decimal."""
    counts = cm.counts.astype(np.float64)
    sums = counts.sum(axis=1)
    if np.any(sums == 0):
        bad = int(np.argmin(sums))
        raise EmptyRow(f"row {bad} ({cm.label_names[bad]}) has no samples")
    return counts / sums[:, None] * 100.0


# -- rendering ------------------------------------------------------------

def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value * 100:.2f}"


def render_metrics_table(report: MetricsReport, positive_only: bool = False) -> str:
    """Aligned text table of per-class metrics plus the overall accuracy.

    positive_only renders just the positive (last) class row, the usual
    presentation for the binary detector.
    """
    header = ["Class", "F1-Score (%)", "Sensitivity (%)", "Specificity (%)", "Precision (%)", "Accuracy (%)"]
    rows = [["Overall", "-", "-", "-", "-", f"{report.accuracy * 100:.2f}"]]
    classes = report.per_class[-1:] if positive_only else report.per_class
    for cm in classes:
        rows.append(
            [cm.name, _fmt(cm.f1), _fmt(cm.sensitivity), _fmt(cm.specificity), _fmt(cm.precision), "-"]
        )
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for row in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    return "\n".join(lines)


def render_confusion_table(cm: ConfusionMatrix, normalized: bool = True) -> str:
    """Confusion grid, optionally row-normalized to percentages."""
    if normalized:
        grid = normalize_rows(cm)
        cells = [[f"{v:.1f}" for v in row] for row in grid]
    else:
        cells = [[str(int(v)) for v in row] for row in cm.counts]
    names = list(cm.label_names)
    width = max(len(n) for n in names + ["actual\\predicted"])
    cell_w = max([len(c) for row in cells for c in row] + [len(n) for n in names])
    lines = ["actual\\predicted".ljust(width) + "  " + "  ".join(n.rjust(cell_w) for n in names)]
    for name, row in zip(names, cells):
        lines.append(name.ljust(width) + "  " + "  ".join(c.rjust(cell_w) for c in row))
    return "\n".join(lines)


def metrics_to_csv(report: MetricsReport, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["class", "f1", "sensitivity", "specificity", "precision", "accuracy"])
        writer.writerow(["overall", "", "", "", "", f"{report.accuracy:.6f}"])
        for cm in report.per_class:
            writer.writerow(
                [cm.name]
                + ["" if v is None else f"{v:.6f}" for v in (cm.f1, cm.sensitivity, cm.specificity, cm.precision)]
                + [""]
            )


def confusion_to_csv(cm: ConfusionMatrix, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["actual\\predicted"] + list(cm.label_names))
        for name, row in zip(cm.label_names, cm.counts):
            writer.writerow([name] + [int(v) for v in row])
