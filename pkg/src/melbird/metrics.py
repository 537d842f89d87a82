"""Multi-label precision/recall/F1 with macro and samples aggregation.

Macro F1 averages per-class F1 over all classes (zero-support classes count,
which is why heavily skewed label sets push macro far below samples F1).
Samples F1 scores each example's predicted-vs-true label sets and averages
over examples. Zero denominators always score 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch


@dataclass(frozen=True)
class ClassStats:
    label: str
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class MetricsReport:
    per_class: tuple[ClassStats, ...]
    macro_f1: float
    samples_f1: float
    threshold: float

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["label", "tp", "fp", "fn", "precision", "recall", "f1"])
            for s in self.per_class:
                w.writerow([s.label, s.tp, s.fp, s.fn,
                            f"{s.precision:.6f}", f"{s.recall:.6f}", f"{s.f1:.6f}"])
            w.writerow(["macro_f1", "", "", "", "", "", f"{self.macro_f1:.6f}"])
            w.writerow(["samples_f1", "", "", "", "", "", f"{self.samples_f1:.6f}"])


def binarize(probs: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """1 where prob >= threshold (ties count as positive)."""
    return (np.asarray(probs) >= threshold).astype(np.int64)


def f1_from_counts(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _check_binary_pair(pred, target):
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape or pred.ndim != 2:
        raise ShapeMismatch(f"pred {pred.shape} vs target {target.shape}")
    return pred.astype(np.int64), target.astype(np.int64)


def macro_f1(pred: np.ndarray, target: np.ndarray) -> tuple[float, list[tuple[int, int, int]]]:
    """Unweighted mean of per-class F1 over ALL classes; plus (tp, fp, fn) rows."""
    pred, target = _check_binary_pair(pred, target)
    tp = ((pred == 1) & (target == 1)).sum(axis=0)
    fp = ((pred == 1) & (target == 0)).sum(axis=0)
    fn = ((pred == 0) & (target == 1)).sum(axis=0)
    f1s = [f1_from_counts(int(t), int(p), int(n))[2] for t, p, n in zip(tp, fp, fn)]
    counts = [(int(t), int(p), int(n)) for t, p, n in zip(tp, fp, fn)]
    return float(np.mean(f1s)), counts


def samples_f1(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over rows of the F1 between predicted and true label sets."""
    pred, target = _check_binary_pair(pred, target)
    tp = ((pred == 1) & (target == 1)).sum(axis=1)
    fp = ((pred == 1) & (target == 0)).sum(axis=1)
    fn = ((pred == 0) & (target == 1)).sum(axis=1)
    scores = [f1_from_counts(int(t), int(p), int(n))[2] for t, p, n in zip(tp, fp, fn)]
    return float(np.mean(scores))


def build_report(
    probs: np.ndarray,
    target: np.ndarray,
    labels: list[str] | None = None,
    threshold: float = 0.5,
) -> MetricsReport:
    pred = binarize(probs, threshold)
    macro, counts = macro_f1(pred, target)
    samp = samples_f1(pred, target)
    labels = labels or [f"class{i}" for i in range(pred.shape[1])]
    rows = []
    for label, (tp, fp, fn) in zip(labels, counts):
        precision, recall, f1 = f1_from_counts(tp, fp, fn)
        rows.append(ClassStats(label, tp, fp, fn, precision, recall, f1))
    return MetricsReport(tuple(rows), macro, samp, threshold)


def format_comparison_table(rows: list[dict]) -> str:
    """Side-by-side model table; "train / val" pairs share a column."""
    headers = ["Model", "Macro F1 (train/val)", "Samples F1 (train/val)",
               "Loss (train/val)", "Seconds"]
    body = []
    for r in rows:
        body.append([
            r["model"],
            f"{r['train_macro_f1']:.4f} / {r['val_macro_f1']:.4f}",
            f"{r['train_samples_f1']:.4f} / {r['val_samples_f1']:.4f}",
            f"{r['train_loss']:.4f} / {r['val_loss']:.4f}",
            f"{r['total_seconds']:.1f}",
        ])
    widths = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for b in body:
        lines.append("  ".join(v.ljust(w) for v, w in zip(b, widths)))
    return "\n".join(lines) + "\n"
