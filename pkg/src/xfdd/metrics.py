"""Evaluation: confusion matrices, detection/false-alarm rates, heatmap matrix.

All rates are derived from a single prediction vector so they can never
drift apart from the confusion matrix built on the same predictions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import DataError
from .lrp import RelevanceReport


@dataclass(frozen=True)
class ConfusionMatrix:
    """Integer count matrix with rows = true class, columns = predicted."""

    counts: np.ndarray
    class_names: tuple[str, ...]

    @property
    def accuracy(self) -> float:
        total = self.counts.sum()
        return float(np.trace(self.counts) / total) if total else 0.0

    def per_class_recall(self) -> np.ndarray:
        totals = self.counts.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            recall = np.diag(self.counts) / totals
        return np.where(totals > 0, recall, np.nan)


def confusion_matrix(preds: np.ndarray, labels: np.ndarray, class_names=None) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=int)
    labels = np.asarray(labels, dtype=int)
    if preds.shape != labels.shape:
        raise DataError(f"{preds.shape[0]} predictions for {labels.shape[0]} labels")
    m = int(max(preds.max(initial=0), labels.max(initial=0))) + 1
    if class_names is not None:
        m = max(m, len(class_names))
    counts = np.zeros((m, m), dtype=int)
    np.add.at(counts, (labels, preds), 1)
    names = tuple(class_names) if class_names is not None else tuple(str(i) for i in range(m))
    return ConfusionMatrix(counts=counts, class_names=names)


def classification_accuracy(preds: np.ndarray, labels: np.ndarray) -> float:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise DataError(f"{preds.shape[0]} predictions for {labels.shape[0]} labels")
    return float(np.mean(preds == labels))


def fault_detection_rate(
    preds: np.ndarray,
    fault_labels: np.ndarray,
    fault_id: int,
    normal_class: int = 0,
) -> float:
    """Percent of a fault's rows flagged as non-normal.

    ``fault_labels`` holds per-row fault ids with 0 for normal; pre-onset
    rows of a faulty run must already be labeled 0 so only post-onset rows
    count.
    """
    preds = np.asarray(preds)
    fault_labels = np.asarray(fault_labels)
    rows = fault_labels == fault_id
    if not rows.any():
        raise DataError(f"no rows labeled with fault {fault_id}")
    return 100.0 * float(np.mean(preds[rows] != normal_class))


def false_alarm_rate(preds: np.ndarray, fault_labels: np.ndarray, normal_class: int = 0) -> float:
    """Percent of normal rows flagged as faulty."""
    preds = np.asarray(preds)
    fault_labels = np.asarray(fault_labels)
    rows = fault_labels == 0
    if not rows.any():
        raise DataError("no normal rows present")
    return 100.0 * float(np.mean(preds[rows] != normal_class))


def heatmap(reports: Mapping[int, RelevanceReport | None]):
    """Fault x variable contribution matrix, each row normalized to max 1.

    ``reports`` maps fault id to its relevance report; missing (None)
    entries are omitted with a warning. Returns (matrix, row_labels,
    variable_names).
    """
    rows, labels = [], []
    names: tuple[str, ...] | None = None
    for fid in sorted(reports):
        rep = reports[fid]
        if rep is None:
            warnings.warn(f"fault {fid}: missing relevance report, heatmap row omitted")
            continue
        if names is None:
            names = rep.variable_names
        elif rep.variable_names != names:
            raise DataError("relevance reports cover different variable sets")
        peak = rep.relevance.max()
        rows.append(rep.relevance / peak if peak > 0 else rep.relevance)
        labels.append(fid)
    if not rows:
        raise DataError("no relevance reports to build a heatmap from")
    return np.vstack(rows), tuple(labels), names


def fdr_table(
    nn_preds: np.ndarray,
    fault_labels: np.ndarray,
    baseline_flags: Mapping[str, np.ndarray] | None = None,
) -> list[dict]:
    """Per-fault detection rates for the model and any baseline flag vectors.

    Returns one dict per fault plus an ``average`` row and a ``FAR`` row,
    ready for CSV serialization.
    """
    fault_labels = np.asarray(fault_labels)
    methods = {"model": np.asarray(nn_preds)}
    if baseline_flags:
        methods.update({k: np.asarray(v) for k, v in baseline_flags.items()})
    for name, flags in methods.items():
        if flags.shape[0] != fault_labels.shape[0]:
            raise DataError(f"{name}: {flags.shape[0]} predictions for {fault_labels.shape[0]} rows")

    fault_ids = sorted(int(f) for f in np.unique(fault_labels) if f != 0)
    table: list[dict] = []
    for fid in fault_ids:
        row = {"fault": str(fid)}
        for name, flags in methods.items():
            row[name] = fault_detection_rate(flags.astype(int), fault_labels, fid)
        table.append(row)
    if table:
        avg = {"fault": "average"}
        for name in methods:
            avg[name] = float(np.mean([r[name] for r in table]))
        table.append(avg)
    far = {"fault": "FAR"}
    for name, flags in methods.items():
        far[name] = false_alarm_rate(flags.astype(int), fault_labels)
    table.append(far)
    return table
