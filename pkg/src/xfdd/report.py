"""Artifact writers: delimited outputs plus the rendered report figures.

CSV and JSON artifacts are written with fixed formatting and sorted keys so
that re-running with the same inputs reproduces them bitwise. Figures are
rendered with the Agg backend straight to files (SVG by default) next to the
delimited output they visualize.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .lrp import RelevanceReport  # noqa: E402
from .metrics import ConfusionMatrix, heatmap  # noqa: E402

FLOAT_FMT = "%.12g"
plt.rcParams["svg.hashsalt"] = "xfdd"


def _fmt(value) -> str:
    if isinstance(value, float):
        return FLOAT_FMT % value
    return str(value)


def json_dump(obj, path) -> None:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def write_rows(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_loss_trace(trace, path) -> None:
    write_rows(
        path,
        ["epoch", "total", "recon", "cls", "l2"],
        ([t.epoch, t.total, t.recon, t.cls, t.l2] for t in trace),
    )


def write_relevance_csv(report: RelevanceReport, path, keep=None) -> None:
    """One row per variable: name, mean |R|, rank (1 = most relevant), kept."""
    order = report.relevance.argsort()[::-1]
    ranks = {int(i): r + 1 for r, i in enumerate(order)}
    rows = []
    for i, name in enumerate(report.variable_names):
        status = "kept" if keep is None or bool(keep[i]) else "dropped"
        rows.append([name, float(report.relevance[i]), ranks[i], status])
    write_rows(path, ["variable", "mean_abs_relevance", "rank", "status"], rows)


def write_confusion_csv(cm: ConfusionMatrix, path) -> None:
    header = ["true\\pred"] + list(cm.class_names)
    rows = (
        [cm.class_names[i]] + [int(v) for v in cm.counts[i]]
        for i in range(cm.counts.shape[0])
    )
    write_rows(path, header, rows)


def write_fdr_table_csv(table: list[dict], path) -> None:
    methods = [k for k in table[0] if k != "fault"]
    write_rows(
        path,
        ["fault"] + methods,
        ([row["fault"]] + [float(row[m]) for m in methods] for row in table),
    )


def write_heatmap_csv(matrix, fault_labels, variable_names, path) -> None:
    write_rows(
        path,
        ["fault"] + list(variable_names),
        ([str(f)] + [float(v) for v in matrix[i]] for i, f in enumerate(fault_labels)),
    )


def write_ledger_csv(records, path) -> None:
    write_rows(
        path,
        ["phase", "iteration", "kind", "lag", "architecture",
         "n_retained", "val_accuracy", "test_accuracy", "retained"],
        (
            [r.phase, r.iteration, r.kind, r.lag, r.architecture,
             len(r.retained), r.val_accuracy, r.test_accuracy, ";".join(r.retained)]
            for r in records
        ),
    )


def _save(fig, path) -> None:
    path = Path(path)
    # drop the creation date so repeated runs render identical files
    fig.savefig(path, metadata={"Date": None} if path.suffix == ".svg" else None)
    plt.close(fig)


def heatmap_figure(matrix, fault_labels, variable_names, path, title="Variable contribution per fault") -> None:
    fig, ax = plt.subplots(figsize=(max(6.0, 0.32 * len(variable_names)), 1.0 + 0.5 * len(fault_labels)))
    im = ax.imshow(matrix, aspect="auto", cmap="viridis", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(len(variable_names)))
    ax.set_xticklabels(variable_names, rotation=90, fontsize=7)
    ax.set_yticks(range(len(fault_labels)))
    ax.set_yticklabels([f"fault {f}" for f in fault_labels], fontsize=8)
    ax.set_title(title)
    fig.colorbar(im, ax=ax, label="relative relevance")
    fig.tight_layout()
    _save(fig, path)


def relevance_bar_figure(report: RelevanceReport, path, threshold: float | None = None) -> None:
    names = report.variable_names
    fig, ax = plt.subplots(figsize=(max(6.0, 0.3 * len(names)), 4.0))
    ax.bar(range(len(names)), report.relevance, color="#336699")
    if threshold is not None:
        ax.axhline(threshold, color="#cc3333", linestyle="--", linewidth=1.0,
                   label=f"prune threshold {threshold:.3g}")
        ax.legend(fontsize=8)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=90, fontsize=7)
    ax.set_ylabel("mean |relevance|")
    ax.set_title(f"Averaged relevance ({report.class_name}, {report.n_samples} samples)")
    fig.tight_layout()
    _save(fig, path)


def confusion_figure(cm: ConfusionMatrix, path) -> None:
    m = cm.counts.shape[0]
    fig, ax = plt.subplots(figsize=(1.2 + 0.6 * m, 1.0 + 0.6 * m))
    ax.imshow(cm.counts, cmap="Blues")
    for i in range(m):
        for j in range(m):
            ax.text(j, i, str(cm.counts[i, j]), ha="center", va="center", fontsize=7)
    ax.set_xticks(range(m))
    ax.set_xticklabels(cm.class_names, rotation=90, fontsize=7)
    ax.set_yticks(range(m))
    ax.set_yticklabels(cm.class_names, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(f"Confusion matrix (accuracy {100 * cm.accuracy:.2f}%)")
    fig.tight_layout()
    _save(fig, path)


def relevance_report_json(report: RelevanceReport, path, keep=None) -> None:
    payload = report.to_dict()
    if keep is not None:
        payload["kept"] = [bool(k) for k in keep]
    json_dump(payload, path)


def heatmap_artifacts(reports: Mapping[int, RelevanceReport], out_dir) -> None:
    """CSV + SVG heatmap from per-fault relevance reports."""
    matrix, fault_labels, names = heatmap(reports)
    out_dir = Path(out_dir)
    write_heatmap_csv(matrix, fault_labels, names, out_dir / "heatmap.csv")
    heatmap_figure(matrix, fault_labels, names, out_dir / "heatmap.svg")
