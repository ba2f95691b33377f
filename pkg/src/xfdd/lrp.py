"""Relevance attribution by backward propagation of class scores.

The class-c logit is redistributed layer by layer through the classifier
head and encoder (the reconstruction head carries no relevance) using the
epsilon-stabilized rule: the share of an upper neuron's relevance given to
lower neuron l is x_l * w_lu / (z_u + eps * sign(z_u)), where z_u is the
upper neuron's forward pre-activation. With zero epsilon and no biases the
input relevances sum exactly to the class score; biases and the stabilizer
absorb part of the flow, which is reported rather than hidden.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset
from .errors import ConfigurationError, RelevanceError
from .nn import Model, forward

DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True)
class RelevanceReport:
    """Averaged per-base-variable relevance for one class (or all classes).

    ``relevance`` is the mean over correctly classified samples of the
    absolute relevance, summed over a variable's lag copies first.
    ``signed`` keeps the sign (useful for direction-of-deviation plots) and
    is aggregated the same way without the absolute value.
    """

    class_id: int | None
    class_name: str
    variable_names: tuple[str, ...]
    relevance: np.ndarray
    signed: np.ndarray
    n_samples: int
    epsilon: float
    threshold: float | None = None

    def threshold_at(self, lambda_thresh: float) -> float:
        return float(lambda_thresh * self.relevance.max())

    def to_dict(self) -> dict:
        return {
            "class_id": self.class_id,
            "class_name": self.class_name,
            "variable_names": list(self.variable_names),
            "relevance": self.relevance.tolist(),
            "signed": self.signed.tolist(),
            "n_samples": self.n_samples,
            "epsilon": self.epsilon,
            "threshold": self.threshold,
        }


def _propagate(model: Model, cache, relevance_out: np.ndarray, epsilon: float) -> np.ndarray:
    """Push output-layer relevance back to the inputs for a whole batch."""
    # classifier head first: its inputs are the latent activations
    layers = [(cache.z, cache.logits, model.classifier)]
    for i in range(len(model.encoder) - 1, -1, -1):
        a_in = cache.enc_act[i - 1] if i > 0 else cache.x
        layers.append((a_in, cache.enc_pre[i], model.encoder[i]))

    rel = relevance_out
    for a_in, pre, layer in layers:
        # sign(0) counts as +1 so the stabilizer never vanishes
        denom = pre + epsilon * np.where(pre >= 0, 1.0, -1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            share = np.where(rel == 0.0, 0.0, rel / denom)
        rel = a_in * (share @ layer.W.T)
        if not np.all(np.isfinite(rel)):
            raise RelevanceError("non-finite intermediate relevance")
    return rel


def relevance_batch(
    model: Model,
    x: np.ndarray,
    classes: np.ndarray,
    epsilon: float = DEFAULT_EPSILON,
) -> np.ndarray:
    """Per-input-column relevance for each row w.r.t. its target class.

    Returns an array shaped like ``x``. The output layer starts with the
    target class's logit at its own index and zero elsewhere.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    classes = np.asarray(classes, dtype=int)
    m = model.spec.num_classes
    if classes.min(initial=0) < 0 or classes.max(initial=0) >= m:
        raise RelevanceError(f"class index outside [0, {m})")
    if classes.shape[0] != x.shape[0]:
        raise RelevanceError("one target class per row required")

    cache = forward(model, x)
    rel_out = np.zeros_like(cache.logits)
    rows = np.arange(x.shape[0])
    rel_out[rows, classes] = cache.logits[rows, classes]
    return _propagate(model, cache, rel_out, float(epsilon))


def relevance_sample(
    model: Model,
    x: np.ndarray,
    class_c: int,
    epsilon: float = DEFAULT_EPSILON,
) -> np.ndarray:
    """Relevance vector of one sample for class ``class_c``."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return relevance_batch(model, x, np.array([class_c]), epsilon=epsilon)[0]


def conservation_gap(model: Model, x: np.ndarray, class_c: int, epsilon: float = 0.0) -> tuple[float, float]:
    """(sum of input relevances, class score) for one sample.

    The difference is the mass absorbed by biases and the stabilizer; it is
    exactly zero for bias-free networks with epsilon = 0.
    """
    x = np.asarray(x, dtype=float).reshape(1, -1)
    total = float(relevance_batch(model, x, np.array([class_c]), epsilon=epsilon).sum())
    score = float(forward(model, x).logits[0, class_c])
    return total, score


def aggregate_lags(rel: np.ndarray, n_base: int, lag: int, absolute: bool = True) -> np.ndarray:
    """Collapse relevance over the lag copies of each base variable.

    ``rel`` has rows of width (lag+1)*n_base, current block first; the
    absolute values of a variable's copies are summed (signed sum when
    ``absolute`` is False).
    """
    rel = np.atleast_2d(rel)
    if rel.shape[1] != n_base * (lag + 1):
        raise ConfigurationError(
            f"relevance width {rel.shape[1]} != {n_base}*(lag+1)={n_base * (lag + 1)}"
        )
    values = np.abs(rel) if absolute else rel
    return values.reshape(rel.shape[0], lag + 1, n_base).sum(axis=1)


def _report_from_rows(
    ds: Dataset,
    rel: np.ndarray,
    class_id: int | None,
    class_name: str,
    epsilon: float,
) -> RelevanceReport:
    n_base = ds.n_active
    agg_abs = aggregate_lags(rel, n_base, ds.lag, absolute=True)
    agg_signed = aggregate_lags(rel, n_base, ds.lag, absolute=False)
    return RelevanceReport(
        class_id=class_id,
        class_name=class_name,
        variable_names=ds.active_names,
        relevance=agg_abs.mean(axis=0),
        signed=agg_signed.mean(axis=0),
        n_samples=rel.shape[0],
        epsilon=epsilon,
    )


def average_relevance(
    model: Model,
    ds: Dataset,
    class_c: int,
    epsilon: float = DEFAULT_EPSILON,
) -> RelevanceReport:
    """Mean |relevance| per base variable over correctly classified samples
    of class ``class_c``."""
    preds = np.argmax(forward(model, ds.X).probs, axis=1)
    correct = (ds.y == class_c) & (preds == class_c)
    n_c = int(correct.sum())
    if n_c == 0:
        raise RelevanceError(
            f"no correctly classified samples of class {ds.class_name(class_c)}"
        )
    rel = relevance_batch(model, ds.X[correct], np.full(n_c, class_c), epsilon=epsilon)
    return _report_from_rows(ds, rel, class_c, ds.class_name(class_c), epsilon)


def overall_relevance(model: Model, ds: Dataset, epsilon: float = DEFAULT_EPSILON) -> RelevanceReport:
    """Relevance averaged over every correctly classified sample, each taken
    w.r.t. its own class; equals the class reports' average weighted by
    correctly-classified counts."""
    preds = np.argmax(forward(model, ds.X).probs, axis=1)
    correct = preds == ds.y
    n_c = int(correct.sum())
    if n_c == 0:
        raise RelevanceError("no correctly classified samples in dataset")
    rel = relevance_batch(model, ds.X[correct], ds.y[correct], epsilon=epsilon)
    return _report_from_rows(ds, rel, None, "overall", epsilon)


def per_fault_reports(
    model: Model,
    ds: Dataset,
    epsilon: float = DEFAULT_EPSILON,
) -> dict[int, RelevanceReport]:
    """One report per fault id present in the dataset (heatmap rows).

    Rows of each fault are attributed w.r.t. their model class (the faulty
    class in detection, the fault's own class in diagnosis); faults without
    a single correctly classified row are omitted with a warning.
    """
    if ds.fault_ids is None:
        raise RelevanceError("dataset has no fault ids")
    preds = np.argmax(forward(model, ds.X).probs, axis=1)
    correct = preds == ds.y
    reports: dict[int, RelevanceReport] = {}
    for fid in np.unique(ds.fault_ids):
        if fid == 0:
            continue
        rows = (ds.fault_ids == fid) & correct
        n = int(rows.sum())
        if n == 0:
            warnings.warn(f"fault {fid}: no correctly classified rows, report omitted")
            continue
        rel = relevance_batch(model, ds.X[rows], ds.y[rows], epsilon=epsilon)
        reports[int(fid)] = _report_from_rows(
            ds, rel, None, f"fault_{int(fid)}", epsilon
        )
    return reports


def prune_mask(report: RelevanceReport, lambda_thresh: float) -> np.ndarray:
    """Keep variables whose averaged relevance reaches lambda * max.

    Ties at the threshold are kept, and the maximum always survives, so the
    mask never empties. The mask indexes ``report.variable_names``.
    """
    if not 0 < lambda_thresh < 1:
        raise ConfigurationError(f"lambda_thresh must be in (0, 1), got {lambda_thresh}")
    threshold = report.threshold_at(lambda_thresh)
    return report.relevance >= threshold


def with_threshold(report: RelevanceReport, lambda_thresh: float) -> RelevanceReport:
    """Copy of the report with its pruning threshold recorded."""
    return replace(report, threshold=report.threshold_at(lambda_thresh))
