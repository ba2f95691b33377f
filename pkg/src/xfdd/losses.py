"""Loss terms and the composite training objective.

All functions operate on plain float64 arrays with samples in rows, so they
can be checked against naive scalar-loop oracles. The composite objective is

    (1/N_eff) * [ lambda1 * sum_s ||x_s - xhat_s||^2
                  + lambda2 * (weighted) cross-entropy sum
                  + lambda3 * sum of squared weights ]

i.e. every term is a batch mean. The standalone ``reconstruction_loss``
keeps its conventional 1/(2N) factor; the composite form carries no 1/2,
so the two differ by an exact factor of 2*lambda1 (checked in tests).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, DataError, ShapeError

LOG_FLOOR = 1e-12  # probabilities are clamped here before taking logs


@dataclass(frozen=True)
class CompositeLossConfig:
    """Weights of the composite objective.

    lambda1 scales the reconstruction term, lambda2 the classification
    cross-entropy, lambda3 the L2 penalty on weight matrices. delta > 1
    upweights samples of the first class (index 0) to counter class
    imbalance in binary detection; delta = 1.0 disables it.
    """

    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 0.0
    delta: float = 1.0

    def __post_init__(self) -> None:
        for name in ("lambda1", "lambda2", "lambda3"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ConfigurationError(f"{name} must be finite and >= 0, got {value}")
        if not np.isfinite(self.delta) or self.delta <= 0:
            raise ConfigurationError(f"delta must be finite and > 0, got {self.delta}")

    def to_dict(self) -> dict:
        return {
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "lambda3": self.lambda3,
            "delta": self.delta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CompositeLossConfig":
        return cls(**{k: float(d.get(k, getattr(cls, k))) for k in ("lambda1", "lambda2", "lambda3", "delta")})


@dataclass(frozen=True)
class LossBreakdown:
    """Composite loss value with its per-term decomposition."""

    total: float
    recon: float
    cls: float
    l2: float


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def check_one_hot(y: np.ndarray) -> None:
    """Raise if ``y`` is not a one-hot matrix."""
    if y.ndim != 2:
        raise DataError(f"one-hot targets must be 2-D, got shape {y.shape}")
    if not np.all((y == 0) | (y == 1)) or not np.all(y.sum(axis=1) == 1):
        raise DataError("targets are not one-hot encoded")


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Encode integer labels as one-hot rows."""
    labels = np.asarray(labels, dtype=int)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= num_classes:
        raise DataError(f"labels outside [0, {num_classes})")
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def reconstruction_loss(x: np.ndarray, x_hat: np.ndarray) -> float:
    """Mean squared reconstruction error with the 1/(2N) convention."""
    _check_same_shape(x, x_hat)
    n = x.shape[0]
    return float(np.sum((x - x_hat) ** 2) / (2.0 * n))


def softmax_cross_entropy(p: np.ndarray, y: np.ndarray) -> float:
    """Mean cross-entropy between predicted distributions and one-hot targets."""
    _check_same_shape(p, y)
    check_one_hot(y)
    n = p.shape[0]
    logp = np.log(np.maximum(p, LOG_FLOOR))
    return float(-np.sum(y * logp) / n)


def weighted_binary_cross_entropy(p: np.ndarray, y: np.ndarray, delta: float) -> float:
    """Cross-entropy with the first class's terms scaled by ``delta``.

    Only defined for two classes; reduces exactly to
    ``softmax_cross_entropy`` when delta == 1.
    """
    _check_same_shape(p, y)
    check_one_hot(y)
    if p.shape[1] != 2:
        raise ConfigurationError(f"class-weighted loss requires 2 classes, got {p.shape[1]}")
    n = p.shape[0]
    logp = np.log(np.maximum(p, LOG_FLOOR))
    weights = np.array([delta, 1.0])
    return float(-np.sum(weights * y * logp) / n)


def class_weights(y: np.ndarray, delta: float) -> np.ndarray:
    """Per-sample weight vector: delta for samples of class 0, else 1."""
    check_one_hot(y)
    if delta == 1.0:
        return np.ones(y.shape[0])
    if y.shape[1] != 2:
        raise ConfigurationError(f"delta != 1 requires 2 classes, got {y.shape[1]}")
    return np.where(y[:, 0] == 1.0, delta, 1.0)


def l2_penalty(weights: Iterable[np.ndarray]) -> float:
    """Sum of squared entries over all weight matrices (biases excluded)."""
    return float(sum(np.sum(w**2) for w in weights))


def composite_loss(
    x: np.ndarray,
    x_hat: np.ndarray,
    p: np.ndarray,
    y: np.ndarray,
    weights: Sequence[np.ndarray],
    cfg: CompositeLossConfig,
    n_effective: int | None = None,
) -> LossBreakdown:
    """Evaluate the composite objective and its per-term breakdown.

    ``n_effective`` defaults to the batch row count; lag-augmented data
    already carries the reduced row count, so the default is correct there
    too.
    """
    _check_same_shape(x, x_hat)
    if p.shape[0] != x.shape[0]:
        raise ShapeError(f"row mismatch: {p.shape[0]} probabilities vs {x.shape[0]} inputs")
    check_one_hot(y)
    n = n_effective if n_effective is not None else x.shape[0]
    if n <= 0:
        raise ConfigurationError(f"n_effective must be positive, got {n}")

    recon = cfg.lambda1 * float(np.sum((x - x_hat) ** 2)) / n
    logp = np.log(np.maximum(p, LOG_FLOOR))
    sw = class_weights(y, cfg.delta)
    cls = cfg.lambda2 * float(-np.sum(sw[:, None] * y * logp)) / n
    l2 = cfg.lambda3 * l2_penalty(weights) / n
    return LossBreakdown(total=recon + cls + l2, recon=recon, cls=cls, l2=l2)
