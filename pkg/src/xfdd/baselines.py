"""Linear monitoring baselines: PCA with T2/SPE statistics and lagged DPCA.

Control limits are empirical quantiles of the training statistics (no
chi-square or F approximations), which keeps the calibration assumption-free
and directly checkable: a fraction of about 1 - alpha of training rows
exceeds each limit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError

RANK_TOL = 1e-10


@dataclass(frozen=True)
class PcaModel:
    """Principal-subspace monitoring model fitted on normal operation."""

    mean: np.ndarray
    std: np.ndarray
    loadings: np.ndarray        # (d, k), orthonormal columns
    eigenvalues: np.ndarray     # retained, nonincreasing
    all_eigenvalues: np.ndarray
    t2_limit: float
    spe_limit: float
    alpha: float
    lag: int = 0                # > 0 when fitted on lag-stacked rows

    @property
    def k(self) -> int:
        return self.loadings.shape[1]

    @property
    def explained_variance(self) -> float:
        return float(self.eigenvalues.sum() / self.all_eigenvalues.sum())


def _standardize(model: PcaModel, x: np.ndarray) -> np.ndarray:
    return (np.atleast_2d(np.asarray(x, dtype=float)) - model.mean) / model.std


def fit_pca(normal_train: np.ndarray, k: int, alpha: float = 0.99) -> PcaModel:
    """Fit the monitoring model on normal training rows.

    Standardizes internally, eigendecomposes the training covariance, keeps
    the top ``k`` components and sets T2/SPE limits at the ``alpha``
    empirical quantile of the training statistics.
    """
    X = np.asarray(normal_train, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError(f"need a 2-D matrix with >= 2 rows, got shape {X.shape}")
    d = X.shape[1]
    if not 1 <= k <= d:
        raise ConfigurationError(f"k must be in [1, {d}], got {k}")
    if not 0 < alpha < 1:
        raise ConfigurationError(f"alpha must be in (0, 1), got {alpha}")

    mean = X.mean(axis=0)
    std = X.std(axis=0)
    if np.any(std < 1e-12):
        raise DataError("zero-variance column in PCA training data")
    Xs = (X - mean) / std

    cov = (Xs.T @ Xs) / (X.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]

    if eigvals[k - 1] <= RANK_TOL * max(eigvals[0], 1.0):
        raise ConfigurationError(f"k={k} exceeds the effective rank of the data")

    model = PcaModel(
        mean=mean, std=std,
        loadings=eigvecs[:, :k],
        eigenvalues=eigvals[:k],
        all_eigenvalues=eigvals,
        t2_limit=np.inf, spe_limit=np.inf,
        alpha=alpha,
    )
    t2_train = t2_statistic(model, X)
    spe_train = spe_statistic(model, X)
    return PcaModel(
        mean=mean, std=std,
        loadings=model.loadings,
        eigenvalues=model.eigenvalues,
        all_eigenvalues=eigvals,
        t2_limit=float(np.quantile(t2_train, alpha)),
        spe_limit=float(np.quantile(spe_train, alpha)),
        alpha=alpha,
    )


def t2_statistic(model: PcaModel, x: np.ndarray):
    """Score-space Mahalanobis distance: sum of t_i^2 / eigenvalue_i.

    Accepts a single row (returns float) or a matrix (returns a vector).
    ``x`` is given in original units; the model's standardization applies.
    """
    if np.any(model.eigenvalues <= 0):
        raise ConfigurationError("zero eigenvalue in the retained set")
    single = np.asarray(x).ndim == 1
    scores = _standardize(model, x) @ model.loadings
    t2 = np.sum(scores**2 / model.eigenvalues, axis=1)
    return float(t2[0]) if single else t2


def spe_statistic(model: PcaModel, x: np.ndarray):
    """Squared residual norm off the retained subspace (Q statistic)."""
    single = np.asarray(x).ndim == 1
    xs = _standardize(model, x)
    resid = xs - (xs @ model.loadings) @ model.loadings.T
    spe = np.sum(resid**2, axis=1)
    return float(spe[0]) if single else spe


def detect_pca(model: PcaModel, rows: np.ndarray) -> np.ndarray:
    """Flag rows where T2 or SPE exceeds its control limit."""
    t2 = t2_statistic(model, rows)
    spe = spe_statistic(model, rows)
    return (np.atleast_1d(t2) > model.t2_limit) | (np.atleast_1d(spe) > model.spe_limit)


def lag_stack(X: np.ndarray, lag: int) -> np.ndarray:
    """Stack each row of one contiguous run with its ``lag`` predecessors."""
    X = np.asarray(X, dtype=float)
    if lag == 0:
        return X
    n = X.shape[0]
    if lag >= n:
        raise DataError(f"lag {lag} >= {n} rows")
    return np.hstack([X[lag - k : n - k] for k in range(lag + 1)])


def fit_dpca(normal_train: np.ndarray, lag: int, k: int, alpha: float = 0.99) -> PcaModel:
    """PCA on lag-stacked rows of one contiguous normal run."""
    model = fit_pca(lag_stack(normal_train, lag), k, alpha=alpha)
    return PcaModel(
        mean=model.mean, std=model.std, loadings=model.loadings,
        eigenvalues=model.eigenvalues, all_eigenvalues=model.all_eigenvalues,
        t2_limit=model.t2_limit, spe_limit=model.spe_limit,
        alpha=model.alpha, lag=lag,
    )
