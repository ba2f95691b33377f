"""Dataset ingestion, standardization, lag augmentation and column masking.

Datasets are immutable: every operation returns a new :class:`Dataset`.
Rows are samples; ``active_mask`` tracks which catalog variables are still
present, so pruned and lag-augmented views keep their link to the original
variable names. CSV inputs carry one variable per column (header = catalog
names), an optional ``run`` column marking contiguous runs, and integer
labels either in a final ``label`` column or a sidecar file.
"""

from __future__ import annotations

import csv
import os
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DataError

ZERO_VARIANCE_STD = 1e-12

VARIABLE_KINDS = ("measured", "manipulated")
FAULT_KINDS = ("step", "random_variation", "slow_drift", "stiction", "unknown")


@dataclass(frozen=True)
class Variable:
    name: str
    unit: str = ""
    kind: str = "measured"


@dataclass(frozen=True)
class VariableCatalog:
    """Ordered, immutable list of process variables."""

    variables: tuple[Variable, ...]

    def __post_init__(self) -> None:
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ConfigurationError("catalog variable names must be unique")

    def __len__(self) -> int:
        return len(self.variables)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def index(self, name: str) -> int:
        return self.names.index(name)

    @classmethod
    def from_names(cls, names: Sequence[str]) -> "VariableCatalog":
        return cls(tuple(Variable(name=n) for n in names))


@dataclass(frozen=True)
class Fault:
    fault_id: int
    description: str
    kind: str
    excluded: bool = False


@dataclass(frozen=True)
class FaultCatalog:
    faults: tuple[Fault, ...]

    def __post_init__(self) -> None:
        ids = [f.fault_id for f in self.faults]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("fault ids must be unique")

    def get(self, fault_id: int) -> Fault:
        for f in self.faults:
            if f.fault_id == fault_id:
                return f
        raise KeyError(f"unknown fault id {fault_id}")

    def included_ids(self) -> tuple[int, ...]:
        return tuple(f.fault_id for f in self.faults if not f.excluded)


@dataclass(frozen=True)
class Standardization:
    """Per-original-column z-score parameters fitted on training rows."""

    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardization":
        return cls(mean=np.asarray(d["mean"], dtype=float), std=np.asarray(d["std"], dtype=float))


@dataclass(frozen=True)
class Dataset:
    """Sample matrix plus labels and the bookkeeping to interpret columns.

    ``X`` holds the active columns only; when ``lag > 0`` it holds
    ``(lag+1)`` blocks, current sample first, each block in catalog order
    over the active variables.
    """

    X: np.ndarray
    y: np.ndarray
    catalog: VariableCatalog
    active_mask: np.ndarray
    lag: int = 0
    standardization: Standardization | None = None
    class_names: tuple[str, ...] | None = None
    fault_ids: np.ndarray | None = None
    run_ids: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.X.ndim != 2:
            raise DataError(f"X must be 2-D, got shape {self.X.shape}")
        if self.y.shape[0] != self.X.shape[0]:
            raise DataError(f"{self.y.shape[0]} labels for {self.X.shape[0]} rows")
        if self.active_mask.shape[0] != len(self.catalog):
            raise DataError("active_mask length must equal catalog size")
        expected = int(self.active_mask.sum()) * (self.lag + 1)
        if self.X.shape[1] != expected:
            raise DataError(
                f"X has {self.X.shape[1]} columns, expected {expected} "
                f"({int(self.active_mask.sum())} active vars, lag {self.lag})"
            )
        for extra in (self.fault_ids, self.run_ids):
            if extra is not None and extra.shape[0] != self.X.shape[0]:
                raise DataError("per-row metadata length mismatch")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_active(self) -> int:
        return int(self.active_mask.sum())

    @property
    def active_names(self) -> tuple[str, ...]:
        return tuple(n for n, keep in zip(self.catalog.names, self.active_mask) if keep)

    @property
    def column_names(self) -> tuple[str, ...]:
        """Names of X's columns, lag copies suffixed ``(t-k)``."""
        base = self.active_names
        if self.lag == 0:
            return base
        cols: list[str] = list(base)
        for k in range(1, self.lag + 1):
            cols.extend(f"{n}(t-{k})" for n in base)
        return tuple(cols)

    def class_name(self, idx: int) -> str:
        if self.class_names is not None:
            return self.class_names[idx]
        return str(idx)


def _parse_labels_arg(labels):
    """Distinguish a label column name from a sidecar file path."""
    if labels is None:
        return None, None
    if isinstance(labels, (Path, os.PathLike)):
        return None, Path(labels)
    return str(labels), None


def load_csv(
    path,
    catalog: VariableCatalog | None = None,
    labels="label",
    require_labels: bool = True,
) -> Dataset:
    """Load a raw (unstandardized) dataset from CSV.

    The header row names the data columns; they must match ``catalog`` in
    order (when a catalog is given). A column named ``run`` is treated as
    the run identifier, and the label column (default name ``label``) holds
    integer class/fault ids. Pass a :class:`pathlib.Path` as ``labels`` to
    read them from a sidecar file with one integer per row instead, or
    ``require_labels=False`` to accept unlabeled streams (labels become 0).
    """
    label_col, label_file = _parse_labels_arg(labels)
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)

    header = [h.strip() for h in header]
    special = {}
    data_names = []
    for i, name in enumerate(header):
        if name == "run" or (label_col is not None and name == label_col):
            special[name] = i
        else:
            data_names.append((i, name))

    if label_col is not None and label_col not in special and label_file is None:
        if require_labels:
            raise DataError(f"{path}: no label column {label_col!r} in header")
        label_col = None

    if catalog is None:
        catalog = VariableCatalog.from_names([n for _, n in data_names])
    names = [n for _, n in data_names]
    if len(names) != len(catalog):
        raise DataError(
            f"{path}: {len(names)} data columns but catalog has {len(catalog)}"
        )
    if tuple(names) != catalog.names:
        raise DataError(f"{path}: header does not match catalog variable order")

    n = len(rows)
    X = np.empty((n, len(catalog)))
    y = np.zeros(n, dtype=int)
    runs = np.zeros(n, dtype=int) if "run" in special else None
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r + 2} has {len(row)} cells, expected {len(header)}")
        for j, (i, name) in enumerate(data_names):
            cell = row[i].strip()
            try:
                X[r, j] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric value {cell!r} at row {r + 2}, column {name!r}"
                ) from None
            if not np.isfinite(X[r, j]):
                raise DataError(f"{path}: non-finite value at row {r + 2}, column {name!r}")
        if label_col in special:
            try:
                y[r] = int(float(row[special[label_col]]))
            except ValueError:
                raise DataError(f"{path}: bad label at row {r + 2}") from None
        if runs is not None:
            try:
                runs[r] = int(float(row[special["run"]]))
            except ValueError:
                raise DataError(f"{path}: bad run id at row {r + 2}") from None

    if label_file is not None:
        raw = [line.strip() for line in Path(label_file).read_text().splitlines() if line.strip()]
        if len(raw) != n:
            raise DataError(f"{label_file}: {len(raw)} labels for {n} rows")
        y = np.array([int(float(v)) for v in raw], dtype=int)

    return Dataset(
        X=X, y=y, catalog=catalog,
        active_mask=np.ones(len(catalog), dtype=bool),
        lag=0, standardization=None,
        fault_ids=y.copy(), run_ids=runs,
    )


def standardize(train: Dataset, others: Sequence[Dataset] = ()) -> tuple[Dataset, list[Dataset]]:
    """Z-score all datasets with mean/std fitted on the training rows only.

    Zero-variance training columns are excluded from the active mask of
    every returned dataset, with a warning. Must be applied before lag
    augmentation so every lag copy shares its base column's parameters.
    """
    if train.lag != 0:
        raise ConfigurationError("standardize before lag augmentation, not after")
    if train.n_samples == 0:
        raise DataError("training dataset is empty")
    for ds in others:
        if ds.lag != 0 or not np.array_equal(ds.active_mask, train.active_mask):
            raise ConfigurationError("datasets must share the training active mask and be unlagged")

    mean_active = train.X.mean(axis=0)
    std_active = train.X.std(axis=0)
    degenerate = std_active < ZERO_VARIANCE_STD
    if degenerate.any():
        dead = [n for n, d in zip(train.active_names, degenerate) if d]
        warnings.warn(f"excluding zero-variance columns: {', '.join(dead)}")

    keep_cols = ~degenerate
    active_idx = np.flatnonzero(train.active_mask)
    new_mask = train.active_mask.copy()
    new_mask[active_idx[degenerate]] = False

    d = len(train.catalog)
    mean_full = np.zeros(d)
    std_full = np.ones(d)
    mean_full[active_idx] = mean_active
    std_full[active_idx[keep_cols]] = std_active[keep_cols]
    params = Standardization(mean=mean_full, std=std_full)

    def apply(ds: Dataset) -> Dataset:
        Xs = (ds.X[:, keep_cols] - mean_active[keep_cols]) / std_active[keep_cols]
        return replace(ds, X=Xs, active_mask=new_mask, standardization=params)

    return apply(train), [apply(ds) for ds in others]


def run_segments(n: int, run_ids: np.ndarray | None) -> list[tuple[int, int]]:
    """(start, end) pairs of the contiguous equal-run-id row segments."""
    runs = run_ids if run_ids is not None else np.zeros(n, dtype=int)
    boundaries = np.flatnonzero(np.diff(runs) != 0) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [n]))
    return list(zip(starts, ends))


def lag_kept_indices(n: int, run_ids: np.ndarray | None, lag: int) -> np.ndarray:
    """Original row indices that survive lag augmentation (per-run prefix
    of ``lag`` rows dropped)."""
    if lag == 0:
        return np.arange(n)
    return np.concatenate([np.arange(s + lag, e) for s, e in run_segments(n, run_ids)])


def lag_augment(ds: Dataset, lag: int) -> Dataset:
    """Stack each sample with its previous ``lag`` observations.

    Row n of the result is ``[x_n, x_{n-1}, ..., x_{n-lag}]``; the first
    ``lag`` rows of every run are dropped, so a single run of N rows yields
    N - lag rows of width (lag+1)*d. Labels stay aligned to the current
    sample x_n.
    """
    if lag < 0:
        raise ConfigurationError(f"lag must be >= 0, got {lag}")
    if ds.lag != 0:
        raise ConfigurationError("dataset is already lag-augmented")
    if lag == 0:
        return replace(ds)
    if lag >= ds.n_samples:
        raise DataError(f"lag {lag} >= {ds.n_samples} samples")

    blocks_X = []
    for s, e in run_segments(ds.n_samples, ds.run_ids):
        if e - s <= lag:
            raise DataError(f"run starting at row {s} has {e - s} rows, need > lag={lag}")
        seg = ds.X[s:e]
        n = seg.shape[0]
        blocks_X.append(np.hstack([seg[lag - k : n - k] for k in range(lag + 1)]))
    keep = lag_kept_indices(ds.n_samples, ds.run_ids, lag)

    return replace(
        ds,
        X=np.vstack(blocks_X),
        y=ds.y[keep],
        lag=lag,
        fault_ids=None if ds.fault_ids is None else ds.fault_ids[keep],
        run_ids=None if ds.run_ids is None else ds.run_ids[keep],
    )


def apply_mask(ds: Dataset, mask: np.ndarray) -> Dataset:
    """Drop base variables where ``mask`` is False (all lag copies at once).

    ``mask`` indexes the original catalog; variables already inactive stay
    inactive. Survivors keep their catalog order.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape[0] != len(ds.catalog):
        raise ConfigurationError(
            f"mask length {mask.shape[0]} != catalog size {len(ds.catalog)}"
        )
    new_active = ds.active_mask & mask
    if not new_active.any():
        raise ConfigurationError("mask removes all columns")

    keep_base = mask[ds.active_mask]  # per currently-active variable
    keep_cols = np.tile(keep_base, ds.lag + 1)
    return replace(ds, X=ds.X[:, keep_cols], active_mask=new_active)


def split_train_val(ds: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified split; ``fraction`` is the validation share per class."""
    if not 0 < fraction < 1:
        raise ConfigurationError(f"fraction must be in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    val_idx = []
    for cls in np.unique(ds.y):
        idx = np.flatnonzero(ds.y == cls)
        if idx.shape[0] < 2:
            raise DataError(f"class {cls} has {idx.shape[0]} samples, cannot stratify")
        n_val = int(round(fraction * idx.shape[0]))
        n_val = min(max(n_val, 1), idx.shape[0] - 1)
        val_idx.append(rng.permutation(idx)[:n_val])
    val = np.sort(np.concatenate(val_idx))
    is_val = np.zeros(ds.n_samples, dtype=bool)
    is_val[val] = True

    def take(sel: np.ndarray) -> Dataset:
        return replace(
            ds,
            X=ds.X[sel],
            y=ds.y[sel],
            fault_ids=None if ds.fault_ids is None else ds.fault_ids[sel],
            run_ids=None if ds.run_ids is None else ds.run_ids[sel],
        )

    return take(~is_val), take(is_val)


def relabel_detection(ds: Dataset) -> Dataset:
    """Binary labels from fault ids: 0 = normal, 1 = faulty."""
    if ds.fault_ids is None:
        raise DataError("dataset has no fault ids to binarize")
    return replace(ds, y=(ds.fault_ids != 0).astype(int), class_names=("normal", "faulty"))


def relabel_diagnosis(
    ds: Dataset,
    exclude: Sequence[int] = (),
    fault_ids: Sequence[int] | None = None,
) -> Dataset:
    """Keep faulty rows only; class index = rank of the fault id.

    Pass ``fault_ids`` (the class order fixed on the training set) to
    relabel further datasets consistently; rows with other ids are dropped.
    """
    if ds.fault_ids is None:
        raise DataError("dataset has no fault ids")
    exclude = set(int(e) for e in exclude)
    if fault_ids is None:
        present = np.unique(ds.fault_ids)
        fids = [int(f) for f in present if f != 0 and int(f) not in exclude]
    else:
        fids = [int(f) for f in fault_ids]
    if len(fids) < 2:
        raise DataError(f"diagnosis needs >= 2 fault classes, found {len(fids)}")
    keep = np.isin(ds.fault_ids, fids)
    lookup = {f: i for i, f in enumerate(fids)}
    y = np.array([lookup[int(f)] for f in ds.fault_ids[keep]], dtype=int)
    return replace(
        ds,
        X=ds.X[keep],
        y=y,
        class_names=tuple(f"fault_{f}" for f in fids),
        fault_ids=ds.fault_ids[keep],
        run_ids=None if ds.run_ids is None else ds.run_ids[keep],
    )


def write_csv(ds: Dataset, path, float_fmt: str = "%.10g") -> None:
    """Write a dataset back out in the layout :func:`load_csv` reads."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = list(ds.column_names)
        if ds.run_ids is not None:
            header.append("run")
        header.append("label")
        writer.writerow(header)
        labels = ds.fault_ids if ds.fault_ids is not None else ds.y
        for i in range(ds.n_samples):
            row = [float_fmt % v for v in ds.X[i]]
            if ds.run_ids is not None:
                row.append(str(int(ds.run_ids[i])))
            row.append(str(int(labels[i])))
            writer.writerow(row)


def _tep_variables() -> tuple[Variable, ...]:
    meas = [
        ("A feed (stream 1)", "kscmh"),
        ("D feed (stream 2)", "kg/h"),
        ("E feed (stream 3)", "kg/h"),
        ("A and C feed (stream 4)", "kscmh"),
        ("Recycle flow (stream 8)", "kscmh"),
        ("Reactor feed rate (stream 6)", "kscmh"),
        ("Reactor pressure", "kPa gauge"),
        ("Reactor level", "%"),
        ("Reactor temperature", "degC"),
        ("Purge rate (stream 9)", "kscmh"),
        ("Product separator temperature", "degC"),
        ("Product separator level", "%"),
        ("Product separator pressure", "kPa gauge"),
        ("Product separator underflow (stream 10)", "m3/h"),
        ("Stripper level", "%"),
        ("Stripper pressure", "kPa gauge"),
        ("Stripper underflow (stream 11)", "m3/h"),
        ("Stripper temperature", "degC"),
        ("Stripper steam flow", "kg/h"),
        ("Compressor work", "kW"),
        ("Reactor cooling water outlet temperature", "degC"),
        ("Separator cooling water outlet temperature", "degC"),
        ("Feed %A", "mol%"),
        ("Feed %B", "mol%"),
        ("Feed %C", "mol%"),
        ("Feed %D", "mol%"),
        ("Feed %E", "mol%"),
        ("Feed %F", "mol%"),
        ("Purge %A", "mol%"),
        ("Purge %B", "mol%"),
        ("Purge %C", "mol%"),
        ("Purge %D", "mol%"),
        ("Purge %E", "mol%"),
        ("Purge %F", "mol%"),
        ("Purge %G", "mol%"),
        ("Purge %H", "mol%"),
        ("Product %D", "mol%"),
        ("Product %E", "mol%"),
        ("Product %F", "mol%"),
        ("Product %G", "mol%"),
        ("Product %H", "mol%"),
    ]
    manip = [
        ("D feed flow", "kg/h"),
        ("E feed flow", "kg/h"),
        ("A feed flow", "kscmh"),
        ("A and C feed flow", "kscmh"),
        ("Compressor recycle valve", "%"),
        ("Purge valve", "%"),
        ("Separator pot liquid flow", "m3/h"),
        ("Stripper liquid product flow", "m3/h"),
        ("Stripper steam valve", "%"),
        ("Reactor cooling water flow", "m3/h"),
        ("Condenser cooling water flow", "m3/h"),
    ]
    out = [Variable(name=f"XMEAS({i+1})", unit=u, kind="measured") for i, (_, u) in enumerate(meas)]
    out += [Variable(name=f"XMV({i+1})", unit=u, kind="manipulated") for i, (_, u) in enumerate(manip)]
    return tuple(out)


#: The 52-variable benchmark plant catalog (41 measured + 11 manipulated).
TEP_VARIABLES = VariableCatalog(_tep_variables())

#: Programmed process faults; 3, 9 and 15 are flagged excluded because they
#: are near-unobservable and conventionally left out of diagnosis studies.
TEP_FAULTS = FaultCatalog(
    (
        Fault(1, "A/C feed ratio, B composition constant (stream 4)", "step"),
        Fault(2, "B composition, A/C ratio constant (stream 4)", "step"),
        Fault(3, "D feed temperature", "step", excluded=True),
        Fault(4, "Reactor cooling water inlet temperature", "step"),
        Fault(5, "Condenser cooling water inlet temperature", "step"),
        Fault(6, "A feed loss (stream 1)", "step"),
        Fault(7, "C header pressure loss (stream 4)", "step"),
        Fault(8, "A, B, C feed composition (stream 4)", "random_variation"),
        Fault(9, "D feed temperature", "random_variation", excluded=True),
        Fault(10, "C feed temperature (stream 4)", "random_variation"),
        Fault(11, "Reactor cooling water inlet temperature", "random_variation"),
        Fault(12, "Condenser cooling water inlet temperature", "random_variation"),
        Fault(13, "Reaction kinetics", "slow_drift"),
        Fault(14, "Reactor cooling water valve", "stiction"),
        Fault(15, "Condenser cooling water valve", "stiction", excluded=True),
        Fault(16, "Heat transfer deviations (stripper)", "random_variation"),
        Fault(17, "Heat transfer deviations (reactor)", "random_variation"),
        Fault(18, "Heat transfer deviations (condenser)", "random_variation"),
        Fault(19, "Recycle/stripper valve stiction", "stiction"),
        Fault(20, "Unknown disturbance", "random_variation"),
    )
)
