"""Iterative prune-retrain workflows for fault detection and diagnosis.

A run proceeds in two phases. The static phase trains candidate networks on
the full variable set, attributes relevance on the validation split, prunes
variables below the relevance threshold and retrains, until every variable
clears the threshold or validation accuracy stops improving. The dynamic
phase restarts from the reduced variable set, lag-augments the data for each
candidate lag and repeats the same loop, pruning whole base variables (all
lag copies together). Every iteration lands in a ledger; the winning row is
the one with the highest validation accuracy (ties go to the smaller
retained set, then the earlier row).

All seeds are derived deterministically from the master seed, so re-running
with the same configuration reproduces the ledger bitwise.
"""

from __future__ import annotations

import itertools
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .data import (
    Dataset,
    Standardization,
    apply_mask,
    lag_augment,
    relabel_detection,
    relabel_diagnosis,
    split_train_val,
    standardize,
)
from .errors import ConfigurationError, DataError, RelevanceError
from .losses import CompositeLossConfig
from .lrp import (
    DEFAULT_EPSILON,
    RelevanceReport,
    aggregate_lags,
    overall_relevance,
    prune_mask,
    relevance_sample,
)
from .metrics import classification_accuracy
from .nn import (
    Model,
    NetworkSpec,
    TraceRow,
    TrainSchedule,
    arch_string,
    init_model,
    model_from_dict,
    model_to_dict,
    predict,
    predict_proba,
    train,
)

FORMAT_VERSION = 1
MODES = ("detect", "diagnose")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a detect/diagnose run needs, mirrored by the JSON config."""

    mode: str
    architectures: tuple[tuple[int, ...], ...]
    lambda1_grid: tuple[float, ...] = (0.1,)
    lambda2_grid: tuple[float, ...] = (1.0,)
    lambda3_grid: tuple[float, ...] = (1e-3,)
    delta_grid: tuple[float, ...] = (1.0,)
    lambda_thresh: tuple[float, ...] = (0.01,)  # per-iteration schedule, last repeats
    lag_candidates: tuple[int, ...] = ()
    epochs: int = 150
    batch_size: int = 64
    learning_rate: float = 1e-3
    val_fraction: float = 0.2
    epsilon: float = DEFAULT_EPSILON
    patience_drop: float = 0.001  # 0.1 percentage points
    max_iterations: int = 10
    seed: int = 0
    threads: int = 1
    exclude_faults: tuple[int, ...] = ()
    activation: str = "tanh"
    decoder_output_activation: str = "linear"
    pca_components: int | None = None
    dpca_lag: int = 2

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.architectures or any(len(a) == 0 for a in self.architectures):
            raise ConfigurationError("need at least one non-empty architecture")
        for name in ("lambda1_grid", "lambda2_grid", "lambda3_grid", "delta_grid"):
            if not getattr(self, name):
                raise ConfigurationError(f"{name} must not be empty")
        if self.mode == "diagnose" and any(d != 1.0 for d in self.delta_grid):
            raise ConfigurationError("delta is a detection-only weight; use 1.0 for diagnosis")
        if not self.lambda_thresh or any(not 0 < t < 1 for t in self.lambda_thresh):
            raise ConfigurationError("lambda_thresh values must lie in (0, 1)")
        if not 0 < self.val_fraction < 1:
            raise ConfigurationError("val_fraction must lie in (0, 1)")
        if self.epochs < 0 or self.max_iterations < 1 or self.threads < 1:
            raise ConfigurationError("epochs >= 0, max_iterations >= 1, threads >= 1 required")

    @classmethod
    def from_dict(cls, d: dict, mode: str | None = None) -> "PipelineConfig":
        d = dict(d)
        if mode is not None:
            d["mode"] = mode
        thresh = d.get("lambda_thresh", (0.01,))
        if isinstance(thresh, (int, float)):
            thresh = (float(thresh),)
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(d)
        kwargs["architectures"] = tuple(tuple(int(w) for w in a) for a in d.get("architectures", ()))
        kwargs["lambda_thresh"] = tuple(float(t) for t in thresh)
        for grid in ("lambda1_grid", "lambda2_grid", "lambda3_grid", "delta_grid"):
            if grid in kwargs:
                kwargs[grid] = tuple(float(v) for v in kwargs[grid])
        for key in ("lag_candidates", "exclude_faults"):
            if key in kwargs:
                kwargs[key] = tuple(int(v) for v in kwargs[key])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "architectures": [list(a) for a in self.architectures],
            "lambda1_grid": list(self.lambda1_grid),
            "lambda2_grid": list(self.lambda2_grid),
            "lambda3_grid": list(self.lambda3_grid),
            "delta_grid": list(self.delta_grid),
            "lambda_thresh": list(self.lambda_thresh),
            "lag_candidates": list(self.lag_candidates),
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "val_fraction": self.val_fraction,
            "epsilon": self.epsilon,
            "patience_drop": self.patience_drop,
            "max_iterations": self.max_iterations,
            "seed": self.seed,
            "threads": self.threads,
            "exclude_faults": list(self.exclude_faults),
            "activation": self.activation,
            "decoder_output_activation": self.decoder_output_activation,
            "pca_components": self.pca_components,
            "dpca_lag": self.dpca_lag,
        }


def default_synth_config(mode: str, seed: int = 0) -> "PipelineConfig":
    """Tuned configuration for the synthetic benchmark presets.

    These are the settings exercised by the acceptance suite and the
    quickest way to a sensible run on ``xfdd synth`` output.
    """
    common = dict(
        lambda1_grid=(0.05,),
        lambda2_grid=(1.0,),
        lambda3_grid=(5e-3,),
        lambda_thresh=(0.05, 0.08, 0.10, 0.12, 0.15),
        lag_candidates=(1,),
        epochs=200,
        batch_size=64,
        learning_rate=2e-3,
        val_fraction=0.25,
        epsilon=0.01,
        max_iterations=8,
        seed=seed,
    )
    if mode == "detect":
        return PipelineConfig(mode="detect", architectures=((8, 4),),
                              delta_grid=(2.0,), **common)
    return PipelineConfig(mode="diagnose", architectures=((8, 6),), **common)


@dataclass
class PruneIterationRecord:
    """One ledger row: what was trained, on which variables, how it scored."""

    phase: str
    iteration: int
    kind: str
    lag: int
    architecture: str
    retained: tuple[str, ...]
    val_accuracy: float
    test_accuracy: float
    mask: np.ndarray
    model: Model = field(repr=False)
    loss_cfg: CompositeLossConfig = field(repr=False)
    trace: list[TraceRow] = field(repr=False, default_factory=list)
    relevance_report: RelevanceReport | None = field(repr=False, default=None)
    lambda_used: float | None = None
    keep: np.ndarray | None = field(repr=False, default=None)


def _derived_seed(master: int, *parts: int) -> int:
    entropy = [master & 0xFFFFFFFF] + [p & 0xFFFFFFFF for p in parts]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def _n_classes(ds: Dataset) -> int:
    if ds.class_names is not None:
        return len(ds.class_names)
    return int(ds.y.max()) + 1




def _train_candidate(cfg, train_s, val_s, arch, loss_cfg, seed):
    spec = NetworkSpec.mirrored(
        input_dim=train_s.X.shape[1],
        encoder_widths=arch,
        num_classes=_n_classes(train_s),
        activation=cfg.activation,
        decoder_output_activation=cfg.decoder_output_activation,
        seed=seed,
    )
    model, trace = train(
        init_model(spec),
        train_s,
        loss_cfg,
        TrainSchedule(epochs=cfg.epochs, batch_size=cfg.batch_size,
                      learning_rate=cfg.learning_rate, shuffle_seed=seed),
        val_data=val_s,
    )
    val_acc = classification_accuracy(predict(model, val_s.X), val_s.y)
    return model, val_acc, trace


def _select_candidate(cfg, train_s, val_s, phase_tag):
    """Train the whole candidate grid and keep the best validation accuracy."""
    grid = list(
        itertools.product(
            cfg.architectures, cfg.lambda1_grid, cfg.lambda2_grid,
            cfg.lambda3_grid, cfg.delta_grid,
        )
    )
    jobs = []
    for idx, (arch, l1, l2, l3, delta) in enumerate(grid):
        loss_cfg = CompositeLossConfig(lambda1=l1, lambda2=l2, lambda3=l3, delta=delta)
        # keyed to the phase and candidate, not the iteration: successive
        # iterations then differ by the pruned columns, not by fresh draws
        seed = _derived_seed(cfg.seed, phase_tag, idx)
        jobs.append((arch, loss_cfg, seed))

    if cfg.threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(
                lambda j: _train_candidate(cfg, train_s, val_s, *j), jobs
            ))
    else:
        results = [_train_candidate(cfg, train_s, val_s, *j) for j in jobs]

    best_idx = max(range(len(results)), key=lambda i: results[i][1])
    model, val_acc, trace = results[best_idx]
    return model, val_acc, trace, jobs[best_idx][1]


def _expand_keep(current_mask: np.ndarray, keep_base: np.ndarray) -> np.ndarray:
    """Lift a keep-vector over active variables to a full-catalog mask."""
    full = current_mask.copy()
    active_idx = np.flatnonzero(current_mask)
    full[active_idx[~keep_base]] = False
    return full


def _prune_retrain_loop(cfg, phase, phase_tag, kind_base, train_s, val_s, test_s):
    """Train / attribute / prune until a fixed point or an accuracy drop.

    The threshold schedule escalates lazily: each level is held while it
    still removes variables and advances only once everything clears it, so
    pruning stays gradual and each removal is re-validated by a retrain.
    """
    records: list[PruneIterationRecord] = []
    best_val = -np.inf
    sched = cfg.lambda_thresh
    level = 0
    for iteration in range(1, cfg.max_iterations + 1):
        model, val_acc, trace, loss_cfg = _select_candidate(cfg, train_s, val_s, phase_tag)
        test_acc = classification_accuracy(predict(model, test_s.X), test_s.y)
        record = PruneIterationRecord(
            phase=phase,
            iteration=iteration,
            kind=kind_base if iteration == 1 else "x" + kind_base,
            lag=train_s.lag,
            architecture=arch_string(model.spec),
            retained=train_s.active_names,
            val_accuracy=val_acc,
            test_accuracy=test_acc,
            mask=train_s.active_mask.copy(),
            model=model,
            loss_cfg=loss_cfg,
            trace=trace,
        )
        records.append(record)

        try:
            report = overall_relevance(model, val_s, epsilon=cfg.epsilon)
        except RelevanceError as exc:
            warnings.warn(f"{phase} iteration {iteration}: {exc}; stopping pruning")
            break
        keep_base = prune_mask(report, sched[level])
        while keep_base.all() and level < len(sched) - 1:
            level += 1
            keep_base = prune_mask(report, sched[level])
        record.relevance_report = report
        record.lambda_used = sched[level]
        record.keep = keep_base

        if val_acc < best_val - cfg.patience_drop:
            break  # patience 1: a clear drop ends the phase
        best_val = max(best_val, val_acc)
        if keep_base.all():
            break  # everything clears the last threshold: fixed point
        full_mask = _expand_keep(train_s.active_mask, keep_base)
        train_s = apply_mask(train_s, full_mask)
        val_s = apply_mask(val_s, full_mask)
        test_s = apply_mask(test_s, full_mask)
    return records


def select_best(records: Sequence[PruneIterationRecord]) -> PruneIterationRecord:
    """Highest validation accuracy; ties favor fewer retained variables,
    then the earlier ledger row."""
    if not records:
        raise ConfigurationError("no ledger records to select from")
    best = max(
        enumerate(records),
        key=lambda t: (t[1].val_accuracy, -len(t[1].retained), -t[0]),
    )
    return best[1]


def run_static_phase(cfg: PipelineConfig, train: Dataset, test: Dataset):
    """Prune-retrain loop on unlagged data.

    Returns (best model, ledger records, reduced full-catalog mask). The
    best model is the ledger row with the highest validation accuracy; the
    reduced mask is the final iteration's variable set, which is what the
    dynamic phase builds on.
    """
    train_s, val_s = split_train_val(
        train, cfg.val_fraction, seed=_derived_seed(cfg.seed, 0xA0)
    )
    records = _prune_retrain_loop(
        cfg, phase="static", phase_tag=0, kind_base="DSAE",
        train_s=train_s, val_s=val_s, test_s=test,
    )
    best = select_best(records)
    return best.model, records, records[-1].mask.copy()


def _min_run_length(ds: Dataset) -> int:
    runs = ds.run_ids if ds.run_ids is not None else np.zeros(ds.n_samples, dtype=int)
    boundaries = np.flatnonzero(np.diff(runs) != 0) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [ds.n_samples]))
    return int((ends - starts).min())


def run_dynamic_phase(cfg: PipelineConfig, train: Dataset, test: Dataset, mask: np.ndarray):
    """Lag-augmented prune-retrain over each candidate lag.

    Starts from the static phase's reduced variable set; pruning acts on
    base variables, removing all lag copies of a variable at once. Returns
    (best model or None, ledger records).
    """
    red_train = apply_mask(train, mask)
    red_test = apply_mask(test, mask)
    records: list[PruneIterationRecord] = []
    for lag in cfg.lag_candidates:
        limit = min(_min_run_length(red_train), _min_run_length(red_test))
        if lag >= limit:
            warnings.warn(f"lag {lag} >= shortest run length {limit}, candidate skipped")
            continue
        lag_train = lag_augment(red_train, lag)
        lag_test = lag_augment(red_test, lag)
        train_s, val_s = split_train_val(
            lag_train, cfg.val_fraction, seed=_derived_seed(cfg.seed, 0xD0, lag)
        )
        records.extend(
            _prune_retrain_loop(
                cfg, phase=f"lag{lag}", phase_tag=1000 + lag,
                kind_base=f"DDSAE (lag {lag})",
                train_s=train_s, val_s=val_s, test_s=lag_test,
            )
        )
    best = select_best(records).model if records else None
    return best, records


@dataclass
class ModelBundle:
    """A trained model plus everything needed to apply it to raw rows."""

    model: Model
    mode: str
    standardization: Standardization
    active_mask: np.ndarray
    lag: int
    class_names: tuple[str, ...]
    variable_names: tuple[str, ...]
    fault_class_ids: tuple[int, ...] | None
    loss_cfg: CompositeLossConfig
    epsilon: float
    seed: int

    def to_dict(self) -> dict:
        payload = model_to_dict(self.model)
        payload.update(
            {
                "format_version": FORMAT_VERSION,
                "mode": self.mode,
                "standardization": self.standardization.to_dict(),
                "active_mask": [bool(b) for b in self.active_mask],
                "lag": self.lag,
                "class_names": list(self.class_names),
                "variable_names": list(self.variable_names),
                "fault_class_ids": None if self.fault_class_ids is None else list(self.fault_class_ids),
                "loss_config": self.loss_cfg.to_dict(),
                "epsilon": self.epsilon,
                "seed": self.seed,
            }
        )
        return payload

    @classmethod
    def from_dict(cls, d: dict) -> "ModelBundle":
        version = d.get("format_version")
        if version != FORMAT_VERSION:
            raise ConfigurationError(f"unsupported model format version {version!r}")
        return cls(
            model=model_from_dict(d),
            mode=d["mode"],
            standardization=Standardization.from_dict(d["standardization"]),
            active_mask=np.asarray(d["active_mask"], dtype=bool),
            lag=int(d["lag"]),
            class_names=tuple(d["class_names"]),
            variable_names=tuple(d["variable_names"]),
            fault_class_ids=None if d["fault_class_ids"] is None else tuple(d["fault_class_ids"]),
            loss_cfg=CompositeLossConfig.from_dict(d["loss_config"]),
            epsilon=float(d["epsilon"]),
            seed=int(d["seed"]),
        )


def prepare_with_bundle(bundle: ModelBundle, ds_raw: Dataset) -> Dataset:
    """Standardize, mask, relabel and lag a raw dataset for a saved model."""
    if ds_raw.catalog.names != bundle.variable_names:
        raise DataError("dataset variables do not match the model's catalog")
    if ds_raw.standardization is not None:
        raise DataError("expected raw (unstandardized) data")
    Xs = (ds_raw.X - bundle.standardization.mean) / bundle.standardization.std
    ds = replace(ds_raw, X=Xs, standardization=bundle.standardization)
    if bundle.mode == "detect":
        ds = relabel_detection(ds)
    else:
        ds = relabel_diagnosis(ds, fault_ids=bundle.fault_class_ids)
    ds = apply_mask(ds, bundle.active_mask)
    return lag_augment(ds, bundle.lag)


@dataclass
class PipelineResult:
    records: list[PruneIterationRecord]
    selected: PruneIterationRecord
    bundle: ModelBundle


def run(cfg: PipelineConfig, train_raw: Dataset, test_raw: Dataset) -> PipelineResult:
    """Full workflow: label, standardize, static phase, dynamic phase, select."""
    if cfg.mode == "detect":
        train_l = relabel_detection(train_raw)
        test_l = relabel_detection(test_raw)
        fault_class_ids = None
    else:
        train_l = relabel_diagnosis(train_raw, exclude=cfg.exclude_faults)
        fids = tuple(int(n.split("_")[1]) for n in train_l.class_names)
        test_l = relabel_diagnosis(test_raw, fault_ids=fids)
        fault_class_ids = fids

    train_std, (test_std,) = standardize(train_l, [test_l])

    _, static_records, mask = run_static_phase(cfg, train_std, test_std)
    records = list(static_records)
    if cfg.lag_candidates:
        _, dynamic_records = run_dynamic_phase(cfg, train_std, test_std, mask)
        records.extend(dynamic_records)

    selected = select_best(records)
    bundle = ModelBundle(
        model=selected.model,
        mode=cfg.mode,
        standardization=train_std.standardization,
        active_mask=selected.mask,
        lag=selected.lag,
        class_names=train_std.class_names,
        variable_names=train_std.catalog.names,
        fault_class_ids=fault_class_ids,
        loss_cfg=selected.loss_cfg,
        epsilon=cfg.epsilon,
        seed=cfg.seed,
    )
    return PipelineResult(records=records, selected=selected, bundle=bundle)


@dataclass(frozen=True)
class Verdict:
    """Outcome of scoring one streamed row."""

    row: int
    status: str  # "buffering" until the lag window fills, then "ok"
    class_id: int | None = None
    class_name: str | None = None
    probability: float | None = None
    attribution: dict[str, float] | None = None


def score_online(
    bundle: ModelBundle,
    rows: np.ndarray,
    explain_alarms: bool = False,
) -> list[Verdict]:
    """Score raw rows one at a time, replaying the offline preprocessing.

    Rows arrive in original units with every catalog column. The first
    ``bundle.lag`` rows only fill the history buffer and come back with
    status "buffering". When ``explain_alarms`` is set, rows predicted
    non-normal carry a per-variable relevance attribution.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[1] != len(bundle.variable_names):
        raise DataError(
            f"rows have {rows.shape[1]} columns, model expects {len(bundle.variable_names)}"
        )
    Xs = (rows - bundle.standardization.mean) / bundle.standardization.std
    Xs = Xs[:, bundle.active_mask]
    n_base = Xs.shape[1]

    verdicts: list[Verdict] = []
    history: list[np.ndarray] = []
    for i in range(Xs.shape[0]):
        history.append(Xs[i])
        if len(history) > bundle.lag + 1:
            history.pop(0)
        if len(history) < bundle.lag + 1:
            verdicts.append(Verdict(row=i, status="buffering"))
            continue
        vector = np.concatenate(history[::-1])  # current sample first
        probs = predict_proba(bundle.model, vector.reshape(1, -1))[0]
        cls = int(np.argmax(probs))
        attribution = None
        if explain_alarms and cls != 0:
            rel = relevance_sample(bundle.model, vector, cls, epsilon=bundle.epsilon)
            agg = aggregate_lags(rel, n_base, bundle.lag)[0]
            names = [n for n, keep in zip(bundle.variable_names, bundle.active_mask) if keep]
            attribution = {name: float(v) for name, v in zip(names, agg)}
        verdicts.append(
            Verdict(
                row=i,
                status="ok",
                class_id=cls,
                class_name=bundle.class_names[cls],
                probability=float(probs[cls]),
                attribution=attribution,
            )
        )
    return verdicts
