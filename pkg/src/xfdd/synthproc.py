"""Synthetic multivariate process with injectable faults and known ground truth.

A stable linear state recursion drives a set of observed signal variables
(half of them through a tanh channel, so nonlinear models have a genuine
edge over linear monitoring); independent pure-noise variables are appended
as known-irrelevant columns. Faults transform the observed signals after an
onset sample:

* ``step``             additive bias of ``magnitude`` nominal stds
* ``random_variation`` the variable's variability is inflated so its
                       post-onset std equals ``magnitude`` nominal stds
* ``slow_drift``       linear ramp reaching ``magnitude`` stds at run end
* ``stiction``         slip-jump stiction: the channel re-sticks at a
                       displaced level (offset ``magnitude`` stds) and only
                       slips when the underlying signal escapes a deadband

Pre-onset rows follow the exact same sample path as a fault-free run with
the same seed, so the normal segments of faulty runs are distributionally
(indeed bitwise) identical to normal operation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Dataset, VariableCatalog
from .errors import ConfigurationError

BURN_IN = 200
NOMINAL_STD_ROWS = 2000
FAULT_KINDS = ("step", "random_variation", "slow_drift", "stiction")


@dataclass(eq=False)
class ProcessSpec:
    """Generator description: dynamics, output map, noise levels, seed."""

    transition: np.ndarray          # (state_dim, state_dim), spectral radius < 0.99
    output_map: np.ndarray          # (n_signal, state_dim)
    noise_std: np.ndarray           # measurement noise per signal variable
    n_noise: int
    process_noise_std: float = 0.5
    nonlinear_channels: tuple[int, ...] = ()
    seed: int = 0
    _nominal_std: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.transition = np.asarray(self.transition, dtype=float)
        self.output_map = np.asarray(self.output_map, dtype=float)
        self.noise_std = np.asarray(self.noise_std, dtype=float)
        radius = np.max(np.abs(np.linalg.eigvals(self.transition)))
        if radius >= 0.99:
            raise ConfigurationError(f"unstable process: spectral radius {radius:.3f} >= 0.99")
        if np.any(self.noise_std <= 0):
            raise ConfigurationError("noise std must be > 0 for every variable")
        if self.noise_std.shape[0] != self.output_map.shape[0]:
            raise ConfigurationError("one noise std per signal variable required")

    @property
    def state_dim(self) -> int:
        return self.transition.shape[0]

    @property
    def n_signal(self) -> int:
        return self.output_map.shape[0]

    @property
    def n_variables(self) -> int:
        return self.n_signal + self.n_noise

    def variable_names(self) -> tuple[str, ...]:
        sig = tuple(f"signal_{i+1}" for i in range(self.n_signal))
        noi = tuple(f"noise_{i+1}" for i in range(self.n_noise))
        return sig + noi

    def catalog(self) -> VariableCatalog:
        return VariableCatalog.from_names(self.variable_names())

    def nominal_std(self) -> np.ndarray:
        """Per-signal-variable std under normal operation (reference run)."""
        if self._nominal_std is None:
            ref = simulate_run(self, NOMINAL_STD_ROWS, run_seed=-1)
            self._nominal_std = ref[:, : self.n_signal].std(axis=0)
        return self._nominal_std


@dataclass(frozen=True)
class FaultSpec:
    fault_id: int
    kind: str
    targets: tuple[int, ...]        # indices into the signal variables
    magnitude: float                # in units of the target's nominal std
    onset: int

    def __post_init__(self) -> None:
        if self.kind not in FAULT_KINDS:
            raise ConfigurationError(f"unknown fault kind {self.kind!r}")
        if self.magnitude <= 0:
            raise ConfigurationError("fault magnitude must be > 0")
        if self.fault_id <= 0:
            raise ConfigurationError("fault ids must be positive (0 means normal)")
        if not self.targets:
            raise ConfigurationError("fault needs at least one target variable")


def random_process(
    n_signal: int = 8,
    n_noise: int = 8,
    state_dim: int = 6,
    seed: int = 0,
    spectral_radius: float = 0.85,
) -> ProcessSpec:
    """Draw a stable random process; odd signal channels get the tanh map."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    A = rng.normal(size=(state_dim, state_dim)) / np.sqrt(state_dim)
    A *= spectral_radius / np.max(np.abs(np.linalg.eigvals(A)))
    C = rng.normal(size=(n_signal, state_dim))
    C /= np.linalg.norm(C, axis=1, keepdims=True)
    return ProcessSpec(
        transition=A,
        output_map=C,
        noise_std=np.full(n_signal, 0.3),
        n_noise=n_noise,
        nonlinear_channels=tuple(range(1, n_signal, 2)),
        seed=seed,
    )


def simulate_run(spec: ProcessSpec, n_samples: int, run_seed: int) -> np.ndarray:
    """One fault-free run: (n_samples, n_signal + n_noise), deterministic."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, run_seed & 0xFFFFFFFF]))
    state = rng.normal(size=spec.state_dim)
    # burn-in so row 0 is already (approximately) stationary
    for _ in range(BURN_IN):
        state = spec.transition @ state + spec.process_noise_std * rng.normal(size=spec.state_dim)

    out = np.empty((n_samples, spec.n_variables))
    for t in range(n_samples):
        state = spec.transition @ state + spec.process_noise_std * rng.normal(size=spec.state_dim)
        raw = spec.output_map @ state
        for ch in spec.nonlinear_channels:
            raw[ch] = np.tanh(raw[ch])
        out[t, : spec.n_signal] = raw + spec.noise_std * rng.normal(size=spec.n_signal)
    out[:, spec.n_signal :] = rng.normal(size=(n_samples, spec.n_noise))
    return out


def apply_fault(spec: ProcessSpec, clean: np.ndarray, fault: FaultSpec, run_seed: int) -> np.ndarray:
    """Transform a clean run's post-onset rows according to the fault."""
    n = clean.shape[0]
    if not 0 <= fault.onset < n:
        raise ConfigurationError(f"onset {fault.onset} outside run of {n} rows")
    if any(t < 0 or t >= spec.n_signal for t in fault.targets):
        raise ConfigurationError("fault targets must be signal variables")

    sigma = spec.nominal_std()
    rng = np.random.default_rng(
        np.random.SeedSequence([spec.seed, run_seed & 0xFFFFFFFF, fault.fault_id])
    )
    out = clean.copy()
    post = slice(fault.onset, n)
    n_post = n - fault.onset
    for v in fault.targets:
        size = fault.magnitude * sigma[v]
        if fault.kind == "step":
            out[post, v] += size
        elif fault.kind == "random_variation":
            # post-onset std becomes magnitude * nominal std exactly
            extra = np.sqrt(max(fault.magnitude**2 - 1.0, 0.0)) * sigma[v]
            out[post, v] += extra * rng.normal(size=n_post)
        elif fault.kind == "slow_drift":
            out[post, v] += size * np.arange(1, n_post + 1) / n_post
        elif fault.kind == "stiction":
            held = clean[fault.onset, v] + size
            band = size
            for t in range(fault.onset, n):
                if abs(clean[t, v] + size - held) > band:
                    held = clean[t, v] + size
                out[t, v] = held
    return out


def generate(
    spec: ProcessSpec,
    n_samples: int,
    faults: Sequence[FaultSpec] = (),
    run_seed: int = 0,
) -> tuple[Dataset, dict]:
    """Simulate one run per fault (plus a single normal run when none given).

    Rows before each fault's onset are labeled normal (0); rows from the
    onset on carry the fault id. Returns the labeled dataset and the
    ground-truth mapping from fault id to its relevant variable names.
    """
    names = spec.variable_names()
    catalog = spec.catalog()
    runs_X, runs_y, runs_run = [], [], []
    truth: dict[int, list[str]] = {}

    specs: Sequence[FaultSpec | None] = list(faults) if faults else [None]
    for r, fault in enumerate(specs):
        clean = simulate_run(spec, n_samples, run_seed=run_seed + r)
        y = np.zeros(n_samples, dtype=int)
        if fault is None:
            X = clean
        else:
            X = apply_fault(spec, clean, fault, run_seed=run_seed + r)
            y[fault.onset :] = fault.fault_id
            truth[fault.fault_id] = [names[v] for v in fault.targets]
        runs_X.append(X)
        runs_y.append(y)
        runs_run.append(np.full(n_samples, r, dtype=int))

    y = np.concatenate(runs_y)
    ds = Dataset(
        X=np.vstack(runs_X),
        y=y,
        catalog=catalog,
        active_mask=np.ones(len(catalog), dtype=bool),
        lag=0,
        fault_ids=y.copy(),
        run_ids=np.concatenate(runs_run),
    )
    ground_truth = {
        "faults": {str(fid): sorted(vars_) for fid, vars_ in truth.items()},
        "signal_variables": list(names[: spec.n_signal]),
        "noise_variables": list(names[spec.n_signal :]),
    }
    return ds, ground_truth


@dataclass(frozen=True)
class Benchmark:
    """Train/test datasets with ground truth for one benchmark preset."""

    train: Dataset
    test: Dataset
    ground_truth: dict
    faults: tuple[FaultSpec, ...]
    process: ProcessSpec


PRESETS = {
    # n_train_normal, n_train_fault, n_test, test_onset
    "default": (500, 480, 960, 160),
    "small": (150, 120, 300, 60),
}


def benchmark(preset: str = "default", seed: int = 0) -> Benchmark:
    """Build the standard 8-signal + 8-noise benchmark with 4 fault types.

    Training data: one normal run plus one fully-faulty run per fault
    (onset 0). Test data: one normal run plus one run per fault with the
    fault introduced at the preset onset.
    """
    if preset not in PRESETS:
        raise ConfigurationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    n_normal, n_fault, n_test, onset = PRESETS[preset]
    process = random_process(seed=seed)

    kinds = ("step", "random_variation", "slow_drift", "stiction")
    train_faults = tuple(
        FaultSpec(fault_id=i + 1, kind=k, targets=(2 * i, 2 * i + 1), magnitude=5.0, onset=0)
        for i, k in enumerate(kinds)
    )
    test_faults = tuple(
        FaultSpec(fault_id=f.fault_id, kind=f.kind, targets=f.targets,
                  magnitude=f.magnitude, onset=onset)
        for f in train_faults
    )

    normal_ds, _ = generate(process, n_normal, faults=(), run_seed=1000)
    fault_ds, truth = generate(process, n_fault, faults=train_faults, run_seed=2000)
    # re-number fault runs after the normal run
    train = Dataset(
        X=np.vstack([normal_ds.X, fault_ds.X]),
        y=np.concatenate([normal_ds.y, fault_ds.y]),
        catalog=normal_ds.catalog,
        active_mask=normal_ds.active_mask.copy(),
        fault_ids=np.concatenate([normal_ds.fault_ids, fault_ds.fault_ids]),
        run_ids=np.concatenate([normal_ds.run_ids, fault_ds.run_ids + 1]),
    )

    test_normal, _ = generate(process, n_test, faults=(), run_seed=3000)
    test_faulty, _ = generate(process, n_test, faults=test_faults, run_seed=4000)
    test = Dataset(
        X=np.vstack([test_normal.X, test_faulty.X]),
        y=np.concatenate([test_normal.y, test_faulty.y]),
        catalog=test_normal.catalog,
        active_mask=test_normal.active_mask.copy(),
        fault_ids=np.concatenate([test_normal.fault_ids, test_faulty.fault_ids]),
        run_ids=np.concatenate([test_normal.run_ids, test_faulty.run_ids + 1]),
    )
    return Benchmark(
        train=train, test=test, ground_truth=truth,
        faults=test_faults, process=process,
    )
