"""Explainability-driven fault detection and diagnosis.

Supervised autoencoder classifiers trained from scratch, relevance
attribution by backward score propagation, iterative relevance-based input
pruning, PCA/DPCA monitoring baselines and a synthetic faulted-process
benchmark, with CSV/JSON/figure report artifacts and the ``xfdd`` CLI.
"""

__version__ = "0.1.0"

from .data import (
    Dataset,
    FaultCatalog,
    TEP_FAULTS,
    TEP_VARIABLES,
    VariableCatalog,
    apply_mask,
    lag_augment,
    load_csv,
    split_train_val,
    standardize,
)
from .errors import (
    ConfigurationError,
    DataError,
    DivergenceError,
    RelevanceError,
    ShapeError,
    XfddError,
)
from .losses import (
    CompositeLossConfig,
    composite_loss,
    l2_penalty,
    reconstruction_loss,
    softmax_cross_entropy,
    weighted_binary_cross_entropy,
)
from .lrp import (
    RelevanceReport,
    average_relevance,
    overall_relevance,
    prune_mask,
    relevance_sample,
)
from .nn import (
    Model,
    NetworkSpec,
    TrainSchedule,
    adam_step,
    arch_string,
    backward,
    forward,
    init_model,
    predict,
    predict_proba,
    train,
)
from .baselines import PcaModel, detect_pca, fit_dpca, fit_pca, spe_statistic, t2_statistic
from .metrics import (
    ConfusionMatrix,
    classification_accuracy,
    confusion_matrix,
    false_alarm_rate,
    fault_detection_rate,
    heatmap,
)
from .pipeline import (
    ModelBundle,
    PipelineConfig,
    PipelineResult,
    PruneIterationRecord,
    run,
    run_dynamic_phase,
    run_static_phase,
    score_online,
)
from .synthproc import Benchmark, FaultSpec, ProcessSpec, benchmark, generate, random_process
