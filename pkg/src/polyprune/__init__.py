"""polyprune: greedy forward-selection pruning of two-layer networks
over the convex hull of their neuron activations."""

from .datasets import (
    Dataset,
    binarize_labels,
    load_cache,
    load_idx,
    make_class_blobs,
    make_synthetic,
    normalize_rows,
    save_cache,
    save_idx,
    subsample_uniform,
    train_val_split,
)
from .activations import ACTIVATIONS, Activation, get_activation, require_smooth
from .network import TwoLayerNetwork, half_squared_error
from .training import (
    TrainTrace,
    TrainingDivergedError,
    estimate_c,
    fit_decay_rate,
    log_linear_fit,
    read_trace_csv,
    write_trace_csv,
)
from .simplex import LinearProgram, LpOutcome, SimplexError, format_outcome, format_problem, solve
from .polytope import (
    MembershipResult,
    classification_membership,
    diameter,
    diameter_lower_bound,
    hull_membership,
    lmo,
)
from .pruning import (
    GreedyForwardSelector,
    GreedyState,
    RateFit,
    candidate_losses,
    greedy_forward_selection,
    greedy_step,
    iterate_identity_residuals,
    rate_fit,
    read_counts_csv,
    scan_agreement_gap,
    selection_bound_violations,
    write_counts_csv,
    write_selection_csv,
)
from .thresholds import (
    BoundParams,
    gd_threshold,
    pretraining_bound,
    sgd_threshold,
    selection_loss_bound,
    write_bound_curves_csv,
    zeta_factor,
)
from .experiments import (
    BoundReport,
    BoundReportConfig,
    ConfigError,
    InvariantViolation,
    MembershipConfig,
    MembershipRecord,
    SweepCell,
    SweepConfig,
    SweepGrid,
    ThresholdRecord,
    apply_overrides,
    derive_seed,
    first_satisfied_epochs,
    parse_config_file,
    prepare_dataset,
    run_bound_report,
    run_gradcheck,
    run_membership_experiment,
    run_sweep,
    threshold_trace,
    write_first_epoch_csv,
    write_membership_csv,
    write_threshold_csv,
)

__version__ = "0.1.0"

__all__ = [
    "ACTIVATIONS",
    "Activation",
    "BoundParams",
    "BoundReport",
    "BoundReportConfig",
    "ConfigError",
    "Dataset",
    "GreedyForwardSelector",
    "GreedyState",
    "InvariantViolation",
    "LinearProgram",
    "LpOutcome",
    "MembershipConfig",
    "MembershipRecord",
    "MembershipResult",
    "RateFit",
    "SimplexError",
    "SweepCell",
    "SweepConfig",
    "SweepGrid",
    "ThresholdRecord",
    "TrainTrace",
    "TrainingDivergedError",
    "TwoLayerNetwork",
    "apply_overrides",
    "binarize_labels",
    "candidate_losses",
    "classification_membership",
    "derive_seed",
    "diameter",
    "diameter_lower_bound",
    "estimate_c",
    "first_satisfied_epochs",
    "fit_decay_rate",
    "format_outcome",
    "format_problem",
    "gd_threshold",
    "get_activation",
    "greedy_forward_selection",
    "greedy_step",
    "half_squared_error",
    "hull_membership",
    "iterate_identity_residuals",
    "lmo",
    "load_cache",
    "load_idx",
    "log_linear_fit",
    "make_class_blobs",
    "make_synthetic",
    "normalize_rows",
    "parse_config_file",
    "prepare_dataset",
    "pretraining_bound",
    "rate_fit",
    "read_counts_csv",
    "read_trace_csv",
    "require_smooth",
    "run_bound_report",
    "run_gradcheck",
    "run_membership_experiment",
    "run_sweep",
    "save_cache",
    "save_idx",
    "scan_agreement_gap",
    "selection_bound_violations",
    "selection_loss_bound",
    "sgd_threshold",
    "solve",
    "subsample_uniform",
    "threshold_trace",
    "train_val_split",
    "write_bound_curves_csv",
    "write_counts_csv",
    "write_first_epoch_csv",
    "write_membership_csv",
    "write_selection_csv",
    "write_threshold_csv",
    "write_trace_csv",
    "zeta_factor",
]
