"""Wrist-sensor movement-assessment screening pipeline.

Feature extraction (per-channel Welch log-PSD + quarter-segment statistics),
a class-weighted kernel SVM trained by SMO, repeated stratified
cross-validation with nested grid search, greedy assessment-task selection,
arm-restriction studies, and a seeded synthetic cohort generator.
"""

__version__ = "0.1.0"

from .evaluation import (
    BINARY_TASK_NAMES,
    CvPlan,
    CvReport,
    GridSpec,
    TASK_NAMES,
    balanced_accuracy,
    grid_search,
    run_cv,
    stratified_folds,
)
from .features import (
    FeatureConfig,
    FeatureMatrix,
    ScalerParams,
    apply_scaler,
    featurize_cohort,
    featurize_session,
    fit_scaler,
    segment_stats,
    welch_log_psd,
    welch_psd,
)
from .selection import (
    ARM_SETTINGS,
    SelectionTrace,
    arm_study,
    backward_select,
    exclusion_consensus,
    filter_arm,
    forward_select,
    minimal_subset,
)
from .sessions import (
    ChannelKey,
    RecordingSession,
    SessionError,
    TaskManifest,
    channel_count,
    load_cohort,
    load_session,
    save_session,
    split_long_records,
)
from .svm import (
    KernelConfig,
    SvmConfig,
    TrainedSvm,
    class_weights,
    load_model,
    predict,
    resolve_gamma,
    save_model,
    train_binary,
    train_multiclass,
)
from .synth import (
    ClassEffect,
    CohortSpec,
    generate_cohort,
    generate_sessions,
    spec_from_reference_sample,
)
