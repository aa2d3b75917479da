"""Angular-margin loss laboratory: C++ core with python bindings."""

from ._core import (  # noqa: F401
    HeadKind,
    HeadConfig,
    SampleRecord,
    ForwardBatch,
    DatasetSpec,
    NoisyDataset,
    NoiseKind,
    NoiseEntry,
    NoiseLedger,
    GeneratedData,
    VerificationPair,
    EmbeddingModel,
    TrainConfig,
    IterationRow,
    EpochRow,
    MetricsLog,
    TrainResult,
    VerificationResult,
    DetectionPoint,
    CorrectionOracleResult,
    ZeroVectorError,
    DimensionMismatchError,
    normalize,
    cosine_matrix,
    angular_add,
    positive_transform,
    negative_transform,
    correction_check,
    boundary_regularizer,
    focal_indicator,
    forward_loss,
    backward,
    generate,
    inject_closed_noise,
    inject_open_noise,
    make_verification_pairs,
    lr_at,
    train,
    finite_diff_audit,
    sweep_threshold,
    verification_accuracy,
    detection_curve,
    oracle_correction_test,
    save_dataset,
    load_dataset,
    save_ledger,
    load_ledger,
    save_checkpoint,
    load_checkpoint,
    save_metrics_csv,
)

__version__ = "0.1.0"
