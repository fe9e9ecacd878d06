"""Tri-training active learning with a three-worker coordination protocol.

The package has two halves:

- the experiment engine (`dataset`, `learner`, `strategy`, `experiment`,
  `report`): trains three models on splits of a labeled set, lets their
  agreement on an unlabeled pool pick new training examples under one of
  three polling strategies, and records every arm of the comparison —
  oracle, baseline, strategy iterations, and a size-matched random
  control — in a deterministic ledger;
- the coordination layer (`coord`): the same loop expressed as a
  three-worker protocol over shared status entities and blobs, with a
  deterministic simulator, a wall-clock multi-process runner, and a
  reproduction of the stale-status aggregation hazard the protocol guards
  against.
"""

from .dataset import (
    DatasetError,
    Example,
    LabeledDataset,
    SplitMode,
    UnlabeledPool,
    apply_augmentation,
    generate_blobs,
    holdout_split,
    load_csv,
    three_way_split,
)
from .experiment import (
    BlobSpec,
    ConfigError,
    CsvSpec,
    ExperimentConfig,
    IterationRecord,
    RunLedger,
    derive_seed,
    run_experiment,
    write_ledger,
)
from .learner import (
    ExternalLearnerError,
    LearnerError,
    Metrics,
    Model,
    PredictionSet,
    TrainConfig,
    evaluate,
    fit_softmax,
    loss_and_gradient,
    predict,
)
from .strategy import (
    Provenance,
    Selection,
    StrategyError,
    StrategyKind,
    random_select,
    select,
)

__version__ = "0.1.0"

__all__ = [
    "BlobSpec",
    "ConfigError",
    "CsvSpec",
    "DatasetError",
    "Example",
    "ExperimentConfig",
    "ExternalLearnerError",
    "IterationRecord",
    "LabeledDataset",
    "LearnerError",
    "Metrics",
    "Model",
    "PredictionSet",
    "Provenance",
    "RunLedger",
    "Selection",
    "SplitMode",
    "StrategyError",
    "StrategyKind",
    "TrainConfig",
    "UnlabeledPool",
    "apply_augmentation",
    "derive_seed",
    "evaluate",
    "fit_softmax",
    "generate_blobs",
    "holdout_split",
    "load_csv",
    "loss_and_gradient",
    "predict",
    "random_select",
    "run_experiment",
    "select",
    "three_way_split",
    "write_ledger",
    "__version__",
]
