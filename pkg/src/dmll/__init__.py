"""Determined multi-label learning toolkit.

Generate single-class Yes/No supervision from multi-label data, train a
cosine-prototype classifier against a determined risk estimator with
similarity-selected prompts, evaluate with rank metrics, and verify the
closed forms against brute-force oracles.
"""

from .dataset import (
    DatasetStats,
    DeterminedDataset,
    DeterminedInstance,
    LabelVocabulary,
    MultiLabelDataset,
    MultiLabelInstance,
    compute_stats,
    generate_determined,
    load_dataset,
    random_multilabel_dataset,
    save_dataset,
)
from .errors import (
    DataFormatError,
    DimensionError,
    DmllError,
    NonFiniteLossError,
    TrainingDiverged,
)
from .metrics import ScoreMatrix, all_metrics, coverage, mean_average_precision, one_error, ranking_loss
from .model import ModelParams, forward, forward_batch, init, load_model, loss_and_gradient, save_model
from .oracle import SyntheticWorld, enumerate_expected_loss, make_world, synth_generate, unbiasedness_report
from .prompt import (
    DEFAULT_TEMPLATE,
    FileProvider,
    PromptState,
    PromptTemplate,
    SimilarLabelIndex,
    SyntheticProvider,
    build_similarity_index,
    compose_prototypes,
    embed_prompt,
    select_optimal_prompt,
)
from .risk import RiskConfig, bce_set_loss, determined_batch_risk, expected_loss_H, recover_soft_labels
from .trainer import EpochRecord, TrainConfig, TrainHistory, adamw_step, train

__version__ = "0.1.0"

__all__ = [
    "DatasetStats",
    "DeterminedDataset",
    "DeterminedInstance",
    "LabelVocabulary",
    "MultiLabelDataset",
    "MultiLabelInstance",
    "compute_stats",
    "generate_determined",
    "load_dataset",
    "random_multilabel_dataset",
    "save_dataset",
    "DataFormatError",
    "DimensionError",
    "DmllError",
    "NonFiniteLossError",
    "TrainingDiverged",
    "ScoreMatrix",
    "all_metrics",
    "coverage",
    "mean_average_precision",
    "one_error",
    "ranking_loss",
    "ModelParams",
    "forward",
    "forward_batch",
    "init",
    "load_model",
    "loss_and_gradient",
    "save_model",
    "SyntheticWorld",
    "enumerate_expected_loss",
    "make_world",
    "synth_generate",
    "unbiasedness_report",
    "DEFAULT_TEMPLATE",
    "FileProvider",
    "PromptState",
    "PromptTemplate",
    "SimilarLabelIndex",
    "SyntheticProvider",
    "build_similarity_index",
    "compose_prototypes",
    "embed_prompt",
    "select_optimal_prompt",
    "RiskConfig",
    "bce_set_loss",
    "determined_batch_risk",
    "expected_loss_H",
    "recover_soft_labels",
    "EpochRecord",
    "TrainConfig",
    "TrainHistory",
    "adamw_step",
    "train",
    "__version__",
]
