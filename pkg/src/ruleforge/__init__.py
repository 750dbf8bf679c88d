"""ruleforge: trains executable anomaly-detection rules for time-series
metrics through an LLM agent loop, fuses their predictions with an
existing base detector, and scores results with event-aware F1 metrics.
"""

from .dataset import (
    ABNORMAL,
    NORMAL,
    DatasetMode,
    DatasetSpec,
    LabelSequence,
    MetricSeries,
    load_dataset,
    read_metric_csv,
    split_train_test,
)
from .errors import (
    DataError,
    GatewayError,
    RuleforgeError,
    SandboxError,
    TrainingError,
)
from .evaluation import EvaluationReport, MetricScores, Segment, evaluate_all
from .fusion import BaseDetectorLabels, FusionBundle, aggregate, detect
from .preprocess import CHUNK_SIZE_PRESETS, Chunk, PreprocessConfig, chunk_series
from .rules import DIALECT_DSL, DIALECT_SCRIPT, Provenance, RuleArtifact
from .runtime import ExecutionOutcome, RuleRuntime, ScriptSandbox, execute_rule, syntax_check
from .training import TrainingConfig, calibrate_chunk_size, train_trial

__version__ = "0.1.0"

__all__ = [
    "ABNORMAL",
    "NORMAL",
    "CHUNK_SIZE_PRESETS",
    "DIALECT_DSL",
    "DIALECT_SCRIPT",
    "BaseDetectorLabels",
    "Chunk",
    "DataError",
    "DatasetMode",
    "DatasetSpec",
    "EvaluationReport",
    "ExecutionOutcome",
    "FusionBundle",
    "GatewayError",
    "LabelSequence",
    "MetricScores",
    "MetricSeries",
    "PreprocessConfig",
    "Provenance",
    "RuleArtifact",
    "RuleRuntime",
    "RuleforgeError",
    "SandboxError",
    "ScriptSandbox",
    "Segment",
    "TrainingConfig",
    "TrainingError",
    "aggregate",
    "calibrate_chunk_size",
    "chunk_series",
    "detect",
    "evaluate_all",
    "execute_rule",
    "load_dataset",
    "read_metric_csv",
    "split_train_test",
    "syntax_check",
    "train_trial",
]
