"""
Training, evaluation and verification for INVSEG.

This package provides:
- TrainConfig and the key=value config format
- Adam with bias correction
- The training loop and its TrainReport
- Sliding-window evaluation with per-class Dice / Hausdorff
- Self-verification suites
"""
from .config import AdamConfig, ConfigError, DataConfig, TrainConfig, dump_config, load_config, parse_config_text
from .optimizer import (
    AdamState,
    NonFiniteGradientError,
    adam_step,
    clip_by_global_norm,
    global_norm,
    load_adam_state,
    save_adam_state,
)
from .evaluation import (
    ClassMetrics,
    EvaluationReport,
    VolumeMetrics,
    evaluate,
    evaluate_labels,
    evaluate_patches,
    predict_volume,
    sliding_windows,
)
from .reports import CheckResult, MemoryTable, StepRecord, SuiteReport, TrainReport, write_report
from .trainer import Trainer, resolve_dataset, train
from .verification import SUITES, checkpoint_budget, run_verification

__all__ = [
    "AdamConfig",
    "ConfigError",
    "DataConfig",
    "TrainConfig",
    "dump_config",
    "load_config",
    "parse_config_text",
    "AdamState",
    "NonFiniteGradientError",
    "adam_step",
    "clip_by_global_norm",
    "global_norm",
    "load_adam_state",
    "save_adam_state",
    "ClassMetrics",
    "EvaluationReport",
    "VolumeMetrics",
    "evaluate",
    "evaluate_labels",
    "evaluate_patches",
    "predict_volume",
    "sliding_windows",
    "CheckResult",
    "MemoryTable",
    "StepRecord",
    "SuiteReport",
    "TrainReport",
    "write_report",
    "Trainer",
    "resolve_dataset",
    "train",
    "SUITES",
    "checkpoint_budget",
    "run_verification",
]
