from .config import OptimizerConfig, TrainConfig, apply_overrides, load_config, parse_rtf
from .optimizer import Adam, clip_by_global_norm, global_norm
from .pipeline import SeparationOutput, SeparationPipeline
from .train import TrainResult, heldout_examples, step_order, train
from .enhance import enhance, enhance_dataset, enhance_waveform, load_pipeline
from .evaluate import (
    MetricsReport,
    UtteranceMetrics,
    evaluate,
    evaluate_examples,
    observation_estimator,
    oracle_mask_baseline,
    oracle_masks,
    pipeline_estimator,
    score_estimates,
)
from .diagnostics import composite_grad_check, make_toy_problem

__all__ = [
    "OptimizerConfig",
    "TrainConfig",
    "load_config",
    "apply_overrides",
    "parse_rtf",
    "Adam",
    "clip_by_global_norm",
    "global_norm",
    "SeparationPipeline",
    "SeparationOutput",
    "TrainResult",
    "train",
    "step_order",
    "heldout_examples",
    "enhance",
    "enhance_waveform",
    "enhance_dataset",
    "load_pipeline",
    "MetricsReport",
    "UtteranceMetrics",
    "evaluate",
    "evaluate_examples",
    "score_estimates",
    "observation_estimator",
    "pipeline_estimator",
    "oracle_masks",
    "oracle_mask_baseline",
    "composite_grad_check",
    "make_toy_problem",
]
