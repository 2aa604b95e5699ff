"""shrinkcast: compress small decoder-only language models by layer
truncation, train them with distillation or teacher-free losses, clean text
corpora, and evaluate perplexity, reproducibly."""

from .checkpoint import (
    Checkpoint,
    CheckpointFormatError,
    ModelConfig,
    read_checkpoint,
    validate_against_config,
    write_checkpoint,
)
from .cleaner import CleanStats, clean_stream
from .distill import (
    DistillConfig,
    RailProjections,
    SmoothingSpec,
    annealing_loss,
    build_self_teacher,
    mate_max_step,
    mate_min_step,
    rail_loss,
    smooth_labels,
    tfreg_labels,
    vanilla_kd_loss,
)
from .estimators import CorpusCleaner, DistilledLM, LayerTruncator
from .experiment import ExperimentSpec, ResultRow, emit_report, load_spec, run_experiment
from .model import (
    ClassifierHead,
    ForwardTrace,
    classify_forward,
    forward,
    init_checkpoint,
    lm_loss_and_grads,
    perplexity,
)
from .planner import (
    LayerPlan,
    bottom_half,
    pseudo_uniform,
    plan_layers,
    random_k,
    top_half,
    uniform,
    uniform_variant2,
    validate_plan,
)
from .training import TrainConfig, TrainingDiverged, train
from .truncate import truncate

__version__ = "0.1.0"

__all__ = [
    "Checkpoint",
    "CheckpointFormatError",
    "ClassifierHead",
    "CleanStats",
    "CorpusCleaner",
    "DistillConfig",
    "DistilledLM",
    "ExperimentSpec",
    "ForwardTrace",
    "LayerPlan",
    "LayerTruncator",
    "ModelConfig",
    "RailProjections",
    "ResultRow",
    "SmoothingSpec",
    "TrainConfig",
    "TrainingDiverged",
    "annealing_loss",
    "bottom_half",
    "build_self_teacher",
    "classify_forward",
    "clean_stream",
    "emit_report",
    "forward",
    "init_checkpoint",
    "lm_loss_and_grads",
    "load_spec",
    "mate_max_step",
    "mate_min_step",
    "perplexity",
    "plan_layers",
    "pseudo_uniform",
    "rail_loss",
    "random_k",
    "read_checkpoint",
    "run_experiment",
    "smooth_labels",
    "tfreg_labels",
    "top_half",
    "train",
    "truncate",
    "uniform",
    "uniform_variant2",
    "validate_against_config",
    "validate_plan",
    "vanilla_kd_loss",
    "write_checkpoint",
]
