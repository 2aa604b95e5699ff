"""Build a student checkpoint by copying planned teacher layers.

Depth-only truncation: embeddings, the positional table, the final norm and
the LM head are copied whole; student layer i is a verbatim copy of teacher
layer ``plan.selection[i]``. Copied layers are renumbered 0..k-1 in plan
order, the way DistilBERT-style initializations stack them.
"""

from __future__ import annotations

from .checkpoint import (
    LAYER_SUFFIXES,
    Checkpoint,
    layer_tensor_name,
    validate_against_config,
)
from .planner import LayerPlan, validate_plan


def truncate(teacher: Checkpoint, plan: LayerPlan) -> Checkpoint:
    """Student checkpoint with config n_layers = k and the planned layers."""
    if plan.teacher_layers != teacher.config.n_layers:
        raise ValueError(
            f"plan is for a {plan.teacher_layers}-layer teacher but checkpoint "
            f"has {teacher.config.n_layers} layers"
        )
    plan_violations = validate_plan(plan)
    if plan_violations:
        raise ValueError(f"invalid plan: {'; '.join(plan_violations)}")
    teacher_violations = validate_against_config(teacher)
    if teacher_violations:
        raise ValueError(
            f"teacher checkpoint is incomplete: {'; '.join(teacher_violations)}"
        )

    student_config = teacher.config.with_layers(plan.student_layers)
    tensors = {}
    for name, arr in teacher.tensors.items():
        if not name.startswith("layers."):
            tensors[name] = arr.copy()
    for student_idx, teacher_idx in enumerate(plan.selection):
        for suffix in LAYER_SUFFIXES:
            src = teacher.tensors[layer_tensor_name(teacher_idx, suffix)]
            tensors[layer_tensor_name(student_idx, suffix)] = src.copy()
    return Checkpoint(config=student_config, tensors=tensors)
