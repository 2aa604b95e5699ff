import numpy as np
import pytest

from shrinkcast.checkpoint import LAYER_SUFFIXES, ModelConfig, layer_tensor_name
from shrinkcast.model import forward, init_checkpoint
from shrinkcast.planner import LayerPlan, pseudo_uniform, uniform
from shrinkcast.truncate import truncate


@pytest.fixture
def teacher12():
    config = ModelConfig(n_layers=12, n_heads=2, d_model=8, vocab_size=11, max_seq_len=6)
    return init_checkpoint(config, seed=1)


def test_identity_truncation_preserves_forward(tiny_ckpt, rng):
    plan = uniform(tiny_ckpt.config.n_layers, tiny_ckpt.config.n_layers)
    student = truncate(tiny_ckpt, plan)
    for _ in range(32):
        tokens = rng.integers(0, tiny_ckpt.config.vocab_size, size=(2, 8))
        diff = np.abs(forward(student, tokens).logits - forward(tiny_ckpt, tokens).logits)
        assert diff.max() <= 1e-6


def test_published_plan_layer_provenance(teacher12):
    plan = pseudo_uniform(12, 6)
    assert plan.selection == (0, 2, 4, 7, 9, 11)
    student = truncate(teacher12, plan)
    # student layer 3 must carry teacher layer 7's attention weights verbatim
    got = student.tensors[layer_tensor_name(3, "attn.w_qkv")]
    want = teacher12.tensors[layer_tensor_name(7, "attn.w_qkv")]
    assert got.tobytes() == want.tobytes()


def test_all_suffixes_renumbered(teacher12):
    plan = pseudo_uniform(12, 6)
    student = truncate(teacher12, plan)
    for student_idx, teacher_idx in enumerate(plan.selection):
        for suffix in LAYER_SUFFIXES:
            got = student.tensors[layer_tensor_name(student_idx, suffix)]
            want = teacher12.tensors[layer_tensor_name(teacher_idx, suffix)]
            assert got.tobytes() == want.tobytes()


def test_shared_tensors_copied_whole(teacher12):
    student = truncate(teacher12, uniform(12, 2))
    for name in ("tok_emb", "pos_emb", "ln_f.gamma", "ln_f.beta", "lm_head"):
        assert student.tensors[name].tobytes() == teacher12.tensors[name].tobytes()


def test_tensor_count_conservation(teacher12):
    per_layer = len(LAYER_SUFFIXES)
    for k in (2, 4, 6):
        student = truncate(teacher12, uniform(12, k))
        expected = len(teacher12.tensors) - (12 - k) * per_layer
        assert len(student.tensors) == expected
        assert student.config.n_layers == k
        assert student.config.d_model == teacher12.config.d_model


def test_bitwise_provenance_brute_force(teacher12):
    """Every student tensor is bitwise identical to exactly one teacher tensor."""
    student = truncate(teacher12, pseudo_uniform(12, 6))
    teacher_blobs = [arr.tobytes() for arr in teacher12.tensors.values()]
    for name, arr in student.tensors.items():
        matches = sum(arr.tobytes() == blob for blob in teacher_blobs)
        assert matches >= 1, f"{name} matches no teacher tensor"


def test_idempotent_under_identity(tiny_ckpt):
    plan = uniform(tiny_ckpt.config.n_layers, tiny_ckpt.config.n_layers)
    once = truncate(tiny_ckpt, plan)
    twice = truncate(once, plan)
    assert once == twice


def test_layer_count_mismatch_rejected(teacher12):
    plan = uniform(6, 3)  # plan built for a 6-layer teacher
    with pytest.raises(ValueError, match="12 layers"):
        truncate(teacher12, plan)


def test_invalid_plan_rejected(teacher12):
    plan = LayerPlan(12, 3, (0, 0, 4), "random", seed=0)
    with pytest.raises(ValueError, match="invalid plan"):
        truncate(teacher12, plan)


def test_incomplete_teacher_rejected(teacher12):
    del teacher12.tensors["ln_f.gamma"]
    with pytest.raises(ValueError, match="incomplete"):
        truncate(teacher12, uniform(12, 6))
