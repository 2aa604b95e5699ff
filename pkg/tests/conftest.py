import numpy as np
import pytest

from shrinkcast.checkpoint import ModelConfig
from shrinkcast.model import init_checkpoint


@pytest.fixture
def tiny_config():
    """Fast config for gradient checks and unit tests."""
    return ModelConfig(n_layers=2, n_heads=2, d_model=16, vocab_size=17, max_seq_len=8)


@pytest.fixture
def tiny_teacher_config():
    return ModelConfig(n_layers=4, n_heads=2, d_model=16, vocab_size=17, max_seq_len=8)


@pytest.fixture
def tiny_ckpt(tiny_config):
    return init_checkpoint(tiny_config, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
