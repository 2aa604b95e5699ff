"""Seeded single-threaded training loop with pluggable loss functions.

The loop is deterministic: given the same starting checkpoint, corpus and
config (including seed), it produces bitwise-identical checkpoints and loss
logs. Batches are windows sampled from a flat token stream by a seeded
generator; the optimizer state lives in float64 alongside the parameters.

A loss function receives ``(params, tokens, targets, step)`` and returns
``(loss, grads, components)`` where ``components`` is an optional dict of
scalar loss terms logged next to the total.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint
from .model import (
    backward,
    checkpoint_from_params,
    forward_with_cache,
    lm_loss,
    params_from_checkpoint,
)


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes non-finite."""


@dataclass
class TrainConfig:
    learning_rate: float
    steps: int
    batch_size: int
    seed: int
    optimizer: str = "adam"  # "sgd" or "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seq_len: int | None = None  # defaults to the model's max_seq_len

    def validate(self) -> None:
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0 and batch_size >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("adam betas must lie in (0, 1)")
        if self.eps <= 0:
            raise ValueError("adam eps must be positive")


@dataclass
class LogEntry:
    step: int
    loss: float
    components: dict[str, float] = field(default_factory=dict)


class _Adam:
    def __init__(self, params: dict[str, np.ndarray], cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def update(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        cfg = self.cfg
        self.t += 1
        bc1 = 1.0 - cfg.beta1**self.t
        bc2 = 1.0 - cfg.beta2**self.t
        for name, g in grads.items():
            m = self.m[name]
            v = self.v[name]
            m *= cfg.beta1
            m += (1 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1 - cfg.beta2) * g * g
            params[name] -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)


class _SGD:
    def __init__(self, params: dict[str, np.ndarray], cfg: TrainConfig):
        self.cfg = cfg

    def update(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            params[name] -= self.cfg.learning_rate * g


def make_optimizer(params: dict[str, np.ndarray], cfg: TrainConfig):
    return _Adam(params, cfg) if cfg.optimizer == "adam" else _SGD(params, cfg)


def sample_batch(
    corpus: np.ndarray, batch_size: int, seq_len: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Random (inputs, next-token targets) windows from a flat token stream."""
    corpus = np.asarray(corpus, dtype=np.int64).ravel()
    if corpus.size < seq_len + 1:
        raise ValueError(
            f"corpus of {corpus.size} tokens is too short for windows of {seq_len + 1}"
        )
    starts = rng.integers(0, corpus.size - seq_len, size=batch_size)
    windows = np.stack([corpus[s : s + seq_len + 1] for s in starts])
    return windows[:, :-1], windows[:, 1:]


def default_lm_loss(config):
    """Plain next-token cross-entropy as a pluggable loss function."""

    def loss_fn(params, tokens, targets, step):
        trace, cache = forward_with_cache(params, config, tokens)
        loss, d_logits = lm_loss(trace, targets)
        grads, _ = backward(cache, d_logits=d_logits)
        return loss, grads, {}

    return loss_fn


def train(
    ckpt: Checkpoint,
    corpus: np.ndarray,
    cfg: TrainConfig,
    loss_fn=None,
) -> tuple[Checkpoint, list[LogEntry]]:
    """Train and return (updated checkpoint, per-step loss log).

    ``loss_fn(params, tokens, targets, step) -> (loss, grads, components)``;
    when None, plain language-model cross-entropy is used. Aborts with
    :class:`TrainingDiverged` if the loss stops being finite.
    """
    cfg.validate()
    params = params_from_checkpoint(ckpt)
    config = ckpt.config
    seq_len = cfg.seq_len or config.max_seq_len
    if seq_len > config.max_seq_len:
        raise ValueError(f"seq_len {seq_len} exceeds max_seq_len {config.max_seq_len}")
    if loss_fn is None:
        loss_fn = default_lm_loss(config)
    optimizer = make_optimizer(params, cfg)
    rng = np.random.default_rng(cfg.seed)
    log: list[LogEntry] = []
    for step in range(cfg.steps):
        tokens, targets = sample_batch(corpus, cfg.batch_size, seq_len, rng)
        loss, grads, components = loss_fn(params, tokens, targets, step)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"loss became non-finite at step {step}: {loss}")
        log.append(LogEntry(step=step, loss=float(loss), components=dict(components)))
        optimizer.update(params, grads)
    return checkpoint_from_params(config, params), log


def write_loss_log(path: str, log: list[LogEntry]) -> None:
    """CSV loss log: step,loss plus one column per component."""
    component_keys = sorted({k for entry in log for k in entry.components})
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(["step", "loss"] + component_keys) + "\n")
        for entry in log:
            cells = [str(entry.step), repr(entry.loss)]
            cells += [repr(entry.components.get(k, 0.0)) for k in component_keys]
            fh.write(",".join(cells) + "\n")
