"""scikit-learn style front door: transformers and an estimator.

These wrap the functional core so the pieces compose with the wider
ecosystem (``get_params``/``set_params``, ``clone``, pipelines):

* :class:`CorpusCleaner`  - stateless text transformer over record lists.
* :class:`LayerTruncator` - checkpoint transformer; fit plans the layers,
  transform builds the student.
* :class:`DistilledLM`    - fit trains (optionally distills) a language
  model on a token stream; predict/score evaluate it.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .cleaner import clean_stream
from .checkpoint import Checkpoint, ModelConfig
from .distill import DistillConfig, SmoothingSpec, build_self_teacher, make_step_fn
from .model import forward, init_checkpoint, perplexity, softmax
from .planner import plan_layers
from .training import TrainConfig, train
from .truncate import truncate
from .validation import (
    check_checkpoint,
    check_text_records,
    check_token_matrix,
    check_token_stream,
)


class CorpusCleaner(BaseEstimator, TransformerMixin):
    """Drop noisy records from a text corpus (HTML-heavy, too short, too
    symbol-laden, duplicated) and strip tags from the survivors.

    The transformer is stateless; ``transform`` returns the surviving
    records in input order and stores the run's :class:`CleanStats` on
    ``stats_``.
    """

    def __init__(
        self,
        short_threshold: int = 5,
        ratio_threshold: float = 0.10,
        html_strip_threshold: float = 0.30,
        jobs: int = 1,
    ):
        self.short_threshold = short_threshold
        self.ratio_threshold = ratio_threshold
        self.html_strip_threshold = html_strip_threshold
        self.jobs = jobs

    def fit(self, X=None, y=None):
        return self

    def transform(self, X) -> list[str]:
        records = check_text_records(X)
        output, stats = clean_stream(
            records,
            short_threshold=self.short_threshold,
            ratio_threshold=self.ratio_threshold,
            html_threshold=self.html_strip_threshold,
            jobs=self.jobs,
        )
        self.stats_ = stats
        return output


class LayerTruncator(BaseEstimator, TransformerMixin):
    """Build a shallower student checkpoint from a teacher checkpoint.

    ``fit`` computes the layer plan from the teacher's depth, ``transform``
    copies the planned layers. The plan is exposed on ``plan_``.
    """

    def __init__(self, strategy: str = "pseudo_uniform", student_layers: int = 2, seed: int = 0):
        self.strategy = strategy
        self.student_layers = student_layers
        self.seed = seed

    def fit(self, X: Checkpoint, y=None):
        teacher = check_checkpoint(X)
        self.plan_ = plan_layers(
            self.strategy, teacher.config.n_layers, self.student_layers, seed=self.seed
        )
        return self

    def transform(self, X: Checkpoint) -> Checkpoint:
        if not hasattr(self, "plan_"):
            raise NotFittedError("LayerTruncator must be fit on a teacher checkpoint first")
        return truncate(check_checkpoint(X), self.plan_)


class DistilledLM(BaseEstimator):
    """Train a small causal language model, optionally distilled.

    ``fit(X)`` takes a flat token stream. When a ``teacher`` checkpoint is
    given, the student is initialized by layer truncation and, for the KD
    methods, trained against the teacher; otherwise it trains from scratch.
    ``score`` returns the negative mean per-token NLL (higher is better),
    ``perplexity`` the conventional exponentiated form.
    """

    def __init__(
        self,
        teacher: Checkpoint | None = None,
        method: str = "none",
        strategy: str = "pseudo_uniform",
        n_layers: int = 2,
        n_heads: int = 4,
        d_model: int = 64,
        vocab_size: int = 256,
        max_seq_len: int = 64,
        learning_rate: float = 1e-3,
        steps: int = 200,
        batch_size: int = 8,
        optimizer: str = "adam",
        seed: int = 0,
        lambda_kd: float = 0.5,
        temperature: float = 2.0,
        anneal_max: int = 4,
        mask_ratio: float = 0.3,
        rail_weight: float = 1.0,
        rail_reseed_each_epoch: bool = True,
        alpha: float = 0.1,
        a: float = 0.9,
        steps_per_epoch: int = 50,
    ):
        self.teacher = teacher
        self.method = method
        self.strategy = strategy
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.d_model = d_model
        self.vocab_size = vocab_size
        self.max_seq_len = max_seq_len
        self.learning_rate = learning_rate
        self.steps = steps
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.seed = seed
        self.lambda_kd = lambda_kd
        self.temperature = temperature
        self.anneal_max = anneal_max
        self.mask_ratio = mask_ratio
        self.rail_weight = rail_weight
        self.rail_reseed_each_epoch = rail_reseed_each_epoch
        self.alpha = alpha
        self.a = a
        self.steps_per_epoch = steps_per_epoch

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            steps=self.steps,
            batch_size=self.batch_size,
            seed=self.seed,
            optimizer=self.optimizer,
        )

    def _initial_student(self) -> Checkpoint:
        if self.teacher is None:
            config = ModelConfig(
                n_layers=self.n_layers,
                n_heads=self.n_heads,
                d_model=self.d_model,
                vocab_size=self.vocab_size,
                max_seq_len=self.max_seq_len,
            )
            return init_checkpoint(config, self.seed)
        plan = plan_layers(
            self.strategy, self.teacher.config.n_layers, self.n_layers, seed=self.seed
        )
        return truncate(self.teacher, plan)

    def fit(self, X, y=None):
        student = self._initial_student()
        corpus = check_token_stream(X, student.config.vocab_size)
        cfg = self._train_config()
        dcfg = DistillConfig(
            lambda_kd=self.lambda_kd,
            temperature=self.temperature,
            anneal_max=self.anneal_max,
            mask_ratio=self.mask_ratio,
            rail_weight=self.rail_weight,
            rail_reseed_each_epoch=self.rail_reseed_each_epoch,
        )
        method = self.method
        teacher = self.teacher
        if method == "self_kd":
            teacher = build_self_teacher(student, corpus, cfg)
            method = "vanilla_kd"
        smoothing = None
        if method in ("ls", "tf_reg"):
            smoothing = SmoothingSpec(
                alpha=self.alpha, a=self.a,
                num_classes=student.config.vocab_size, mode=method,
            )
        loss_fn = make_step_fn(
            method,
            student.config,
            dcfg,
            teacher=teacher if method not in ("none", "ls", "tf_reg") else None,
            smoothing=smoothing,
            train_cfg=cfg,
            steps_per_epoch=self.steps_per_epoch,
            seed=self.seed,
        )
        self.checkpoint_, self.loss_log_ = train(student, corpus, cfg, loss_fn=loss_fn)
        return self

    def _require_fitted(self) -> Checkpoint:
        if not hasattr(self, "checkpoint_"):
            raise NotFittedError("DistilledLM must be fit before use")
        return self.checkpoint_

    def predict(self, X) -> np.ndarray:
        """Greedy next-token ids for every position of [batch, seq] inputs."""
        ckpt = self._require_fitted()
        tokens = check_token_matrix(X, ckpt.config.vocab_size)
        return forward(ckpt, tokens).logits.argmax(axis=-1)

    def predict_proba(self, X) -> np.ndarray:
        ckpt = self._require_fitted()
        tokens = check_token_matrix(X, ckpt.config.vocab_size)
        return softmax(forward(ckpt, tokens).logits)

    def perplexity(self, X) -> float:
        ckpt = self._require_fitted()
        return perplexity(ckpt, check_token_stream(X, ckpt.config.vocab_size))

    def score(self, X, y=None) -> float:
        """Negative mean per-token NLL (log of 1/perplexity)."""
        return -float(np.log(self.perplexity(X)))
