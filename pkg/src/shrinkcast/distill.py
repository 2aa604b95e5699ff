"""Training-signal constructions: four teacher-based and three teacher-free.

Teacher-based: vanilla logit distillation (temperature-scaled KL mixed with
cross-entropy), annealed logit regression (MSE against a teacher scaled from
soft to sharp), adversarial input perturbation (a generator maximizes
teacher/student divergence, the student then minimizes it), and
intermediate-layer matching on randomly drawn layer pairs.

Teacher-free: label smoothing, its label-dependent generalization, and
self-distillation from a frozen fine-tuned copy of the student.

Every loss returns its scalar value together with analytic gradients;
teacher logits and hidden states are always treated as constants. All
functions are pure; the adversarial max/min alternation is sequential
within a training step by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint, ModelConfig
from .model import (
    ForwardTrace,
    backward,
    forward_with_cache,
    lm_loss,
    log_softmax,
    params_from_checkpoint,
    softmax,
)
from .planner import random_k
from .training import TrainConfig, make_optimizer, train

SOFT_SAMPLE_TAU = 1.0  # relaxation temperature for the adversarial generator


@dataclass(frozen=True)
class SmoothingSpec:
    """Parameters for label smoothing ("ls") and its TF-reg variant ("tf_reg")."""

    alpha: float
    num_classes: int
    mode: str = "ls"
    a: float = 1.0  # probability mass on the correct class (tf_reg only)

    def validate(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.a <= 1.0:
            raise ValueError(f"a must lie in [0, 1], got {self.a}")
        if self.mode not in ("ls", "tf_reg"):
            raise ValueError(f"unknown smoothing mode {self.mode!r}")
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        if self.mode == "tf_reg" and self.num_classes < 2:
            raise ValueError("tf_reg needs at least 2 classes")


@dataclass(frozen=True)
class DistillConfig:
    lambda_kd: float = 0.5
    temperature: float = 2.0
    anneal_max: int = 4
    mask_ratio: float = 0.3
    rail_weight: float = 1.0
    rail_reseed_each_epoch: bool = True

    def validate(self) -> None:
        if not 0.0 <= self.lambda_kd <= 1.0:
            raise ValueError("lambda_kd must lie in [0, 1]")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.anneal_max < 1:
            raise ValueError("anneal_max must be >= 1")
        if not 0.0 < self.mask_ratio < 1.0:
            raise ValueError("mask_ratio must lie in (0, 1)")
        if self.rail_weight < 0:
            raise ValueError("rail_weight must be >= 0")


def _check_one_hot(y: np.ndarray, num_classes: int) -> int:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (num_classes,):
        raise ValueError(f"expected a length-{num_classes} vector, got shape {y.shape}")
    ones = np.flatnonzero(y == 1.0)
    if len(ones) != 1 or not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("label vector must be one-hot")
    return int(ones[0])


def smooth_labels(y: np.ndarray, spec: SmoothingSpec) -> np.ndarray:
    """Mix a one-hot label with the uniform distribution: (1-a)y + a/K."""
    spec.validate()
    if spec.mode != "ls":
        raise ValueError("smooth_labels requires an 'ls' spec")
    _check_one_hot(y, spec.num_classes)
    y = np.asarray(y, dtype=np.float64)
    return (1.0 - spec.alpha) * y + spec.alpha / spec.num_classes


def tfreg_labels(y: np.ndarray, spec: SmoothingSpec) -> np.ndarray:
    """Mix a one-hot label with a peaked label-dependent distribution.

    The mixed-in distribution puts ``a`` on the correct class and spreads
    the remaining mass uniformly over the other K-1 classes.
    """
    spec.validate()
    if spec.mode != "tf_reg":
        raise ValueError("tfreg_labels requires a 'tf_reg' spec")
    correct = _check_one_hot(y, spec.num_classes)
    y = np.asarray(y, dtype=np.float64)
    p = np.full(spec.num_classes, (1.0 - spec.a) / (spec.num_classes - 1))
    p[correct] = spec.a
    return (1.0 - spec.alpha) * y + spec.alpha * p


def smoothed_lm_loss(
    trace: ForwardTrace, targets: np.ndarray, spec: SmoothingSpec
) -> tuple[float, np.ndarray]:
    """Cross-entropy against smoothed next-token labels, vectorized."""
    spec.validate()
    logits = trace.logits
    vocab = logits.shape[-1]
    if spec.num_classes != vocab:
        raise ValueError(f"spec has {spec.num_classes} classes but vocab is {vocab}")
    targets = np.asarray(targets, dtype=np.int64)
    if spec.mode == "ls":
        off = spec.alpha / vocab
        on = (1.0 - spec.alpha) + off
    else:
        off = spec.alpha * (1.0 - spec.a) / (vocab - 1)
        on = (1.0 - spec.alpha) + spec.alpha * spec.a
    smoothed = np.full(logits.shape, off)
    b_idx, t_idx = np.indices(targets.shape)
    smoothed[b_idx, t_idx, targets] = on
    logp = log_softmax(logits)
    n = targets.size
    loss = -(smoothed * logp).sum() / n
    d_logits = (softmax(logits) - smoothed) / n
    return float(loss), d_logits


def _kl_and_grads(z_t: np.ndarray, z_s: np.ndarray):
    """KL(softmax(z_t) || softmax(z_s)), meaned over positions.

    Returns (kl, d_z_s, d_z_t); the teacher gradient is needed only by the
    adversarial generator, which differentiates through both models' inputs.
    """
    logp_t = log_softmax(z_t)
    logp_s = log_softmax(z_s)
    p_t = np.exp(logp_t)
    gap = logp_t - logp_s
    per_position = (p_t * gap).sum(axis=-1)
    n = per_position.size
    kl = float(per_position.sum() / n)
    d_z_s = (np.exp(logp_s) - p_t) / n
    d_z_t = p_t * (gap - per_position[..., None]) / n
    return kl, d_z_s, d_z_t


def vanilla_kd_loss(
    z_s: np.ndarray, z_t: np.ndarray, y: np.ndarray, cfg: DistillConfig
) -> tuple[float, np.ndarray, dict[str, float]]:
    """(1-lambda) CE(y) + lambda T^2 KL(teacher/T || student/T).

    Gradient flows to the student logits only. Returns
    (loss, d_z_s, components).
    """
    cfg.validate()
    z_s = np.asarray(z_s, dtype=np.float64)
    z_t = np.asarray(z_t, dtype=np.float64)
    if z_s.shape != z_t.shape:
        raise ValueError(f"logit shapes differ: {z_s.shape} vs {z_t.shape}")
    y = np.asarray(y, dtype=np.int64)
    if y.shape != z_s.shape[:-1]:
        raise ValueError(f"targets shape {y.shape} does not match logits {z_s.shape}")

    n = y.size
    flat = z_s.reshape(n, -1)
    logp = log_softmax(flat)
    ce = float(-logp[np.arange(n), y.ravel()].sum() / n)
    d_ce = softmax(flat)
    d_ce[np.arange(n), y.ravel()] -= 1.0
    d_ce = d_ce.reshape(z_s.shape) / n

    temp = cfg.temperature
    kl, d_kl_s, _ = _kl_and_grads(z_t / temp, z_s / temp)
    lam = cfg.lambda_kd
    loss = (1.0 - lam) * ce + lam * temp**2 * kl
    d_z_s = (1.0 - lam) * d_ce + lam * temp * d_kl_s
    return loss, d_z_s, {"ce": ce, "kl": kl}


def annealing_loss(
    z_s: np.ndarray, z_t: np.ndarray, epoch: int, cfg: DistillConfig
) -> tuple[float, np.ndarray]:
    """Phase-1 annealed logit regression: MSE(z_s, phi * z_t), phi = epoch/max.

    Only defined while annealing (epoch <= anneal_max); afterwards training
    switches to plain ground-truth cross-entropy and this loss is not used.
    """
    cfg.validate()
    if epoch < 1:
        raise ValueError(f"epoch must be >= 1, got {epoch}")
    if epoch > cfg.anneal_max:
        raise ValueError(
            f"epoch {epoch} is past the annealing phase (anneal_max={cfg.anneal_max}); "
            "train on ground-truth labels instead"
        )
    z_s = np.asarray(z_s, dtype=np.float64)
    z_t = np.asarray(z_t, dtype=np.float64)
    if z_s.shape != z_t.shape:
        raise ValueError(f"logit shapes differ: {z_s.shape} vs {z_t.shape}")
    phi = epoch / cfg.anneal_max
    diff = z_s - phi * z_t
    loss = float((diff**2).mean())
    return loss, 2.0 * diff / diff.size


@dataclass
class RailProjections:
    """Per-pair learned linear maps into the shared comparison space."""

    teacher: list[np.ndarray]  # each [teacher_d_model, proj_dim]
    student: list[np.ndarray]  # each [student_d_model, proj_dim]


def identity_projections(d_model: int, n_pairs: int) -> RailProjections:
    return RailProjections(
        teacher=[np.eye(d_model) for _ in range(n_pairs)],
        student=[np.eye(d_model) for _ in range(n_pairs)],
    )


def pooled_normalized(hidden: np.ndarray) -> np.ndarray:
    """Sequence-mean-pool then L2-normalize each row; scale-invariant."""
    pooled = hidden.mean(axis=1)
    norms = np.linalg.norm(pooled, axis=-1, keepdims=True)
    return pooled / np.maximum(norms, 1e-12)


@dataclass
class RailGrads:
    d_student_hidden: list  # aligned with trace.hidden_states, None where unused
    d_proj_teacher: list[np.ndarray]
    d_proj_student: list[np.ndarray]


def rail_loss(
    student_trace: ForwardTrace,
    teacher_trace: ForwardTrace,
    pairing: list[tuple[int, int]],
    projections: RailProjections,
) -> tuple[float, RailGrads]:
    """Mean squared distance between projected pooled-normalized hidden states.

    ``pairing`` lists (teacher layer, student layer) block indices, teacher
    side ascending, one pair per student layer. Teacher hidden states are
    constants; gradients cover the student hidden states and both projection
    sets.
    """
    n_student_layers = len(student_trace.hidden_states) - 1
    if len(pairing) != n_student_layers:
        raise ValueError(
            f"pairing has {len(pairing)} pairs, student has {n_student_layers} layers"
        )
    teacher_idx = [t for t, _ in pairing]
    if teacher_idx != sorted(set(teacher_idx)):
        raise ValueError("teacher indices must be strictly ascending")
    if len(projections.teacher) != len(pairing) or len(projections.student) != len(pairing):
        raise ValueError("need one projection per pair on both sides")

    n_pairs = len(pairing)
    loss = 0.0
    d_hidden: list = [None] * len(student_trace.hidden_states)
    d_proj_t = []
    d_proj_s = []
    for j, (t_idx, s_idx) in enumerate(pairing):
        if not 0 <= t_idx < len(teacher_trace.hidden_states) - 1:
            raise ValueError(f"teacher layer {t_idx} out of range")
        if not 0 <= s_idx < n_student_layers:
            raise ValueError(f"student layer {s_idx} out of range")
        h_t = teacher_trace.hidden_states[t_idx + 1]
        h_s = student_trace.hidden_states[s_idx + 1]
        batch, seq_len = h_s.shape[0], h_s.shape[1]

        pooled_s = h_s.mean(axis=1)
        norms_s = np.maximum(np.linalg.norm(pooled_s, axis=-1, keepdims=True), 1e-12)
        u_s = pooled_s / norms_s
        u_t = pooled_normalized(h_t)
        w_t = projections.teacher[j]
        w_s = projections.student[j]
        p_t = u_t @ w_t
        p_s = u_s @ w_s

        diff = p_s - p_t
        loss += float((diff**2).sum() / batch) / n_pairs

        d_p_s = 2.0 * diff / (batch * n_pairs)
        d_proj_s.append(u_s.T @ d_p_s)
        d_proj_t.append(u_t.T @ (-d_p_s))
        d_u_s = d_p_s @ w_s.T
        # normalize backward: u = y/|y|  =>  d_y = (d_u - u (u . d_u)) / |y|
        d_pooled = (d_u_s - u_s * (u_s * d_u_s).sum(axis=-1, keepdims=True)) / norms_s
        contribution = np.repeat(d_pooled[:, None, :], seq_len, axis=1) / seq_len
        if d_hidden[s_idx + 1] is None:
            d_hidden[s_idx + 1] = contribution
        else:
            d_hidden[s_idx + 1] = d_hidden[s_idx + 1] + contribution
    return loss, RailGrads(d_hidden, d_proj_t, d_proj_s)


def _draw_mask(
    rng: np.random.Generator, batch: int, seq_len: int, mask_ratio: float
) -> np.ndarray:
    n_masked = math.ceil(mask_ratio * seq_len)
    if n_masked < 1 or n_masked > seq_len:
        raise ValueError(
            f"mask of {n_masked} positions is degenerate for sequence length {seq_len}"
        )
    return np.stack(
        [np.sort(rng.choice(seq_len, size=n_masked, replace=False)) for _ in range(batch)]
    )


def _soft_inputs(tok_emb: np.ndarray, tokens: np.ndarray, positions: np.ndarray, q: np.ndarray):
    """Token embeddings with soft mixtures substituted at masked positions."""
    embeds = tok_emb[tokens]
    batch_idx = np.arange(tokens.shape[0])[:, None]
    embeds[batch_idx, positions] = q @ tok_emb
    return embeds


def mate_max_objective(
    gen_params: dict,
    gen_config: ModelConfig,
    teacher_params: dict,
    teacher_config: ModelConfig,
    student_params: dict,
    student_config: ModelConfig,
    tokens: np.ndarray,
    cfg: DistillConfig,
    seed: int = 0,
):
    """Generator objective -KL(teacher || student) on softly perturbed input.

    A seeded mask picks ceil(mask_ratio * seq) positions per row. The
    generator's logits at a masked position propose its replacement token; a
    temperature-1 relaxed sample over that proposal feeds both models as a
    soft embedding mixture, keeping the objective differentiable in the
    generator parameters. Returns (objective, generator grads, hard
    perturbed tokens, components).
    """
    cfg.validate()
    tokens = np.asarray(tokens, dtype=np.int64)
    batch, seq_len = tokens.shape
    rng = np.random.default_rng(seed)
    positions = _draw_mask(rng, batch, seq_len, cfg.mask_ratio)
    n_masked = positions.shape[1]

    gen_trace, gen_cache = forward_with_cache(gen_params, gen_config, tokens)
    batch_idx = np.arange(batch)[:, None]
    proposal_logits = gen_trace.logits[batch_idx, positions]  # [B, n_masked, V]
    uniform = rng.uniform(1e-12, 1.0 - 1e-12, size=proposal_logits.shape)
    gumbel = -np.log(-np.log(uniform))
    q = softmax((proposal_logits + gumbel) / SOFT_SAMPLE_TAU)

    perturbed = tokens.copy()
    perturbed[batch_idx, positions] = q.argmax(axis=-1)

    teacher_in = _soft_inputs(teacher_params["tok_emb"], tokens, positions, q)
    student_in = _soft_inputs(student_params["tok_emb"], tokens, positions, q)
    t_trace, t_cache = forward_with_cache(teacher_params, teacher_config, input_embeds=teacher_in)
    s_trace, s_cache = forward_with_cache(student_params, student_config, input_embeds=student_in)

    kl, d_z_s, d_z_t = _kl_and_grads(t_trace.logits, s_trace.logits)
    objective = -kl
    _, d_teacher_in = backward(t_cache, d_logits=-d_z_t, want_input_grad=True)
    _, d_student_in = backward(s_cache, d_logits=-d_z_s, want_input_grad=True)

    d_q = (
        d_teacher_in[batch_idx, positions] @ teacher_params["tok_emb"].T
        + d_student_in[batch_idx, positions] @ student_params["tok_emb"].T
    )
    d_pre = q * (d_q - (d_q * q).sum(axis=-1, keepdims=True)) / SOFT_SAMPLE_TAU
    d_gen_logits = np.zeros_like(gen_trace.logits)
    d_gen_logits[batch_idx, positions] = d_pre
    gen_grads, _ = backward(gen_cache, d_logits=d_gen_logits)
    info = {"divergence": kl, "n_masked": n_masked, "mask_positions": positions}
    return objective, gen_grads, perturbed, info


def mate_max_step(
    generator: Checkpoint,
    teacher: Checkpoint,
    student: Checkpoint,
    tokens: np.ndarray,
    cfg: DistillConfig,
    seed: int = 0,
):
    """Checkpoint-level wrapper around :func:`mate_max_objective`."""
    return mate_max_objective(
        params_from_checkpoint(generator),
        generator.config,
        params_from_checkpoint(teacher),
        teacher.config,
        params_from_checkpoint(student),
        student.config,
        tokens,
        cfg,
        seed=seed,
    )


def mate_min_objective(
    student_params: dict,
    student_config: ModelConfig,
    teacher_params: dict,
    teacher_config: ModelConfig,
    tokens: np.ndarray,
    perturbed_tokens: np.ndarray,
    targets: np.ndarray,
    cfg: DistillConfig,
):
    """Student loss: CE on clean input plus teacher KL averaged over clean
    and perturbed inputs. Returns (loss, student grads, components)."""
    cfg.validate()
    tokens = np.asarray(tokens, dtype=np.int64)
    perturbed_tokens = np.asarray(perturbed_tokens, dtype=np.int64)
    if perturbed_tokens.shape != tokens.shape:
        raise ValueError("perturbed tokens must match the original shape")

    s_trace_o, s_cache_o = forward_with_cache(student_params, student_config, tokens)
    s_trace_p, s_cache_p = forward_with_cache(student_params, student_config, perturbed_tokens)
    t_logits_o = forward_with_cache(teacher_params, teacher_config, tokens)[0].logits
    t_logits_p = forward_with_cache(teacher_params, teacher_config, perturbed_tokens)[0].logits

    ce, d_ce = lm_loss(s_trace_o, targets)
    kl_o, d_kl_o, _ = _kl_and_grads(t_logits_o, s_trace_o.logits)
    kl_p, d_kl_p, _ = _kl_and_grads(t_logits_p, s_trace_p.logits)
    loss = ce + 0.5 * (kl_o + kl_p)
    grads_o, _ = backward(s_cache_o, d_logits=d_ce + 0.5 * d_kl_o)
    grads_p, _ = backward(s_cache_p, d_logits=0.5 * d_kl_p)
    grads = {name: grads_o[name] + grads_p[name] for name in grads_o}
    return loss, grads, {"ce": ce, "kl_orig": kl_o, "kl_pert": kl_p}


def mate_min_step(
    student: Checkpoint,
    teacher: Checkpoint,
    tokens: np.ndarray,
    perturbed_tokens: np.ndarray,
    targets: np.ndarray,
    cfg: DistillConfig,
):
    """Checkpoint-level wrapper around :func:`mate_min_objective`."""
    return mate_min_objective(
        params_from_checkpoint(student),
        student.config,
        params_from_checkpoint(teacher),
        teacher.config,
        tokens,
        perturbed_tokens,
        targets,
        cfg,
    )


def build_self_teacher(
    student_init: Checkpoint, corpus: np.ndarray, cfg: TrainConfig
) -> Checkpoint:
    """Fine-tune a copy of the student and freeze it for use as a teacher."""
    trained, _ = train(student_init, corpus, cfg)
    for arr in trained.tensors.values():
        arr.flags.writeable = False
    return trained


DISTILL_METHODS = (
    "none",
    "vanilla_kd",
    "annealing_kd",
    "mate_kd",
    "rail_kd",
    "ls",
    "tf_reg",
    "self_kd",
)


def make_step_fn(
    method: str,
    student_config: ModelConfig,
    dcfg: DistillConfig,
    teacher: Checkpoint | None = None,
    smoothing: SmoothingSpec | None = None,
    train_cfg: TrainConfig | None = None,
    steps_per_epoch: int = 50,
    seed: int = 0,
):
    """Build a pluggable loss function for :func:`shrinkcast.training.train`.

    ``self_kd`` is not handled here: callers first build the frozen teacher
    with :func:`build_self_teacher` and then distill with ``vanilla_kd``.
    Epochs for the annealing schedule and layer-pair reseeding advance every
    ``steps_per_epoch`` steps. The adversarial generator and the layer-pair
    projections are internal learners updated with ``train_cfg``'s optimizer
    settings.
    """
    dcfg.validate()
    if method == "none":
        return None
    if method in ("ls", "tf_reg"):
        if smoothing is None:
            raise ValueError(f"{method} requires a SmoothingSpec")

        def smoothed_fn(params, tokens, targets, step):
            trace, cache = forward_with_cache(params, student_config, tokens)
            loss, d_logits = smoothed_lm_loss(trace, targets, smoothing)
            grads, _ = backward(cache, d_logits=d_logits)
            return loss, grads, {}

        return smoothed_fn

    if teacher is None:
        raise ValueError(f"method {method!r} requires a teacher checkpoint")
    teacher_params = params_from_checkpoint(teacher)
    teacher_config = teacher.config

    def epoch_of(step: int) -> int:
        return 1 + step // steps_per_epoch

    if method == "vanilla_kd":

        def vanilla_fn(params, tokens, targets, step):
            s_trace, s_cache = forward_with_cache(params, student_config, tokens)
            t_logits = forward_with_cache(teacher_params, teacher_config, tokens)[0].logits
            loss, d_logits, parts = vanilla_kd_loss(s_trace.logits, t_logits, targets, dcfg)
            grads, _ = backward(s_cache, d_logits=d_logits)
            return loss, grads, parts

        return vanilla_fn

    if method == "annealing_kd":

        def annealing_fn(params, tokens, targets, step):
            s_trace, s_cache = forward_with_cache(params, student_config, tokens)
            epoch = epoch_of(step)
            if epoch <= dcfg.anneal_max:
                t_logits = forward_with_cache(teacher_params, teacher_config, tokens)[0].logits
                loss, d_logits = annealing_loss(s_trace.logits, t_logits, epoch, dcfg)
                parts = {"mse": loss, "phase": 1.0}
            else:
                loss, d_logits = lm_loss(s_trace, targets)
                parts = {"ce": loss, "phase": 2.0}
            grads, _ = backward(s_cache, d_logits=d_logits)
            return loss, grads, parts

        return annealing_fn

    if method == "rail_kd":
        n_pairs = student_config.n_layers
        projections = RailProjections(
            teacher=[np.eye(teacher_config.d_model, student_config.d_model)
                     for _ in range(n_pairs)],
            student=[np.eye(student_config.d_model) for _ in range(n_pairs)],
        )
        proj_params = {f"t.{j}": projections.teacher[j] for j in range(n_pairs)}
        proj_params.update({f"s.{j}": projections.student[j] for j in range(n_pairs)})
        opt_cfg = train_cfg if train_cfg is not None else TrainConfig(1e-3, 1, 1, seed)
        proj_opt = make_optimizer(proj_params, opt_cfg)
        state = {"epoch": None, "pairing": None}

        def pairing_for(epoch: int) -> list[tuple[int, int]]:
            draw_seed = seed + epoch if dcfg.rail_reseed_each_epoch else seed
            plan = random_k(teacher_config.n_layers, student_config.n_layers, draw_seed)
            return list(zip(plan.selection, range(student_config.n_layers)))

        def rail_fn(params, tokens, targets, step):
            epoch = epoch_of(step)
            if state["epoch"] != epoch:
                state["epoch"] = epoch
                state["pairing"] = pairing_for(epoch)
            s_trace, s_cache = forward_with_cache(params, student_config, tokens)
            t_trace, _ = forward_with_cache(teacher_params, teacher_config, tokens)
            kd, d_logits, parts = vanilla_kd_loss(s_trace.logits, t_trace.logits, targets, dcfg)
            hidden, rail_grads = rail_loss(s_trace, t_trace, state["pairing"], projections)
            loss = kd + dcfg.rail_weight * hidden
            d_hidden = [
                None if g is None else dcfg.rail_weight * g
                for g in rail_grads.d_student_hidden
            ]
            grads, _ = backward(s_cache, d_logits=d_logits, d_hidden_states=d_hidden)
            proj_grads = {
                f"t.{j}": dcfg.rail_weight * g
                for j, g in enumerate(rail_grads.d_proj_teacher)
            }
            proj_grads.update(
                {
                    f"s.{j}": dcfg.rail_weight * g
                    for j, g in enumerate(rail_grads.d_proj_student)
                }
            )
            proj_opt.update(proj_params, proj_grads)
            parts = dict(parts, rail=hidden)
            return loss, grads, parts

        return rail_fn

    if method == "mate_kd":
        from .model import init_checkpoint

        generator = init_checkpoint(student_config, seed + 7919)
        gen_params = params_from_checkpoint(generator)
        opt_cfg = train_cfg if train_cfg is not None else TrainConfig(1e-3, 1, 1, seed)
        gen_opt = make_optimizer(gen_params, opt_cfg)

        def mate_fn(params, tokens, targets, step):
            objective, gen_grads, perturbed, info = mate_max_objective(
                gen_params,
                student_config,
                teacher_params,
                teacher_config,
                params,
                student_config,
                tokens,
                dcfg,
                seed=seed + step,
            )
            gen_opt.update(gen_params, gen_grads)
            loss, grads, parts = mate_min_objective(
                params,
                student_config,
                teacher_params,
                teacher_config,
                tokens,
                perturbed,
                targets,
                dcfg,
            )
            parts = dict(parts, gen_objective=objective, divergence=info["divergence"])
            return loss, grads, parts

        return mate_fn

    raise ValueError(f"unknown distillation method {method!r} (choose from {DISTILL_METHODS})")
