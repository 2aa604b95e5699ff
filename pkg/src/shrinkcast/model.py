"""From-scratch decoder-only transformer with hand-derived gradients.

Pre-norm blocks with learned positional embeddings, causal self-attention,
GELU MLPs and an untied LM head. The forward pass exposes every block's
hidden state (needed for intermediate-layer distillation) and keeps the
intermediates required to run the hand-written backward pass, so no autodiff
framework is involved.

All math runs in float64 regardless of the float32 checkpoint storage; the
round-trip float32 -> float64 -> float32 is exact, which keeps zero-update
training runs bitwise stable.

Forward and loss evaluation are pure functions of (checkpoint, inputs) and
safe to run concurrently on shared checkpoints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .checkpoint import (
    Checkpoint,
    ModelConfig,
    layer_tensor_name,
    required_tensor_shapes,
    validate_against_config,
)

LN_EPS = 1e-5
_GELU_C = np.sqrt(2.0 / np.pi)


@dataclass
class ForwardTrace:
    """Logits plus the embedding output and every block output."""

    logits: np.ndarray  # [batch, seq, vocab]
    hidden_states: list[np.ndarray]  # n_layers + 1 arrays of [batch, seq, d_model]


@dataclass
class ClassifierHead:
    """Linear map from the last-token hidden state to K class logits."""

    weight: np.ndarray  # [d_model, n_classes]
    bias: np.ndarray  # [n_classes]


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * x**3)))


def _gelu_grad(x: np.ndarray) -> np.ndarray:
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * _GELU_C * (1.0 + 3 * 0.044715 * x**2)


def _layernorm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray):
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mean) * inv_std
    return gamma * xhat + beta, (xhat, inv_std, gamma)


def _layernorm_backward(d_out: np.ndarray, cache) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv_std, gamma = cache
    d_gamma = (d_out * xhat).sum(axis=tuple(range(d_out.ndim - 1)))
    d_beta = d_out.sum(axis=tuple(range(d_out.ndim - 1)))
    d_xhat = d_out * gamma
    d_x = inv_std * (
        d_xhat
        - d_xhat.mean(axis=-1, keepdims=True)
        - xhat * (d_xhat * xhat).mean(axis=-1, keepdims=True)
    )
    return d_x, d_gamma, d_beta


def _matmul_param_grads(x: np.ndarray, d_out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Weight and bias gradients for y = x @ W + b with leading batch dims."""
    x2d = x.reshape(-1, x.shape[-1])
    d2d = d_out.reshape(-1, d_out.shape[-1])
    return x2d.T @ d2d, d2d.sum(axis=0)


def params_from_checkpoint(ckpt: Checkpoint) -> dict[str, np.ndarray]:
    """Float64 working copies of all tensors, validated against the config."""
    violations = validate_against_config(ckpt)
    if violations:
        raise ValueError(f"checkpoint incomplete: {'; '.join(violations)}")
    return {name: arr.astype(np.float64) for name, arr in ckpt.tensors.items()}


def checkpoint_from_params(config: ModelConfig, params: dict[str, np.ndarray]) -> Checkpoint:
    return Checkpoint(
        config=config,
        tensors={name: arr.astype(np.float32) for name, arr in params.items()},
    )


def init_checkpoint(config: ModelConfig, seed: int) -> Checkpoint:
    """Random checkpoint: N(0, 0.02) weights, unit norms, zero biases."""
    config.validate()
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in sorted(required_tensor_shapes(config).items()):
        if name.endswith(("gamma",)):
            arr = np.ones(shape)
        elif name.endswith(("beta", "b_qkv", "b_out", "b_in")):
            arr = np.zeros(shape)
        else:
            arr = rng.normal(0.0, 0.02, size=shape)
        tensors[name] = arr.astype(np.float32)
    return Checkpoint(config=config, tensors=tensors)


def _check_tokens(tokens: np.ndarray, config: ModelConfig) -> np.ndarray:
    tokens = np.asarray(tokens)
    if tokens.ndim != 2:
        raise ValueError(f"tokens must be [batch, seq], got shape {tokens.shape}")
    if not np.issubdtype(tokens.dtype, np.integer):
        raise ValueError(f"tokens must be integers, got dtype {tokens.dtype}")
    if tokens.shape[1] > config.max_seq_len:
        raise ValueError(
            f"sequence length {tokens.shape[1]} exceeds max_seq_len {config.max_seq_len}"
        )
    if tokens.size and (tokens.min() < 0 or tokens.max() >= config.vocab_size):
        raise ValueError(f"token ids must lie in [0, {config.vocab_size - 1}]")
    return tokens.astype(np.int64)


def forward_with_cache(
    params: dict[str, np.ndarray],
    config: ModelConfig,
    tokens: np.ndarray | None = None,
    input_embeds: np.ndarray | None = None,
):
    """Run the model and keep the intermediates needed by :func:`backward`.

    Exactly one of ``tokens`` and ``input_embeds`` must be given;
    ``input_embeds`` bypasses the token-embedding lookup (the adversarial
    generator feeds soft embedding mixes through this path) while positional
    embeddings are still added.
    """
    if (tokens is None) == (input_embeds is None):
        raise ValueError("provide exactly one of tokens or input_embeds")
    if tokens is not None:
        tokens = _check_tokens(tokens, config)
        x = params["tok_emb"][tokens]
        seq_len = tokens.shape[1]
    else:
        x = np.asarray(input_embeds, dtype=np.float64)
        seq_len = x.shape[1]
        if seq_len > config.max_seq_len:
            raise ValueError(
                f"sequence length {seq_len} exceeds max_seq_len {config.max_seq_len}"
            )
    x = x + params["pos_emb"][:seq_len]

    n_heads = config.n_heads
    head_dim = config.d_model // n_heads
    causal = np.tril(np.ones((seq_len, seq_len), dtype=bool))
    hidden_states = [x]
    layer_caches = []
    for i in range(config.n_layers):
        p = lambda suffix: params[layer_tensor_name(i, suffix)]
        x_in = x
        h1, ln1_cache = _layernorm(x_in, p("ln1.gamma"), p("ln1.beta"))
        qkv = h1 @ p("attn.w_qkv") + p("attn.b_qkv")
        B, T, D = h1.shape
        q, k, v = (
            part.reshape(B, T, n_heads, head_dim).transpose(0, 2, 1, 3)
            for part in np.split(qkv, 3, axis=-1)
        )
        scores = (q @ k.transpose(0, 1, 3, 2)) / np.sqrt(head_dim)
        scores = np.where(causal, scores, -np.inf)
        att = softmax(scores)
        ctx = (att @ v).transpose(0, 2, 1, 3).reshape(B, T, D)
        attn_out = ctx @ p("attn.w_out") + p("attn.b_out")
        x_mid = x_in + attn_out

        h2, ln2_cache = _layernorm(x_mid, p("ln2.gamma"), p("ln2.beta"))
        u = h2 @ p("mlp.w_in") + p("mlp.b_in")
        a = _gelu(u)
        mlp_out = a @ p("mlp.w_out") + p("mlp.b_out")
        x = x_mid + mlp_out

        hidden_states.append(x)
        layer_caches.append(
            dict(h1=h1, ln1=ln1_cache, q=q, k=k, v=v, att=att, ctx=ctx,
                 h2=h2, ln2=ln2_cache, u=u, a=a)
        )

    hf, lnf_cache = _layernorm(x, params["ln_f.gamma"], params["ln_f.beta"])
    logits = hf @ params["lm_head"]
    trace = ForwardTrace(logits=logits, hidden_states=hidden_states)
    cache = dict(
        params=params,
        config=config,
        tokens=tokens,
        embedded_input=input_embeds is not None,
        hidden_states=hidden_states,
        layers=layer_caches,
        hf=hf,
        lnf=lnf_cache,
        head_dim=head_dim,
    )
    return trace, cache


def forward(ckpt: Checkpoint, tokens: np.ndarray) -> ForwardTrace:
    """Causal forward pass over token ids; see :class:`ForwardTrace`."""
    trace, _ = forward_with_cache(params_from_checkpoint(ckpt), ckpt.config, tokens)
    return trace


def backward(
    cache: dict,
    d_logits: np.ndarray | None = None,
    d_hidden_states: list[np.ndarray | None] | None = None,
    d_final_hidden: np.ndarray | None = None,
    want_input_grad: bool = False,
):
    """Gradients of a scalar loss for every parameter.

    The loss gradient enters through any combination of ``d_logits``,
    ``d_final_hidden`` (the post-final-norm hidden states) and
    ``d_hidden_states`` (one optional entry per element of
    ``trace.hidden_states``). Returns ``(grads, d_input_embeds)``; the second
    element is None unless ``want_input_grad`` is set.
    """
    params = cache["params"]
    config = cache["config"]
    grads = {name: np.zeros_like(arr) for name, arr in params.items()}
    hidden_states = cache["hidden_states"]
    hf = cache["hf"]

    d_hf = np.zeros_like(hf)
    if d_logits is not None:
        d_hf += d_logits @ params["lm_head"].T
        w_grad, _ = _matmul_param_grads(hf, d_logits)
        grads["lm_head"] += w_grad
    if d_final_hidden is not None:
        d_hf += d_final_hidden

    d_x, d_gamma, d_beta = _layernorm_backward(d_hf, cache["lnf"])
    grads["ln_f.gamma"] += d_gamma
    grads["ln_f.beta"] += d_beta

    head_dim = cache["head_dim"]
    for i in reversed(range(config.n_layers)):
        if d_hidden_states is not None and d_hidden_states[i + 1] is not None:
            d_x = d_x + d_hidden_states[i + 1]
        p = lambda suffix: params[layer_tensor_name(i, suffix)]
        g = lambda suffix: grads[layer_tensor_name(i, suffix)]
        lc = cache["layers"][i]
        B, T, D = d_x.shape

        # MLP sub-layer: x = x_mid + mlp(ln2(x_mid))
        d_mlp_out = d_x
        d_a = d_mlp_out @ p("mlp.w_out").T
        w_grad, b_grad = _matmul_param_grads(lc["a"], d_mlp_out)
        g("mlp.w_out")[...] += w_grad
        g("mlp.b_out")[...] += b_grad
        d_u = d_a * _gelu_grad(lc["u"])
        d_h2 = d_u @ p("mlp.w_in").T
        w_grad, b_grad = _matmul_param_grads(lc["h2"], d_u)
        g("mlp.w_in")[...] += w_grad
        g("mlp.b_in")[...] += b_grad
        d_x_mid, d_gamma, d_beta = _layernorm_backward(d_h2, lc["ln2"])
        g("ln2.gamma")[...] += d_gamma
        g("ln2.beta")[...] += d_beta
        d_x = d_x + d_x_mid

        # Attention sub-layer: x_mid = x_in + attn(ln1(x_in))
        d_attn_out = d_x
        d_ctx = (d_attn_out @ p("attn.w_out").T).reshape(
            B, T, config.n_heads, head_dim
        ).transpose(0, 2, 1, 3)
        w_grad, b_grad = _matmul_param_grads(lc["ctx"], d_attn_out)
        g("attn.w_out")[...] += w_grad
        g("attn.b_out")[...] += b_grad
        att, q, k, v = lc["att"], lc["q"], lc["k"], lc["v"]
        d_att = d_ctx @ v.transpose(0, 1, 3, 2)
        d_v = att.transpose(0, 1, 3, 2) @ d_ctx
        d_scores = att * (d_att - (d_att * att).sum(axis=-1, keepdims=True))
        d_q = (d_scores @ k) / np.sqrt(head_dim)
        d_k = (d_scores.transpose(0, 1, 3, 2) @ q) / np.sqrt(head_dim)
        d_qkv = np.concatenate(
            [part.transpose(0, 2, 1, 3).reshape(B, T, D) for part in (d_q, d_k, d_v)],
            axis=-1,
        )
        d_h1 = d_qkv @ p("attn.w_qkv").T
        w_grad, b_grad = _matmul_param_grads(lc["h1"], d_qkv)
        g("attn.w_qkv")[...] += w_grad
        g("attn.b_qkv")[...] += b_grad
        d_x_in, d_gamma, d_beta = _layernorm_backward(d_h1, lc["ln1"])
        g("ln1.gamma")[...] += d_gamma
        g("ln1.beta")[...] += d_beta
        d_x = d_x + d_x_in

    if d_hidden_states is not None and d_hidden_states[0] is not None:
        d_x = d_x + d_hidden_states[0]

    seq_len = d_x.shape[1]
    grads["pos_emb"][:seq_len] += d_x.sum(axis=0)
    d_input = None
    if cache["embedded_input"]:
        d_input = d_x
    else:
        np.add.at(grads["tok_emb"], cache["tokens"], d_x)
    return grads, (d_input if want_input_grad else None)


def lm_loss(trace: ForwardTrace, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean next-token cross-entropy and its gradient w.r.t. the logits."""
    targets = np.asarray(targets, dtype=np.int64)
    logits = trace.logits
    if targets.shape != logits.shape[:-1]:
        raise ValueError(
            f"targets shape {targets.shape} does not match logits {logits.shape[:-1]}"
        )
    logp = log_softmax(logits)
    n = targets.size
    b_idx, t_idx = np.indices(targets.shape)
    loss = -logp[b_idx, t_idx, targets].sum() / n
    d_logits = softmax(logits)
    d_logits[b_idx, t_idx, targets] -= 1.0
    return float(loss), d_logits / n


def lm_objective(params: dict, config: ModelConfig, tokens: np.ndarray, targets: np.ndarray):
    """Cross-entropy loss and full parameter gradients on float64 params."""
    trace, cache = forward_with_cache(params, config, tokens)
    loss, d_logits = lm_loss(trace, targets)
    grads, _ = backward(cache, d_logits=d_logits)
    return loss, grads


def lm_loss_and_grads(ckpt: Checkpoint, tokens: np.ndarray, targets: np.ndarray):
    """Cross-entropy loss with gradients for every parameter."""
    return lm_objective(params_from_checkpoint(ckpt), ckpt.config, tokens, targets)


def perplexity(ckpt: Checkpoint, corpus: np.ndarray) -> float:
    """exp(mean per-token NLL) over the stream, windowed by max_seq_len.

    The stream is cut into windows of max_seq_len predicted tokens that
    overlap by one token, so every token after the first is predicted
    exactly once.
    """
    corpus = np.asarray(corpus, dtype=np.int64).ravel()
    if corpus.size < 2:
        raise ValueError("corpus must contain at least two tokens")
    params = params_from_checkpoint(ckpt)
    window = ckpt.config.max_seq_len
    total_nll = 0.0
    count = 0
    full: list[np.ndarray] = []

    def flush(batch: list[np.ndarray]):
        nonlocal total_nll, count
        if not batch:
            return
        tokens = np.stack(batch)
        trace, _ = forward_with_cache(params, ckpt.config, tokens[:, :-1])
        logp = log_softmax(trace.logits)
        targets = tokens[:, 1:]
        b_idx, t_idx = np.indices(targets.shape)
        total_nll += -logp[b_idx, t_idx, targets].sum()
        count += targets.size

    for start in range(0, corpus.size - 1, window):
        chunk = corpus[start : start + window + 1]
        if chunk.size == window + 1:
            full.append(chunk)
            if len(full) == 32:
                flush(full)
                full = []
        elif chunk.size >= 2:
            flush([chunk])
    flush(full)
    return float(np.exp(total_nll / count))


def classify_forward(ckpt: Checkpoint, head: ClassifierHead, tokens: np.ndarray) -> np.ndarray:
    """K-class logits from the last-token hidden state through the head."""
    params = params_from_checkpoint(ckpt)
    _, cache = forward_with_cache(params, ckpt.config, tokens)
    last = cache["hf"][:, -1, :]
    return last @ head.weight.astype(np.float64) + head.bias.astype(np.float64)


def classify_objective(
    params: dict,
    config: ModelConfig,
    head: ClassifierHead,
    tokens: np.ndarray,
    labels: np.ndarray,
):
    """Classification cross-entropy with gradients for body and head."""
    _, cache = forward_with_cache(params, config, tokens)
    hf = cache["hf"]
    last = hf[:, -1, :]
    weight = head.weight.astype(np.float64)
    logits = last @ weight + head.bias.astype(np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    logp = log_softmax(logits)
    n = labels.size
    loss = -logp[np.arange(n), labels].sum() / n
    d_logits = softmax(logits)
    d_logits[np.arange(n), labels] -= 1.0
    d_logits /= n
    d_weight = last.T @ d_logits
    d_bias = d_logits.sum(axis=0)
    d_hf = np.zeros_like(hf)
    d_hf[:, -1, :] = d_logits @ weight.T
    grads, _ = backward(cache, d_final_hidden=d_hf)
    return float(loss), grads, ClassifierHead(weight=d_weight, bias=d_bias)


def classify_loss_and_grads(
    ckpt: Checkpoint, head: ClassifierHead, tokens: np.ndarray, labels: np.ndarray
):
    return classify_objective(params_from_checkpoint(ckpt), ckpt.config, head, tokens, labels)
