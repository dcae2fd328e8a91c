"""Teacher-forced maximum-likelihood training with Adam and the Noam schedule."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bpe import BOS, EOS, PAD
from .layers import Params
from .tensor import Graph, ParameterError, Tensor, no_grad, pick

log = logging.getLogger(__name__)


class TrainInputError(ValueError):
    pass


@dataclass
class TrainConfig:
    warmup_steps: int = 4000
    adam_betas: tuple[float, float] = (0.9, 0.98)
    adam_eps: float = 1e-9
    label_smoothing_eps: float = 0.0
    lr_scale: float = 1.0
    batch_tokens: int = 4096
    max_src_tokens: int = 2000
    max_tgt_tokens: int = 64
    clip_norm: float = 1.0
    patience: int = 3
    eval_every: int = 0  # 0: once per epoch
    max_epochs: int = 100
    max_steps: int = 0  # 0: unlimited
    max_seconds: float = 0.0  # 0: unlimited
    seed: int = 0

    def __post_init__(self) -> None:
        if self.warmup_steps < 1:
            raise ValueError("warmup_steps must be >= 1")
        if not 0.0 <= self.label_smoothing_eps < 1.0:
            raise ValueError("label_smoothing_eps must be in [0, 1)")


@dataclass
class OptimState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class Example:
    src: list[int]
    tgt: list[int]


@dataclass
class TrainResult:
    steps: int
    best_val_loss: float
    losses: list[float]
    val_losses: list[float]
    lrs: list[float]


def noam_lr(step: int, d_model: int, warmup: int, scale: float = 1.0) -> float:
    """d_model^-0.5 * min(step^-0.5, step * warmup^-1.5), times ``scale``."""
    if step < 1:
        raise ParameterError(f"learning-rate step must be >= 1, got {step}")
    return scale * d_model**-0.5 * min(step**-0.5, step * warmup**-1.5)


def smoothed_nll(log_probs: Tensor, targets, eps: float = 0.0, pad_id: int = PAD) -> Tensor:
    """Mean cross-entropy against ``(1-eps)*onehot + eps*uniform``.

    The uniform part spreads over every id except ``pad_id``; positions
    whose target is ``pad_id`` are left out of the average.
    """
    if not 0.0 <= eps < 1.0:
        raise ParameterError(f"label smoothing eps must be in [0, 1), got {eps}")
    targets = np.asarray(targets, dtype=np.int64)
    keep = (targets != pad_id).astype(np.float64)
    n = keep.sum()
    if n == 0:
        raise TrainInputError("no non-pad target positions")
    nll = -pick(log_probs, targets)
    if eps > 0.0:
        vocab = log_probs.shape[-1]
        col = np.ones(vocab)
        col[pad_id] = 0.0
        uniform = -(log_probs * (col / (vocab - 1))).sum(axis=-1)
        nll = nll * (1.0 - eps) + uniform * eps
    return (nll * keep).sum() * (1.0 / n)


def global_grad_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float((g * g).sum()) for g in grads.values()))


def adam_step(
    params: Params,
    grads: dict[str, np.ndarray],
    state: OptimState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.98),
    eps: float = 1e-9,
) -> None:
    """One bias-corrected Adam update, applied in place."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter {name!r}")
    b1, b2 = betas
    state.step += 1
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def make_examples(
    pairs: Sequence[tuple[list[int], list[int]]], max_src_tokens: int, max_tgt_tokens: int
) -> list[Example]:
    """Truncate sources (excess tokens dropped) and targets."""
    out = []
    for src, tgt in pairs:
        src = list(src[:max_src_tokens])
        if not src:
            continue
        out.append(Example(src, list(tgt[:max_tgt_tokens])))
    return out


def pad_batch(examples: Sequence[Example]):
    """Arrays ``src, src_mask, tgt_in, tgt_out`` padded to the batch maximum."""
    b = len(examples)
    s = max(len(e.src) for e in examples)
    t = max(len(e.tgt) for e in examples) + 1
    src = np.full((b, s), PAD, dtype=np.int64)
    tgt_in = np.full((b, t), PAD, dtype=np.int64)
    tgt_out = np.full((b, t), PAD, dtype=np.int64)
    for i, e in enumerate(examples):
        src[i, : len(e.src)] = e.src
        tgt_in[i, : len(e.tgt) + 1] = [BOS] + e.tgt
        tgt_out[i, : len(e.tgt) + 1] = e.tgt + [EOS]
    return src, src != PAD, tgt_in, tgt_out


def token_batches(examples: Sequence[Example], batch_tokens: int, order: Sequence[int]) -> list[list[int]]:
    """Group indices (in ``order``) so that padded size stays within budget."""
    batches: list[list[int]] = []
    cur: list[int] = []
    longest = 0
    for i in order:
        e = examples[i]
        size = max(len(e.src), len(e.tgt) + 1)
        new_longest = max(longest, size)
        if cur and new_longest * (len(cur) + 1) > batch_tokens:
            batches.append(cur)
            cur, new_longest = [], size
        cur.append(i)
        longest = new_longest
    if cur:
        batches.append(cur)
    return batches


def batch_loss(model, examples: Sequence[Example], eps: float, training: bool, rng=None) -> Tensor:
    src, src_mask, tgt_in, tgt_out = pad_batch(examples)
    lp = model.forward(src, src_mask, tgt_in, training, rng)
    return smoothed_nll(lp, tgt_out, eps)


def evaluate_loss(model, examples: Sequence[Example], batch_tokens: int) -> float:
    """Token-weighted mean NLL (no smoothing, no dropout)."""
    if not examples:
        return float("nan")
    total, count = 0.0, 0
    with no_grad():
        for idx in token_batches(examples, batch_tokens, range(len(examples))):
            chunk = [examples[i] for i in idx]
            n = sum(len(e.tgt) + 1 for e in chunk)
            total += batch_loss(model, chunk, 0.0, False).item() * n
            count += n
    return total / count


def _snapshot(params: Params) -> dict[str, np.ndarray]:
    return {k: v.data.copy() for k, v in params.items()}


def train(
    model,
    train_examples: Sequence[Example],
    val_examples: Sequence[Example],
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
) -> TrainResult:
    """Fit ``model`` in place; on return it holds the best-validation weights.

    Stops when validation loss has not improved for ``cfg.patience``
    consecutive evaluations, or when an epoch/step/time cap is hit.
    """
    if not train_examples:
        raise TrainInputError("training set is empty")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    val = list(val_examples) if val_examples else list(train_examples)
    params = model.parameters()
    d_model = model.config.d_model
    state = OptimState()
    best = math.inf
    best_params = _snapshot(params)
    since_best = 0
    losses: list[float] = []
    val_losses: list[float] = []
    lrs: list[float] = []
    t0 = time.monotonic()
    last_eval = -1

    def evaluate() -> bool:
        nonlocal best, best_params, since_best, last_eval
        vl = evaluate_loss(model, val, cfg.batch_tokens)
        val_losses.append(vl)
        last_eval = state.step
        log.info("eval step=%d val_loss=%.6f", state.step, vl)
        if vl < best:
            best, best_params, since_best = vl, _snapshot(params), 0
        else:
            since_best += 1
        return since_best >= cfg.patience

    def capped() -> bool:
        if cfg.max_steps and state.step >= cfg.max_steps:
            return True
        return bool(cfg.max_seconds) and time.monotonic() - t0 > cfg.max_seconds

    stop = False
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(train_examples))
        for idx in token_batches(train_examples, cfg.batch_tokens, order):
            chunk = [train_examples[i] for i in idx]
            with Graph():
                loss = batch_loss(model, chunk, cfg.label_smoothing_eps, True, rng)
                raw = loss.backward()
            grads = {}
            for name, p in params.items():
                g = raw.get(p)
                grads[name] = np.zeros_like(p.data) if g is None else g
                p.grad = None
            norm = global_grad_norm(grads)
            if cfg.clip_norm > 0 and norm > cfg.clip_norm:
                scale = cfg.clip_norm / norm
                grads = {k: g * scale for k, g in grads.items()}
            lr = noam_lr(state.step + 1, d_model, cfg.warmup_steps, cfg.lr_scale)
            adam_step(params, grads, state, lr, cfg.adam_betas, cfg.adam_eps)
            losses.append(loss.item())
            lrs.append(lr)
            log.info("step=%d lr=%.6e loss=%.6f", state.step, lr, loss.item())
            if cfg.eval_every and state.step % cfg.eval_every == 0:
                stop = evaluate()
            if stop or capped():
                stop = True
                break
        if not stop and not cfg.eval_every:
            stop = evaluate()
        if stop:
            break
    if last_eval != state.step:
        evaluate()
    for name, arr in best_params.items():
        params[name].data = arr
    return TrainResult(state.step, best, losses, val_losses, lrs)
