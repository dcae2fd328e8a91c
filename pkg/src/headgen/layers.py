"""Building blocks shared by the transformer and the recurrent baseline."""
from __future__ import annotations

import math

import numpy as np

from .tensor import Tensor, layer_norm, masked_softmax, matmul

Params = dict[str, Tensor]


def xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> Tensor:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True)


def zeros(*shape: int) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def ones(*shape: int) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


def add_linear(params: Params, name: str, rng, d_in: int, d_out: int) -> None:
    params[f"{name}.w"] = xavier(rng, d_in, d_out)
    params[f"{name}.b"] = zeros(d_out)


def linear(params: Params, name: str, x: Tensor) -> Tensor:
    return matmul(x, params[f"{name}.w"]) + params[f"{name}.b"]


def add_norm(params: Params, name: str, d: int) -> None:
    params[f"{name}.g"] = ones(d)
    params[f"{name}.b"] = zeros(d)


def norm(params: Params, name: str, x: Tensor) -> Tensor:
    return layer_norm(x, params[f"{name}.g"], params[f"{name}.b"])


def add_attention(params: Params, name: str, rng, d_model: int) -> None:
    for proj in ("q", "k", "v", "o"):
        add_linear(params, f"{name}.{proj}", rng, d_model, d_model)


def multi_head_attention(
    queries: Tensor,
    keys: Tensor,
    values: Tensor,
    mask: np.ndarray | None,
    params: Params,
    name: str,
    n_heads: int,
    weights_out: list | None = None,
) -> Tensor:
    """Scaled dot-product attention over ``n_heads`` heads.

    ``queries`` is ``(B, Lq, d)``; ``keys``/``values`` are ``(B, Lk, d)``.
    ``mask`` is boolean, true where attention is allowed, broadcastable to
    ``(B, 1, Lq, Lk)``.  Query rows with no allowed key yield zeros.  If
    ``weights_out`` is a list, the ``(B, H, Lq, Lk)`` weights are appended.
    """
    b, lq, d = queries.shape
    lk = keys.shape[1]
    if d % n_heads:
        raise ValueError(f"d_model={d} not divisible by n_heads={n_heads}")
    dk = d // n_heads

    def heads(x: Tensor, n: int) -> Tensor:
        return x.reshape(b, n, n_heads, dk).transpose(0, 2, 1, 3)

    q = heads(linear(params, f"{name}.q", queries), lq)
    k = heads(linear(params, f"{name}.k", keys), lk)
    v = heads(linear(params, f"{name}.v", values), lk)
    scores = matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(dk))
    if mask is None:
        mask = np.ones((1, 1, lq, lk), dtype=bool)
    w = masked_softmax(scores, mask)
    if weights_out is not None:
        weights_out.append(w.data)
    ctx = matmul(w, v).transpose(0, 2, 1, 3).reshape(b, lq, d)
    return linear(params, f"{name}.o", ctx)


def sinusoid(n: int, d: int) -> np.ndarray:
    """``(n, d)`` table of sine/cosine coordinate signals, timescales 1..1e4."""
    pos = np.arange(n, dtype=np.float64)[:, None]
    half = d // 2
    inv = np.exp(-math.log(1.0e4) * np.arange(half) / max(half - 1, 1))
    ang = pos * inv[None, :]
    out = np.zeros((n, d))
    out[:, :half] = np.sin(ang)
    out[:, half : 2 * half] = np.cos(ang)
    return out


def causal_mask(t: int) -> np.ndarray:
    return np.tril(np.ones((t, t), dtype=bool))
