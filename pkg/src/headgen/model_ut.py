"""Universal Transformer encoder-decoder.

One encoder block and one decoder block are applied ``n_steps`` times
each, with the same weights at every depth step.  Before each step the
sinusoidal position signal and a sinusoidal signal of the step index are
added.  Every sublayer is ``LayerNorm(x + Dropout(sublayer(x)))``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import layers
from .bpe import BOS, PAD
from .layers import Params
from .tensor import Tensor, dropout, embedding, log_softmax, matmul, no_grad, relu


class ContractError(ValueError):
    """An input violates the operation's precondition."""


@dataclass
class UtConfig:
    vocab_size: int
    d_model: int = 512
    n_heads: int = 8
    n_steps: int = 4
    d_ff: int = 0
    dropout_p: float = 0.3
    max_src_len: int = 2000
    tie_output: bool = True
    untied_depth: bool = False

    def __post_init__(self) -> None:
        if self.d_ff <= 0:
            self.d_ff = 4 * self.d_model
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must be in [0, 1), got {self.dropout_p}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> UtConfig:
        types = {f.name: f.type for f in fields(cls)}
        out = {}
        for k, v in d.items():
            if k not in types:
                raise KeyError(f"unknown UtConfig field {k!r}")
            out[k] = _coerce(v, types[k])
        return cls(**out)


def _coerce(v, typ):
    if not isinstance(v, str):
        return v
    if typ in ("bool", bool):
        return v.lower() in ("1", "true", "yes")
    if typ in ("int", int):
        return int(v)
    if typ in ("float", float):
        return float(v)
    return v


def init_ut_params(cfg: UtConfig, rng: np.random.Generator, embed: np.ndarray | None = None) -> Params:
    d = cfg.d_model
    p: Params = {}
    if embed is None:
        embed = rng.normal(0.0, d**-0.5, size=(cfg.vocab_size, d))
    p["embed"] = Tensor(np.array(embed, dtype=np.float64), requires_grad=True)
    n_blocks = cfg.n_steps if cfg.untied_depth else 1
    for k in range(n_blocks):
        e = f"enc.{k}"
        layers.add_attention(p, f"{e}.self", rng, d)
        layers.add_norm(p, f"{e}.ln1", d)
        layers.add_linear(p, f"{e}.ff1", rng, d, cfg.d_ff)
        layers.add_linear(p, f"{e}.ff2", rng, cfg.d_ff, d)
        layers.add_norm(p, f"{e}.ln2", d)
    for k in range(n_blocks):
        e = f"dec.{k}"
        layers.add_attention(p, f"{e}.self", rng, d)
        layers.add_norm(p, f"{e}.ln1", d)
        layers.add_attention(p, f"{e}.cross", rng, d)
        layers.add_norm(p, f"{e}.ln2", d)
        layers.add_linear(p, f"{e}.ff1", rng, d, cfg.d_ff)
        layers.add_linear(p, f"{e}.ff2", rng, cfg.d_ff, d)
        layers.add_norm(p, f"{e}.ln3", d)
    if not cfg.tie_output:
        layers.add_linear(p, "out", rng, d, cfg.vocab_size)
    return p


class UniversalTransformer:
    """Encoder-decoder defining log P(y_t | y_<t, X)."""

    kind = "ut"

    def __init__(self, cfg: UtConfig, params: Params | None = None, rng=None, embed=None):
        self.cfg = cfg
        if params is None:
            if rng is None:
                raise ValueError("need either params or an rng to initialise them")
            params = init_ut_params(cfg, rng, embed)
        self.params = params
        self._coords = layers.sinusoid(max(cfg.max_src_len, 64), cfg.d_model)
        self._steps = layers.sinusoid(cfg.n_steps, cfg.d_model)

    @property
    def config(self) -> UtConfig:
        return self.cfg

    def parameters(self) -> Params:
        return self.params

    def num_parameters(self) -> int:
        return sum(t.size for t in self.params.values())

    def _block(self, side: str, step: int) -> str:
        return f"{side}.{step if self.cfg.untied_depth else 0}"

    def _coord(self, n: int) -> np.ndarray:
        if n > len(self._coords):
            self._coords = layers.sinusoid(n, self.cfg.d_model)
        return self._coords[:n]

    def _sublayer(self, x: Tensor, y: Tensor, ln: str, training: bool, rng) -> Tensor:
        return layers.norm(self.params, ln, x + dropout(y, self.cfg.dropout_p, training, rng))

    def _ffn(self, blk: str, x: Tensor) -> Tensor:
        return layers.linear(self.params, f"{blk}.ff2", relu(layers.linear(self.params, f"{blk}.ff1", x)))

    def embed(self, ids: np.ndarray) -> Tensor:
        return embedding(self.params["embed"], ids) * math.sqrt(self.cfg.d_model)

    def encode(
        self, src: np.ndarray, src_mask: np.ndarray, training: bool = False, rng=None, attn=None, positions=None
    ) -> Tensor:
        """``(B, S)`` ids and validity mask to ``(B, S, d_model)`` memory.

        ``positions`` overrides the coordinate index of each source slot
        (default ``0..S-1``).
        """
        src = np.asarray(src)
        if src.shape[1] > self.cfg.max_src_len:
            raise ContractError(
                f"source length {src.shape[1]} exceeds max_src_len={self.cfg.max_src_len}; truncate upstream"
            )
        cfg = self.cfg
        x = self.embed(src)
        pos = self._coord(src.shape[1])
        if positions is not None:
            pos = self._coord(int(np.max(positions)) + 1)[np.asarray(positions)]
        key_mask = np.asarray(src_mask, dtype=bool)[:, None, None, :]
        for t in range(cfg.n_steps):
            blk = self._block("enc", t)
            x = x + (pos + self._steps[t])
            a = layers.multi_head_attention(x, x, x, key_mask, self.params, f"{blk}.self", cfg.n_heads, attn)
            x = self._sublayer(x, a, f"{blk}.ln1", training, rng)
            x = self._sublayer(x, self._ffn(blk, x), f"{blk}.ln2", training, rng)
        return x

    def decode_hidden(
        self, tgt_in: np.ndarray, memory: Tensor, src_mask: np.ndarray, training: bool = False, rng=None, attn=None
    ) -> Tensor:
        cfg = self.cfg
        tgt_in = np.asarray(tgt_in)
        t_len = tgt_in.shape[1]
        y = self.embed(tgt_in)
        pos = self._coord(t_len)
        self_mask = layers.causal_mask(t_len)[None, None] & (tgt_in != PAD)[:, None, None, :]
        # BOS is never padding, so every query row keeps at least one key.
        self_mask[..., 0] = True
        cross_mask = np.asarray(src_mask, dtype=bool)[:, None, None, :]
        for t in range(cfg.n_steps):
            blk = self._block("dec", t)
            y = y + (pos + self._steps[t])
            a = layers.multi_head_attention(y, y, y, self_mask, self.params, f"{blk}.self", cfg.n_heads, attn)
            y = self._sublayer(y, a, f"{blk}.ln1", training, rng)
            c = layers.multi_head_attention(y, memory, memory, cross_mask, self.params, f"{blk}.cross", cfg.n_heads, attn)
            y = self._sublayer(y, c, f"{blk}.ln2", training, rng)
            y = self._sublayer(y, self._ffn(blk, y), f"{blk}.ln3", training, rng)
        return y

    def project(self, h: Tensor) -> Tensor:
        if self.cfg.tie_output:
            logits = matmul(h, self.params["embed"].T)
        else:
            logits = layers.linear(self.params, "out", h)
        return log_softmax(logits, axis=-1)

    def forward(self, src, src_mask, tgt_in, training: bool = False, rng=None) -> Tensor:
        """Teacher-forced log-probabilities, ``(B, T, vocab)``."""
        memory = self.encode(src, src_mask, training, rng)
        return self.project(self.decode_hidden(tgt_in, memory, src_mask, training, rng))

    # -- incremental decoding interface ---------------------------------
    def start(self, src: list[int]):
        src_arr = np.asarray([src], dtype=np.int64)
        mask = np.ones_like(src_arr, dtype=bool)
        with no_grad():
            memory = self.encode(src_arr, mask)
        return memory.data, mask

    def next_log_probs(self, state, prefixes: list[list[int]]) -> np.ndarray:
        memory, mask = state
        k = len(prefixes)
        tgt = np.asarray(prefixes, dtype=np.int64)
        mem = Tensor(np.broadcast_to(memory, (k,) + memory.shape[1:]))
        with no_grad():
            h = self.decode_hidden(tgt, mem, np.broadcast_to(mask, (k, mask.shape[1])))
            return self.project(h[:, -1, :]).data


def ut_encode(src: list[int], model: UniversalTransformer, training: bool = False, rng=None) -> Tensor:
    """Encode one token sequence to a ``(src_len, d_model)`` tensor."""
    arr = np.asarray([src], dtype=np.int64)
    out = model.encode(arr, np.ones_like(arr, dtype=bool), training, rng)
    return out[0]


def ut_decode_step(
    tgt_prefix: list[int], memory: Tensor, model: UniversalTransformer, training: bool = False, rng=None
) -> Tensor:
    """log P(next token | prefix, source) as a ``(vocab_size,)`` tensor."""
    if not tgt_prefix:
        raise ContractError("decoder prefix must not be empty")
    if tgt_prefix[0] != BOS:
        raise ContractError("decoder prefix must start with BOS")
    tgt = np.asarray([tgt_prefix], dtype=np.int64)
    mem = memory.reshape(1, *memory.shape) if memory.ndim == 2 else memory
    mask = np.ones(mem.shape[:2], dtype=bool)
    h = model.decode_hidden(tgt, mem, mask, training, rng)
    return model.project(h[:, -1, :])[0]
