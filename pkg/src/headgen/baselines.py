"""Reference systems: lead-sentence extraction and a recurrent seq2seq model."""
from __future__ import annotations

import re
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import layers
from .bpe import BOS
from .layers import Params
from .model_ut import ContractError, _coerce
from .tensor import Tensor, concat, embedding, log_softmax, masked_softmax, matmul, no_grad, sigmoid, stack, tanh

_SENTENCE_END = re.compile(r"[.!?](?=\s|$)")


class BaselineInputError(ValueError):
    pass


def first_sentence(article_body: str) -> str:
    """Text up to and including the first ``.``, ``!`` or ``?`` that is
    followed by whitespace or the end of the body; the whole body if none."""
    body = article_body.strip()
    if not body:
        raise BaselineInputError("article body is empty")
    m = _SENTENCE_END.search(body)
    return body[: m.end()].strip() if m else body


@dataclass
class RnnConfig:
    vocab_size: int
    d_model: int = 512
    hidden: int = 0
    attn_dim: int = 0
    max_src_len: int = 2000

    def __post_init__(self) -> None:
        if self.hidden <= 0:
            self.hidden = self.d_model
        if self.attn_dim <= 0:
            self.attn_dim = self.hidden

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> RnnConfig:
        types = {f.name: f.type for f in fields(cls)}
        for k in d:
            if k not in types:
                raise KeyError(f"unknown RnnConfig field {k!r}")
        return cls(**{k: _coerce(v, types[k]) for k, v in d.items()})


def init_rnn_params(cfg: RnnConfig, rng: np.random.Generator, embed: np.ndarray | None = None) -> Params:
    d, h, a = cfg.d_model, cfg.hidden, cfg.attn_dim
    p: Params = {}
    if embed is None:
        embed = rng.normal(0.0, d**-0.5, size=(cfg.vocab_size, d))
    p["embed"] = Tensor(np.array(embed, dtype=np.float64), requires_grad=True)
    for side, d_in in (("enc", d), ("dec", d + h)):
        p[f"{side}.wx"] = layers.xavier(rng, d_in, 3 * h)
        p[f"{side}.wh"] = layers.xavier(rng, h, 3 * h)
        p[f"{side}.b"] = layers.zeros(3 * h)
    layers.add_linear(p, "bridge", rng, h, h)
    p["attn.wq"] = layers.xavier(rng, h, a)
    p["attn.wk"] = layers.xavier(rng, h, a)
    p["attn.v"] = layers.xavier(rng, a, 1)
    layers.add_linear(p, "out", rng, 2 * h, cfg.vocab_size)
    return p


class RnnSeq2Seq:
    """GRU encoder, GRU decoder with additive attention over encoder states.

    The decoder's initial state is a learned map of the encoder's final
    state; at each step it reads the previous token together with a fresh
    attention context computed from its current state.
    """

    kind = "rnn"

    def __init__(self, cfg: RnnConfig, params: Params | None = None, rng=None, embed=None):
        self.cfg = cfg
        if params is None:
            if rng is None:
                raise ValueError("need either params or an rng to initialise them")
            params = init_rnn_params(cfg, rng, embed)
        self.params = params

    @property
    def config(self) -> RnnConfig:
        return self.cfg

    def parameters(self) -> Params:
        return self.params

    def num_parameters(self) -> int:
        return sum(t.size for t in self.params.values())

    def _gru(self, side: str, x: Tensor, h: Tensor) -> Tensor:
        p, n = self.params, self.cfg.hidden
        gx = matmul(x, p[f"{side}.wx"]) + p[f"{side}.b"]
        gh = matmul(h, p[f"{side}.wh"])
        z = sigmoid(gx[:, :n] + gh[:, :n])
        r = sigmoid(gx[:, n : 2 * n] + gh[:, n : 2 * n])
        cand = tanh(gx[:, 2 * n :] + r * gh[:, 2 * n :])
        return (1.0 - z) * cand + z * h

    def encode(self, src: np.ndarray, src_mask: np.ndarray, training: bool = False, rng=None):
        src = np.asarray(src)
        mask = np.asarray(src_mask, dtype=bool)
        if src.shape[1] == 0 or not mask.any(axis=1).all():
            raise BaselineInputError("recurrent encoder needs a non-empty source")
        if src.shape[1] > self.cfg.max_src_len:
            raise ContractError(f"source length {src.shape[1]} exceeds max_src_len={self.cfg.max_src_len}")
        x = embedding(self.params["embed"], src)
        h = Tensor(np.zeros((src.shape[0], self.cfg.hidden)))
        states = []
        for t in range(src.shape[1]):
            m = mask[:, t : t + 1].astype(np.float64)
            h_new = self._gru("enc", x[:, t, :], h)
            h = h_new * m + h * (1.0 - m)
            states.append(h)
        enc = stack(states, axis=1)  # (B, S, H)
        s0 = tanh(layers.linear(self.params, "bridge", h))
        keys = matmul(enc, self.params["attn.wk"])
        return enc, keys, mask, s0

    def _attend(self, enc, keys, mask, s: Tensor) -> tuple[Tensor, Tensor]:
        q = matmul(s, self.params["attn.wq"])  # (B, A)
        e = matmul(tanh(keys + q.reshape(q.shape[0], 1, q.shape[1])), self.params["attn.v"])
        w = masked_softmax(e.reshape(e.shape[0], e.shape[1]), mask)
        ctx = matmul(w.reshape(w.shape[0], 1, w.shape[1]), enc)
        return ctx.reshape(ctx.shape[0], ctx.shape[2]), w

    def decode_steps(self, memory, tgt_in: np.ndarray, attn: list | None = None) -> Tensor:
        """Hidden features ``[s_t; ctx_t]`` for every target position."""
        enc, keys, mask, s = memory
        y = embedding(self.params["embed"], np.asarray(tgt_in))
        outs = []
        for t in range(y.shape[1]):
            ctx, w = self._attend(enc, keys, mask, s)
            if attn is not None:
                attn.append(w.data)
            s = self._gru("dec", concat([y[:, t, :], ctx], axis=-1), s)
            outs.append(concat([s, ctx], axis=-1))
        return stack(outs, axis=1)

    def project(self, h: Tensor) -> Tensor:
        return log_softmax(layers.linear(self.params, "out", h), axis=-1)

    def forward(self, src, src_mask, tgt_in, training: bool = False, rng=None) -> Tensor:
        memory = self.encode(src, src_mask, training, rng)
        return self.project(self.decode_steps(memory, tgt_in))

    def start(self, src: list[int]):
        arr = np.asarray([src], dtype=np.int64)
        with no_grad():
            enc, keys, mask, s0 = self.encode(arr, np.ones_like(arr, dtype=bool))
        return enc.data, keys.data, mask, s0.data

    def next_log_probs(self, state, prefixes: list[list[int]]) -> np.ndarray:
        enc, keys, mask, s0 = state
        k = len(prefixes)

        def rep(a):
            return np.broadcast_to(a, (k,) + a.shape[1:])

        memory = (Tensor(rep(enc)), Tensor(rep(keys)), rep(mask), Tensor(rep(s0)))
        with no_grad():
            h = self.decode_steps(memory, np.asarray(prefixes, dtype=np.int64))
            return self.project(h[:, -1, :]).data


def rnn_encode_decode(
    first_sentence_tokens: list[int], tgt_prefix: list[int], model: RnnSeq2Seq, attn: list | None = None
) -> Tensor:
    """log-probabilities of the token following ``tgt_prefix``."""
    if not first_sentence_tokens:
        raise BaselineInputError("source sequence is empty")
    if not tgt_prefix or tgt_prefix[0] != BOS:
        raise ContractError("decoder prefix must start with BOS")
    src = np.asarray([first_sentence_tokens], dtype=np.int64)
    memory = model.encode(src, np.ones_like(src, dtype=bool))
    h = model.decode_steps(memory, np.asarray([tgt_prefix], dtype=np.int64), attn)
    return model.project(h[:, -1, :])[0]
