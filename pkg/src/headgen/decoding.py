"""Greedy and beam-search headline generation.

Decoders talk to a model through two calls: ``model.start(src)`` returns
an opaque per-article state and ``model.next_log_probs(state, prefixes)``
returns a ``(len(prefixes), vocab)`` array of next-token log-probabilities.
Every prefix starts with BOS.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bpe import BOS, EOS, PAD
from .tensor import ParameterError

DEFAULT_MAX_LEN = 20
DEFAULT_BANNED = (PAD, BOS)


@dataclass
class Hypothesis:
    ids: list[int]  # starts with BOS
    log_prob: float
    finished: bool = False

    @property
    def length(self) -> int:
        return len(self.ids) - 1

    def score(self, length_norm: bool) -> float:
        if length_norm and self.length > 0:
            return self.log_prob / self.length
        return self.log_prob

    def tokens(self) -> list[int]:
        """Generated ids without BOS and the terminating EOS."""
        out = self.ids[1:]
        if out and out[-1] == EOS:
            out = out[:-1]
        return out


def _next(model, state, prefixes, banned: Sequence[int]) -> np.ndarray:
    lp = np.array(model.next_log_probs(state, prefixes), dtype=np.float64)
    if banned:
        lp[:, list(banned)] = -np.inf
    return lp


def greedy_decode(
    model, src: Sequence[int], max_len: int = DEFAULT_MAX_LEN, banned: Sequence[int] = DEFAULT_BANNED
) -> list[int]:
    """Append the arg-max token (lowest id on ties) until EOS or ``max_len``."""
    return greedy_search(model, src, max_len, banned).tokens()


def greedy_search(model, src, max_len: int = DEFAULT_MAX_LEN, banned=DEFAULT_BANNED) -> Hypothesis:
    if max_len < 1:
        raise ParameterError("max_len must be >= 1")
    state = model.start(list(src))
    hyp = Hypothesis([BOS], 0.0)
    for _ in range(max_len):
        lp = _next(model, state, [hyp.ids], banned)[0]
        tok = int(np.argmax(lp))
        hyp = Hypothesis(hyp.ids + [tok], hyp.log_prob + float(lp[tok]), tok == EOS)
        if hyp.finished:
            break
    return hyp


def beam_search(
    model,
    src: Sequence[int],
    beam: int,
    max_len: int = DEFAULT_MAX_LEN,
    length_norm: bool = True,
    banned: Sequence[int] = DEFAULT_BANNED,
    trace: list | None = None,
) -> list[Hypothesis]:
    """Completed hypotheses, best first.

    Each step expands every live hypothesis by every token and keeps the
    ``beam`` highest cumulative log-probabilities; those ending in EOS move
    to the completed pool.  Hypotheses still live at ``max_len`` join the
    pool as truncated.  The pool is pruned to ``beam`` entries by final
    score (per-token log-probability when ``length_norm``).
    """
    if beam < 1:
        raise ParameterError(f"beam size must be >= 1, got {beam}")
    if max_len < 1:
        raise ParameterError("max_len must be >= 1")
    state = model.start(list(src))
    alive = [Hypothesis([BOS], 0.0)]
    pool: list[Hypothesis] = []

    for step in range(max_len):
        lp = _next(model, state, [h.ids for h in alive], banned)
        vocab = lp.shape[1]
        cand = (np.array([h.log_prob for h in alive])[:, None] + lp).ravel()
        order = np.argsort(-cand, kind="stable")[:beam]
        nxt = []
        for flat in order:
            if not np.isfinite(cand[flat]):
                break
            hi, tok = divmod(int(flat), vocab)
            h = Hypothesis(alive[hi].ids + [tok], float(cand[flat]), tok == EOS)
            (pool if h.finished else nxt).append(h)
        if step == max_len - 1:
            pool.extend(nxt)
            nxt = []
        pool.sort(key=lambda h: -h.score(length_norm))
        del pool[beam:]
        alive = nxt
        if trace is not None:
            trace.append((len(alive), len(pool)))
        if not alive:
            break
    return pool


def beam_decode(
    model,
    src: Sequence[int],
    beam: int = 10,
    max_len: int = DEFAULT_MAX_LEN,
    length_norm: bool = True,
    banned: Sequence[int] = DEFAULT_BANNED,
) -> list[int]:
    pool = beam_search(model, src, beam, max_len, length_norm, banned)
    return pool[0].tokens() if pool else []


def sequence_log_prob(model, src: Sequence[int], ids: Sequence[int], banned=DEFAULT_BANNED) -> float:
    """Re-score a full hypothesis (BOS first) one prefix at a time."""
    state = model.start(list(src))
    total = 0.0
    for t in range(1, len(ids)):
        lp = _next(model, state, [list(ids[:t])], banned)[0]
        total += float(lp[ids[t]])
    return total
