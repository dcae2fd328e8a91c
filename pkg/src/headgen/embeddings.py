"""Skip-gram negative-sampling pre-training of the token embedding table."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

HEADER = "emb-v1"


class EmbeddingInputError(ValueError):
    pass


class EmbeddingConfigError(ValueError):
    pass


@dataclass
class EmbeddingTable:
    matrix: np.ndarray  # (vocab_size, d_model)

    def __post_init__(self) -> None:
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise EmbeddingConfigError(f"embedding matrix must be 2-D, got {self.matrix.shape}")
        if not np.all(np.isfinite(self.matrix)):
            raise EmbeddingConfigError("embedding matrix contains non-finite values")

    @property
    def vocab_size(self) -> int:
        return self.matrix.shape[0]

    @property
    def d_model(self) -> int:
        return self.matrix.shape[1]

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(f"{HEADER} {self.vocab_size} {self.d_model}\n".encode("ascii"))
            f.write(self.matrix.astype("<f8").tobytes(order="C"))

    @classmethod
    def load(cls, path) -> EmbeddingTable:
        with open(path, "rb") as f:
            head = f.readline(64).decode("ascii", errors="replace").split()
            if len(head) != 3 or head[0] != HEADER or not (head[1].isdigit() and head[2].isdigit()):
                raise EmbeddingInputError(f"{path}: not an {HEADER} embedding file")
            v, d = int(head[1]), int(head[2])
            raw = f.read()
        if len(raw) != v * d * 8:
            raise EmbeddingInputError(f"{path}: expected {v * d * 8} bytes of data, found {len(raw)}")
        return cls(np.frombuffer(raw, dtype="<f8").reshape(v, d).astype(np.float64))


def sgns_loss(
    w_in: np.ndarray,
    w_out: np.ndarray,
    centers: np.ndarray,
    contexts: np.ndarray,
    negatives: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Summed negative-sampling loss and its gradients.

    For each (center c, context o, negatives n_1..n_k)::

        -log σ(u_o·v_c) - Σ_j log σ(-u_{n_j}·v_c)

    Returns ``(loss, d_w_in, d_w_out)`` with the gradient arrays shaped
    like the weights.
    """
    v = w_in[centers]  # (B, d)
    u_pos = w_out[contexts]  # (B, d)
    u_neg = w_out[negatives]  # (B, k, d)
    s_pos = np.einsum("bd,bd->b", v, u_pos)
    s_neg = np.einsum("bkd,bd->bk", u_neg, v)
    loss = np.logaddexp(0.0, -s_pos).sum() + np.logaddexp(0.0, s_neg).sum()
    # d/ds of -log σ(s) is σ(s) - 1; of -log σ(-s) is σ(s).
    g_pos = _sigmoid(s_pos) - 1.0
    g_neg = _sigmoid(s_neg)
    d_v = g_pos[:, None] * u_pos + np.einsum("bk,bkd->bd", g_neg, u_neg)
    d_in = np.zeros_like(w_in)
    d_out = np.zeros_like(w_out)
    np.add.at(d_in, centers, d_v)
    np.add.at(d_out, contexts, g_pos[:, None] * v)
    np.add.at(d_out, negatives.reshape(-1), (g_neg[:, :, None] * v[:, None, :]).reshape(-1, v.shape[1]))
    return float(loss), d_in, d_out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def skipgram_pairs(seqs: Sequence[Sequence[int]], window: int) -> np.ndarray:
    """All (center, context) pairs with ``0 < |i - j| <= window``."""
    out = []
    for seq in seqs:
        s = np.asarray(seq, dtype=np.int64)
        n = len(s)
        for off in range(1, window + 1):
            if off >= n:
                break
            out.append(np.stack([s[:-off], s[off:]], axis=1))
            out.append(np.stack([s[off:], s[:-off]], axis=1))
    if not out:
        return np.zeros((0, 2), dtype=np.int64)
    return np.concatenate(out)


def random_table(vocab_size: int, d_model: int, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(0.0, d_model**-0.5, size=(vocab_size, d_model))


def train_sgns(
    corpus_tokens: Iterable[Sequence[int]],
    vocab_size: int,
    d_model: int,
    rng: np.random.Generator,
    window: int = 5,
    negatives: int = 5,
    epochs: int = 5,
    lr: float = 0.025,
    min_lr: float = 1e-4,
    batch_size: int = 1024,
    history: list[float] | None = None,
) -> EmbeddingTable:
    """Train input vectors by SGD on the skip-gram negative-sampling loss.

    Negatives are drawn from the unigram distribution raised to 0.75.  The
    learning rate decays linearly from ``lr`` to ``min_lr``.  When
    ``history`` is given, the mean per-pair loss of every epoch is
    appended to it.
    """
    seqs = [list(s) for s in corpus_tokens]
    seqs = [s for s in seqs if s]
    if not seqs:
        raise EmbeddingInputError("cannot train embeddings on an empty corpus")
    w_in = rng.uniform(-0.5 / d_model, 0.5 / d_model, size=(vocab_size, d_model))
    w_out = np.zeros((vocab_size, d_model))
    if epochs == 0:
        return EmbeddingTable(w_in)

    counts = np.bincount(np.concatenate([np.asarray(s) for s in seqs]), minlength=vocab_size)
    noise = counts.astype(np.float64) ** 0.75
    noise /= noise.sum()
    cdf = np.cumsum(noise)

    pairs = skipgram_pairs(seqs, window)
    n = len(pairs)
    if n == 0:
        return EmbeddingTable(w_in)
    total = epochs * ((n + batch_size - 1) // batch_size)
    step = 0
    for epoch in range(epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            c, o = pairs[idx, 0], pairs[idx, 1]
            neg = np.searchsorted(cdf, rng.random((len(idx), negatives)) * cdf[-1], side="right")
            neg = np.minimum(neg, vocab_size - 1)
            alpha = max(min_lr, lr * (1.0 - step / total))
            loss, d_in, d_out = sgns_loss(w_in, w_out, c, o, neg)
            w_in -= alpha * d_in
            w_out -= alpha * d_out
            loss_sum += loss
            step += 1
        mean = loss_sum / n
        if history is not None:
            history.append(mean)
        log.info("sgns epoch=%d loss=%.6f", epoch + 1, mean)
    return EmbeddingTable(w_in)


def init_embeddings(
    strategy: str,
    vocab_size: int,
    d_model: int,
    rng: np.random.Generator | None = None,
    table: EmbeddingTable | None = None,
) -> EmbeddingTable:
    """Embedding table for a fresh model: random normal, or a pretrained one."""
    if strategy == "random":
        if rng is None:
            raise EmbeddingConfigError("random initialisation needs an rng")
        return EmbeddingTable(random_table(vocab_size, d_model, rng))
    if strategy == "pretrained":
        if table is None:
            raise EmbeddingConfigError("pretrained strategy needs a table")
        if table.matrix.shape != (vocab_size, d_model):
            raise EmbeddingConfigError(
                f"pretrained table is {table.matrix.shape}, model needs ({vocab_size}, {d_model})"
            )
        return table
    raise EmbeddingConfigError(f"unknown embedding strategy {strategy!r}")
