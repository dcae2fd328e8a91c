"""Character-level byte-pair encoding with an end-of-word marker.

Words are maximal runs of non-whitespace.  Each word is split into its
characters followed by a separate end-of-word symbol, and merges are
learned greedily by pair frequency inside words only.  Characters never
seen in training fall back to UTF-8 byte tokens, so encoding never needs
an unknown token.

Whitespace is lossless: a single space between two words is implied by
the end-of-word marker; any other whitespace (leading, trailing, repeated
or non-space) is written out as byte tokens.
"""
from __future__ import annotations

import collections
import re
from dataclasses import dataclass, field
from typing import Iterable

PAD, BOS, EOS = 0, 1, 2
SPECIALS = ("<pad>", "<s>", "</s>")
N_BYTES = 256
BYTE_OFFSET = len(SPECIALS)
SYMBOL_OFFSET = BYTE_OFFSET + N_BYTES

# Internal end-of-word symbol.  Words never contain whitespace, so a
# trailing space inside a symbol is unambiguous.
EOW = " "
_EOW_TEXT = "</w>"
_PIECE_RE = re.compile(r"\S+|\s+")
HEADER = "bpe-v1"


class BpeInputError(ValueError):
    """Training input is unusable (e.g. an empty corpus)."""


class BpeParameterError(ValueError):
    """Vocabulary budget cannot hold the base alphabet."""


class VocabularyError(ValueError):
    """A token id lies outside the vocabulary."""


def _pair_key(pair: tuple[str, str]):
    # Lexicographic on code points with the end-of-word marker sorting last.
    return tuple(tuple(0x110000 if c == EOW else ord(c) for c in s) for s in pair)


@dataclass
class BpeModel:
    """Learned merges plus the token vocabulary.

    Ids: ``0..2`` are PAD/BOS/EOS, ``3..258`` are the 256 byte-fallback
    tokens, then the base symbols (corpus characters and the end-of-word
    marker), then one id per merge in rank order.
    """

    alphabet: list[str]
    merges: list[tuple[str, str]]
    vocab: dict[str, int] = field(init=False)
    ranks: dict[tuple[str, str], int] = field(init=False)

    def __post_init__(self) -> None:
        symbols = [EOW] + [c for c in self.alphabet if c != EOW]
        self.alphabet = symbols
        self.vocab = {}
        for s in symbols:
            self.vocab[s] = SYMBOL_OFFSET + len(self.vocab)
        self.ranks = {}
        for i, (a, b) in enumerate(self.merges):
            if a not in self.vocab or b not in self.vocab:
                raise ValueError(f"merge {i} uses unknown symbol: {a!r} {b!r}")
            merged = a + b
            if merged in self.vocab:
                raise ValueError(f"merge {i} produces duplicate symbol {merged!r}")
            self.vocab[merged] = SYMBOL_OFFSET + len(self.vocab)
            self.ranks[(a, b)] = i
        self._id_to_symbol = {i: s for s, i in self.vocab.items()}
        self._cache: dict[str, tuple[int, ...]] = {}

    @property
    def vocab_size(self) -> int:
        return SYMBOL_OFFSET + len(self.vocab)

    def token(self, i: int) -> str:
        """Human-readable form of one id."""
        if i < BYTE_OFFSET:
            return SPECIALS[i]
        if i < SYMBOL_OFFSET:
            return f"<0x{i - BYTE_OFFSET:02X}>"
        return self._id_to_symbol[i].replace(EOW, _EOW_TEXT)

    # -- encoding ----------------------------------------------------------
    def _merge_word(self, word: str) -> list[str]:
        parts = list(word) + [EOW]
        ranks = self.ranks
        while len(parts) > 1:
            best, best_rank = None, None
            for pair in zip(parts, parts[1:]):
                r = ranks.get(pair)
                if r is not None and (best_rank is None or r < best_rank):
                    best, best_rank = pair, r
            if best is None:
                break
            a, b = best
            out, i = [], 0
            while i < len(parts):
                if i + 1 < len(parts) and parts[i] == a and parts[i + 1] == b:
                    out.append(a + b)
                    i += 2
                else:
                    out.append(parts[i])
                    i += 1
            parts = out
        return parts

    def _encode_word(self, word: str) -> tuple[int, ...]:
        hit = self._cache.get(word)
        if hit is not None:
            return hit
        ids: list[int] = []
        for sym in self._merge_word(word):
            i = self.vocab.get(sym)
            if i is not None:
                ids.append(i)
                continue
            # Unknown characters fall back to their UTF-8 bytes.
            for ch in sym:
                if ch == EOW:
                    ids.append(self.vocab[EOW])
                elif ch in self.vocab:
                    ids.append(self.vocab[ch])
                else:
                    ids.extend(BYTE_OFFSET + b for b in ch.encode("utf-8"))
        out = tuple(ids)
        if len(self._cache) < 1_000_000:
            self._cache[word] = out
        return out

    def encode(self, text: str) -> list[int]:
        pieces = _PIECE_RE.findall(text)
        ids: list[int] = []
        for k, piece in enumerate(pieces):
            if not piece[0].isspace():
                ids.extend(self._encode_word(piece))
                continue
            implied = piece == " " and 0 < k < len(pieces) - 1
            if not implied:
                ids.extend(BYTE_OFFSET + b for b in piece.encode("utf-8"))
        return ids

    # -- decoding ----------------------------------------------------------
    def decode(self, ids: Iterable[int]) -> str:
        """Invert :meth:`encode`.  Special tokens are skipped."""
        out: list[str] = []
        pending_space = False
        buf = bytearray()

        def emit(chars: str) -> None:
            nonlocal pending_space
            for ch in chars:
                if pending_space and not ch.isspace():
                    out.append(" ")
                pending_space = False
                out.append(ch)

        def flush() -> None:
            if buf:
                emit(buf.decode("utf-8", errors="replace"))
                buf.clear()

        n = self.vocab_size
        for i in ids:
            i = int(i)
            if i < 0 or i >= n:
                raise VocabularyError(f"token id {i} out of range for vocabulary of size {n}")
            if i < BYTE_OFFSET:
                continue
            if i < SYMBOL_OFFSET:
                buf.append(i - BYTE_OFFSET)
                continue
            flush()
            sym = self._id_to_symbol[i]
            if sym.endswith(EOW):
                emit(sym[:-1])
                pending_space = True
            else:
                emit(sym)
        flush()
        return "".join(out)

    # -- serialization -----------------------------------------------------
    def dumps(self) -> str:
        lines = [f"{HEADER} {self.vocab_size}"]
        lines.append(" ".join(["alphabet"] + [_escape(c) for c in self.alphabet if c != EOW]))
        lines.extend(f"{_escape(a)} {_escape(b)}" for a, b in self.merges)
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> BpeModel:
        lines = text.split("\n")
        head = lines[0].split(" ")
        if len(head) != 2 or head[0] != HEADER:
            raise ValueError(f"not a {HEADER} vocabulary file")
        size = int(head[1])
        alpha = lines[1].split(" ")
        if alpha[0] != "alphabet":
            raise ValueError("missing alphabet line")
        merges = []
        for ln in lines[2:]:
            if not ln:
                continue
            a, b = ln.split(" ")
            merges.append((_unescape(a), _unescape(b)))
        model = cls([_unescape(c) for c in alpha[1:] if c], merges)
        if model.vocab_size != size:
            raise ValueError(f"header says {size} tokens, file defines {model.vocab_size}")
        return model

    @classmethod
    def load(cls, path) -> BpeModel:
        with open(path, encoding="utf-8", newline="\n") as f:
            return cls.loads(f.read())


def _escape(sym: str) -> str:
    body, final = (sym[:-1], True) if sym.endswith(EOW) else (sym, False)
    body = body.replace("\\", "\\\\").replace("<", "\\<")
    return body + (_EOW_TEXT if final else "")


def _unescape(s: str) -> str:
    out, i = [], 0
    while i < len(s):
        c = s[i]
        if c == "\\":
            out.append(s[i + 1])
            i += 2
        elif s.startswith(_EOW_TEXT, i) and i + len(_EOW_TEXT) == len(s):
            out.append(EOW)
            i += len(_EOW_TEXT)
        else:
            out.append(c)
            i += 1
    return "".join(out)


def base_size(alphabet_size: int) -> int:
    """Vocabulary size before any merge: specials, bytes, marker, characters."""
    return SYMBOL_OFFSET + 1 + alphabet_size


def train_bpe(corpus: Iterable[str], vocab_budget: int) -> BpeModel:
    """Learn merges from ``corpus`` until ``vocab_budget`` ids are in use.

    Stops early when no pair occurs at least twice.  Ties on frequency go
    to the lexicographically smallest pair (end-of-word marker last).
    """
    word_freq: collections.Counter[str] = collections.Counter()
    n_docs = 0
    for doc in corpus:
        n_docs += 1
        word_freq.update(doc.split())
    if not word_freq:
        what = "an empty corpus" if n_docs == 0 else "a corpus without any words"
        raise BpeInputError(f"cannot train BPE on {what}")
    chars = sorted({c for w in word_freq for c in w})
    floor = base_size(len(chars))
    if vocab_budget < floor:
        raise BpeParameterError(
            f"vocab budget {vocab_budget} is below the base alphabet size {floor}"
        )

    words = sorted(word_freq)
    freqs = [word_freq[w] for w in words]
    seqs: list[list[str]] = [list(w) + [EOW] for w in words]
    stats: collections.Counter[tuple[str, str]] = collections.Counter()
    where: dict[tuple[str, str], set[int]] = collections.defaultdict(set)
    for wi, seq in enumerate(seqs):
        for pair in zip(seq, seq[1:]):
            stats[pair] += freqs[wi]
            where[pair].add(wi)

    merges: list[tuple[str, str]] = []
    known = set(chars) | {EOW}
    while floor + len(merges) < vocab_budget:
        best, best_count = None, 1
        for pair, count in stats.items():
            if count > best_count or (count == best_count and count > 1 and _pair_key(pair) < _pair_key(best)):
                best, best_count = pair, count
        if best is None:
            break
        a, b = best
        merged = a + b
        if merged in known:
            # The same string was already formed by a different split; drop the
            # pair so that symbols stay unique.
            del stats[best]
            continue
        merges.append(best)
        known.add(merged)
        for wi in sorted(where.pop(best, ())):
            seq, f = seqs[wi], freqs[wi]
            for pair in zip(seq, seq[1:]):
                stats[pair] -= f
                if stats[pair] <= 0:
                    del stats[pair]
            out, i = [], 0
            while i < len(seq):
                if i + 1 < len(seq) and seq[i] == a and seq[i + 1] == b:
                    out.append(merged)
                    i += 2
                else:
                    out.append(seq[i])
                    i += 1
            seqs[wi] = out
            for pair in zip(out, out[1:]):
                stats[pair] += f
                where[pair].add(wi)
        stats.pop(best, None)
    return BpeModel(chars, merges)
