"""Word-level ROUGE-1/2/L with per-pair (macro) averaging.

No stemming, no stopword removal: texts are lowercased and split on
whitespace, nothing else.
"""
from __future__ import annotations

import collections
import json
from dataclasses import dataclass
from typing import Iterable, Sequence


class RougeInputError(ValueError):
    pass


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, match: int, n_hyp: int, n_ref: int) -> RougeScore:
        # 2PR/(P+R) reduces to 2m/(h+r); one division keeps it correctly rounded
        if match == 0:
            return cls(0.0, 0.0, 0.0)
        return cls(match / n_hyp, match / n_ref, 2 * match / (n_hyp + n_ref))


@dataclass
class RougeReport:
    rouge1: RougeScore
    rouge2: RougeScore
    rougeL: RougeScore
    count: int

    def to_dict(self) -> dict:
        out = {}
        for key in ("rouge1", "rouge2", "rougeL"):
            s = getattr(self, key)
            out[key] = {"precision": s.precision, "recall": s.recall, "f1": s.f1}
        out["count"] = self.count
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def tokenize(text: str) -> list[str]:
    return text.lower().split()


def _ngrams(words: Sequence[str], n: int) -> collections.Counter:
    return collections.Counter(tuple(words[i : i + n]) for i in range(len(words) - n + 1))


def rouge_n(reference: Sequence[str], hypothesis: Sequence[str], n: int) -> RougeScore:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    ref, hyp = _ngrams(reference, n), _ngrams(hypothesis, n)
    overlap = sum((ref & hyp).values())
    n_ref, n_hyp = sum(ref.values()), sum(hyp.values())
    return RougeScore.from_counts(overlap, n_hyp, n_ref)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(reference: Sequence[str], hypothesis: Sequence[str]) -> RougeScore:
    lcs = lcs_length(reference, hypothesis)
    return RougeScore.from_counts(lcs, len(hypothesis), len(reference))


def _mean(scores: list[RougeScore]) -> RougeScore:
    n = len(scores)
    return RougeScore(
        sum(s.precision for s in scores) / n,
        sum(s.recall for s in scores) / n,
        sum(s.f1 for s in scores) / n,
    )


def evaluate_corpus(pairs: Iterable[tuple[str, str]]) -> RougeReport:
    """Mean of per-pair scores over (reference title, hypothesis title) pairs."""
    r1, r2, rl = [], [], []
    for ref_text, hyp_text in pairs:
        ref, hyp = tokenize(ref_text), tokenize(hyp_text)
        r1.append(rouge_n(ref, hyp, 1))
        r2.append(rouge_n(ref, hyp, 2))
        rl.append(rouge_l(ref, hyp))
    if not r1:
        raise RougeInputError("no (reference, hypothesis) pairs to evaluate")
    return RougeReport(_mean(r1), _mean(r2), _mean(rl), len(r1))
