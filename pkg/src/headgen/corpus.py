"""JSON-lines article ingestion, length/obituary filtering and seeded splits."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np


class CorpusFormatError(ValueError):
    """A line is not a JSON object."""


class SchemaError(ValueError):
    """A record lacks a required string field."""


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class Article:
    title: str
    body: str


@dataclass
class FilterSpec:
    min_title_words: int = 3
    max_title_words: int = 15
    min_body_words: int = 20
    max_body_words: int = 2000
    exclude_obituaries: bool = False
    obituary_keywords: tuple[str, ...] = ("obituary", "dies", "paid notice")

    def __post_init__(self) -> None:
        if self.min_title_words > self.max_title_words:
            raise ValueError("min_title_words > max_title_words")
        if self.min_body_words > self.max_body_words:
            raise ValueError("min_body_words > max_body_words")


def load_corpus(path) -> Iterator[Article]:
    """Yield lowercased articles from a ``{"title", "text"}`` JSONL file.

    Blank lines are skipped.  Errors name the 1-based line number.
    """
    with open(path, encoding="utf-8") as f:
        yield from parse_lines(f, str(path))


def parse_lines(lines: Iterable[str], source: str = "<input>") -> Iterator[Article]:
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise CorpusFormatError(f"{source}:{lineno}: malformed JSON ({e.msg})") from None
        if not isinstance(rec, dict):
            raise CorpusFormatError(f"{source}:{lineno}: expected a JSON object")
        for key in ("title", "text"):
            if not isinstance(rec.get(key), str):
                raise SchemaError(f"{source}:{lineno}: missing or non-string field {key!r}")
        yield Article(rec["title"].lower(), rec["text"].lower())


def word_count(text: str) -> int:
    return len(text.split())


def is_obituary(article: Article, keywords: Sequence[str]) -> bool:
    return any(re.search(rf"\b{re.escape(k)}\b", article.title) for k in keywords)


def keep(article: Article, spec: FilterSpec) -> bool:
    nt, nb = word_count(article.title), word_count(article.body)
    if not spec.min_title_words <= nt <= spec.max_title_words:
        return False
    if not spec.min_body_words <= nb <= spec.max_body_words:
        return False
    return not (spec.exclude_obituaries and is_obituary(article, spec.obituary_keywords))


def apply_filters(articles: Iterable[Article], spec: FilterSpec) -> Iterator[Article]:
    return (a for a in articles if keep(a, spec))


@dataclass
class Split:
    train: list[int]
    val: list[int]
    test: list[int]
    seed: int = 0

    def manifest(self) -> dict:
        return {"seed": self.seed, "train": self.train, "val": self.val, "test": self.test}

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.manifest(), f)
            f.write("\n")


def split(n_articles: int, test_size: int, val_fraction: float, seed: int) -> Split:
    """Seeded uniform test sample, then a validation carve-out of the rest.

    Returns record indices; the three lists partition ``range(n_articles)``
    and each is sorted.
    """
    if test_size >= n_articles:
        raise SplitError(f"test_size={test_size} must be smaller than the corpus ({n_articles} articles)")
    if not 0.0 <= val_fraction < 1.0:
        raise SplitError("val_fraction must be in [0, 1)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_articles)
    test = perm[:test_size]
    rest = perm[test_size:]
    n_val = int(round(val_fraction * len(rest)))
    if val_fraction > 0 and n_val == 0 and len(rest) > 1:
        n_val = 1
    val, train = rest[:n_val], rest[n_val:]
    return Split(sorted(train.tolist()), sorted(val.tolist()), sorted(test.tolist()), seed)
