"""Toy news corpus whose titles are recoverable from the lead sentence.

Each article's lead sentence wraps "<subject> <verb> <object> in <place>"
in a reporting frame; the title is that core clause.  Later sentences are
filler.  Used for smoke tests, the overfit check and the CLI pipeline.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

SUBJECTS = [
    "the city council", "southwest airlines", "the senate", "local farmers", "the central bank",
    "union workers", "the school board", "police", "the mayor", "tech companies", "the governor",
    "hospital staff", "the court", "oil producers", "city residents", "the army", "the museum",
    "state lawmakers", "the railway", "energy firms", "the university", "fishermen", "retailers",
    "the ministry",
]
VERBS = [
    "approves", "rejects", "delays", "expands", "cuts", "announces", "blocks", "backs",
    "reviews", "opens", "suspends", "plans", "funds", "debates", "restores", "limits",
]
OBJECTS = [
    "new budget", "bridge project", "tax plan", "flight routes", "water rules", "school funding",
    "housing bill", "bus service", "rate increase", "trade deal", "park expansion", "wage rise",
    "health program", "power plant", "border checks", "rail line", "art exhibit", "fuel prices",
    "loan program", "safety review", "election rules", "food aid", "port upgrade", "data law",
]
PLACES = [
    "chicago", "boston", "texas", "moscow", "denver", "ohio", "seattle", "atlanta",
    "miami", "oregon", "detroit", "houston", "nevada", "phoenix", "kansas", "dallas",
]
INTROS = [
    "officials said on monday that", "according to a statement released today,",
    "in a surprise move on friday,", "reports confirmed late tuesday that",
    "after a long meeting,", "sources said yesterday that",
]
TAILS = [
    "after weeks of talks", "despite strong opposition", "amid growing public pressure",
    "following a heated debate", "as costs continue to rise", "ahead of the winter season",
]
FILLER = (
    "the decision comes as many residents and business owners watch closely while analysts expect "
    "further changes over the coming months and critics argue that the process has been slow "
    "supporters say the measure will help families and workers across the region officials plan "
    "to publish details next week a spokesman declined to comment further on the matter "
    "several groups have asked for more time to review the proposal before any final vote"
).split()


def make_article(rng: np.random.Generator) -> dict:
    subj = SUBJECTS[rng.integers(len(SUBJECTS))]
    verb = VERBS[rng.integers(len(VERBS))]
    obj = OBJECTS[rng.integers(len(OBJECTS))]
    place = PLACES[rng.integers(len(PLACES))]
    core = f"{subj} {verb} {obj} in {place}"
    lead = f"{INTROS[rng.integers(len(INTROS))]} {core} {TAILS[rng.integers(len(TAILS))]}."
    sentences = [lead]
    for _ in range(int(rng.integers(2, 5))):
        n = int(rng.integers(8, 15))
        sentences.append(" ".join(FILLER[i] for i in rng.integers(len(FILLER), size=n)) + ".")
    return {"title": core, "text": " ".join(sentences)}


def make_corpus(n: int, seed: int = 0) -> list[dict]:
    rng = np.random.default_rng(seed)
    return [make_article(rng) for _ in range(n)]


def write_jsonl(records, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="write a synthetic headline corpus as JSONL")
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", required=True)
    args = ap.parse_args(argv)
    write_jsonl(make_corpus(args.n, args.seed), args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
