"""End-to-end glue shared by the CLI and the acceptance runs."""
from __future__ import annotations

import json
import logging
import os
from typing import Sequence

from .baselines import RnnSeq2Seq, first_sentence
from .bpe import BpeModel, train_bpe
from .config import RunConfig, component_rng
from .corpus import Article, apply_filters, load_corpus, split
from .decoding import beam_decode, greedy_decode
from .embeddings import EmbeddingTable, init_embeddings, train_sgns
from .model_ut import UniversalTransformer
from .rouge import RougeReport, evaluate_corpus
from .training import TrainResult, make_examples, train

log = logging.getLogger(__name__)


def documents(articles: Sequence[Article]):
    for a in articles:
        yield a.title
        yield a.body


def source_text(body: str, kind: str) -> str:
    """The recurrent baseline reads only the lead sentence."""
    return first_sentence(body) if kind == "rnn" else body


def fit_bpe(articles: Sequence[Article], cfg: RunConfig) -> BpeModel:
    return train_bpe(documents(articles), cfg["bpe.vocab_size"])


def fit_embeddings(articles: Sequence[Article], bpe: BpeModel, cfg: RunConfig, history=None) -> EmbeddingTable:
    seqs = [bpe.encode(doc) for doc in documents(articles)]
    return train_sgns(
        seqs,
        bpe.vocab_size,
        cfg["model.d_model"],
        component_rng(cfg["seed"], "embeddings"),
        window=cfg["emb.window"],
        negatives=cfg["emb.negatives"],
        epochs=cfg["emb.epochs"],
        lr=cfg["emb.lr"],
        batch_size=cfg["emb.batch_size"],
        history=history,
    )


def build_model(kind: str, cfg: RunConfig, vocab_size: int, table: EmbeddingTable | None = None):
    rng = component_rng(cfg["seed"], f"init-{kind}")
    strategy = "pretrained" if table is not None else "random"
    emb = init_embeddings(strategy, vocab_size, cfg["model.d_model"], rng, table)
    if kind == "ut":
        return UniversalTransformer(cfg.ut_config(vocab_size), rng=rng, embed=emb.matrix)
    if kind == "rnn":
        return RnnSeq2Seq(cfg.rnn_config(vocab_size), rng=rng, embed=emb.matrix)
    raise ValueError(f"unknown model kind {kind!r}")


def encode_pairs(articles: Sequence[Article], bpe: BpeModel, kind: str, cfg: RunConfig):
    pairs = [(bpe.encode(source_text(a.body, kind)), bpe.encode(a.title)) for a in articles]
    return make_examples(pairs, cfg["train.max_src_tokens"], cfg["train.max_tgt_tokens"])


def fit_model(
    kind: str,
    train_articles: Sequence[Article],
    bpe: BpeModel,
    cfg: RunConfig,
    table: EmbeddingTable | None = None,
    val_articles: Sequence[Article] | None = None,
) -> tuple[object, TrainResult]:
    """Train a fresh model.  Without explicit validation articles a seeded
    ``data.val_fraction`` share of the training articles is held out."""
    train_articles = list(train_articles)
    if val_articles is None and cfg["data.val_fraction"] > 0 and len(train_articles) > 1:
        s = split(len(train_articles), 0, cfg["data.val_fraction"], cfg["seed"])
        val_articles = [train_articles[i] for i in s.val]
        train_articles = [train_articles[i] for i in s.train]
    model = build_model(kind, cfg, bpe.vocab_size, table)
    tr = encode_pairs(train_articles, bpe, kind, cfg)
    va = encode_pairs(val_articles, bpe, kind, cfg) if val_articles else []
    result = train(model, tr, va, cfg.train_config(), component_rng(cfg["seed"], f"train-{kind}"))
    return model, result


def generate_titles(
    model, bpe: BpeModel, bodies: Sequence[str], beam: int, max_len: int, length_norm: bool = True
) -> list[str]:
    kind = model.kind
    limit = model.config.max_src_len
    out = []
    for body in bodies:
        src = bpe.encode(source_text(body, kind))[:limit]
        if not src:
            out.append("")
            continue
        if beam == 1:
            ids = greedy_decode(model, src, max_len)
        else:
            ids = beam_decode(model, src, beam, max_len, length_norm)
        out.append(bpe.decode(ids))
    return out


def write_jsonl(records, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")


def run_pipeline(corpus_path, workdir, cfg: RunConfig) -> dict[str, RougeReport]:
    """filter → split → BPE → embeddings → train → generate → evaluate.

    Every intermediate artifact lands in ``workdir``; returns the ROUGE
    reports of the trained model and of the First Sentence baseline on the
    held-out test articles.
    """
    from .checkpoint import save_checkpoint

    articles = list(apply_filters(load_corpus(corpus_path), cfg.filter_spec()))
    log.info("pipeline: %d articles after filtering", len(articles))
    parts = split(len(articles), cfg["data.test_size"], 0.0, cfg["seed"])
    os.makedirs(workdir, exist_ok=True)
    parts.save(os.path.join(workdir, "split.json"))
    train_set = [articles[i] for i in parts.train]
    test_set = [articles[i] for i in parts.test]

    bpe = fit_bpe(train_set, cfg)
    bpe.save(os.path.join(workdir, "bpe.vocab"))
    table = None
    if cfg["emb.strategy"] == "pretrained":
        table = fit_embeddings(train_set, bpe, cfg)
        table.save(os.path.join(workdir, "embeddings.bin"))

    model, result = fit_model("ut", train_set, bpe, cfg, table)
    log.info("pipeline: trained %d steps, best val loss %.4f", result.steps, result.best_val_loss)
    save_checkpoint(os.path.join(workdir, "model.ckpt"), model)

    hyps = generate_titles(model, bpe, [a.body for a in test_set], cfg["decode.beam"], cfg["decode.max_len"], cfg["decode.length_norm"])
    write_jsonl(({"title_hyp": h} for h in hyps), os.path.join(workdir, "hyps.jsonl"))
    write_jsonl(({"title": a.title, "text": a.body} for a in test_set), os.path.join(workdir, "test.jsonl"))
    refs = [a.title for a in test_set]
    report = evaluate_corpus(zip(refs, hyps))
    lead = evaluate_corpus(zip(refs, (first_sentence(a.body) for a in test_set)))
    with open(os.path.join(workdir, "report.json"), "w", encoding="utf-8") as f:
        f.write(report.to_json())
    with open(os.path.join(workdir, "first_sentence_report.json"), "w", encoding="utf-8") as f:
        f.write(lead.to_json())
    return {"model": report, "first_sentence": lead}
