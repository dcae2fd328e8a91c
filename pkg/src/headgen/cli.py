"""Command-line entry point: ``headgen <subcommand> ...``.

Exit status is 0 on success, 1 for bad input or arguments and 2 for
anything unexpected.  Logs go to standard error; data goes to files.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import pipeline
from .baselines import BaselineInputError, first_sentence
from .bpe import BpeInputError, BpeModel, BpeParameterError, VocabularyError, train_bpe
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import DEFAULTS, ConfigError, PRESETS, from_sources
from .corpus import CorpusFormatError, SchemaError, SplitError, load_corpus
from .embeddings import EmbeddingConfigError, EmbeddingInputError, EmbeddingTable
from .model_ut import ContractError
from .rouge import RougeInputError, evaluate_corpus
from .training import TrainInputError

log = logging.getLogger("headgen")

INPUT_ERRORS = (
    OSError,
    ConfigError,
    CorpusFormatError,
    SchemaError,
    SplitError,
    BpeInputError,
    BpeParameterError,
    VocabularyError,
    EmbeddingInputError,
    EmbeddingConfigError,
    CheckpointError,
    ContractError,
    TrainInputError,
    RougeInputError,
    BaselineInputError,
)


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """argparse reports usage problems with status 2; we reserve 2 for crashes."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def read_jsonl(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusFormatError(f"{path}:{lineno}: malformed JSON ({e.msg})") from None
            if not isinstance(rec, dict):
                raise CorpusFormatError(f"{path}:{lineno}: expected a JSON object")
            out.append(rec)
    return out


def field(rec: dict, names, where: str) -> str:
    for name in names:
        if isinstance(rec.get(name), str):
            return rec[name]
    raise SchemaError(f"{where}: missing string field {' or '.join(map(repr, names))}")


def check_output(path) -> None:
    """Fail before doing any work if ``path`` cannot be written."""
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise UsageError(f"output directory does not exist: {parent}")
    if os.path.isdir(path):
        raise UsageError(f"output path is a directory: {path}")


def write_text(path, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)


def run_config(args, **extra):
    return from_sources(args.preset, args.config, args.set, {"seed": args.seed, **extra})


# -- subcommands -------------------------------------------------------------


def cmd_train_bpe(args) -> int:
    check_output(args.out)
    articles = list(load_corpus(args.corpus))
    bpe = train_bpe(pipeline.documents(articles), args.vocab_size)
    bpe.save(args.out)
    log.info("wrote %s (%d symbols, %d merges)", args.out, bpe.vocab_size, len(bpe.merges))
    return 0


def cmd_train_embeddings(args) -> int:
    check_output(args.out)
    cfg = run_config(args, **{"model.d_model": args.dim})
    bpe = BpeModel.load(args.bpe)
    articles = list(load_corpus(args.corpus))
    table = pipeline.fit_embeddings(articles, bpe, cfg)
    table.save(args.out)
    log.info("wrote %s (%d x %d)", args.out, table.vocab_size, table.d_model)
    return 0


def cmd_train(args) -> int:
    check_output(args.out)
    extra = {"model.untied_depth": True if args.untied_depth else None}
    if args.embeddings is None:
        extra["emb.strategy"] = "random"
    cfg = run_config(args, **extra)
    bpe = BpeModel.load(args.bpe)
    table = EmbeddingTable.load(args.embeddings) if args.embeddings else None
    if table is not None and table.d_model != cfg["model.d_model"]:
        cfg.set("model.d_model", table.d_model)
        log.info("model.d_model set to %d to match the embedding table", table.d_model)
    train_set = list(load_corpus(args.corpus))
    val_set = list(load_corpus(args.val)) if args.val else None
    if not train_set:
        raise TrainInputError(f"{args.corpus}: no articles")
    model, result = pipeline.fit_model(args.model, train_set, bpe, cfg, table, val_set)
    save_checkpoint(args.out, model, {"seed": cfg["seed"], "steps": result.steps})
    log.info("wrote %s after %d steps (best val loss %.6f)", args.out, result.steps, result.best_val_loss)
    return 0


def cmd_generate(args) -> int:
    check_output(args.out)
    if args.beam < 1 or args.max_len < 1:
        raise UsageError("--beam and --max-len must be positive")
    model, _ = load_checkpoint(args.ckpt)
    bpe = BpeModel.load(args.bpe)
    if bpe.vocab_size != model.config.vocab_size:
        raise CheckpointError(
            f"checkpoint expects {model.config.vocab_size} symbols, {args.bpe} has {bpe.vocab_size}"
        )
    records = read_jsonl(args.input)
    bodies = [field(r, ("text",), f"{args.input}:{i + 1}").lower() for i, r in enumerate(records)]
    hyps = pipeline.generate_titles(model, bpe, bodies, args.beam, args.max_len, not args.no_length_norm)
    pipeline.write_jsonl(({"title_hyp": h} for h in hyps), args.out)
    log.info("wrote %d hypotheses to %s", len(hyps), args.out)
    return 0


def cmd_evaluate(args) -> int:
    if args.out:
        check_output(args.out)
    refs = read_jsonl(args.refs)
    hyps = read_jsonl(args.hyps)
    if len(refs) != len(hyps):
        raise RougeInputError(f"{len(refs)} references but {len(hyps)} hypotheses")
    ref_titles = [field(r, ("title",), f"{args.refs}:{i + 1}") for i, r in enumerate(refs)]
    hyp_titles = [field(h, ("title_hyp", "title"), f"{args.hyps}:{i + 1}") for i, h in enumerate(hyps)]
    report = evaluate_corpus(zip(ref_titles, hyp_titles))
    write_text(args.out, report.to_json())
    log.info("rouge1 f1=%.4f rouge2 f1=%.4f rougeL f1=%.4f over %d pairs",
             report.rouge1.f1, report.rouge2.f1, report.rougeL.f1, report.count)
    return 0


def cmd_baseline(args) -> int:
    if args.out:
        check_output(args.out)
    records = read_jsonl(args.input)
    bodies = [field(r, ("text",), f"{args.input}:{i + 1}").lower() for i, r in enumerate(records)]
    hyps = [first_sentence(b) for b in bodies]
    write_text(args.out, "".join(json.dumps({"title_hyp": h}, ensure_ascii=False) + "\n" for h in hyps))
    return 0


def cmd_pipeline(args) -> int:
    cfg = run_config(args)
    if os.path.exists(args.workdir) and not os.path.isdir(args.workdir):
        raise UsageError(f"work directory is a file: {args.workdir}")
    if not os.path.isfile(args.corpus):
        raise FileNotFoundError(f"corpus not found: {args.corpus}")
    reports = pipeline.run_pipeline(args.corpus, args.workdir, cfg)
    with open(os.path.join(args.workdir, "config.txt"), "w", encoding="utf-8") as f:
        f.write(cfg.dumps())
    for name, rep in reports.items():
        log.info("%s: rouge1 f1=%.4f rouge2 f1=%.4f rougeL f1=%.4f",
                 name, rep.rouge1.f1, rep.rouge2.f1, rep.rougeL.f1)
    log.info("reports in %s", args.workdir)
    return 0


# -- argument parsing --------------------------------------------------------


def add_config_args(p) -> None:
    p.add_argument("--preset", choices=sorted(PRESETS), help="named bundle of settings")
    p.add_argument("--config", help="file of 'key = value' lines")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one setting")
    p.add_argument("--seed", type=int, help="root seed for every random component")


def build_parser() -> Parser:
    ap = Parser(prog="headgen", description="Headline generation with a Universal Transformer.")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug-level logging")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("train-bpe", help="learn BPE merges from a JSONL corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab-size", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_bpe)

    p = sub.add_parser("train-embeddings", help="skip-gram pre-training of token embeddings")
    p.add_argument("--corpus", required=True)
    p.add_argument("--bpe", required=True)
    p.add_argument("--dim", type=int, default=DEFAULTS["model.d_model"])
    p.add_argument("--out", required=True)
    add_config_args(p)
    p.set_defaults(func=cmd_train_embeddings)

    p = sub.add_parser("train", help="train a headline model")
    p.add_argument("--model", choices=("ut", "rnn"), default="ut")
    p.add_argument("--corpus", required=True)
    p.add_argument("--val", help="validation JSONL (default: hold out part of --corpus)")
    p.add_argument("--bpe", required=True)
    p.add_argument("--embeddings", help="pretrained table; random initialisation if omitted")
    p.add_argument("--untied-depth", action="store_true", help="separate weights for every recurrent step")
    p.add_argument("--out", required=True)
    add_config_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="decode titles for article bodies")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--bpe", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--beam", type=int, default=DEFAULTS["decode.beam"])
    p.add_argument("--max-len", type=int, default=DEFAULTS["decode.max_len"])
    p.add_argument("--no-length-norm", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="ROUGE-1/2/L of hypotheses against reference titles")
    p.add_argument("--refs", required=True)
    p.add_argument("--hyps", required=True)
    p.add_argument("--out", help="report path (default: stdout)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("baseline", help="run a non-neural baseline")
    p.add_argument("name", choices=("first-sentence",))
    p.add_argument("--input", required=True)
    p.add_argument("--out", help="hypotheses path (default: stdout)")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("pipeline", help="filter, split, tokenize, train, generate and evaluate in one go")
    p.add_argument("--corpus", required=True)
    p.add_argument("--workdir", default="headgen-run")
    add_config_args(p)
    p.set_defaults(func=cmd_pipeline)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.command is None:
        ap.print_usage(sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (UsageError, *INPUT_ERRORS) as e:
        print(f"headgen {args.command}: error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001
        log.exception("internal error")
        print(f"headgen {args.command}: internal error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
