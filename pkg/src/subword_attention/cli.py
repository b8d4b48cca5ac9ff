"""Command-line entry point: ``subword-attention <command> ...``.

Commands: ``preprocess``, ``train-tokenizer``, ``train``, ``evaluate``,
``predict``.  All randomness flows from ``--seed``; every command that writes
an artifact also writes ``<artifact>.manifest.json`` describing how it was made.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import LABEL_NAMES, __version__
from .bpe import BpeModel, train_bpe
from .corpus import load_dataset, save_dataset
from .exceptions import SubwordAttentionError
from .nn import ModelConfig
from .pipeline import DEFAULT_BPE_VOCAB, preprocess_samples, word_counts
from .preprocess import PreprocessConfig, bundled_tables_dir, preprocess
from .training import TrainConfig, evaluate, load_checkpoint, predict_proba, save_checkpoint, train
from .unigram import UnigramModel, train_unigram

logger = logging.getLogger("subword_attention")


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(artifact, command: str, args: argparse.Namespace, inputs: dict, seed=None) -> Path:
    """Record resolved flags and input digests next to ``artifact``."""
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k != "func"}
    manifest = {
        "artifact_version": __version__,
        "command": command,
        "config": config,
        "inputs": {name: {"path": str(p), "sha256": file_digest(p)} for name, p in sorted(inputs.items())},
        "seed": seed,
    }
    path = Path(f"{artifact}.manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _tables(args) -> PreprocessConfig:
    return PreprocessConfig.from_dir(args.tables_dir)


def _load_tokenizers(args):
    return BpeModel.load(args.bpe_vocab), UnigramModel.load(args.uni_vocab)


def cmd_preprocess(args) -> int:
    tables = _tables(args)
    samples = load_dataset(args.input)
    cleaned = preprocess_samples(samples, tables)
    if len(cleaned) != len(samples):
        logger.warning("dropped %d rows whose text was empty after preprocessing", len(samples) - len(cleaned))
    save_dataset(cleaned, args.output)
    write_manifest(args.output, "preprocess", args, {"input": args.input})
    return 0


def cmd_train_tokenizer(args) -> int:
    tables = _tables(args)
    samples = preprocess_samples(load_dataset(args.input), tables)
    counts = word_counts(s.text for s in samples)
    if args.algo == "bpe":
        model = train_bpe(counts, args.vocab_size)
    else:
        model = train_unigram(
            counts,
            args.vocab_size,
            em_rounds_per_prune=args.em_rounds,
            drop_fraction=args.drop_fraction,
            seed_size=args.seed_size,
            max_token_len=args.max_token_len,
        )
    model.save(args.out)
    write_manifest(args.out, "train-tokenizer", args, {"input": args.input})
    print(f"wrote {args.algo} vocabulary of {model.vocab_size} entries to {args.out}")
    return 0


def _model_config(args, bpe_vocab_size=1, uni_vocab_size=1) -> ModelConfig:
    return ModelConfig(
        max_len=args.max_len,
        bpe_vocab_size=bpe_vocab_size,
        uni_vocab_size=uni_vocab_size,
        d_model=args.d_model,
        n_heads=args.heads,
        dense_units=args.dense,
        dropout_rate=args.dropout,
        n_classes=len(LABEL_NAMES),
        pe_base=args.pe_base,
    )


def cmd_train(args) -> int:
    # validate every flag before touching data
    _model_config(args)
    train_config = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        epochs=args.epochs,
        seed=args.seed,
        optimizer=args.optimizer,
    )
    tables = _tables(args)
    bpe, uni = _load_tokenizers(args)
    model_config = _model_config(args, bpe.vocab_size, uni.vocab_size)
    train_samples = preprocess_samples(load_dataset(args.train), tables)
    test_samples = preprocess_samples(load_dataset(args.test), tables) if args.test else None

    params, losses = train(train_samples, (bpe, uni), model_config, train_config)
    # the checkpoint stores float32; report on exactly what gets saved
    params = params.astype(np.float32)
    save_checkpoint(params, model_config, args.checkpoint_out, train_config)

    out = str(args.checkpoint_out)
    Path(f"{out}.losses.tsv").write_text(
        "epoch\tloss\n" + "".join(f"{i + 1}\t{loss:.17g}\n" for i, loss in enumerate(losses)), encoding="utf-8"
    )
    reports = [("train", evaluate(train_samples, (bpe, uni), params, model_config))]
    if test_samples:
        reports.append(("test", evaluate(test_samples, (bpe, uni), params, model_config)))
    text = "".join(f"== {name} ==\n{report.render()}\n" for name, report in reports)
    Path(f"{out}.report.txt").write_text(text, encoding="utf-8")

    inputs = {"train": args.train, "bpe_vocab": args.bpe_vocab, "uni_vocab": args.uni_vocab}
    if args.test:
        inputs["test"] = args.test
    write_manifest(out, "train", args, inputs, seed=args.seed)
    for i, loss in enumerate(losses):
        print(f"epoch {i + 1}\tloss {loss:.6f}")
    print(text, end="")
    return 0


def cmd_evaluate(args) -> int:
    params, model_config, _ = load_checkpoint(args.checkpoint)
    tables = _tables(args)
    bpe, uni = _load_tokenizers(args)
    samples = preprocess_samples(load_dataset(args.data), tables)
    print(evaluate(samples, (bpe, uni), params, model_config).render(), end="")
    return 0


def cmd_predict(args) -> int:
    params, model_config, _ = load_checkpoint(args.checkpoint)
    tables = _tables(args)
    bpe, uni = _load_tokenizers(args)
    texts = [preprocess(t, tables) for t in args.text]
    probs = predict_proba(texts, (bpe, uni), params, model_config)
    for raw, row in zip(args.text, probs):
        print(f"text\t{raw}")
        for name, p in zip(LABEL_NAMES, row):
            print(f"{name}\t{p:.6f}")
        print(f"label\t{LABEL_NAMES[int(np.argmax(row))]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(
        prog="subword-attention",
        description="Subword tokenizers and a dual-channel self-attention classifier for code-switched text.",
        formatter_class=fmt,
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--log-level", default="WARNING", help="python logging level")
    sub = parser.add_subparsers(dest="command", required=True)

    def tables_flag(p):
        p.add_argument("--tables-dir", type=Path, default=bundled_tables_dir(), help="directory with emoji/contraction/transliteration tables")

    p = sub.add_parser("preprocess", help="normalize a dataset file", formatter_class=fmt)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    tables_flag(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train-tokenizer", help="learn a BPE or Unigram vocabulary", formatter_class=fmt)
    p.add_argument("--algo", choices=("bpe", "unigram"), required=True)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--vocab-size", type=int, default=DEFAULT_BPE_VOCAB, help="target size including PAD and UNK")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed-size", type=int, default=None, help="unigram: seed vocabulary size (default 2x target)")
    p.add_argument("--max-token-len", type=int, default=8, help="unigram: longest candidate token")
    p.add_argument("--em-rounds", type=int, default=2, help="unigram: EM steps per prune round")
    p.add_argument("--drop-fraction", type=float, default=0.2, help="unigram: fraction pruned per round")
    tables_flag(p)
    p.set_defaults(func=cmd_train_tokenizer)

    def model_flags(p):
        p.add_argument("--bpe-vocab", type=Path, required=True)
        p.add_argument("--uni-vocab", type=Path, required=True)
        tables_flag(p)

    p = sub.add_parser("train", help="train the classifier", formatter_class=fmt)
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--test", type=Path, default=None, help="held-out dataset for the final report")
    model_flags(p)
    p.add_argument("--max-len", type=int, default=64, help="sequence length of both channels")
    p.add_argument("--d-model", type=int, default=64, help="embedding dimension")
    p.add_argument("--heads", type=int, default=8, help="attention heads (architecture constant)")
    p.add_argument("--dense", type=int, default=128, help="hidden dense units (architecture constant)")
    p.add_argument("--dropout", type=float, default=0.2, help="dropout rate (architecture constant)")
    p.add_argument("--pe-base", type=float, default=10000.0, help="positional-encoding base")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint-out", type=Path, required=True)
    p.set_defaults(func=cmd_train)
    p.epilog = f"output classes: {len(LABEL_NAMES)} ({', '.join(LABEL_NAMES)})"

    p = sub.add_parser("evaluate", help="report accuracy and weighted P/R/F1", formatter_class=fmt)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    model_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="class probabilities for raw texts", formatter_class=fmt)
    p.add_argument("--text", action="append", required=True, help="may be repeated")
    p.add_argument("--checkpoint", type=Path, required=True)
    model_flags(p)
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (SubwordAttentionError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
