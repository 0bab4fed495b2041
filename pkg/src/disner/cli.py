"""Command-line entry point for the disease NER toolkit.

Subcommands: ``stats`` (corpus counts), ``convert-sr`` (tagging-scheme
conversion of CoNLL-style streams), ``train``, ``predict``, ``evaluate``,
``decode-fixture`` (golden decode check), and ``gradcheck`` (finite-difference
verification of the end-to-end gradients).

Exit codes: 0 on success, 1 on a domain error (one machine-parseable line on
stderr), 2 on a usage error.  Paths for shared inputs fall back to the
``DISNER_CONFIG``, ``DISNER_MEDIC``, and ``DISNER_EMBEDDINGS`` environment
variables when the corresponding flag is omitted.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .corpus import corpus_stats, parse_pubtator, tokenize, write_pubtator, Sentence
from .crf import TagInventory, global_score, parse_fixture, viterbi_decode
from .embeddings import load_word2vec_text, random_table
from .errors import DisnerError, ParseError
from .lexicon import load_medic
from .pipeline import (Model, ModelConfig, apply_overrides, corpus_vocabulary,
                       evaluate_documents, load_checkpoint, parse_config,
                       predict_documents, save_checkpoint, train,
                       _sentence_emissions)
from .resources import golden_decode_fixture_text
from .tags import Scheme, TagSequence, convert, encode_spans, repair, Span

_CONFIG_FLAGS = [f.name for f in fields(ModelConfig)]


def _add_config_overrides(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group(
        "config overrides", "replace individual config-file keys; booleans "
        "take true/false")
    for name in _CONFIG_FLAGS:
        group.add_argument(f"--{name.replace('_', '-')}", dest=f"cfg_{name}",
                           metavar="VALUE", default=None)
    for alias in ("v1", "v2", "v3", "v4"):
        group.add_argument(f"--{alias}", dest=f"cfg_{alias}",
                           metavar="BOOL", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="disner",
        description="Dictionary-augmented BiLSTM-CRF disease mention tagger.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_stats = sub.add_parser("stats", help="corpus counts from a PubTator file")
    p_stats.add_argument("input", help="PubTator corpus file")

    p_conv = sub.add_parser("convert-sr",
                            help="convert CoNLL token/tag streams between schemes")
    p_conv.add_argument("input", nargs="?", default="-",
                        help="token<TAB>tag file; '-' or omitted reads stdin")
    p_conv.add_argument("--to", required=True, choices=["iob2", "iobes"],
                        help="target scheme")
    p_conv.add_argument("--from", dest="source", choices=["iob2", "iobes"],
                        help="source scheme (default: detect from the tags)")
    p_conv.add_argument("--repair", action="store_true",
                        help="repair invalid sequences instead of failing")
    p_conv.add_argument("--out", help="output path (default: stdout)")

    p_train = sub.add_parser("train", help="train a model")
    p_train.add_argument("--train", required=True, dest="train_path",
                         help="training corpus (PubTator)")
    p_train.add_argument("--dev", dest="dev_path",
                         help="development corpus for model selection")
    p_train.add_argument("--config", help="key=value config file "
                         "(default: $DISNER_CONFIG)")
    p_train.add_argument("--medic", help="disease vocabulary TSV "
                         "(default: $DISNER_MEDIC)")
    p_train.add_argument("--embeddings", help="word2vec text vectors "
                         "(default: $DISNER_EMBEDDINGS)")
    p_train.add_argument("--out", required=True, help="checkpoint output path")
    p_train.add_argument("--stop-dev-f1", type=float, default=None,
                         help="stop once selection F1 reaches this value")
    p_train.add_argument("--figures", help="directory for training curves "
                         "and the epoch table")
    _add_config_overrides(p_train)

    p_pred = sub.add_parser("predict", help="annotate documents with a model")
    p_pred.add_argument("--model", required=True, help="checkpoint path")
    p_pred.add_argument("input", help="PubTator input (annotations ignored)")
    p_pred.add_argument("--out", help="output path (default: stdout)")

    p_eval = sub.add_parser("evaluate",
                            help="entity-level scores of predictions vs gold")
    p_eval.add_argument("--gold", required=True, help="gold PubTator file")
    p_eval.add_argument("--pred", required=True, help="predicted PubTator file")
    p_eval.add_argument("--figures", help="directory for the score chart "
                        "and the score table")

    p_fix = sub.add_parser("decode-fixture",
                           help="score and decode a plain-text fixture")
    p_fix.add_argument("input", nargs="?",
                       help="fixture file (default: the bundled one)")

    p_grad = sub.add_parser("gradcheck",
                            help="finite-difference check of model gradients")
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--threshold", type=float, default=1e-4)

    return parser


# ---------------------------------------------------------------------------
# subcommand bodies


def _read_input(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text("utf-8")


def _write_output(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text, "utf-8")
    else:
        sys.stdout.write(text)


def _cmd_stats(args) -> int:
    docs = parse_pubtator(_read_input(args.input))
    stats = corpus_stats(docs)
    print(f"abstracts={stats.n_abstracts}")
    print(f"sentences={stats.n_sentences}")
    print(f"mentions={stats.n_mentions}")
    print(f"unique_mentions={stats.n_unique_mentions}")
    return 0


def _parse_conll(text: str) -> list[list[tuple[str, str]]]:
    sentences: list[list[tuple[str, str]]] = []
    current: list[tuple[str, str]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            if current:
                sentences.append(current)
                current = []
            continue
        parts = line.split()
        if len(parts) < 2:
            raise ParseError("expected token and tag columns", lineno)
        current.append((parts[0], parts[-1]))
    if current:
        sentences.append(current)
    return sentences


def _detect_scheme(sentences) -> Scheme:
    for sentence in sentences:
        for _, tag in sentence:
            if tag.split("-", 1)[0] in ("E", "S"):
                return Scheme.IOBES
    return Scheme.IOB2


def _cmd_convert_sr(args) -> int:
    sentences = _parse_conll(_read_input(args.input))
    target = Scheme.parse(args.to)
    source = Scheme.parse(args.source) if args.source else _detect_scheme(sentences)
    blocks = []
    for sentence in sentences:
        tags = tuple(tag for _, tag in sentence)
        if args.repair:
            seq = repair(tags, source)
        else:
            seq = TagSequence(tags, source)
            seq.validate()
        converted = convert(seq, target)
        blocks.append("\n".join(f"{token}\t{tag}" for (token, _), tag
                                in zip(sentence, converted.tags)))
    _write_output("\n\n".join(blocks) + ("\n" if blocks else ""), args.out)
    return 0


def _env_default(value: str | None, variable: str) -> str | None:
    return value if value is not None else os.environ.get(variable) or None


def _cmd_train(args) -> int:
    config = ModelConfig()
    config_path = _env_default(args.config, "DISNER_CONFIG")
    if config_path:
        config = parse_config(Path(config_path).read_text("utf-8"), config)
    overrides = {}
    for name in _CONFIG_FLAGS + ["v1", "v2", "v3", "v4"]:
        raw = getattr(args, f"cfg_{name}")
        if raw is not None:
            overrides[name] = raw
    config = apply_overrides(config, overrides)

    train_docs = parse_pubtator(Path(args.train_path).read_text("utf-8"))
    dev_docs = (parse_pubtator(Path(args.dev_path).read_text("utf-8"))
                if args.dev_path else [])
    medic_path = _env_default(args.medic, "DISNER_MEDIC")
    lexicon = (load_medic(Path(medic_path).read_text("utf-8"))
               if medic_path else None)
    embeddings_path = _env_default(args.embeddings, "DISNER_EMBEDDINGS")
    pretrained = None
    if embeddings_path and config.use_pretrained:
        vocab = corpus_vocabulary(list(train_docs) + list(dev_docs))
        pretrained = load_word2vec_text(Path(embeddings_path).read_text("utf-8"),
                                        vocab, seed=config.seed,
                                        expected_dim=config.word_dim)

    result = train(config, train_docs, dev_docs, lexicon=lexicon,
                   pretrained=pretrained, stop_dev_f1=args.stop_dev_f1,
                   log=lambda message: print(message, file=sys.stderr))
    metadata = {
        "best_epoch": result.best_epoch,
        "best_dev_f1": result.best_dev_f1,
        "history": [(h.epoch, h.mean_loss, h.grad_norm, h.dev_f1)
                    for h in result.history],
    }
    save_checkpoint(result.model, args.out, metadata)
    print(f"checkpoint={args.out}")
    print(f"epochs_run={len(result.history)}")
    print(f"best_epoch={result.best_epoch}")
    print(f"best_dev_f1={result.best_dev_f1:.6f}")
    if args.figures:
        _write_training_figures(result, args.figures)
    return 0


def _write_training_figures(result, directory: str) -> None:
    from . import plots
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["epoch\tmean_loss\tgrad_norm\tdev_f1"]
    rows += [f"{h.epoch}\t{h.mean_loss:.6f}\t{h.grad_norm:.6f}\t{h.dev_f1:.6f}"
             for h in result.history]
    (out / "training_history.tsv").write_text("\n".join(rows) + "\n", "utf-8")
    plots.save_training_curves([h.epoch for h in result.history],
                               [h.mean_loss for h in result.history],
                               [h.dev_f1 for h in result.history],
                               out / "training_curves.png")


def _cmd_predict(args) -> int:
    model, _ = load_checkpoint(args.model)
    docs = parse_pubtator(_read_input(args.input))
    _write_output(write_pubtator(predict_documents(model, docs)), args.out)
    return 0


def _cmd_evaluate(args) -> int:
    gold = parse_pubtator(Path(args.gold).read_text("utf-8"))
    pred = parse_pubtator(Path(args.pred).read_text("utf-8"))
    report = evaluate_documents(gold, pred)
    print(report.pretty())
    print(report.key_value_lines())
    if args.figures:
        from . import plots
        out = Path(args.figures)
        out.mkdir(parents=True, exist_ok=True)
        (out / "scores.tsv").write_text(
            "tp\tfp\tfn\tprecision\trecall\tf1\n"
            f"{report.true_positives}\t{report.false_positives}\t"
            f"{report.false_negatives}\t{report.precision:.6f}\t"
            f"{report.recall:.6f}\t{report.f1:.6f}\n", "utf-8")
        plots.save_prf_bar(report, out / "scores.png")
    return 0


def _cmd_decode_fixture(args) -> int:
    text = _read_input(args.input) if args.input else golden_decode_fixture_text()
    fixture = parse_fixture(text)
    scores = [global_score(fixture.emissions, fixture.transitions, path)
              for path in fixture.paths]
    best = viterbi_decode(fixture.emissions, fixture.transitions)
    parts = [f"{score:g}" for score in scores]
    parts.append(f"selected=({','.join(best.tags)})")
    print(" ".join(parts))
    return 0


def _cmd_gradcheck(args) -> int:
    from .autodiff import gradient_check
    from .crf import local_loss, nll_loss

    config = ModelConfig(dropout=0.0, char_lstm_units=2, word_lstm_units=3,
                         char_dim=3, word_dim=4, scheme=Scheme.IOB2,
                         use_dictionary=False, use_pretrained=False,
                         seed=args.seed)
    tokens = tuple(tokenize("colon cancer risk"))
    sentence = Sentence(tokens, "gradcheck", 0)
    words = sorted({t.surface.lower() for t in tokens})
    table = random_table(words, config.word_dim, config.seed)
    chars = sorted({c for t in tokens for c in t.surface})
    from .embeddings import CharVocab
    char_vocab = CharVocab({c: i + 1 for i, c in enumerate(chars)})
    inventory = TagInventory.from_scheme(config.scheme)
    model = Model.initialize(config, table, char_vocab, inventory, None)
    gold = encode_spans(len(tokens), [Span(0, 1, "Disease")], config.scheme)
    bits = np.zeros((len(tokens), 4))

    results = {}
    for name, loss_fn in (("nll", nll_loss), ("local", local_loss)):
        def build_loss(fn=loss_fn):
            s = _sentence_emissions(model, sentence, bits, training=False)
            if fn is nll_loss:
                return fn(s, model.transitions, gold, inventory)
            return fn(s, gold, inventory)
        results[name] = gradient_check(build_loss, model.params)
    status = "ok" if all(v < args.threshold for v in results.values()) else "fail"
    print(f"nll_max_rel_err={results['nll']:.3e}")
    print(f"local_max_rel_err={results['local']:.3e}")
    print(f"threshold={args.threshold:g}")
    print(f"status={status}")
    return 0 if status == "ok" else 1


_COMMANDS = {
    "stats": _cmd_stats,
    "convert-sr": _cmd_convert_sr,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "decode-fixture": _cmd_decode_fixture,
    "gradcheck": _cmd_gradcheck,
}


def run(argv: list[str]) -> int:
    args = build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


def main(argv: list[str] | None = None) -> int:
    try:
        return run(sys.argv[1:] if argv is None else argv)
    except DisnerError as err:
        message = " ".join(str(err).split())
        print(f"error: {type(err).__name__}: {message}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: OSError: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    main()
