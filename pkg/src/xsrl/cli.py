"""Command line entry point: ``python -m xsrl <command> ...``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config

log = logging.getLogger("xsrl")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value configuration file")
    group = p.add_argument_group("configuration overrides")
    for f in dataclasses.fields(ExperimentConfig):
        group.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}", metavar="VALUE")


def _config(args) -> ExperimentConfig:
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_")}
    return load_config(args.config, **overrides)


def cmd_synth_data(args) -> int:
    from .conllu import write_corpus, synth_corpus

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for k, lang in enumerate(args.languages.split(",")):
        for split, offset, n in (("train", 0, args.n_train), ("test", 1000, args.n_test)):
            corpus = synth_corpus(args.seed + 17 * k + offset, n, args.vocab_size, args.profile,
                                  language=lang, shared_fraction=args.shared_fraction)
            path = out / f"{lang}.{split}.conllu"
            write_corpus(corpus, path)
            print(f"wrote {path} ({len(corpus)} sentences)")
    return 0


def cmd_pretrain_ho(args) -> int:
    from .conllu import Corpus, read_corpus
    from .highorder import PretrainConfig, evaluate_pretraining, pretrain
    from .model import save_gnn

    sentences = [s for path in args.corpus for s in read_corpus(path)]
    if len(sentences) < 2:
        raise ConfigError("pretrain-ho needs at least two sentences")
    cut = max(1, int(len(sentences) * (1 - args.held_out)))
    train_c, held = Corpus(sentences[:cut]), Corpus(sentences[cut:] or sentences[-1:])
    cfg = PretrainConfig(steps=args.steps, batch_size=args.batch_size, lr=args.lr,
                         hidden=args.hidden, n_layers=args.layers, seed=args.seed)

    def progress(step, loss):
        if (step + 1) % 100 == 0:
            log.info("step %d loss %.4f", step + 1, loss)

    params, _ = pretrain(train_c, cfg, progress)
    save_gnn(params, args.output)
    stats = evaluate_pretraining(held, params, seed=args.seed)
    print("\t".join(f"{k}={v:.4f}" for k, v in stats.items()))
    return 0


def cmd_train(args) -> int:
    from .training import evaluate_end2end, train

    cfg = _config(args)
    if not cfg.output:
        raise ConfigError("train needs an output checkpoint (output = ... or --output)")
    result = train(cfg, on_epoch=lambda e, loss: log.info("epoch %d loss %.4f", e + 1, loss))
    print(f"trained {cfg.n_epochs} epochs, final loss {result.epoch_losses[-1]:.4f}; checkpoint {cfg.output}")
    if cfg.target:
        from .training import load_split

        print(f"{cfg.target}: {evaluate_end2end(result.model, load_split(cfg, cfg.target, 'test')).summary()}")
    return 0


def cmd_eval(args) -> int:
    from .conllu import read_corpus
    from .model import SRLModel
    from .training import evaluate_arg_labeling, evaluate_end2end, write_predictions

    cfg = _config(args)
    checkpoint = args.checkpoint or cfg.output
    if not checkpoint:
        raise ConfigError("eval needs --checkpoint")
    model = SRLModel.load(checkpoint)
    lang = cfg.target or cfg.sources[0]
    corpus = read_corpus(args.corpus) if args.corpus else read_corpus(cfg.corpus_path(lang, "test"))
    report = (evaluate_arg_labeling if args.gold_predicates else evaluate_end2end)(model, corpus)
    print(report.summary())
    if args.report:
        Path(args.report).write_text(report.to_tsv())
    if args.predictions:
        with open(args.predictions, "w", encoding="utf-8") as fh:
            write_predictions(model, corpus, fh, args.gold_predicates)
    return 0


def cmd_transfer_matrix(args) -> int:
    from .training import run_transfer_matrix

    cfg = _config(args)
    matrix = run_transfer_matrix(cfg, args.languages.split(","), args.mode, gold_predicates=args.gold_predicates)
    text = matrix.to_tsv()
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_grad_check(args) -> int:
    from .gradcheck import TOLERANCE, run_suite

    def report(r):
        print(f"{'ok  ' if r.passed else 'FAIL'} {r.name:24s} max_rel_err={r.max_rel_error:.3e} entries={r.entries}")

    results = run_suite(args.points, args.seed, report)
    worst = max(r.max_rel_error for r in results)
    print(f"max relative error {worst:.3e} (tolerance {TOLERANCE:g})")
    return 0 if worst <= TOLERANCE else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xsrl", description="Cross-lingual end-to-end SRL toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="write synthetic CoNLL-U-plus corpora")
    p.add_argument("--out-dir", default="data")
    p.add_argument("--languages", default="en")
    p.add_argument("--n-train", type=int, default=200)
    p.add_argument("--n-test", type=int, default=50)
    p.add_argument("--vocab-size", type=int, default=100)
    p.add_argument("--profile", default="syntax-determined", choices=("syntax-determined", "lexical"))
    p.add_argument("--shared-fraction", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("pretrain-ho", help="pre-train the high-order feature GNN")
    p.add_argument("--corpus", nargs="+", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--hidden", type=int, default=350)
    p.add_argument("--layers", type=int, default=5)
    p.add_argument("--held-out", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_pretrain_ho)

    p = sub.add_parser("train", help="train an SRL model")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a corpus")
    _add_config_flags(p)
    p.add_argument("--checkpoint")
    p.add_argument("--corpus")
    p.add_argument("--gold-predicates", action="store_true", help="argument labeling with gold predicates")
    p.add_argument("--report", help="write the full metrics TSV here")
    p.add_argument("--predictions", help="write predicted triplets here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("transfer-matrix", help="bilingual or multi-source transfer grid")
    _add_config_flags(p)
    p.add_argument("--languages", required=True)
    p.add_argument("--mode", default="bilingual", choices=("bilingual", "multi"))
    p.add_argument("--gold-predicates", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_transfer_matrix)

    p = sub.add_parser("grad-check", help="finite-difference gradient suite")
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
