#!/usr/bin/env python3
"""Fit a small BASIC model to a synthetic corpus, logging the loss, then report training F1.

Also compares feature sets with frozen random embeddings (word-only vs word + GCN).
"""

from __future__ import annotations

import argparse
import statistics
import time
from dataclasses import dataclass

from xsrl.config import ExperimentConfig
from xsrl.conllu import synth_corpus
from xsrl.training import evaluate_end2end, train


@dataclass
class OverfitConfig:
    seed: int = 7
    n_sentences: int = 50
    vocab_size: int = 100
    dim: int = 32
    epochs: int = 200
    report_every: int = 25


def small_config(cfg: OverfitConfig, **changes) -> ExperimentConfig:
    d = cfg.dim
    return ExperimentConfig(sources=["en"], encoder="basic", word_dim=d, pos_dim=d // 2, tree_hidden=d,
                            encoder_hidden=d, encoder_layers=1, d_r=d, batch_size=10, epochs=cfg.epochs,
                            **changes)


def overfit(cfg: OverfitConfig) -> None:
    corpus = synth_corpus(cfg.seed, cfg.n_sentences, cfg.vocab_size, language="en")
    start = time.perf_counter()
    model_cfg = small_config(cfg, dropout=0.0, seed=1)

    def on_epoch(epoch: int, loss: float) -> None:
        if (epoch + 1) % cfg.report_every == 0:
            print(f"epoch {epoch + 1:4d}  loss {loss:8.4f}  {time.perf_counter() - start:6.1f}s", flush=True)

    result = train(model_cfg, {"en": corpus}, on_epoch=on_epoch)
    print("final:", evaluate_end2end(result.model, corpus).summary())


def syntax_utility(cfg: OverfitConfig, seeds: list[int]) -> None:
    corpus = synth_corpus(cfg.seed, cfg.n_sentences, cfg.vocab_size, language="en")
    base = small_config(cfg, freeze_embeddings=True, pos=False)
    rows = {"word+gcn": [], "word": []}
    for seed in seeds:
        rows["word+gcn"].append(evaluate_end2end(train(base.replace(tree="gcn", seed=seed), {"en": corpus}).model, corpus).f1)
        rows["word"].append(evaluate_end2end(train(base.replace(tree="none", seed=seed), {"en": corpus}).model, corpus).f1)
    for name, vals in rows.items():
        print(f"{name:10s} median F1 {statistics.median(vals):5.1f}  per seed {[round(v, 1) for v in vals]}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, default=OverfitConfig.epochs)
    ap.add_argument("--dim", type=int, default=OverfitConfig.dim)
    ap.add_argument("--compare-features", action="store_true", help="frozen-embedding feature comparison instead")
    ap.add_argument("--seeds", default="1,2,3")
    args = ap.parse_args()
    cfg = OverfitConfig(dim=args.dim, epochs=args.epochs)
    if args.compare_features:
        syntax_utility(cfg, [int(s) for s in args.seeds.split(",")])
    else:
        overfit(cfg)


if __name__ == "__main__":
    main()
