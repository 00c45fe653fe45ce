#!/usr/bin/env python3
"""Pre-train the high-order GNN on a synthetic corpus and report held-out statistics."""

from __future__ import annotations

import argparse
import time

from xsrl.conllu import Corpus, synth_corpus
from xsrl.highorder import PretrainConfig, evaluate_pretraining, pretrain
from xsrl.model import save_gnn


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sentences", type=int, default=500)
    ap.add_argument("--held-out", type=float, default=0.1)
    ap.add_argument("--steps", type=int, default=PretrainConfig.steps)
    ap.add_argument("--hidden", type=int, default=PretrainConfig.hidden)
    ap.add_argument("--layers", type=int, default=PretrainConfig.n_layers)
    ap.add_argument("--corpus-seed", type=int, default=11)
    ap.add_argument("--output", help="write the GNN checkpoint here")
    args = ap.parse_args()

    full = synth_corpus(args.corpus_seed, args.sentences, language="en")
    cut = len(full) - max(1, round(args.held_out * len(full)))
    train_c, held = Corpus(full.sentences[:cut]), Corpus(full.sentences[cut:])
    cfg = PretrainConfig(steps=args.steps, hidden=args.hidden, n_layers=args.layers)
    start = time.perf_counter()

    def progress(step: int, loss: float) -> None:
        if (step + 1) % 250 == 0:
            print(f"step {step + 1:5d}  loss {loss:.4f}  {time.perf_counter() - start:6.1f}s", flush=True)

    params, _ = pretrain(train_c, cfg, progress)
    stats = evaluate_pretraining(held, params)
    print(f"masked accuracy {stats['masked_accuracy']:.3f} (majority {stats['majority_rate']:.3f}), "
          f"edge AUC {stats['edge_auc']:.4f}, {time.perf_counter() - start:.0f}s")
    if args.output:
        save_gnn(params, args.output)


if __name__ == "__main__":
    main()
