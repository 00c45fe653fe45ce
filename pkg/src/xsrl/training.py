"""Training loop, evaluation protocols and transfer-matrix orchestration."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence, TextIO

import numpy as np

from . import autograd as ag
from .config import ExperimentConfig
from .conllu import Corpus, read_corpus
from .features import build_vocabularies, read_context_vectors
from .metrics import MetricsReport, score_triplets
from .model import SRLModel, load_gnn
from .params import AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    model: SRLModel
    epoch_losses: list[float] = field(default_factory=list)
    oracle_misses: list[int] = field(default_factory=list)


def load_split(config: ExperimentConfig, language: str, split: str) -> Corpus:
    path = config.corpus_path(language, split)
    if not path.exists():
        raise FileNotFoundError(f"missing corpus {path}")
    return read_corpus(path)


def build_model(config: ExperimentConfig, train_corpus: Corpus,
                extra_languages: Sequence[str] = ()) -> SRLModel:
    """Load feature resources (failing before any training) and build the network."""
    context = read_context_vectors(config.context) if config.context else None
    ho = load_gnn(config.ho) if config.ho else None
    languages = list(config.sources)
    for lang in [config.target, *extra_languages]:
        if lang and lang not in languages:
            languages.append(lang)
    vocabs = build_vocabularies(train_corpus, config.min_count)
    return SRLModel(config, vocabs, languages, ho, context)


def train(config: ExperimentConfig, corpora: Mapping[str, Corpus] | None = None,
          on_epoch: Callable[[int, float], None] | None = None,
          extra_languages: Sequence[str] = ()) -> TrainResult:
    """Shuffled mini-batch Adam over the concatenated source corpora."""
    config.validate()
    if corpora is None:
        corpora = {lang: load_split(config, lang, "train") for lang in config.sources}
    sentences = [s for lang in config.sources for s in corpora[lang]]
    if not sentences:
        raise ValueError("no training sentences")
    model = build_model(config, Corpus(sentences), extra_languages)
    rng = np.random.default_rng(config.seed + 7919)
    adam = AdamState(lr=config.lr)
    params = model.store.trainable()
    result = TrainResult(model)
    for epoch in range(config.n_epochs):
        order = rng.permutation(len(sentences))
        losses, misses = [], 0
        for start in range(0, len(order), config.batch_size):
            batch = [sentences[i] for i in order[start: start + config.batch_size]]
            out = model.loss(batch, training=True, rng=rng)
            ag.backward(out.loss, params.values())
            adam_step(params, adam)
            losses.append(out.loss.item())
            misses += out.oracle_misses
        result.epoch_losses.append(float(np.mean(losses)))
        result.oracle_misses.append(misses)
        if on_epoch is not None:
            on_epoch(epoch, result.epoch_losses[-1])
        log.debug("epoch %d loss %.4f oracle-misses %d", epoch + 1, result.epoch_losses[-1], misses)
    if config.output:
        model.save(config.output)
    return result


def predict_corpus(model: SRLModel, corpus: Corpus, gold_predicates: bool = False,
                   batch_size: int = 64, alpha_p: float | None = None, alpha_a: float | None = None):
    preds, misses = [], 0
    sents = corpus.sentences
    for start in range(0, len(sents), batch_size):
        out, m = model.predict(sents[start: start + batch_size], gold_predicates, alpha_p, alpha_a)
        preds += out
        misses += m
    return preds, misses


def _named(model: SRLModel, triplets) -> set[tuple[int, int, str]]:
    return {(t.predicate, t.argument, model.label_name(t.label)) for t in triplets}


def evaluate_end2end(model: SRLModel, corpus: Corpus) -> MetricsReport:
    preds, misses = predict_corpus(model, corpus)
    return score_triplets([_named(model, p) for p in preds], [s.triplets() for s in corpus], misses)


def evaluate_arg_labeling(model: SRLModel, corpus: Corpus) -> MetricsReport:
    """Predicates fixed to the gold frame positions; arguments still beam-pruned."""
    preds, misses = predict_corpus(model, corpus, gold_predicates=True)
    return score_triplets([_named(model, p) for p in preds], [s.triplets() for s in corpus], misses)


def write_predictions(model: SRLModel, corpus: Corpus, out: TextIO, gold_predicates: bool = False) -> None:
    preds, _ = predict_corpus(model, corpus, gold_predicates)
    for sent, triplets in zip(corpus, preds):
        for t in sorted(triplets, key=lambda t: (t.predicate, t.argument)):
            out.write(f"{sent.sentence_id}\t{t.predicate}\t{t.argument}\t{model.label_name(t.label)}\t{t.score:.6f}\n")


def read_predictions(stream: TextIO) -> dict[str, set[tuple[int, int, str]]]:
    out: dict[str, set] = {}
    for line in stream:
        if not line.strip():
            continue
        sid, p, a, label, _ = line.rstrip("\n").split("\t")
        out.setdefault(sid, set()).add((int(p), int(a), label))
    return out


# ---------------------------------------------------------------- transfer


@dataclass
class TransferCell:
    source: str  # "+"-joined for multi-source
    target: str
    mode: str
    precision: float
    recall: float
    f1: float


@dataclass
class TransferMatrix:
    cells: list[TransferCell] = field(default_factory=list)

    def get(self, source: str, target: str) -> TransferCell:
        for c in self.cells:
            if c.source == source and c.target == target:
                return c
        raise KeyError((source, target))

    def to_tsv(self) -> str:
        lines = ["source\ttarget\tmode\tP\tR\tF1"]
        lines += [f"{c.source}\t{c.target}\t{c.mode}\t{c.precision:.1f}\t{c.recall:.1f}\t{c.f1:.1f}"
                  for c in self.cells]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_tsv(cls, text: str) -> "TransferMatrix":
        cells = []
        for line in io.StringIO(text):
            line = line.rstrip("\n")
            if not line or line.startswith("source\t"):
                continue
            s, t, mode, p, r, f = line.split("\t")
            cells.append(TransferCell(s, t, mode, float(p), float(r), float(f)))
        return cls(cells)


class CellError(RuntimeError):
    pass


def run_transfer_matrix(template: ExperimentConfig, languages: Sequence[str], mode: str = "bilingual",
                        train_corpora: Mapping[str, Corpus] | None = None,
                        test_corpora: Mapping[str, Corpus] | None = None,
                        gold_predicates: bool = False) -> TransferMatrix:
    """Bilingual: one model per source, scored on every other language.
    Multi-source: one model per target, trained on all other languages."""
    languages = list(languages)
    if len(languages) < 2:
        raise ValueError("transfer matrix needs at least two languages")
    if mode not in ("bilingual", "multi"):
        raise ValueError(f"unknown transfer mode {mode!r}")
    if train_corpora is None:
        train_corpora = {lang: load_split(template, lang, "train") for lang in languages}
    if test_corpora is None:
        test_corpora = {lang: load_split(template, lang, "test") for lang in languages}
    evaluate = evaluate_arg_labeling if gold_predicates else evaluate_end2end
    matrix = TransferMatrix()
    if mode == "bilingual":
        plans = [([s], [t for t in languages if t != s]) for s in languages]
    else:
        plans = [([s for s in languages if s != t], [t]) for t in languages]
    for sources, targets in plans:
        try:
            cfg = template.replace(sources=sources, target="", output="")
            model = train(cfg, train_corpora, extra_languages=targets).model
            for t in targets:
                rep = evaluate(model, test_corpora[t])
                # stored at reporting precision so the grid equals its own TSV
                prec, rec, f1 = (round(v, 1) for v in (rep.precision, rep.recall, rep.f1))
                matrix.cells.append(TransferCell("+".join(sources), t, mode, prec, rec, f1))
        except Exception as exc:
            raise CellError(f"transfer cell sources={'+'.join(sources)} targets={','.join(targets)} failed: {exc}") from exc
    return matrix

