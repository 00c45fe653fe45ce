"""The end-to-end SRL network: input features, tree encoder, (PGN-)BiLSTM and
the beam-pruned biaffine scorer."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .config import ExperimentConfig
from .conllu import Sentence
from .encoder import Encoder
from .features import (
    ContextVectorStore,
    EmbeddingTable,
    Vocabulary,
    concat_blocks,
    read_context_vectors,
)
from .highorder import GNNParams, extract_ho
from .params import ParamStore, read_checkpoint, write_checkpoint
from .srl import (
    NULL_ID,
    SRLScorer,
    Triplet,
    candidate_pairs,
    decode_pairs,
    gold_pair_labels,
    oracle_misses,
    pair_nll,
    prune,
)
from .trees import DepGraph, GCNParams, TreeLSTMParams, tree_feature


@dataclass
class BatchOutput:
    loss: Tensor
    pair_loss: Tensor
    unary_loss: Tensor | None
    oracle_misses: int


class SRLModel:
    def __init__(self, config: ExperimentConfig, vocabs: dict[str, Vocabulary],
                 languages: Sequence[str] | None = None, ho_params: GNNParams | None = None,
                 context: ContextVectorStore | None = None):
        self.config = config
        self.vocabs = vocabs
        self.labels = list(vocabs["role"].symbols)
        self.store = ParamStore()
        self.ho_params = ho_params
        self.context = context
        rng = np.random.default_rng(config.seed)
        c = config
        freeze = c.freeze_embeddings
        self.tables: dict[str, EmbeddingTable] = {}
        base_dim = 0
        if c.word:
            self.tables["word"] = EmbeddingTable("emb.word", vocabs["word"], c.word_dim, self.store, rng, freeze)
            base_dim += c.word_dim
        if c.lemma:
            self.tables["lemma"] = EmbeddingTable("emb.lemma", vocabs["lemma"], c.lemma_dim, self.store, rng, freeze)
            base_dim += c.lemma_dim
        if c.context:
            if context is None:
                raise ValueError("context feature enabled but no vector store provided")
            base_dim += context.dim
        if c.pos:
            self.tables["pos"] = EmbeddingTable("emb.pos", vocabs["upos"], c.pos_dim, self.store, rng, freeze)
            base_dim += c.pos_dim
        self.tree_params = None
        d_in = base_dim
        if c.tree == "gcn":
            self.tree_params = GCNParams.create(self.store, rng, base_dim, c.tree_hidden, c.gcn_layers)
            d_in += c.tree_hidden
        elif c.tree == "treelstm":
            self.tree_params = TreeLSTMParams.create(self.store, rng, base_dim, c.tree_hidden)
            d_in += 2 * c.tree_hidden
        if c.ho:
            if ho_params is None:
                raise ValueError("high-order feature enabled but no pretrained GNN provided")
            d_in += ho_params.hidden
        self.input_dim = d_in
        languages = list(languages) if languages is not None else list(c.sources)
        self.encoder = Encoder(self.store, rng, d_in, c.encoder_hidden, c.encoder_layers, c.encoder,
                               languages, c.lang_dim)
        if c.encoder == "pgn":
            self.encoder.trained_languages = list(c.sources)
        self.scorer = SRLScorer(self.store, rng, self.encoder.output_dim, len(self.labels), c.d_r)
        self._ho_cache: dict[tuple[str, str], np.ndarray] = {}

    # ------------------------------------------------------------ features

    def label_id(self, label: str) -> int:
        return self.labels.index(label) + 1

    def gold_maps(self, sentences: Sequence[Sentence]) -> list[dict]:
        maps = []
        for s in sentences:
            maps.append({
                (f.predicate_index, a): self.label_id(r)
                for f in s.frames for a, r in f.roles.items() if r in self.labels
            })
        return maps

    def _ho_rows(self, sentences: Sequence[Sentence]) -> np.ndarray:
        missing = [s for s in sentences if (s.language, s.sentence_id) not in self._ho_cache]
        if missing:
            vecs = extract_ho(missing, self.ho_params)
            start = 0
            for s in missing:
                self._ho_cache[(s.language, s.sentence_id)] = vecs[start: start + len(s)]
                start += len(s)
        return np.concatenate([self._ho_cache[(s.language, s.sentence_id)] for s in sentences])

    def inputs(self, sentences: Sequence[Sentence], training: bool = False,
               rng: np.random.Generator | None = None) -> Tensor:
        tokens = [t for s in sentences for t in s.tokens]
        blocks: dict[str, Tensor] = {}
        if "word" in self.tables:
            blocks["word"] = self.tables["word"]([t.form for t in tokens])
        if "lemma" in self.tables:
            blocks["lemma"] = self.tables["lemma"]([t.lemma for t in tokens])
        if self.config.context:
            blocks["context"] = ag.constant(np.concatenate([self.context.sentence(s) for s in sentences]))
        if "pos" in self.tables:
            blocks["pos"] = self.tables["pos"]([t.upos for t in tokens])
        if self.tree_params is not None:
            base = concat_blocks(blocks)
            blocks["tree"] = tree_feature(DepGraph.from_sentences(sentences), base, self.config.tree, self.tree_params)
        if self.config.ho:
            blocks["ho"] = ag.constant(self._ho_rows(sentences))
        x = concat_blocks(blocks)
        return ag.dropout(x, self.config.dropout, rng, training)

    def encode(self, sentences: Sequence[Sentence], training: bool = False,
               rng: np.random.Generator | None = None) -> Tensor:
        x = self.inputs(sentences, training, rng)
        h = self.encoder(x, [len(s) for s in sentences], [s.language for s in sentences])
        return ag.dropout(h, self.config.dropout, rng, training)

    # ------------------------------------------------------------ training

    def candidates(self, sentences, r_p, r_a, alpha_p=None, alpha_a=None, gold_predicates=False,
                   inject: Sequence[dict] | None = None):
        alpha_p = self.config.alpha_p if alpha_p is None else alpha_p
        alpha_a = self.config.alpha_a if alpha_a is None else alpha_a
        up, ua = self.scorer.unary_scores(r_p, r_a)
        lengths = [len(s) for s in sentences]
        beams = prune(up.data, ua.data, lengths, alpha_p, alpha_a)
        preds, args = beams.predicates, beams.arguments
        if gold_predicates:
            preds = [np.array(sorted(f.predicate_index - 1 for f in s.frames), dtype=np.int64) for s in sentences]
        if inject is not None:
            preds = [np.union1d(p, [k[0] - 1 for k in g]).astype(np.int64) for p, g in zip(preds, inject)]
            args = [np.union1d(a, [k[1] - 1 for k in g]).astype(np.int64) for a, g in zip(args, inject)]
        return preds, args, up, ua

    def loss(self, sentences: Sequence[Sentence], training: bool = True,
             rng: np.random.Generator | None = None) -> BatchOutput:
        """Mean over sentences of the pair NLL plus the weighted unary beam loss."""
        h = self.encode(sentences, training, rng)
        r_p, r_a = self.scorer.project_heads(h)
        gold = self.gold_maps(sentences)
        inject = gold if (training and self.config.gold_beam_inject) else None
        preds, args, up, ua = self.candidates(sentences, r_p, r_a, inject=inject)
        lengths = [len(s) for s in sentences]
        offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]])
        sent, pr, ar = candidate_pairs(preds, args, lengths)
        gold_ids = gold_pair_labels(sent, pr, ar, offsets, gold)
        logits = self.scorer.pair_logits(r_p, r_a, pr, ar)
        per_sentence = pair_nll(logits, gold_ids, sent, len(sentences))
        pair_loss = ag.mean_all(per_sentence)
        misses = oracle_misses(preds, args, gold)
        loss, unary = pair_loss, None
        if self.config.unary_weight > 0:
            is_pred = np.zeros(sum(lengths))
            is_arg = np.zeros(sum(lengths))
            for off, g in zip(offsets, gold):
                for p, a in g:
                    is_pred[off + p - 1] = 1.0
                    is_arg[off + a - 1] = 1.0
            bce = (ag.softplus(up) - up * ag.constant(is_pred)) + (ag.softplus(ua) - ua * ag.constant(is_arg))
            unary = ag.scalar_affine(ag.sum_all(bce), 1.0 / len(sentences))
            loss = pair_loss + ag.scalar_affine(unary, self.config.unary_weight)
        return BatchOutput(loss, pair_loss, unary, misses)

    # ------------------------------------------------------------ inference

    def predict(self, sentences: Sequence[Sentence], gold_predicates: bool = False,
                alpha_p: float | None = None, alpha_a: float | None = None) -> tuple[list[list[Triplet]], int]:
        """Triplets per sentence and the number of gold pairs outside the beams."""
        with ag.no_grad():
            h = self.encode(sentences)
            r_p, r_a = self.scorer.project_heads(h)
            preds, args, _, _ = self.candidates(sentences, r_p, r_a, alpha_p, alpha_a, gold_predicates)
            lengths = [len(s) for s in sentences]
            offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]])
            sent, pr, ar = candidate_pairs(preds, args, lengths)
            out: list[list[Triplet]] = [[] for _ in sentences]
            if len(sent):
                logits = self.scorer.pair_logits(r_p, r_a, pr, ar).data
                best, score = decode_pairs(logits)
                for k, p, a, lab, sc in zip(sent, pr, ar, best, score):
                    if lab != NULL_ID:
                        out[k].append(Triplet(int(p - offsets[k]) + 1, int(a - offsets[k]) + 1, int(lab), float(sc)))
        misses = oracle_misses(preds, args, self.gold_maps(sentences))
        return out, misses

    def label_name(self, label_id: int) -> str:
        return self.labels[label_id - 1]

    # ------------------------------------------------------------ persistence

    def meta(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "vocabs": {k: v.to_dict() for k, v in self.vocabs.items()},
            "languages": self.encoder.languages,
        }

    def save(self, path: str | Path) -> None:
        path = Path(path)
        write_checkpoint(path, self.store.arrays())
        Path(str(path) + ".meta.json").write_text(json.dumps(self.meta(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path, **overrides) -> "SRLModel":
        path = Path(path)
        meta = json.loads(Path(str(path) + ".meta.json").read_text())
        config = ExperimentConfig(**{**meta["config"], **overrides})
        vocabs = {k: Vocabulary.from_dict(v) for k, v in meta["vocabs"].items()}
        ho = load_gnn(config.ho) if config.ho else None
        context = read_context_vectors(config.context) if config.context else None
        model = cls(config, vocabs, meta["languages"], ho, context)
        model.store.load_arrays(read_checkpoint(path))
        return model


def save_gnn(params: GNNParams, path: str | Path) -> None:
    write_checkpoint(path, params.store.arrays())
    meta = {"hidden": params.hidden, "n_layers": params.n_layers,
            "vocabs": {k: v.to_dict() for k, v in params.vocabs.items()}}
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))


def load_gnn(path: str | Path) -> GNNParams:
    meta = json.loads(Path(str(path) + ".meta.json").read_text())
    vocabs = {k: Vocabulary.from_dict(v) for k, v in meta["vocabs"].items()}
    params = GNNParams.create(vocabs, np.random.default_rng(0), meta["hidden"], meta["n_layers"])
    params.store.load_arrays(read_checkpoint(path))
    return params
