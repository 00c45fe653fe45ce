"""Predicate/argument scoring: head projections, unary beams, biaffine pair
scores, per-pair label distributions, loss and decoding.

Label index 0 of every pair distribution is the null relation (its logit is
the constant 0); indices 1..K are the role labels.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .params import ParamStore, glorot

log = logging.getLogger(__name__)

NULL_ID = 0


@dataclass
class Triplet:
    predicate: int  # 1-based token index
    argument: int
    label: int  # 1..K; 0 (null) only internally
    score: float = 0.0


class SRLScorer:
    def __init__(self, store: ParamStore, rng: np.random.Generator, d_in: int,
                 n_labels: int, d_r: int = 300):
        self.n_labels = n_labels
        self.d_r = d_r
        self.ffn_p_W = store.add("srl.ffn_p.W", glorot(rng, d_in, d_r))
        self.ffn_p_b = store.add("srl.ffn_p.b", np.zeros(d_r))
        self.ffn_a_W = store.add("srl.ffn_a.W", glorot(rng, d_in, d_r))
        self.ffn_a_b = store.add("srl.ffn_a.b", np.zeros(d_r))
        self.W1 = store.add("srl.biaffine.W1", glorot(rng, d_r, d_r))
        self.W2 = store.add("srl.biaffine.W2", glorot(rng, 2 * d_r, 1).ravel())
        self.b = store.add("srl.biaffine.b", np.zeros(1))
        self.label_W = store.add("srl.label.W", glorot(rng, d_r, n_labels))
        self.label_b = store.add("srl.label.b", np.zeros(n_labels))
        self.unary_p = store.add("srl.unary.p", glorot(rng, d_r, 1).ravel())
        self.unary_a = store.add("srl.unary.a", glorot(rng, d_r, 1).ravel())

    def project_heads(self, h: Tensor) -> tuple[Tensor, Tensor]:
        r_p = ag.relu(ag.linear(h, self.ffn_p_W, self.ffn_p_b))
        r_a = ag.relu(ag.linear(h, self.ffn_a_W, self.ffn_a_b))
        return r_p, r_a

    def unary_scores(self, r_p: Tensor, r_a: Tensor) -> tuple[Tensor, Tensor]:
        return r_p @ self.unary_p, r_a @ self.unary_a

    def pair_scores(self, r_p: Tensor, r_a: Tensor, pred_rows, arg_rows) -> Tensor:
        """Phi(r_p_i, r_a_j) = r_p_i W1 r_a_j + W2 [r_p_i; r_a_j] + b, one per pair."""
        P = ag.take_rows(r_p, pred_rows)
        A = ag.take_rows(r_a, arg_rows)
        d = self.d_r
        bilinear = ag.matmul((P @ self.W1) * A, ag.constant(np.ones(d)))
        linear = P @ ag.slice_cols(self.W2, 0, d) + A @ ag.slice_cols(self.W2, d, 2 * d)
        return bilinear + linear + self.b

    def pair_logits(self, r_p: Tensor, r_a: Tensor, pred_rows, arg_rows) -> Tensor:
        """(pairs, K+1) logits; column 0 is the null label, fixed at 0."""
        phi = self.pair_scores(r_p, r_a, pred_rows, arg_rows)
        labels = ag.linear(ag.take_rows(r_a, arg_rows), self.label_W, self.label_b)
        role = labels + ag.reshape(phi, (-1, 1))
        null = ag.constant(np.zeros((len(pred_rows), 1)))
        return ag.concat([null, role], axis=1)


def pair_score(r_p, r_a, W1, W2, b) -> float:
    """Reference scalar form of the biaffine score on plain arrays."""
    r_p, r_a = np.asarray(r_p, float), np.asarray(r_a, float)
    return float(r_p @ np.asarray(W1) @ r_a + np.asarray(W2) @ np.concatenate([r_p, r_a]) + float(np.asarray(b).sum()))


# ---------------------------------------------------------------- beams


def beam_size(n: int, alpha: float) -> int:
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"beam threshold must lie in (0, 1], got {alpha}")
    return min(n, max(1, math.ceil(alpha * n - 1e-9)))


def top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k highest scores (ties toward lower index), sorted."""
    order = np.argsort(-np.asarray(scores), kind="stable")
    return np.sort(order[:k])


@dataclass
class Beams:
    alpha_p: float = 0.4
    alpha_a: float = 0.7
    predicates: list[np.ndarray] = field(default_factory=list)  # 0-based per sentence
    arguments: list[np.ndarray] = field(default_factory=list)


def prune(unary_p: np.ndarray, unary_a: np.ndarray, lengths: Sequence[int],
          alpha_p: float = 0.4, alpha_a: float = 0.7) -> Beams:
    beams = Beams(alpha_p, alpha_a)
    start = 0
    for n in lengths:
        beams.predicates.append(top_k(unary_p[start: start + n], beam_size(n, alpha_p)))
        beams.arguments.append(top_k(unary_a[start: start + n], beam_size(n, alpha_a)))
        start += n
    return beams


def candidate_pairs(predicates: Sequence[np.ndarray], arguments: Sequence[np.ndarray],
                    lengths: Sequence[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flattened (sentence, predicate row, argument row) over all sentences,
    rows being batch-global token positions."""
    sent, pr, ar = [], [], []
    offset = 0
    for k, (ps, as_, n) in enumerate(zip(predicates, arguments, lengths)):
        for p in ps:
            for a in as_:
                sent.append(k)
                pr.append(offset + p)
                ar.append(offset + a)
        offset += n
    return (np.array(sent, dtype=np.int64), np.array(pr, dtype=np.int64), np.array(ar, dtype=np.int64))


# ---------------------------------------------------------------- loss / decode


def gold_pair_labels(sent, pred_rows, arg_rows, offsets, gold: Sequence[dict]) -> np.ndarray:
    """Gold label id per candidate pair; ``gold[k]`` maps (p, a) 1-based to label id."""
    return np.array([
        gold[k].get((int(p - offsets[k]) + 1, int(a - offsets[k]) + 1), NULL_ID)
        for k, p, a in zip(sent, pred_rows, arg_rows)
    ], dtype=np.int64)


def oracle_misses(beams_p, beams_a, gold: Sequence[dict]) -> int:
    missed = 0
    for ps, as_, g in zip(beams_p, beams_a, gold):
        pset, aset = set((ps + 1).tolist()), set((as_ + 1).tolist())
        missed += sum(1 for (p, a) in g if p not in pset or a not in aset)
    return missed


def pair_nll(logits: Tensor, gold_ids: np.ndarray, sent: np.ndarray, n_sentences: int) -> Tensor:
    """Per-sentence negative log-likelihood over candidate pairs, as (n_sentences,)."""
    logp = ag.log_softmax(logits)
    picked = ag.pick(logp, np.arange(len(gold_ids)), gold_ids)
    onehot = np.zeros((n_sentences, len(gold_ids)))
    onehot[sent, np.arange(len(gold_ids))] = 1.0
    per_sentence = ag.sum_over(ag.reshape(picked, (-1, 1)), onehot)
    return -ag.reshape(per_sentence, (-1,))


def decode_pairs(logits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Argmax label and its logit; ties go to the null label, then lower ids."""
    best = np.argmax(logits, axis=1)
    return best, logits[np.arange(len(best)), best]
