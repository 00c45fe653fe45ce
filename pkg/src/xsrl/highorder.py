"""High-order syntactic features from a GNN pre-trained on joint word/syntax graphs.

Each sentence becomes a graph whose main nodes are its words plus a virtual
Root and whose syntactic nodes are the distinct UPOS tags and dependency
labels it uses. The GNN is pre-trained with masked-node classification and
negatively-sampled edge prediction; afterwards the final-layer vectors of the
word nodes serve as frozen per-token features.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.stats import rankdata

from . import autograd as ag
from .autograd import Tensor
from .conllu import Corpus, Sentence
from .features import Vocabulary
from .params import AdamState, ParamStore, adam_step, embedding_init, glorot

log = logging.getLogger(__name__)

KINDS = ("word", "upos", "deprel", "root")
ROOT_LABEL = "<root>"


@dataclass
class JointGraph:
    kinds: list[str]
    labels: list[str]
    edges: list[tuple[int, int]]  # undirected, u < v, sorted
    n_words: int

    @property
    def n_nodes(self) -> int:
        return len(self.kinds)

    def neighbors(self) -> list[list[int]]:
        nb: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for u, v in self.edges:
            nb[u].append(v)
            nb[v].append(u)
        return nb


def build_joint_graph(sentence: Sentence, adjacency: bool = True) -> JointGraph:
    """Nodes: words by position, UPOS nodes, deprel nodes (each sorted by
    label), Root last. Edges: word-UPOS, head-deprel-dependent (Root stands in
    for head 0), and word-word adjacency."""
    n = len(sentence)
    upos = sorted({t.upos for t in sentence.tokens})
    deprels = sorted({t.deprel for t in sentence.tokens})
    upos_id = {u: n + k for k, u in enumerate(upos)}
    dep_id = {d: n + len(upos) + k for k, d in enumerate(deprels)}
    root = n + len(upos) + len(deprels)
    kinds = ["word"] * n + ["upos"] * len(upos) + ["deprel"] * len(deprels) + ["root"]
    labels = [t.form for t in sentence.tokens] + upos + deprels + [ROOT_LABEL]
    edges = set()

    def link(a, b):
        edges.add((min(a, b), max(a, b)))

    for t in sentence.tokens:
        w = t.index - 1
        link(w, upos_id[t.upos])
        head = root if t.head == 0 else t.head - 1
        link(head, dep_id[t.deprel])
        link(dep_id[t.deprel], w)
        if adjacency and t.index < n:
            link(w, w + 1)
    return JointGraph(kinds, labels, sorted(edges), n)


@dataclass
class GraphBatch:
    """Several joint graphs laid out block-diagonally."""

    graphs: list[JointGraph]
    offsets: np.ndarray
    mean_adj: sp.csr_matrix
    kind_index: dict[str, np.ndarray]
    label_ids: np.ndarray  # class id in the joint label space
    input_ids: dict[str, np.ndarray]  # per kind, row in that kind's table

    @property
    def n_nodes(self) -> int:
        return int(self.offsets[-1])

    def word_rows(self) -> list[np.ndarray]:
        return [self.offsets[k] + np.arange(g.n_words) for k, g in enumerate(self.graphs)]


@dataclass
class GNNParams:
    store: ParamStore
    vocabs: dict[str, Vocabulary]
    hidden: int = 350
    n_layers: int = 5

    @classmethod
    def create(cls, vocabs: dict[str, Vocabulary], rng: np.random.Generator,
               hidden: int = 350, n_layers: int = 5, store: ParamStore | None = None) -> "GNNParams":
        store = store or ParamStore()
        for kind in ("word", "upos", "deprel"):
            store.add(f"ho.emb.{kind}", embedding_init(rng, len(vocabs[kind]), hidden))
        store.add("ho.emb.root", embedding_init(rng, 1, hidden))
        store.add("ho.emb.mask", embedding_init(rng, 1, hidden))
        for k in range(n_layers):
            store.add(f"ho.layer{k}.self", glorot(rng, hidden, hidden))
            store.add(f"ho.layer{k}.nbr", glorot(rng, hidden, hidden))
            store.add(f"ho.layer{k}.b", np.zeros(hidden))
        n_classes = sum(len(vocabs[k]) for k in ("word", "upos", "deprel")) + 1
        store.add("ho.node.W", glorot(rng, hidden, n_classes))
        store.add("ho.node.b", np.zeros(n_classes))
        store.add("ho.edge.B", glorot(rng, hidden, hidden))
        return cls(store, vocabs, hidden, n_layers)

    def class_offsets(self) -> dict[str, int]:
        off, out = 0, {}
        for kind in ("word", "upos", "deprel"):
            out[kind] = off
            off += len(self.vocabs[kind])
        out["root"] = off
        return out

    @property
    def n_classes(self) -> int:
        return self.store["ho.node.W"].shape[1]


def batch_graphs(graphs: Sequence[JointGraph], params: GNNParams) -> GraphBatch:
    sizes = [g.n_nodes for g in graphs]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    total = int(offsets[-1])
    rows, cols = [], []
    for g, off in zip(graphs, offsets):
        for u, v in g.edges:
            rows += [off + u, off + v]
            cols += [off + v, off + u]
    adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(total, total))
    deg = np.asarray(adj.sum(axis=1)).ravel()
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    mean_adj = sp.diags(inv) @ adj

    coff = params.class_offsets()
    kinds = [k for g in graphs for k in g.kinds]
    labels = [lab for g in graphs for lab in g.labels]
    kind_index, input_ids = {}, {}
    label_ids = np.empty(total, dtype=np.int64)
    for kind in KINDS:
        idx = np.array([i for i, k in enumerate(kinds) if k == kind], dtype=np.int64)
        kind_index[kind] = idx
        if kind == "root":
            ids = np.zeros(len(idx), dtype=np.int64)
        else:
            ids = params.vocabs[kind].lookup([labels[i] for i in idx])
        input_ids[kind] = ids
        label_ids[idx] = coff[kind] + ids
    return GraphBatch(list(graphs), offsets, mean_adj.tocsr(), kind_index, label_ids, input_ids)


def _inputs(batch: GraphBatch, params: GNNParams, masked: np.ndarray | None) -> Tensor:
    s = params.store
    parts, order = [], []
    for kind in KINDS:
        idx = batch.kind_index[kind]
        if not len(idx):
            continue
        parts.append(ag.take_rows(s[f"ho.emb.{kind}"], batch.input_ids[kind]))
        order.append(idx)
    order = np.concatenate(order)
    stacked = ag.concat(parts, axis=0) if len(parts) > 1 else parts[0]
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    x = ag.take_rows(stacked, inv)
    if masked is not None and len(masked):
        keep = np.ones((batch.n_nodes, 1))
        keep[masked] = 0.0
        sel = np.zeros((batch.n_nodes, 1))
        sel[masked] = 1.0
        mask_rows = ag.take_rows(s["ho.emb.mask"], np.zeros(batch.n_nodes, dtype=np.int64))
        x = x * ag.constant(keep) + mask_rows * ag.constant(sel)
    return x


def gnn_forward(batch: GraphBatch | JointGraph, params: GNNParams, masked: np.ndarray | None = None) -> Tensor:
    """h_v <- ReLU(h_v W_self + mean_{u in N(v)} h_u W_nbr + b), repeated per layer.
    Nodes without neighbours receive a zero mean term."""
    if isinstance(batch, JointGraph):
        batch = batch_graphs([batch], params)
    s = params.store
    h = _inputs(batch, params, masked)
    for k in range(params.n_layers):
        nbr = ag.sum_over(h, batch.mean_adj) @ s[f"ho.layer{k}.nbr"]
        h = ag.relu(h @ s[f"ho.layer{k}.self"] + nbr + s[f"ho.layer{k}.b"])
    return h


@dataclass
class PretrainObjectiveState:
    mask_rate: float = 0.15
    negative_ratio: int = 1
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    def __post_init__(self):
        if not 0.0 < self.mask_rate < 1.0:
            raise ValueError("mask_rate must lie in (0, 1)")
        if self.negative_ratio < 1:
            raise ValueError("negative_ratio must be >= 1")


def n_masked(n_nodes: int, rate: float) -> int:
    return max(1, int(math.floor(rate * n_nodes + 1e-9)))


def choose_masked(batch: GraphBatch, state: PretrainObjectiveState) -> np.ndarray:
    picks = []
    for g, off in zip(batch.graphs, batch.offsets):
        k = n_masked(g.n_nodes, state.mask_rate)
        picks.append(off + np.sort(state.rng.choice(g.n_nodes, size=k, replace=False)))
    return np.concatenate(picks)


def masked_node_loss(batch: GraphBatch, params: GNNParams, state: PretrainObjectiveState,
                     h: Tensor | None = None, masked: np.ndarray | None = None) -> tuple[Tensor, float]:
    """Mean cross-entropy of the true labels of the masked nodes, plus accuracy."""
    if masked is None:
        masked = choose_masked(batch, state)
    if h is None:
        h = gnn_forward(batch, params, masked)
    s = params.store
    logits = ag.linear(ag.take_rows(h, masked), s["ho.node.W"], s["ho.node.b"])
    logp = ag.log_softmax(logits)
    gold = batch.label_ids[masked]
    loss = -ag.mean_all(ag.pick(logp, np.arange(len(masked)), gold))
    acc = float(np.mean(logits.data.argmax(axis=1) == gold))
    return loss, acc


def sample_negatives(batch: GraphBatch, state: PretrainObjectiveState) -> list[tuple[int, int]]:
    """Uniform non-adjacent, non-identical node pairs within each graph."""
    out = []
    for g, off in zip(batch.graphs, batch.offsets):
        n = g.n_nodes
        want = state.negative_ratio * len(g.edges)
        present = set(g.edges)
        available = n * (n - 1) // 2 - len(present)
        if available <= 0:
            log.warning("graph is complete; edge loss uses positives only")
            continue
        want = min(want, available)
        chosen: set[tuple[int, int]] = set()
        while len(chosen) < want:
            u, v = state.rng.integers(n, size=2)
            if u == v:
                continue
            pair = (int(min(u, v)), int(max(u, v)))
            if pair in present or pair in chosen:
                continue
            chosen.add(pair)
        out += [(off + u, off + v) for u, v in sorted(chosen)]
    return out


def edge_scores(h: Tensor, pairs: np.ndarray, params: GNNParams) -> Tensor:
    hu = ag.take_rows(h, pairs[:, 0])
    hv = ag.take_rows(h, pairs[:, 1])
    return ag.matmul((hu @ params.store["ho.edge.B"]) * hv, ag.constant(np.ones(h.shape[1])))


def edge_prediction_loss(batch: GraphBatch, params: GNNParams, state: PretrainObjectiveState,
                         h: Tensor | None = None) -> tuple[Tensor, np.ndarray, np.ndarray]:
    """Binary cross-entropy of sigmoid(h_u^T B h_v) for true edges against
    sampled non-edges. Returns (loss, scores, labels)."""
    if h is None:
        h = gnn_forward(batch, params)
    pos = [(off + u, off + v) for g, off in zip(batch.graphs, batch.offsets) for u, v in g.edges]
    neg = sample_negatives(batch, state)
    pairs = np.array(pos + neg, dtype=np.int64).reshape(-1, 2)
    y = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    s = edge_scores(h, pairs, params)
    # BCE(sigmoid(s), y) = softplus(s) - y * s
    loss = ag.mean_all(ag.softplus(s) - s * ag.constant(y))
    return loss, s.data.copy(), y


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the ROC curve via the rank-sum statistic (ties averaged)."""
    labels = np.asarray(labels, dtype=bool)
    n_pos, n_neg = labels.sum(), (~labels).sum()
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positive and negative examples")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


# ---------------------------------------------------------------- pretraining


@dataclass
class PretrainConfig:
    steps: int = 2000
    batch_size: int = 16
    lr: float = 0.001
    hidden: int = 350
    n_layers: int = 5
    mask_rate: float = 0.15
    negative_ratio: int = 1
    seed: int = 0
    adjacency: bool = True


def ho_vocabularies(corpus: Corpus) -> dict[str, Vocabulary]:
    c = corpus.counts()
    return {
        "word": Vocabulary.from_counts(c["form"]),
        "upos": Vocabulary.from_counts(c["upos"]),
        "deprel": Vocabulary.from_counts(c["deprel"]),
    }


def pretrain(corpus: Corpus, config: PretrainConfig = PretrainConfig(),
             callback=None) -> tuple[GNNParams, list[float]]:
    """Joint (unweighted sum) masked-node + edge-prediction pre-training."""
    rng = np.random.default_rng(config.seed)
    params = GNNParams.create(ho_vocabularies(corpus), rng, config.hidden, config.n_layers)
    state = PretrainObjectiveState(config.mask_rate, config.negative_ratio, np.random.default_rng(config.seed + 1))
    graphs = [build_joint_graph(s, config.adjacency) for s in corpus]
    adam = AdamState(lr=config.lr)
    trainable = params.store.trainable()
    losses = []
    order = rng.permutation(len(graphs))
    cursor = 0
    for step in range(config.steps):
        if cursor + config.batch_size > len(order):
            order = rng.permutation(len(graphs))
            cursor = 0
        idx = order[cursor: cursor + config.batch_size]
        cursor += config.batch_size
        batch = batch_graphs([graphs[i] for i in idx], params)
        masked = choose_masked(batch, state)
        h = gnn_forward(batch, params, masked)
        node_loss, _ = masked_node_loss(batch, params, state, h=h, masked=masked)
        edge_loss, _, _ = edge_prediction_loss(batch, params, state, h=h)
        loss = node_loss + edge_loss
        ag.backward(loss, trainable.values())
        adam_step(trainable, adam)
        losses.append(loss.item())
        if callback is not None:
            callback(step, losses[-1])
    return params, losses


def evaluate_pretraining(corpus: Corpus, params: GNNParams, seed: int = 0,
                         mask_rate: float = 0.15, adjacency: bool = True) -> dict[str, float]:
    """Held-out masked-node accuracy, majority-class rate and edge AUC."""
    state = PretrainObjectiveState(mask_rate, 1, np.random.default_rng(seed))
    graphs = [build_joint_graph(s, adjacency) for s in corpus]
    correct = total = 0
    gold_all = []
    scores, labels = [], []
    with ag.no_grad():
        for start in range(0, len(graphs), 64):
            batch = batch_graphs(graphs[start: start + 64], params)
            masked = choose_masked(batch, state)
            _, acc = masked_node_loss(batch, params, state, masked=masked)
            correct += acc * len(masked)
            total += len(masked)
            gold_all.append(batch.label_ids[masked])
            _, s, y = edge_prediction_loss(batch, params, state)
            scores.append(s)
            labels.append(y)
    gold = np.concatenate(gold_all)
    majority = np.bincount(gold).max() / len(gold)
    return {
        "masked_accuracy": correct / total,
        "majority_rate": float(majority),
        "edge_auc": auc(np.concatenate(scores), np.concatenate(labels)),
    }


def extract_ho(sentences: Sentence | Sequence[Sentence], params: GNNParams, adjacency: bool = True) -> np.ndarray:
    """Frozen word-node vectors (rows in token order across ``sentences``)."""
    if isinstance(sentences, Sentence):
        sentences = [sentences]
    batch = batch_graphs([build_joint_graph(s, adjacency) for s in sentences], params)
    with ag.no_grad():
        h = gnn_forward(batch, params)
    return h.data[np.concatenate(batch.word_rows())]
