"""Dependency-tree encoders: bidirectional child-sum TreeLSTM and gated GCN.

Both operate on a :class:`DepGraph` that may hold several sentences as
disjoint trees, so a whole mini-batch is encoded in one pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import autograd as ag
from .autograd import Tensor
from .conllu import Sentence
from .params import ParamStore, glorot

EDGE_TYPES = ("head_to_dep", "dep_to_head", "self")
ENCODERS = ("treelstm", "gcn", "none")


@dataclass
class DepGraph:
    """Dependency arcs over ``n`` nodes (0-based, batch-flattened)."""

    n: int
    parent: np.ndarray  # -1 for roots
    children: list[list[int]]
    deprel: list[str]

    @classmethod
    def from_sentences(cls, sentences: Sequence[Sentence]) -> "DepGraph":
        parent, deprel = [], []
        offset = 0
        for s in sentences:
            for t in s.tokens:
                parent.append(offset + t.head - 1 if t.head > 0 else -1)
                deprel.append(t.deprel)
            offset += len(s)
        parent = np.array(parent, dtype=np.int64)
        children: list[list[int]] = [[] for _ in range(offset)]
        for d, h in enumerate(parent):
            if h >= 0:
                children[h].append(d)
        return cls(offset, parent, children, deprel)

    @property
    def roots(self) -> list[int]:
        return [i for i in range(self.n) if self.parent[i] < 0]

    def arcs(self, edge_type: str) -> tuple[np.ndarray, np.ndarray]:
        """(source, target) node arrays for one edge type."""
        deps = np.flatnonzero(self.parent >= 0)
        heads = self.parent[deps]
        if edge_type == "head_to_dep":
            return heads, deps
        if edge_type == "dep_to_head":
            return deps, heads
        if edge_type == "self":
            ids = np.arange(self.n)
            return ids, ids
        raise ValueError(f"unknown edge type {edge_type!r}")

    def incoming(self, edge_type: str) -> sp.csr_matrix:
        """Matrix A with A[target, source] = 1 for every arc of ``edge_type``."""
        src, dst = self.arcs(edge_type)
        return sp.csr_matrix((np.ones(len(src)), (dst, src)), shape=(self.n, self.n))

    def heights(self) -> np.ndarray:
        h = np.zeros(self.n, dtype=np.int64)
        for node in self._postorder():
            if self.children[node]:
                h[node] = 1 + max(h[c] for c in self.children[node])
        return h

    def depths(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=np.int64)
        for node in reversed(self._postorder()):
            if self.parent[node] >= 0:
                d[node] = d[self.parent[node]] + 1
        return d

    def _postorder(self) -> list[int]:
        order, stack = [], [(r, False) for r in self.roots]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            stack.append((node, True))
            stack.extend((c, False) for c in self.children[node])
        return order


# ---------------------------------------------------------------- TreeLSTM

GATES = ("i", "f", "o", "u")


@dataclass
class TreeLSTMParams:
    """Per direction ("up", "down") and gate: W (d_in x H), U (H x H), b (H)."""

    weights: dict[str, Tensor]
    hidden: int

    @classmethod
    def create(cls, store: ParamStore, rng: np.random.Generator, d_in: int,
               hidden: int = 300, prefix: str = "tree.lstm") -> "TreeLSTMParams":
        w = {}
        for direction in ("up", "down"):
            for g in GATES:
                key = f"{direction}.{g}"
                w[f"{key}.W"] = store.add(f"{prefix}.{key}.W", glorot(rng, d_in, hidden))
                w[f"{key}.U"] = store.add(f"{prefix}.{key}.U", glorot(rng, hidden, hidden))
                w[f"{key}.b"] = store.add(f"{prefix}.{key}.b", np.zeros(hidden))
        return cls(w, hidden)

    @property
    def d_in(self) -> int:
        return self.weights["up.i.W"].shape[0]


def _tree_pass(x: Tensor, w: dict[str, Tensor], direction: str,
               levels: list[np.ndarray], sources: list[list[int]]) -> Tensor:
    """One TreeLSTM direction. ``sources[j]`` are the nodes aggregated into j
    (children bottom-up, the parent top-down); ``levels`` orders the nodes so
    every source is computed before its consumer."""
    proj = {g: ag.linear(x, w[f"{direction}.{g}.W"], w[f"{direction}.{g}.b"]) for g in GATES}
    U = {g: w[f"{direction}.{g}.U"] for g in GATES}
    row_of = np.full(x.shape[0], -1, dtype=np.int64)
    h_parts: list[Tensor] = []
    c_parts: list[Tensor] = []
    done = 0
    for nodes in levels:
        src_lists = [sorted(sources[j]) for j in nodes]  # fixed reduction order
        pre = {g: ag.take_rows(proj[g], nodes) for g in GATES}
        if any(src_lists):
            H_prev = h_parts[0] if len(h_parts) == 1 else ag.concat(h_parts, axis=0)
            C_prev = c_parts[0] if len(c_parts) == 1 else ag.concat(c_parts, axis=0)
            src_rows = [[row_of[k] for k in lst] for lst in src_lists]
            h_bar = ag.sum_over(H_prev, ag.set_matrix(src_rows, H_prev.shape[0]))
            i = ag.sigmoid(pre["i"] + h_bar @ U["i"])
            o = ag.sigmoid(pre["o"] + h_bar @ U["o"])
            u = ag.tanh(pre["u"] + h_bar @ U["u"])
            # one forget gate per (node, source) edge
            edge_node = np.array([pos for pos, lst in enumerate(src_rows) for _ in lst], dtype=np.int64)
            edge_rows = np.array([r for lst in src_rows for r in lst], dtype=np.int64)
            f = ag.sigmoid(ag.take_rows(pre["f"], edge_node) + ag.take_rows(H_prev, edge_rows) @ U["f"])
            fc = f * ag.take_rows(C_prev, edge_rows)
            gather = sp.csr_matrix(
                (np.ones(len(edge_node)), (edge_node, np.arange(len(edge_node)))),
                shape=(len(nodes), len(edge_node)),
            )
            c = i * u + ag.sum_over(fc, gather)
        else:
            i = ag.sigmoid(pre["i"])
            o = ag.sigmoid(pre["o"])
            u = ag.tanh(pre["u"])
            c = i * u
        h = o * ag.tanh(c)
        row_of[nodes] = np.arange(done, done + len(nodes))
        done += len(nodes)
        h_parts.append(h)
        c_parts.append(c)
    H = h_parts[0] if len(h_parts) == 1 else ag.concat(h_parts, axis=0)
    return ag.take_rows(H, row_of)


def treelstm_encode(graph: DepGraph, inputs: Tensor, params: TreeLSTMParams) -> Tensor:
    """h_tree_j = [bottom-up h_j ; top-down h_j], shape (n, 2H)."""
    if inputs.shape != (graph.n, params.d_in):
        raise ag.ShapeError(f"treelstm_encode: inputs {inputs.shape} vs expected ({graph.n}, {params.d_in})")
    heights = graph.heights()
    up_levels = [np.flatnonzero(heights == k) for k in range(int(heights.max()) + 1)]
    depths = graph.depths()
    down_levels = [np.flatnonzero(depths == k) for k in range(int(depths.max()) + 1)]
    parents = [[int(p)] if p >= 0 else [] for p in graph.parent]
    up = _tree_pass(inputs, params.weights, "up", up_levels, graph.children)
    down = _tree_pass(inputs, params.weights, "down", down_levels, parents)
    return ag.concat([up, down], axis=1)


# ---------------------------------------------------------------- GCN


@dataclass
class GCNParams:
    """layers[k][edge_type] holds W, b (message) and Wg, bg (gate)."""

    layers: list[dict[str, dict[str, Tensor]]]
    hidden: int

    @classmethod
    def create(cls, store: ParamStore, rng: np.random.Generator, d_in: int,
               hidden: int = 300, n_layers: int = 2, prefix: str = "tree.gcn") -> "GCNParams":
        if n_layers < 1:
            raise ValueError("GCN needs at least one layer")
        layers = []
        for k in range(n_layers):
            fan_in = d_in if k == 0 else hidden
            per_type = {}
            for t in EDGE_TYPES:
                p = f"{prefix}.{k}.{t}"
                per_type[t] = {
                    "W": store.add(f"{p}.W", glorot(rng, fan_in, hidden)),
                    "b": store.add(f"{p}.b", np.zeros(hidden)),
                    "Wg": store.add(f"{p}.Wg", glorot(rng, fan_in, hidden)),
                    "bg": store.add(f"{p}.bg", np.zeros(hidden)),
                }
            layers.append(per_type)
        return cls(layers, hidden)

    @property
    def d_in(self) -> int:
        return self.layers[0]["self"]["W"].shape[0]


def gcn_layer(graph: DepGraph, h: Tensor, layer: dict[str, dict[str, Tensor]]) -> Tensor:
    """h_j <- ReLU(sum over incoming arcs (i -> j, type t) of (W_t h_i + b_t) * sigmoid(Wg_t h_i + bg_t))."""
    total = None
    for t in EDGE_TYPES:
        p = layer[t]
        msg = ag.linear(h, p["W"], p["b"]) * ag.sigmoid(ag.linear(h, p["Wg"], p["bg"]))
        if t != "self":
            msg = ag.sum_over(msg, graph.incoming(t))
        total = msg if total is None else total + msg
    return ag.relu(total)


def gcn_encode(graph: DepGraph, inputs: Tensor, params: GCNParams, n_layers: int | None = None) -> Tensor:
    n_layers = len(params.layers) if n_layers is None else n_layers
    if n_layers < 1:
        raise ValueError("gcn_encode: K_layers must be >= 1")
    if n_layers > len(params.layers):
        raise ValueError(f"gcn_encode: {n_layers} layers requested, {len(params.layers)} available")
    if inputs.shape != (graph.n, params.d_in):
        raise ag.ShapeError(f"gcn_encode: inputs {inputs.shape} vs expected ({graph.n}, {params.d_in})")
    h = inputs
    for layer in params.layers[:n_layers]:
        h = gcn_layer(graph, h, layer)
    return h


def tree_feature(graph: DepGraph, inputs: Tensor, encoder_choice: str,
                 params: TreeLSTMParams | GCNParams | None) -> Tensor | None:
    """Dispatch on the encoder choice; ``none`` disables the tree block."""
    if encoder_choice == "none":
        return None
    if encoder_choice == "treelstm":
        return treelstm_encode(graph, inputs, params)
    if encoder_choice == "gcn":
        return gcn_encode(graph, inputs, params)
    raise ValueError(f"unknown tree encoder {encoder_choice!r}; expected one of {ENCODERS}")
