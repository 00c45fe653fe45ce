"""N-layer BiLSTM encoder, either with its own weights (BASIC) or with every
weight generated per language as V_L = W_PGN @ e_L (PGN)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .params import ParamStore, glorot

DIRECTIONS = ("fwd", "bwd")
GATE_ORDER = ("input", "forget", "output", "cell")
BLOCK_KINDS = ("W", "U", "b")


@dataclass(frozen=True)
class Block:
    layer: int
    direction: str
    kind: str  # W: d_in x 4H, U: H x 4H, b: 4H; gate columns in GATE_ORDER
    shape: tuple[int, ...]
    offset: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def key(self) -> str:
        return f"{self.layer}.{self.direction}.{self.kind}"


class BiLSTMLayout:
    """Frozen flattening order: layer, then direction (fwd, bwd), then W, U, b."""

    def __init__(self, d_in: int, hidden: int, n_layers: int):
        self.d_in, self.hidden, self.n_layers = d_in, hidden, n_layers
        blocks, offset = [], 0
        for layer in range(n_layers):
            fan_in = d_in if layer == 0 else 2 * hidden
            for direction in DIRECTIONS:
                for kind, shape in (("W", (fan_in, 4 * hidden)), ("U", (hidden, 4 * hidden)), ("b", (4 * hidden,))):
                    blocks.append(Block(layer, direction, kind, shape, offset))
                    offset += blocks[-1].size
        self.blocks = blocks
        self.size = offset

    def forget_bias_rows(self) -> np.ndarray:
        rows = [b.offset + np.arange(self.hidden, 2 * self.hidden) for b in self.blocks if b.kind == "b"]
        return np.concatenate(rows)

    def init_std(self, block: Block) -> float:
        if block.kind == "b":
            return 0.0
        fan_in, fan_out = block.shape
        return float(np.sqrt(2.0 / (fan_in + fan_out)))

    def unflatten(self, flat: Tensor) -> dict[str, Tensor]:
        if flat.shape != (self.size,):
            raise ag.ShapeError(f"unflatten: vector of shape {flat.shape} vs layout size {self.size}")
        return {
            b.key: ag.reshape(ag.slice_cols(flat, b.offset, b.offset + b.size), b.shape)
            for b in self.blocks
        }


class PackedBatch:
    """Step schedule for running an LSTM over variable-length sentences."""

    def __init__(self, lengths: Sequence[int]):
        lengths = np.asarray(lengths, dtype=np.int64)
        if len(lengths) == 0 or lengths.min() < 1:
            raise ValueError("encode: every sentence needs at least one token")
        self.lengths = lengths
        self.offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]])
        self.n_tokens = int(lengths.sum())
        # stable sort: longest first, so the active set at step t is a prefix
        self.order = np.argsort(-lengths, kind="stable")
        self.steps = int(lengths.max())

    def rows(self, t: int, reverse: bool) -> np.ndarray:
        active = self.order[self.lengths[self.order] > t]
        pos = self.lengths[active] - 1 - t if reverse else np.full(len(active), t)
        return self.offsets[active] + pos


def lstm_direction(xw: Tensor, U: Tensor, packed: PackedBatch, reverse: bool, hidden: int) -> Tensor:
    """Run one direction given precomputed input projections ``xw`` (N x 4H)."""
    H = hidden
    outputs, token_rows = [], []
    h = c = None
    for t in range(packed.steps):
        rows = packed.rows(t, reverse)
        z = ag.take_rows(xw, rows)
        if h is not None:
            k = len(rows)
            h_prev = h if h.shape[0] == k else ag.take_rows(h, np.arange(k))
            c_prev = c if c.shape[0] == k else ag.take_rows(c, np.arange(k))
            z = z + h_prev @ U
        i = ag.sigmoid(ag.slice_cols(z, 0, H))
        g = ag.tanh(ag.slice_cols(z, 3 * H, 4 * H))
        o = ag.sigmoid(ag.slice_cols(z, 2 * H, 3 * H))
        if h is None:
            c = i * g
        else:
            f = ag.sigmoid(ag.slice_cols(z, H, 2 * H))
            c = i * g + f * c_prev
        h = o * ag.tanh(c)
        outputs.append(h)
        token_rows.append(rows)
    stacked = ag.concat(outputs, axis=0) if len(outputs) > 1 else outputs[0]
    where = np.empty(packed.n_tokens, dtype=np.int64)
    where[np.concatenate(token_rows)] = np.arange(packed.n_tokens)
    return ag.take_rows(stacked, where)


def run_bilstm(x: Tensor, lengths: Sequence[int], weights: dict[str, Tensor], layout: BiLSTMLayout) -> Tensor:
    packed = PackedBatch(lengths)
    if x.shape != (packed.n_tokens, layout.d_in):
        raise ag.ShapeError(f"bilstm: inputs {x.shape} vs expected ({packed.n_tokens}, {layout.d_in})")
    h = x
    for layer in range(layout.n_layers):
        outs = []
        for direction in DIRECTIONS:
            p = f"{layer}.{direction}"
            xw = ag.linear(h, weights[f"{p}.W"], weights[f"{p}.b"])
            outs.append(lstm_direction(xw, weights[f"{p}.U"], packed, direction == "bwd", layout.hidden))
        h = ag.concat(outs, axis=1)
    return h


class Encoder:
    """BASIC or PGN BiLSTM. Output per token: [forward ; backward], 2H wide."""

    def __init__(self, store: ParamStore, rng: np.random.Generator, d_in: int, hidden: int = 650,
                 n_layers: int = 2, mode: str = "pgn", languages: Sequence[str] = (), lang_dim: int = 8):
        if mode not in ("pgn", "basic"):
            raise ValueError(f"unknown encoder mode {mode!r}")
        self.mode = mode
        self.layout = BiLSTMLayout(d_in, hidden, n_layers)
        self.languages = list(languages)
        self.trained_languages = list(languages)
        if mode == "basic":
            self.weights = {}
            for b in self.layout.blocks:
                if b.kind == "b":
                    init = np.zeros(b.shape)
                    init[hidden: 2 * hidden] = 1.0
                else:
                    init = glorot(rng, b.shape[0], b.shape[1])
                self.weights[b.key] = store.add(f"enc.basic.{b.key}", init)
            return
        if not self.languages:
            raise ValueError("PGN mode needs at least one configured language")
        # shared row plus small per-language noise: generated encoders start
        # close together, so the mean row stays usable for unseen languages
        shared = rng.normal(0.0, 1.0 / np.sqrt(lang_dim), size=lang_dim)
        noise = rng.normal(0.0, 0.1 / np.sqrt(lang_dim), size=(len(self.languages), lang_dim))
        E = shared + noise
        W = np.zeros((self.layout.size, lang_dim))
        for b in self.layout.blocks:
            std = self.layout.init_std(b)
            if std:
                W[b.offset: b.offset + b.size] = rng.normal(0.0, std, size=(b.size, lang_dim))
        # generated forget-gate biases start at ~1 for every configured language
        W[self.layout.forget_bias_rows()] = np.linalg.pinv(E) @ np.ones(len(self.languages))
        self.W_pgn = store.add("enc.pgn.W", W)
        self.lang_table = store.add("enc.lang.E", E)

    @property
    def output_dim(self) -> int:
        return 2 * self.layout.hidden

    def language_vector(self, language: str) -> Tensor:
        """e_L; a configured language never seen in training gets the mean of
        the trained languages' rows."""
        if language not in self.languages:
            raise KeyError(f"unknown language id {language!r}")
        if language in self.trained_languages:
            return ag.reshape(ag.take_rows(self.lang_table, [self.languages.index(language)]), (-1,))
        rows = [self.languages.index(lang) for lang in self.trained_languages]
        weights = np.full((1, len(rows)), 1.0 / len(rows))
        return ag.reshape(ag.matmul(ag.constant(weights), ag.take_rows(self.lang_table, rows)), (-1,))

    def generate_params(self, language: str) -> Tensor:
        """Flattened V_L = W_PGN @ e_L."""
        return ag.matmul(self.W_pgn, self.language_vector(language))

    def __call__(self, x: Tensor, lengths: Sequence[int], languages: Sequence[str] | None = None) -> Tensor:
        lengths = list(lengths)
        if not lengths or sum(lengths) == 0:
            raise ValueError("encode: empty input")
        if self.mode == "basic":
            return run_bilstm(x, lengths, self.weights, self.layout)
        if languages is None:
            raise ValueError("encode: PGN mode needs a language id per sentence")
        offsets = np.concatenate([[0], np.cumsum(lengths)])
        groups: dict[str, list[int]] = {}
        for k, lang in enumerate(languages):
            groups.setdefault(lang, []).append(k)
        parts, rows = [], []
        for lang in sorted(groups):
            members = groups[lang]
            idx = np.concatenate([np.arange(offsets[k], offsets[k + 1]) for k in members])
            xs = x if len(groups) == 1 else ag.take_rows(x, idx)
            weights = self.layout.unflatten(self.generate_params(lang))
            parts.append(run_bilstm(xs, [lengths[k] for k in members], weights, self.layout))
            rows.append(idx)
        if len(parts) == 1:
            return parts[0]
        where = np.empty(offsets[-1], dtype=np.int64)
        where[np.concatenate(rows)] = np.arange(offsets[-1])
        return ag.take_rows(ag.concat(parts, axis=0), where)
