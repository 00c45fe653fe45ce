"""Vocabularies, embedding tables, precomputed context vectors and the
per-token input assembly."""

from __future__ import annotations

import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .conllu import Corpus, Sentence
from .params import ParamStore, embedding_init

PAD, UNK = "<pad>", "<unk>"

# Input blocks are always concatenated in this order.
BLOCK_ORDER = ("word", "lemma", "context", "pos", "tree", "ho")


class FeatureError(ValueError):
    pass


@dataclass
class Vocabulary:
    """Symbol to dense index map. With ``specials`` PAD is 0 and UNK is 1."""

    symbols: list[str] = field(default_factory=list)
    specials: bool = True
    min_count: int = 1

    def __post_init__(self):
        if self.specials and self.symbols[:2] != [PAD, UNK]:
            self.symbols = [PAD, UNK] + [s for s in self.symbols if s not in (PAD, UNK)]
        self._index = {s: i for i, s in enumerate(self.symbols)}

    @classmethod
    def from_counts(cls, counts: Counter, min_count: int = 1, specials: bool = True) -> "Vocabulary":
        kept = sorted(s for s, c in counts.items() if c >= min_count)
        return cls(kept, specials=specials, min_count=min_count)

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._index

    def index(self, symbol: str) -> int:
        i = self._index.get(symbol)
        if i is None:
            if not self.specials:
                raise KeyError(f"symbol {symbol!r} not in closed vocabulary")
            return 1
        return i

    def lookup(self, symbols: Iterable[str]) -> np.ndarray:
        return np.array([self.index(s) for s in symbols], dtype=np.int64)

    def to_dict(self) -> dict:
        return {"symbols": self.symbols, "specials": self.specials, "min_count": self.min_count}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Vocabulary":
        return cls(list(d["symbols"]), specials=d["specials"], min_count=d.get("min_count", 1))


def build_vocabularies(corpus: Corpus, min_count: int = 1) -> dict[str, Vocabulary]:
    """Vocabularies for word, lemma, upos, deprel, role and language.

    The frequency cutoff applies to words and lemmas only. Role and language
    inventories are closed label sets without PAD/UNK.
    """
    if len(corpus) == 0:
        raise FeatureError("cannot build vocabularies from an empty corpus")
    c = corpus.counts()
    return {
        "word": Vocabulary.from_counts(c["form"], min_count),
        "lemma": Vocabulary.from_counts(c["lemma"], min_count),
        "upos": Vocabulary.from_counts(c["upos"]),
        "deprel": Vocabulary.from_counts(c["deprel"]),
        "role": Vocabulary(corpus.labels, specials=False),
        "language": Vocabulary(corpus.languages, specials=False),
    }


class EmbeddingTable:
    def __init__(self, name: str, vocab: Vocabulary, dim: int, store: ParamStore,
                 rng: np.random.Generator, frozen: bool = False):
        if dim <= 0:
            raise FeatureError(f"embedding {name!r}: dimension must be positive")
        self.name = name
        self.vocab = vocab
        self.dim = dim
        self.weight = store.add(name, embedding_init(rng, len(vocab), dim), frozen=frozen)

    def __call__(self, symbols: Sequence[str]) -> Tensor:
        return ag.take_rows(self.weight, self.vocab.lookup(symbols))

    def rows(self, index) -> Tensor:
        return ag.take_rows(self.weight, index)


class ContextVectorStore:
    """Frozen precomputed per-token vectors keyed by (sentence_id, token_index)."""

    def __init__(self, dim: int):
        self.dim = dim
        self._vectors: dict[tuple[str, int], np.ndarray] = {}

    def __len__(self) -> int:
        return len(self._vectors)

    def add(self, sentence_id: str, token_index: int, vector) -> None:
        key = (sentence_id, token_index)
        vec = np.asarray(vector, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise FeatureError(f"vector for {key} has length {vec.size}, expected {self.dim}")
        if key in self._vectors:
            raise FeatureError(f"duplicate key {key}")
        self._vectors[key] = vec

    def get(self, sentence_id: str, token_index: int) -> np.ndarray:
        try:
            return self._vectors[(sentence_id, token_index)]
        except KeyError:
            raise FeatureError(
                f"no context vector for token {token_index} of sentence {sentence_id!r}"
            ) from None

    def sentence(self, sentence: Sentence) -> np.ndarray:
        return np.stack([self.get(sentence.sentence_id, t.index) for t in sentence.tokens])

    def dump(self, out: TextIO) -> None:
        out.write(f"#dim={self.dim}\n")
        for (sid, idx), vec in self._vectors.items():
            out.write(f"{sid}\t{idx}\t{' '.join(repr(float(v)) for v in vec)}\n")


def load_context_vectors(stream: TextIO | str) -> ContextVectorStore:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    header = stream.readline().strip()
    if not header.startswith("#dim="):
        raise FeatureError("context-vector file lacks '#dim=D' header")
    try:
        dim = int(header[len("#dim="):])
    except ValueError:
        raise FeatureError(f"bad header {header!r}") from None
    store = ContextVectorStore(dim)
    for lineno, line in enumerate(stream, start=2):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise FeatureError(f"line {lineno}: expected 3 tab-separated fields")
        sid, idx, values = parts
        store.add(sid, int(idx), [float(v) for v in values.split()])
    return store


def read_context_vectors(path) -> ContextVectorStore:
    with open(path, encoding="utf-8") as fh:
        return load_context_vectors(fh)


def concat_blocks(blocks: Mapping[str, Tensor]) -> Tensor:
    """Concatenate enabled blocks in the fixed BLOCK_ORDER."""
    unknown = set(blocks) - set(BLOCK_ORDER)
    if unknown:
        raise FeatureError(f"unknown feature blocks {sorted(unknown)}")
    ordered = [blocks[name] for name in BLOCK_ORDER if name in blocks]
    if not ordered:
        raise FeatureError("no input features")
    n = ordered[0].shape[0]
    for name in BLOCK_ORDER:
        if name in blocks and blocks[name].shape[0] != n:
            raise FeatureError(f"block {name!r} has {blocks[name].shape[0]} rows, expected {n}")
    return ordered[0] if len(ordered) == 1 else ag.concat(ordered, axis=1)


def assemble_input(
    sentence: Sentence,
    flags: Iterable[str],
    tables: Mapping[str, EmbeddingTable],
    context: ContextVectorStore | None = None,
    h_tree: Tensor | None = None,
    h_ho: Tensor | np.ndarray | None = None,
) -> Tensor:
    """Per-token input x_i for one sentence as an (n, D) tensor."""
    flags = set(flags)
    if not flags:
        raise FeatureError("no input features")
    n = len(sentence)
    blocks: dict[str, Tensor] = {}
    if "word" in flags:
        blocks["word"] = tables["word"]([t.form for t in sentence.tokens])
    if "lemma" in flags:
        blocks["lemma"] = tables["lemma"]([t.lemma for t in sentence.tokens])
    if "context" in flags:
        if context is None:
            raise FeatureError("context feature enabled but no vector store given")
        blocks["context"] = Tensor(context.sentence(sentence))
    if "pos" in flags:
        blocks["pos"] = tables["pos"]([t.upos for t in sentence.tokens])
    for name, value in (("tree", h_tree), ("ho", h_ho)):
        if name not in flags:
            continue
        if value is None:
            raise FeatureError(f"{name} feature enabled but missing for token 1 of {sentence.sentence_id!r}")
        value = value if isinstance(value, Tensor) else Tensor(value)
        if value.shape[0] != n:
            raise FeatureError(
                f"{name} feature missing for token {min(value.shape[0], n) + 1} of {sentence.sentence_id!r}"
            )
        blocks[name] = value
    return concat_blocks(blocks)
