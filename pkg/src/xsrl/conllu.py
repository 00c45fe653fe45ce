"""CoNLL-U-plus corpora: 10 CoNLL-U columns, a predicate-sense column, then
one role column per predicate (in textual order)."""

from __future__ import annotations

import io
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

log = logging.getLogger(__name__)

NULL = "_"


class CorpusFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"{message}, line {line}" if line is not None else message)


@dataclass(frozen=True)
class Token:
    index: int
    form: str
    lemma: str
    upos: str
    head: int
    deprel: str
    xpos: str = NULL
    feats: str = NULL
    deps: str = NULL
    misc: str = NULL


@dataclass(frozen=True)
class PredicateFrame:
    predicate_index: int
    sense: str
    roles: dict[int, str] = field(default_factory=dict)

    def __hash__(self):
        return hash((self.predicate_index, self.sense, tuple(sorted(self.roles.items()))))


@dataclass
class Sentence:
    sentence_id: str
    language: str
    tokens: list[Token]
    frames: list[PredicateFrame] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def heads(self) -> list[int]:
        return [t.head for t in self.tokens]

    def triplets(self) -> set[tuple[int, int, str]]:
        return derive_triplets(self)


@dataclass
class Corpus:
    sentences: list[Sentence]

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __eq__(self, other) -> bool:
        return isinstance(other, Corpus) and self.sentences == other.sentences

    @property
    def labels(self) -> list[str]:
        """Role label inventory, sorted; never contains the null label."""
        return sorted({r for s in self.sentences for f in s.frames for r in f.roles.values()})

    @property
    def languages(self) -> list[str]:
        return sorted({s.language for s in self.sentences})

    def counts(self) -> dict[str, Counter]:
        c = {"form": Counter(), "lemma": Counter(), "upos": Counter(), "deprel": Counter()}
        for s in self.sentences:
            for t in s.tokens:
                c["form"][t.form] += 1
                c["lemma"][t.lemma] += 1
                c["upos"][t.upos] += 1
                c["deprel"][t.deprel] += 1
        return c

    def statistics(self) -> dict[str, dict[str, int]]:
        """Per-language sentence / predicate / argument counts."""
        stats: dict[str, dict[str, int]] = {}
        for s in self.sentences:
            row = stats.setdefault(s.language, {"sentences": 0, "predicates": 0, "arguments": 0})
            row["sentences"] += 1
            row["predicates"] += len(s.frames)
            row["arguments"] += sum(len(f.roles) for f in s.frames)
        return stats

    def by_language(self, language: str) -> "Corpus":
        return Corpus([s for s in self.sentences if s.language == language])


def derive_triplets(sentence: Sentence) -> set[tuple[int, int, str]]:
    return {
        (frame.predicate_index, arg, role)
        for frame in sentence.frames
        for arg, role in frame.roles.items()
    }


def check_tree(heads: list[int], line: int | None = None) -> None:
    """Reject self-heads, out-of-range heads, multiple roots and cycles."""
    n = len(heads)
    roots = 0
    for i, h in enumerate(heads, start=1):
        if h == i:
            raise CorpusFormatError("self-headed token", line)
        if not 0 <= h <= n:
            raise CorpusFormatError(f"head {h} out of range for token {i}", line)
        roots += h == 0
    if roots != 1:
        raise CorpusFormatError(f"expected exactly one root, found {roots}", line)
    for i in range(1, n + 1):
        j, steps = i, 0
        while j != 0:
            j = heads[j - 1]
            steps += 1
            if steps > n:
                raise CorpusFormatError(f"cyclic tree through token {i}", line)


# ---------------------------------------------------------------- parsing


def parse_conllu_plus(stream: TextIO | str) -> Corpus:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    sentences: list[Sentence] = []
    block: list[tuple[int, str]] = []
    lineno = 0
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if line.strip():
            block.append((lineno, line))
        elif block:
            sentences.append(_parse_block(block, len(sentences)))
            block = []
    if block:
        sentences.append(_parse_block(block, len(sentences)))
    return Corpus(sentences)


def _parse_block(block: list[tuple[int, str]], ordinal: int) -> Sentence:
    sent_id = f"s{ordinal + 1}"
    language = "und"
    rows: list[tuple[int, list[str]]] = []
    first_line = block[0][0]
    for lineno, line in block:
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if sep:
                key = key.strip()
                if key == "sent_id":
                    sent_id = value.strip()
                elif key == "language":
                    language = value.strip()
            continue
        cols = line.split("\t")
        if len(cols) < 11:
            raise CorpusFormatError(f"malformed column count {len(cols)} (need >= 11)", lineno)
        if "-" in cols[0] or "." in cols[0]:
            log.warning("skipping multi-word token or empty node %r, line %d", cols[0], lineno)
            continue
        rows.append((lineno, cols))

    if not rows:
        raise CorpusFormatError("sentence without tokens", first_line)
    n_pred = sum(cols[10] != NULL for _, cols in rows)
    tokens: list[Token] = []
    for pos, (lineno, cols) in enumerate(rows, start=1):
        if len(cols) != 11 + n_pred:
            raise CorpusFormatError(
                f"role-column/predicate mismatch: {len(cols) - 11} role columns for {n_pred} predicates",
                lineno,
            )
        try:
            index = int(cols[0])
        except ValueError:
            raise CorpusFormatError(f"non-integer token id {cols[0]!r}", lineno) from None
        if index != pos:
            raise CorpusFormatError(f"token id {index} out of sequence (expected {pos})", lineno)
        try:
            head = int(cols[6])
        except ValueError:
            raise CorpusFormatError(f"non-integer head {cols[6]!r}", lineno) from None
        if head == index:
            raise CorpusFormatError("self-headed token", lineno)
        tokens.append(
            Token(index, cols[1], cols[2], cols[3], head, cols[7], cols[4], cols[5], cols[8], cols[9])
        )
    check_tree([t.head for t in tokens], first_line)

    pred_positions = [i for i, (_, cols) in enumerate(rows, start=1) if cols[10] != NULL]
    frames = []
    for k, p in enumerate(pred_positions):
        roles = {}
        for i, (_, cols) in enumerate(rows, start=1):
            label = cols[11 + k]
            if label != NULL:
                roles[i] = label
        frames.append(PredicateFrame(p, rows[p - 1][1][10], roles))
    return Sentence(sent_id, language, tokens, frames)


def read_corpus(path) -> Corpus:
    with open(path, encoding="utf-8") as fh:
        return parse_conllu_plus(fh)


# ---------------------------------------------------------------- writing


def serialize(corpus: Corpus | Iterable[Sentence]) -> str:
    out = io.StringIO()
    write_conllu_plus(corpus, out)
    return out.getvalue()


def write_conllu_plus(corpus: Corpus | Iterable[Sentence], out: TextIO) -> None:
    for sent in corpus:
        out.write(f"# sent_id = {sent.sentence_id}\n")
        out.write(f"# language = {sent.language}\n")
        frames = sorted(sent.frames, key=lambda f: f.predicate_index)
        senses = {f.predicate_index: f.sense for f in frames}
        for t in sent.tokens:
            cols = [
                str(t.index), t.form, t.lemma, t.upos, t.xpos, t.feats,
                str(t.head), t.deprel, t.deps, t.misc, senses.get(t.index, NULL),
            ]
            cols += [f.roles.get(t.index, NULL) for f in frames]
            out.write("\t".join(cols) + "\n")
        out.write("\n")


def write_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        write_conllu_plus(corpus, fh)


# ---------------------------------------------------------------- synthesis

# Dependent POS and its deprel are tied so that deprel (hence role) follows
# from the dependent's POS plus whether it carries a case marker; the verb a
# dependent attaches to is only recoverable from the tree.
SYNTH_POS_SHARE = {
    "VERB": 0.20, "NOUN": 0.30, "PRON": 0.15, "ADJ": 0.10,
    "ADV": 0.10, "ADP": 0.08, "DET": 0.07,
}
SYNTAX_ROLES = {"nsubj": "A0", "obj": "A1", "obl": "A2", "advmod": "AM-TMP"}
SYNTH_PROFILES = ("syntax-determined", "lexical")


def synth_lexicon(vocab_size: int, language: str = "xx", shared_fraction: float = 1.0) -> dict[str, list[str]]:
    """Word forms per POS class. The first ``shared_fraction`` of each class is
    language-neutral; the rest carries a language prefix."""
    lexicon = {}
    for pos, share in SYNTH_POS_SHARE.items():
        size = max(2, int(round(share * vocab_size)))
        n_shared = int(round(shared_fraction * size))
        stem = pos.lower()
        lexicon[pos] = [
            f"{stem}{k}" if k < n_shared else f"{language}_{stem}{k}" for k in range(size)
        ]
    return lexicon


class _TreeBuilder:
    def __init__(self, rng: np.random.Generator, lexicon: dict[str, list[str]]):
        self.rng = rng
        self.lexicon = lexicon
        self.nodes: list[dict] = []

    def node(self, upos: str, deprel: str) -> int:
        words = self.lexicon[upos]
        self.nodes.append({"upos": upos, "deprel": deprel, "form": words[self.rng.integers(len(words))], "deps": []})
        return len(self.nodes) - 1

    def attach(self, head: int, upos: str, deprel: str) -> int:
        d = self.node(upos, deprel)
        self.nodes[head]["deps"].append(d)
        return d

    def noun_phrase(self, head: int, upos: str, deprel: str, with_case: bool) -> int:
        n = self.attach(head, upos, deprel)
        if with_case:
            self.attach(n, "ADP", "case")
        if upos == "NOUN":
            if self.rng.random() < 0.5:
                self.attach(n, "DET", "det")
            if self.rng.random() < 0.3:
                self.attach(n, "ADJ", "amod")
        return n

    def clause(self, verb: int, depth: int) -> None:
        r = self.rng
        if r.random() < 0.8:
            self.noun_phrase(verb, "PRON", "nsubj", False)
        if r.random() < 0.6:
            self.noun_phrase(verb, "NOUN", "obj", False)
        if r.random() < 0.3:
            self.noun_phrase(verb, "NOUN", "obl", True)
        if r.random() < 0.3:
            self.attach(verb, "ADV", "advmod")
        if depth < 2 and r.random() < 0.45:
            sub = self.attach(verb, "VERB", "ccomp")
            self.clause(sub, depth + 1)

    def linearize(self, root: int) -> list[int]:
        """Projective order: each dependent subtree goes left or right of its head."""
        node = self.nodes[root]
        left, right = [], []
        for d in node["deps"]:
            if node["upos"] in ("NOUN", "PRON") and self.nodes[d]["upos"] in ("DET", "ADJ", "ADP"):
                left.insert(len(left) if self.nodes[d]["upos"] != "ADP" else 0, d)
            else:
                (left if self.rng.random() < 0.5 else right).append(d)
        if node["upos"] == "VERB":
            self.rng.shuffle(left)
        self.rng.shuffle(right)
        out = []
        for d in left:
            out += self.linearize(d)
        out.append(root)
        for d in right:
            out += self.linearize(d)
        return out


def _synth_sentence(rng, lexicon, profile, sent_id, language, labels) -> Sentence:
    while True:
        b = _TreeBuilder(rng, lexicon)
        root = b.node("VERB", "root")
        b.clause(root, 0)
        if 3 <= len(b.nodes) <= 12:
            break
    order = b.linearize(root)
    position = {node: i + 1 for i, node in enumerate(order)}
    head_of = {d: h for h, nd in enumerate(b.nodes) for d in nd["deps"]}
    tokens = []
    for i, node_id in enumerate(order, start=1):
        nd = b.nodes[node_id]
        head = position[head_of[node_id]] if node_id in head_of else 0
        tokens.append(Token(i, nd["form"], nd["form"], nd["upos"], head, nd["deprel"]))
    frames = []
    for t in tokens:
        if t.upos != "VERB":
            continue
        roles = {}
        for d in tokens:
            if d.head != t.index or d.deprel not in SYNTAX_ROLES:
                continue
            if profile == "syntax-determined":
                roles[d.index] = SYNTAX_ROLES[d.deprel]
            else:
                roles[d.index] = labels[sum(map(ord, d.form)) % len(labels)]
        frames.append(PredicateFrame(t.index, f"{t.lemma}.01", roles))
    return Sentence(sent_id, language, tokens, frames)


def synth_corpus(
    seed: int,
    n_sentences: int,
    vocab_size: int = 100,
    grammar_profile: str = "syntax-determined",
    language: str = "xx",
    shared_fraction: float = 1.0,
) -> Corpus:
    """Random projective single-root corpus with 3-12 tokens per sentence.

    Under ``syntax-determined`` every argument's role is a fixed function of its
    deprel; under ``lexical`` it is a fixed function of the argument's form.
    """
    if n_sentences < 1:
        raise ValueError("n_sentences must be >= 1")
    if grammar_profile not in SYNTH_PROFILES:
        raise ValueError(f"unknown grammar profile {grammar_profile!r}; expected one of {SYNTH_PROFILES}")
    rng = np.random.default_rng(seed)
    lexicon = synth_lexicon(vocab_size, language, shared_fraction)
    labels = sorted(set(SYNTAX_ROLES.values()))
    return Corpus([
        _synth_sentence(rng, lexicon, grammar_profile, f"{language}-{seed}-{k + 1}", language, labels)
        for k in range(n_sentences)
    ])
