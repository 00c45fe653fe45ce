"""Shared test helpers: fixture paths and a small, fast model configuration."""

from pathlib import Path

from xsrl.config import ExperimentConfig
from xsrl.conllu import read_corpus

DATA = Path(__file__).parent / "data"
FIXTURE = DATA / "en_fixture.conllu"

TINY = dict(word_dim=8, pos_dim=4, tree_hidden=8, gcn_layers=1, encoder="basic", encoder_hidden=8,
            encoder_layers=1, d_r=8, lang_dim=2, dropout=0.0, batch_size=10, epochs=2, sources=["en"], seed=1)


def tiny_config(**changes) -> ExperimentConfig:
    return ExperimentConfig(**{**TINY, **changes}).validate()


def fixture_corpus():
    return read_corpus(FIXTURE)


def config_text(**values) -> str:
    out = []
    for k, v in values.items():
        if isinstance(v, list):
            v = ",".join(v)
        elif isinstance(v, bool):
            v = str(v).lower()
        out.append(f"{k} = {v}")
    return "\n".join(out) + "\n"
