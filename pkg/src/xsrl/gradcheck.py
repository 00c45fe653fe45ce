"""Central finite-difference checks for every primitive and the composite modules.

Relative error of one entry is ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``.
The floor keeps entries whose true gradient is (near) zero from dividing
round-off noise by zero. It is set by the resolution of the difference quotient:
the loss is only known to a few ulps, so with step h the numeric gradient carries
an absolute error near ``ROUNDOFF_ULPS * eps * max(1, |L|) / h``, and entries below
``resolution / TOLERANCE`` are compared at that resolution.
A check reports the maximum over all entries probed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor

STEP = 1e-6
TOLERANCE = 1e-4
ROUNDOFF_ULPS = 8


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    entries: int
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= TOLERANCE


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float) -> np.ndarray:
    analytic, numeric = np.asarray(analytic, float), np.asarray(numeric, float)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def resolution_floor(loss_value: float, step: float = STEP) -> float:
    resolution = ROUNDOFF_ULPS * np.finfo(np.float64).eps * max(1.0, abs(loss_value)) / step
    return resolution / TOLERANCE


def check_gradients(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], step: float = STEP,
                    max_entries: int | None = None, rng: np.random.Generator | None = None,
                    name: str = "") -> CheckResult:
    """Compare backward() against central differences of ``loss_fn`` w.r.t. ``params``.

    ``loss_fn`` must rebuild the graph from the current parameter values on
    every call. With ``max_entries`` only that many entries per tensor are probed.
    """
    rng = rng or np.random.default_rng(0)
    loss = loss_fn()
    floor = resolution_floor(loss.item(), step)
    ag.backward(loss, params)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst, probed = 0.0, 0
    for p, grad in zip(params, analytic):
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        numeric = np.empty(len(idx))
        with ag.no_grad():
            for k, i in enumerate(idx):
                keep = flat[i]
                flat[i] = keep + step
                up = loss_fn().item()
                flat[i] = keep - step
                down = loss_fn().item()
                flat[i] = keep
                numeric[k] = (up - down) / (2 * step)
        err = relative_error(grad.reshape(-1)[idx], numeric, floor)
        if len(err):
            worst = max(worst, float(err.max()))
        probed += len(idx)
    return CheckResult(name, worst, probed)


# ---------------------------------------------------------------- primitives


def _weighted_sum(out: Tensor, weights: np.ndarray) -> Tensor:
    return ag.sum_all(out * ag.constant(weights))


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin, x)


# name -> (input shapes, forward on Tensors, sampler). A sampler draws inputs.
def _primitive_cases():
    rows = np.array([2, 0, 2, 1])
    sets = [[0, 2], [1], [], [0, 1, 2, 3]]
    normal = lambda rng, s: rng.normal(size=s)  # noqa: E731
    cases = {
        "matmul": ([(3, 4), (4, 2)], lambda a, b: ag.matmul(a, b), normal),
        "matmul_vector": ([(3, 4), (4,)], lambda a, b: ag.matmul(a, b), normal),
        "add": ([(3, 4), (3, 4)], lambda a, b: ag.add(a, b), normal),
        "add_row_broadcast": ([(3, 4), (4,)], lambda a, b: ag.add(a, b), normal),
        "add_column_broadcast": ([(3, 4), (3, 1)], lambda a, b: ag.add(a, b), normal),
        "mul": ([(3, 4), (3, 4)], lambda a, b: ag.mul(a, b), normal),
        "mul_row_broadcast": ([(3, 4), (4,)], lambda a, b: ag.mul(a, b), normal),
        "mul_column_broadcast": ([(3, 4), (3, 1)], lambda a, b: ag.mul(a, b), normal),
        "scalar_affine": ([(3, 4)], lambda a: ag.scalar_affine(a, -1.7, 0.3), normal),
        "concat_columns": ([(3, 2), (3, 3)], lambda a, b: ag.concat([a, b], axis=1), normal),
        "concat_rows": ([(2, 3), (1, 3)], lambda a, b: ag.concat([a, b], axis=0), normal),
        "sigmoid": ([(3, 4)], ag.sigmoid, normal),
        "tanh": ([(3, 4)], ag.tanh, normal),
        "relu": ([(3, 4)], ag.relu, _away_from_zero),
        "softplus": ([(3, 4)], ag.softplus, normal),
        "softmax": ([(3, 4)], ag.softmax, normal),
        "log_softmax": ([(3, 4)], ag.log_softmax, normal),
        "sum_all": ([(3, 4)], lambda a: ag.reshape(ag.sum_all(a), (1,)), normal),
        "mean_all": ([(3, 4)], lambda a: ag.reshape(ag.mean_all(a), (1,)), normal),
        "sum_over_set": ([(4, 3)], lambda a: ag.sum_over(a, ag.set_matrix(sets, 4)), normal),
        "embedding_lookup": ([(3, 4)], lambda a: ag.take_rows(a, rows), normal),
        "pick": ([(3, 4)], lambda a: ag.pick(a, [0, 1, 2, 0], [3, 0, 2, 1]), normal),
        "slice_cols": ([(3, 5)], lambda a: ag.slice_cols(a, 1, 4), normal),
        "reshape": ([(3, 4)], lambda a: ag.reshape(a, (2, 6)), normal),
        "transpose": ([(3, 4)], ag.transpose, normal),
        "dropout_mask": ([(3, 4)], lambda a: ag.dropout(a, 0.4, np.random.default_rng(5), True), normal),
        "linear": ([(3, 4), (4, 2), (2,)], lambda x, w, b: ag.linear(x, w, b), normal),
    }
    return cases


PRIMITIVES = tuple(_primitive_cases())


def check_primitive(name: str, points: int = 100, seed: int = 0) -> CheckResult:
    """Maximum relative error over ``points`` random input draws."""
    shapes, forward, sample = _primitive_cases()[name]
    rng = np.random.default_rng(seed)
    worst, probed, start = 0.0, 0, time.perf_counter()
    for _ in range(points):
        inputs = [ag.parameter(sample(rng, s)) for s in shapes]
        with ag.no_grad():
            out_shape = forward(*inputs).shape
        weights = rng.normal(size=out_shape)
        res = check_gradients(lambda: _weighted_sum(forward(*inputs), weights), inputs)
        worst = max(worst, res.max_rel_error)
        probed += res.entries
    return CheckResult(name, worst, probed, time.perf_counter() - start)


# ---------------------------------------------------------------- composite fixtures


def _fixture_sentences(n: int = 2, seed: int = 3):
    from .conllu import synth_corpus

    corpus = synth_corpus(seed, 20, vocab_size=30)
    sents = [s for s in corpus if 4 <= len(s) <= 7 and s.frames][:n]
    return sents


def _fixture_treelstm(rng):
    from .params import ParamStore
    from .trees import DepGraph, TreeLSTMParams, treelstm_encode

    sents = _fixture_sentences()
    graph = DepGraph.from_sentences(sents)
    store = ParamStore()
    params = TreeLSTMParams.create(store, rng, 3, hidden=3)
    for t in store.trainable().values():
        t.data += rng.normal(0, 0.3, size=t.shape)  # nonzero biases too
    x = ag.parameter(rng.normal(size=(graph.n, 3)))
    weights = rng.normal(size=(graph.n, 6))
    fn = lambda: _weighted_sum(treelstm_encode(graph, x, params), weights)  # noqa: E731
    return fn, [x, *store.trainable().values()]


def _fixture_gcn(rng):
    from .params import ParamStore
    from .trees import DepGraph, GCNParams, gcn_encode

    sents = _fixture_sentences()
    graph = DepGraph.from_sentences(sents)
    store = ParamStore()
    params = GCNParams.create(store, rng, 3, hidden=4, n_layers=2)
    for t in store.trainable().values():
        t.data += rng.normal(0, 0.3, size=t.shape)
    x = ag.parameter(rng.normal(size=(graph.n, 3)))
    weights = rng.normal(size=(graph.n, 4))
    fn = lambda: _weighted_sum(gcn_encode(graph, x, params), weights)  # noqa: E731
    return fn, [x, *store.trainable().values()]


def _fixture_gnn(rng):
    from .conllu import Corpus
    from .highorder import (
        GNNParams,
        PretrainObjectiveState,
        batch_graphs,
        build_joint_graph,
        choose_masked,
        edge_prediction_loss,
        gnn_forward,
        ho_vocabularies,
        masked_node_loss,
    )

    sents = _fixture_sentences()
    params = GNNParams.create(ho_vocabularies(Corpus(sents)), rng, hidden=4, n_layers=2)
    for k in range(params.n_layers):
        params.store[f"ho.layer{k}.b"].data += 0.2  # keep ReLUs mostly active
    batch = batch_graphs([build_joint_graph(s) for s in sents], params)
    masked = choose_masked(batch, PretrainObjectiveState(rng=np.random.default_rng(1)))

    def fn():
        h = gnn_forward(batch, params, masked)
        node, _ = masked_node_loss(batch, params, None, h=h, masked=masked)
        edge, _, _ = edge_prediction_loss(batch, params, PretrainObjectiveState(rng=np.random.default_rng(2)), h=h)
        return node + edge

    return fn, list(params.store.trainable().values())


def _fixture_pgn_bilstm(rng):
    from .params import ParamStore
    from .encoder import Encoder

    store = ParamStore()
    enc = Encoder(store, rng, d_in=3, hidden=4, n_layers=2, mode="pgn", languages=["en", "de"], lang_dim=2)
    lengths = [4, 2, 3]
    langs = ["en", "de", "en"]
    x = ag.parameter(rng.normal(size=(sum(lengths), 3)))
    weights = rng.normal(size=(sum(lengths), 8))
    fn = lambda: _weighted_sum(enc(x, lengths, langs), weights)  # noqa: E731
    return fn, [x, enc.W_pgn, enc.lang_table]


def _fixture_biaffine_loss(rng):
    from .params import ParamStore
    from .srl import SRLScorer, candidate_pairs, gold_pair_labels, pair_nll

    store = ParamStore()
    scorer = SRLScorer(store, rng, d_in=5, n_labels=2, d_r=4)
    for t in store.trainable().values():
        t.data += rng.normal(0, 0.2, size=t.shape)
    h = ag.parameter(rng.normal(size=(7, 5)))
    lengths = [4, 3]
    preds = [np.array([1, 2]), np.array([0])]
    args = [np.array([0, 1, 3]), np.array([1, 2])]
    gold = [{(2, 1): 1, (3, 4): 2}, {(1, 3): 2}]
    offsets = np.array([0, 4])

    def fn():
        r_p, r_a = scorer.project_heads(h)
        sent, pr, ar = candidate_pairs(preds, args, lengths)
        logits = scorer.pair_logits(r_p, r_a, pr, ar)
        ids = gold_pair_labels(sent, pr, ar, offsets, gold)
        up, ua = scorer.unary_scores(r_p, r_a)
        bce = ag.sum_all(ag.softplus(up)) + ag.sum_all(ag.softplus(ua))
        return ag.mean_all(pair_nll(logits, ids, sent, len(lengths))) + ag.scalar_affine(bce, 0.5)

    return fn, [h, *store.trainable().values()]


def _fixture_srl_model(rng):
    """Full model loss (word + POS + GCN, PGN encoder) on a 3-token sentence."""
    from .config import ExperimentConfig
    from .conllu import Corpus, parse_conllu_plus
    from .features import build_vocabularies
    from .model import SRLModel

    text = (
        "# sent_id = fx-1\n"
        "1\tshe\tshe\tPRON\t_\t_\t2\tnsubj\t_\t_\t_\tA0\n"
        "2\truns\trun\tVERB\t_\t_\t0\troot\t_\t_\trun.01\t_\n"
        "3\tfast\tfast\tADV\t_\t_\t2\tadvmod\t_\t_\t_\tAM-TMP\n\n"
    )
    corpus = parse_conllu_plus(text)
    cfg = ExperimentConfig(sources=[corpus.sentences[0].language], word_dim=3, pos_dim=2, tree_hidden=3,
                           gcn_layers=1, encoder_hidden=3, encoder_layers=1, lang_dim=2, d_r=3,
                           dropout=0.0, alpha_p=1.0, alpha_a=1.0, seed=int(rng.integers(1 << 30)))
    model = SRLModel(cfg, build_vocabularies(corpus), None)
    for t in model.store.trainable().values():
        t.data += rng.normal(0, 0.2, size=t.shape)
    fn = lambda: model.loss(corpus.sentences, training=False).loss  # noqa: E731
    return fn, list(model.store.trainable().values())


FIXTURES: dict[str, Callable] = {
    "treelstm": _fixture_treelstm,
    "gcn": _fixture_gcn,
    "gnn": _fixture_gnn,
    "pgn_bilstm": _fixture_pgn_bilstm,
    "biaffine_loss": _fixture_biaffine_loss,
    "srl_model": _fixture_srl_model,
}


def check_fixture(name: str, seed: int = 0, max_entries: int | None = None) -> CheckResult:
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    fn, params = FIXTURES[name](rng)
    res = check_gradients(fn, params, max_entries=max_entries, rng=rng, name=name)
    res.seconds = time.perf_counter() - start
    return res


def run_suite(points: int = 100, seed: int = 0,
              report: Callable[[CheckResult], None] | None = None) -> list[CheckResult]:
    results = []
    for name in PRIMITIVES:
        results.append(check_primitive(name, points, seed))
        if report:
            report(results[-1])
    for name in FIXTURES:
        results.append(check_fixture(name, seed))
        if report:
            report(results[-1])
    return results
