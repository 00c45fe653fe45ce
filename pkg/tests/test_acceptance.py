"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines inline.
"""

import io
import math
import statistics
import time

import numpy as np
import pytest

from _support import fixture_corpus
from xsrl import autograd as ag
from xsrl.config import ExperimentConfig
from xsrl.conllu import Corpus, parse_conllu_plus, serialize, synth_corpus
from xsrl.encoder import Encoder
from xsrl.features import build_vocabularies
from xsrl.gradcheck import TOLERANCE, run_suite
from xsrl.highorder import PretrainConfig, evaluate_pretraining, pretrain
from xsrl.metrics import score_triplets
from xsrl.model import SRLModel
from xsrl.params import ParamStore, read_checkpoint, write_checkpoint
from xsrl.srl import SRLScorer
from xsrl.training import evaluate_end2end, train

# small network sizes shared by the training criteria; the full default sizes
# (300/650/...) are too slow for a desk-scale run of 50-300 sentences
SMALL = dict(word_dim=32, pos_dim=16, tree_hidden=32, encoder_hidden=32, encoder_layers=1, d_r=32)


@pytest.fixture
def report(capsys):
    def emit(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, detail
    return emit


def test_criterion_1_gradient_suite(report):
    start = time.perf_counter()
    results = run_suite(points=100, seed=0)
    elapsed = time.perf_counter() - start
    worst = max(results, key=lambda r: r.max_rel_error)
    failed = [r.name for r in results if not r.passed]
    names = {r.name for r in results}
    ok = not failed and elapsed < 120 and {"treelstm", "gcn", "gnn", "pgn_bilstm", "biaffine_loss"} <= names
    report(1, ok, f"{len(results)} checks, max rel error {worst.max_rel_error:.2e} ({worst.name}) "
                  f"<= {TOLERANCE:g}, failed={failed}, {elapsed:.1f}s < 120s")


def test_criterion_2_overfit(report):
    corpus = synth_corpus(7, 50, 100, language="en")
    cfg = ExperimentConfig(sources=["en"], encoder="basic", tree="gcn", word=True, pos=True,
                           dropout=0.0, batch_size=10, epochs=200, seed=1, **SMALL)
    start = time.perf_counter()
    model = train(cfg, {"en": corpus}).model
    elapsed = time.perf_counter() - start
    f1 = evaluate_end2end(model, corpus).f1
    report(2, f1 >= 95.0 and elapsed < 300, f"training F1 {f1:.1f} >= 95.0 after 200 epochs, {elapsed:.1f}s < 300s")


def test_criterion_3_syntax_utility(report):
    corpus = synth_corpus(7, 50, 100, language="en")
    base = ExperimentConfig(sources=["en"], encoder="basic", freeze_embeddings=True, pos=False,
                            batch_size=10, epochs=100, **SMALL)
    gcn, word = [], []
    for seed in (1, 2, 3):
        gcn.append(evaluate_end2end(train(base.replace(tree="gcn", seed=seed), {"en": corpus}).model, corpus).f1)
        word.append(evaluate_end2end(train(base.replace(tree="none", seed=seed), {"en": corpus}).model, corpus).f1)
    gap = statistics.median(gcn) - statistics.median(word)
    report(3, gap >= 20.0, f"median F1 gcn {statistics.median(gcn):.1f} vs word-only {statistics.median(word):.1f}, "
                           f"gap {gap:.1f} >= 20 (per seed gcn={[round(v, 1) for v in gcn]} "
                           f"word={[round(v, 1) for v in word]})")


def exhaustive_decode(model: SRLModel, sentence) -> set:
    """All n^2 pairs scored with plain numpy from the stored weights."""
    with ag.no_grad():
        h = model.encode([sentence]).data
    w = {k: v.data for k, v in model.store.trainable().items()}
    r_p = np.maximum(h @ w["srl.ffn_p.W"] + w["srl.ffn_p.b"], 0)
    r_a = np.maximum(h @ w["srl.ffn_a.W"] + w["srl.ffn_a.b"], 0)
    out = set()
    for i in range(len(sentence)):
        for j in range(len(sentence)):
            phi = r_p[i] @ w["srl.biaffine.W1"] @ r_a[j] + w["srl.biaffine.W2"] @ np.concatenate([r_p[i], r_a[j]]) \
                + w["srl.biaffine.b"][0]
            logits = np.concatenate([[0.0], phi + r_a[j] @ w["srl.label.W"] + w["srl.label.b"]])
            k = int(np.argmax(logits))  # first maximum, so ties go to the null label
            if k:
                out.add((i + 1, j + 1, k))
    return out


def test_criterion_4_beam_exactness(report):
    train_c = synth_corpus(7, 50, 100, language="en")
    cfg = ExperimentConfig(sources=["en"], encoder="basic", dropout=0.0, batch_size=10, epochs=30, seed=1, **SMALL)
    model = train(cfg, {"en": train_c}).model
    sents = synth_corpus(99, 200, 100, language="en").sentences
    full, _ = model.predict(sents, alpha_p=1.0, alpha_a=1.0)
    mismatched = [s.sentence_id for s, got in zip(sents, full)
                  if {(t.predicate, t.argument, t.label) for t in got} != exhaustive_decode(model, s)]
    emitted = sum(len(t) for t in full)
    n_gold = sum(len(s.triplets()) for s in sents)
    recall = {}
    for alpha in (0.2, 0.4, 0.7, 1.0):
        _, misses = model.predict(sents, alpha_p=alpha, alpha_a=alpha)
        recall[alpha] = 1.0 - misses / n_gold
    values = list(recall.values())
    monotone = all(a <= b for a, b in zip(values, values[1:]))
    report(4, not mismatched and emitted > 0 and monotone and recall[1.0] == 1.0,
           f"alpha=1 decode equals exhaustive on {len(sents)} sentences ({emitted} triplets, "
           f"mismatches={len(mismatched)}); oracle recall {', '.join(f'{a}:{r:.3f}' for a, r in recall.items())} "
           f"non-decreasing")


def test_criterion_5_pgn_consistency(report):
    rng = np.random.default_rng(0)
    x = ag.constant(rng.normal(size=(9, 5)))
    lengths = [5, 4]
    worst = 0.0
    for e in (1.0, float(rng.normal())):
        pgn = Encoder(ParamStore(), np.random.default_rng(1), 5, 6, 2, "pgn", ["en"], 1)
        pgn.lang_table.data[:] = [[e]]
        basic = Encoder(ParamStore(), np.random.default_rng(2), 5, 6, 2, "basic")
        column = pgn.W_pgn.data[:, 0] * e  # e = 1 is the column itself
        for b in basic.layout.blocks:
            basic.weights[b.key].data = column[b.offset:b.offset + b.size].reshape(b.shape).copy()
        diff = np.abs(pgn(x, lengths, ["en", "en"]).data - basic(x, lengths).data).max()
        worst = max(worst, float(diff))
    langs = ["en", "de", "fi", "it"]
    pgn = Encoder(ParamStore(), np.random.default_rng(3), 5, 6, 2, "pgn", langs, 4)
    pgn.lang_table.data[:] = np.eye(4)
    exact = all(pgn.generate_params(l).data.tobytes() == pgn.W_pgn.data[:, k].tobytes() for k, l in enumerate(langs))
    report(5, worst <= 1e-12 and exact,
           f"d_L=1 PGN vs BASIC max |diff| {worst:.1e} <= 1e-12; one-hot generation exact={exact}")


def test_criterion_6_multi_source(report):
    langs = ["aa", "bb", "cc"]
    single, multi = [], []
    for seed in (1, 2, 3):
        tr = {l: synth_corpus(100 * seed + k, 100, 100, language=l, shared_fraction=0.3) for k, l in enumerate(langs)}
        test = synth_corpus(100 * seed + 50, 100, 100, language="cc", shared_fraction=0.3)
        base = ExperimentConfig(encoder="pgn", epochs=60, seed=seed, **SMALL)
        single.append(max(evaluate_end2end(train(base.replace(sources=[s]), tr, extra_languages=["cc"]).model, test).f1
                          for s in ("aa", "bb")))
        multi.append(evaluate_end2end(train(base.replace(sources=["aa", "bb"]), tr, extra_languages=["cc"]).model,
                                      test).f1)
    s, m = statistics.median(single), statistics.median(multi)
    report(6, m >= s, f"target cc median F1 multi-source {m:.1f} >= best single-source {s:.1f} "
                      f"(per seed multi={[round(v, 1) for v in multi]} single={[round(v, 1) for v in single]})")


def test_criterion_7_high_order_pretraining(report):
    full = synth_corpus(11, 500, 100, language="en")
    train_c, held = Corpus(full.sentences[:450]), Corpus(full.sentences[450:])
    start = time.perf_counter()
    params, _ = pretrain(train_c, PretrainConfig(steps=2000))
    stats = evaluate_pretraining(held, params)
    elapsed = time.perf_counter() - start
    ratio = stats["masked_accuracy"] / stats["majority_rate"]
    report(7, ratio >= 5.0 and stats["edge_auc"] >= 0.9 and elapsed < 300,
           f"held-out masked accuracy {stats['masked_accuracy']:.3f} = {ratio:.1f}x majority "
           f"{stats['majority_rate']:.3f} (>= 5x), edge AUC {stats['edge_auc']:.4f} >= 0.9, {elapsed:.0f}s < 300s")


def test_criterion_8_loss_sanity(report):
    text = ("# sent_id = v-1\n"
            "1\tdogs\tdog\tNOUN\t_\t_\t2\tnsubj\t_\t_\t_\tA0\n"
            "2\tbark\tbark\tVERB\t_\t_\t0\troot\t_\t_\tbark.01\t_\n"
            "3\tloudly\tloudly\tADV\t_\t_\t2\tadvmod\t_\t_\t_\tAM-MNR\n"
            "4\tnow\tnow\tADV\t_\t_\t2\tadvmod\t_\t_\t_\tAM-TMP\n\n"
            "# sent_id = v-2\n"
            "1\twow\twow\tINTJ\t_\t_\t0\troot\t_\t_\t_\n\n")
    corpus = parse_conllu_plus(text)
    vocabs = build_vocabularies(corpus)
    K = len(vocabs["role"])
    cfg = ExperimentConfig(sources=[corpus.sentences[0].language], encoder="basic", alpha_p=1.0, alpha_a=1.0,
                           dropout=0.0, **SMALL)
    model = SRLModel(cfg, vocabs)
    for t in model.store.trainable().values():
        t.data[:] = 0.0
    out = model.loss([corpus.sentences[1]], training=False)
    loss_err = abs(out.pair_loss.item() - math.log(4))

    store = ParamStore()
    rng = np.random.default_rng(0)
    scorer = SRLScorer(store, rng, 8, K, 16)
    for t in store.trainable().values():
        t.data += rng.normal(0, 1.0, size=t.shape)
    r = ag.constant(rng.normal(0, 3.0, size=(50, 16)))
    pr, ar = rng.integers(0, 50, 1000), rng.integers(0, 50, 1000)
    probs = ag.softmax(scorer.pair_logits(r, r, pr, ar)).data
    sum_err = float(np.abs(probs.sum(axis=1) - 1.0).max())
    report(8, K == 3 and loss_err <= 1e-9 and sum_err <= 1e-12,
           f"zero-parameter 1-pair K={K} loss |L - ln 4| = {loss_err:.1e} <= 1e-9; "
           f"max |sum p - 1| over 1000 pairs = {sum_err:.1e} <= 1e-12")


def test_criterion_9_determinism(report, tmp_path):
    corpus = synth_corpus(7, 50, 100, language="en")
    cfg = ExperimentConfig(sources=["en"], encoder="pgn", dropout=0.3, batch_size=10, epochs=20, seed=4, **SMALL)
    reports, blobs = [], []
    for run in ("a", "b"):
        out = tmp_path / f"{run}.ckpt"
        model = train(cfg.replace(output=str(out)), {"en": corpus}).model
        blobs.append(out.read_bytes())
        reports.append(evaluate_end2end(model, corpus))
    same_bytes = blobs[0] == blobs[1]
    same_metrics = reports[0] == reports[1]
    # a model that emits nothing would make the metric comparison vacuous
    report(9, same_bytes and same_metrics and reports[0].f1 > 0,
           f"two runs with seed 4: checkpoints bitwise identical={same_bytes} ({len(blobs[0])} bytes), "
           f"metrics identical={same_metrics} ({reports[0].summary()})")


def independent_score(pred, gold):
    P = {(k, *t) for k, s in enumerate(pred) for t in s}
    G = {(k, *t) for k, s in enumerate(gold) for t in s}
    c = len(P & G)
    p = 100.0 * c / len(P) if P else 0.0
    r = 100.0 * c / len(G) if G else 0.0
    return p, r, (2 * p * r / (p + r) if p + r else 0.0)


def test_criterion_10_format_fidelity(report, tmp_path):
    # CoNLL-U-plus: parse -> serialize -> parse is the identity, text is a fixed point
    corpora = [fixture_corpus()] + [synth_corpus(s, 20, 50, language="xx") for s in range(10)]
    conllu_ok = all(parse_conllu_plus(serialize(c)).sentences == c.sentences
                    and serialize(parse_conllu_plus(serialize(c))) == serialize(c) for c in corpora)

    # checkpoints: awkward shapes and values survive byte for byte
    rng = np.random.default_rng(0)
    arrays = {"scalar": np.array(2.5), "empty": np.zeros((0, 3)), "vec": rng.normal(size=7),
              "cube": rng.normal(size=(2, 3, 4)),
              "special": np.array([np.nan, np.inf, -np.inf, -0.0, 5e-324, 1.7976931348623157e308])}
    buf = io.BytesIO()
    write_checkpoint(buf, arrays)
    buf.seek(0)
    back = read_checkpoint(buf)
    ckpt_ok = list(back) == list(arrays) and all(
        back[k].shape == v.shape and back[k].tobytes() == v.astype("<f8").tobytes() for k, v in arrays.items())
    cfg = ExperimentConfig(sources=["en"], encoder="pgn", epochs=1, **SMALL)
    model = train(cfg.replace(output=str(tmp_path / "m.ckpt")), {"en": fixture_corpus()}).model
    again = SRLModel.load(tmp_path / "m.ckpt")
    model_ok = all(again.store[k].data.tobytes() == t.data.tobytes() for k, t in model.store.trainable().items())

    # metrics against an independent set-based scorer
    labels = ["A0", "A1", "A2", "AM-TMP"]
    worst = 0.0
    for _ in range(100):
        n_sent = int(rng.integers(1, 6))
        gold, pred = [], []
        for _ in range(n_sent):
            g = {(int(rng.integers(1, 8)), int(rng.integers(1, 8)), labels[rng.integers(4)])
                 for _ in range(rng.integers(0, 6))}
            keep = {t for t in g if rng.random() < 0.6}
            noise = {(int(rng.integers(1, 8)), int(rng.integers(1, 8)), labels[rng.integers(4)])
                     for _ in range(rng.integers(0, 4))}
            gold.append(g)
            pred.append(keep | noise)
        rep = score_triplets(pred, gold)
        worst = max(worst, float(np.abs(np.subtract((rep.precision, rep.recall, rep.f1),
                                                    independent_score(pred, gold))).max()))
    report(10, conllu_ok and ckpt_ok and model_ok and worst <= 1e-9,
           f"CoNLL-U-plus round-trip exact={conllu_ok} on {len(corpora)} corpora; checkpoint arrays exact={ckpt_ok}, "
           f"model reload exact={model_ok}; metrics max |diff| vs set scorer on 100 cases {worst:.1e}")
