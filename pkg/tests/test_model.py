import numpy as np
import pytest

from _support import fixture_corpus, tiny_config
from xsrl import autograd as ag
from xsrl.conllu import synth_corpus
from xsrl.features import build_vocabularies
from xsrl.model import SRLModel
from xsrl.params import ParamStore
from xsrl.srl import SRLScorer, candidate_pairs, decode_pairs
from xsrl.training import train


def model_for(corpus, **changes):
    return SRLModel(tiny_config(**changes), build_vocabularies(corpus))


def jitter(model, scale=0.3, seed=0):
    rng = np.random.default_rng(seed)
    for t in model.store.trainable().values():
        t.data += rng.normal(0, scale, size=t.shape)
    return model


def brute_force_losses(model, sentences):
    """Enumerate all n^2 pairs with plain numpy: pair NLL and unary BCE, batch means."""
    with ag.no_grad():
        h = model.encode(sentences).data
    w = {k: v.data for k, v in model.store.trainable().items()}
    r_p = np.maximum(h @ w["srl.ffn_p.W"] + w["srl.ffn_p.b"], 0)
    r_a = np.maximum(h @ w["srl.ffn_a.W"] + w["srl.ffn_a.b"], 0)
    pair_total = unary_total = 0.0
    start = 0
    for s in sentences:
        n = len(s)
        gold = {(p, a): model.label_id(l) for p, a, l in s.triplets()}
        for i in range(n):
            for j in range(n):
                P, A = r_p[start + i], r_a[start + j]
                phi = P @ w["srl.biaffine.W1"] @ A + w["srl.biaffine.W2"] @ np.concatenate([P, A]) + w["srl.biaffine.b"][0]
                logits = np.concatenate([[0.0], phi + A @ w["srl.label.W"] + w["srl.label.b"]])
                lse = np.log(np.exp(logits - logits.max()).sum()) + logits.max()
                pair_total += lse - logits[gold.get((i + 1, j + 1), 0)]
        preds = {p for p, _ in gold}
        args = {a for _, a in gold}
        for i in range(n):
            zp = r_p[start + i] @ w["srl.unary.p"]
            za = r_a[start + i] @ w["srl.unary.a"]
            unary_total += np.logaddexp(0, zp) - zp * ((i + 1) in preds)
            unary_total += np.logaddexp(0, za) - za * ((i + 1) in args)
        start += n
    return pair_total / len(sentences), unary_total / len(sentences)


def test_loss_matches_all_pairs_enumeration_at_full_beams():
    corpus = fixture_corpus()
    model = jitter(model_for(corpus, alpha_p=1.0, alpha_a=1.0))
    out = model.loss(corpus.sentences, training=False)
    pair, unary = brute_force_losses(model, corpus.sentences)
    assert out.oracle_misses == 0
    assert out.pair_loss.item() == pytest.approx(pair, rel=1e-12)
    assert out.unary_loss.item() == pytest.approx(unary, rel=1e-12)
    assert out.loss.item() == pytest.approx(pair + unary, rel=1e-12)


def test_pruned_gold_pairs_are_counted_not_scored():
    corpus = fixture_corpus()
    model = jitter(model_for(corpus, alpha_p=0.2, alpha_a=0.2))
    out = model.loss(corpus.sentences, training=False)
    n_gold = sum(len(s.triplets()) for s in corpus)
    assert 0 < out.oracle_misses <= n_gold
    injected = model_for(corpus, alpha_p=0.2, alpha_a=0.2, gold_beam_inject=True)
    assert jitter(injected).loss(corpus.sentences, training=True, rng=np.random.default_rng(0)).oracle_misses == 0


def test_sentence_without_predicates_gets_null_supervision():
    corpus = fixture_corpus()
    rains = [s for s in corpus if not s.frames]
    assert len(rains) == 1
    model = jitter(model_for(corpus, alpha_p=1.0, alpha_a=1.0, unary_weight=0.0))
    out = model.loss(rains, training=False)
    pair, _ = brute_force_losses(model, rains)
    assert out.pair_loss.item() == pytest.approx(pair, rel=1e-12) and pair > 0
    assert out.unary_loss is None


def test_zero_parameters_decode_to_nothing():
    corpus = fixture_corpus()
    model = model_for(corpus)
    for t in model.store.trainable().values():
        t.data[:] = 0.0
    preds, _ = model.predict(corpus.sentences, alpha_p=1.0, alpha_a=1.0)
    assert all(p == [] for p in preds)


def test_hand_set_unique_argmax_is_the_only_output():
    # tokens are one-hot rows; W1 rewards exactly predicate 2 with argument 1
    store = ParamStore()
    s = SRLScorer(store, np.random.default_rng(0), 3, 2, 3)
    for t in store.trainable().values():
        t.data[:] = 0.0
    s.W1.data[1, 0] = 5.0
    s.b.data[:] = -2.0
    s.label_b.data[:] = [0.0, -1.0]  # A0 above A1
    r = ag.constant(np.eye(3))
    everyone = [np.arange(3)]
    sent, pr, ar = candidate_pairs(everyone, everyone, [3])
    best, _ = decode_pairs(s.pair_logits(r, r, pr, ar).data)
    emitted = {(int(p) + 1, int(a) + 1, int(l)) for p, a, l in zip(pr, ar, best) if l}
    assert emitted == {(2, 1, 1)}


def test_prediction_independent_of_batching():
    corpus = synth_corpus(3, 12)
    model = jitter(model_for(corpus, sources=["xx"]), scale=0.5)
    together, _ = model.predict(corpus.sentences, alpha_p=0.6, alpha_a=0.8)
    alone = [model.predict([s], alpha_p=0.6, alpha_a=0.8)[0][0] for s in corpus]
    key = lambda ts: sorted((t.predicate, t.argument, t.label) for t in ts)  # noqa: E731
    assert [key(t) for t in together] == [key(t) for t in alone]


def test_oracle_recall_non_decreasing_in_alpha():
    corpus = synth_corpus(4, 30)
    model = train(tiny_config(sources=["xx"], epochs=3), {"xx": corpus}).model
    misses = [model.predict(corpus.sentences, alpha_p=a, alpha_a=a)[1] for a in (0.2, 0.4, 0.7, 1.0)]
    assert misses == sorted(misses, reverse=True) and misses[-1] == 0


def test_dropout_only_in_training():
    corpus = fixture_corpus()
    model = jitter(model_for(corpus, dropout=0.5))
    a = model.loss(corpus.sentences, training=False).loss.item()
    assert model.loss(corpus.sentences, training=False).loss.item() == a
    b = model.loss(corpus.sentences, training=True, rng=np.random.default_rng(1)).loss.item()
    assert b != a


def test_feature_resources_required():
    corpus = fixture_corpus()
    with pytest.raises(ValueError, match="high-order"):
        model_for(corpus, ho="x.ckpt")
    with pytest.raises(ValueError, match="context"):
        model_for(corpus, context="x.vec")


def test_full_model_gradients():
    from xsrl.gradcheck import check_fixture

    assert check_fixture("srl_model").max_rel_error <= 1e-4
