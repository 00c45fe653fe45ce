import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from xsrl import autograd as ag
from xsrl.gradcheck import PRIMITIVES, check_gradients, check_primitive
from xsrl.params import AdamState, ParamStore, adam_step, read_checkpoint, write_checkpoint

finite = st.floats(-20, 20, allow_nan=False, allow_infinity=False)


def test_sigmoid_at_zero_is_half():
    assert ag.sigmoid(ag.constant([0.0])).data[0] == 0.5


def test_softmax_of_equal_logits_is_uniform():
    np.testing.assert_array_equal(ag.softmax(ag.constant([[0.0, 0.0]])).data, [[0.5, 0.5]])


def test_matmul_identity():
    m = np.array([[3.0, 4.0], [5.0, 6.0]])
    np.testing.assert_array_equal(ag.matmul(ag.constant(np.eye(2)), ag.constant(m)).data, m)


def test_sigmoid_gradient_at_zero():
    x = ag.parameter([0.0])
    ag.backward(ag.sum_all(ag.sigmoid(x)))
    assert x.grad[0] == 0.25


def test_relu_subgradient():
    x = ag.parameter([-1.0, 2.0])
    ag.backward(ag.sum_all(ag.relu(x)))
    np.testing.assert_array_equal(x.grad, [0.0, 1.0])


def test_shape_mismatch_names_primitive_and_shapes():
    with pytest.raises(ag.ShapeError, match=r"matmul.*\(2, 3\).*\(2, 3\)"):
        ag.matmul(ag.constant(np.ones((2, 3))), ag.constant(np.ones((2, 3))))
    with pytest.raises(ag.ShapeError, match="add"):
        ag.add(ag.constant(np.ones((2, 3))), ag.constant(np.ones((3, 2))))


def test_non_scalar_loss_rejected():
    x = ag.parameter(np.ones(3))
    with pytest.raises(ag.ShapeError, match="scalar"):
        ag.backward(x * x)


def test_two_consumers_accumulate():
    x = ag.parameter([1.5, -2.0])
    y = x * x + ag.scalar_affine(x, 3.0)
    ag.backward(ag.sum_all(y))
    np.testing.assert_allclose(x.grad, 2 * x.data + 3.0)


def test_unreachable_parameter_gets_zero_grad():
    x, unused = ag.parameter([1.0]), ag.parameter([[2.0, 3.0]])
    ag.backward(ag.sum_all(x * x), [x, unused])
    np.testing.assert_array_equal(unused.grad, np.zeros((1, 2)))


def test_repeated_backward_overwrites_leaf_grads():
    x = ag.parameter([2.0])
    ag.backward(ag.sum_all(x * x))
    ag.backward(ag.sum_all(x * x))
    assert x.grad[0] == 4.0


def test_no_grad_records_nothing():
    x = ag.parameter([1.0])
    with ag.no_grad():
        y = ag.sigmoid(x)
    assert y._node is None and not y.requires_grad


def test_topological_order_inputs_precede_consumers():
    x = ag.parameter(np.ones(2))
    a = ag.tanh(x)
    b = a * x
    loss = ag.sum_all(b + a)
    order = ag.topological_order(loss)
    pos = {id(t): i for i, t in enumerate(order)}
    for t in order:
        if t._node is not None:
            for inp in t._node.inputs:
                if inp.requires_grad:
                    assert pos[id(inp)] < pos[id(t)]
    assert len(pos) == len(order)


def test_dropout_is_seeded_and_inverted():
    x = ag.constant(np.ones((50, 40)))
    a = ag.dropout(x, 0.3, np.random.default_rng(3)).data
    b = ag.dropout(x, 0.3, np.random.default_rng(3)).data
    np.testing.assert_array_equal(a, b)
    assert set(np.unique(a)) <= {0.0, 1 / 0.7}
    assert ag.dropout(x, 0.3, None, training=False) is x


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)), elements=finite))
def test_softmax_rows_are_distributions(x):
    p = ag.softmax(ag.constant(x)).data
    assert (p >= 0).all()
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)), elements=finite))
def test_log_softmax_matches_log_of_softmax(x):
    np.testing.assert_allclose(ag.log_softmax(ag.constant(x)).data,
                               np.log(ag.softmax(ag.constant(x)).data), atol=1e-9)


@given(arrays(np.float64, st.integers(1, 8), elements=finite))
def test_forward_values_finite(x):
    t = ag.constant(x)
    for out in (ag.sigmoid(t), ag.tanh(t), ag.softplus(t), ag.softmax(ag.reshape(t, (1, -1)))):
        assert np.isfinite(out.data).all()


@pytest.mark.parametrize("name", PRIMITIVES)
def test_primitive_gradient(name):
    assert check_primitive(name, points=10, seed=1).max_rel_error <= 1e-4


def test_gradient_check_detects_a_wrong_rule():
    x = ag.parameter(np.array([0.3, -0.8]))

    def wrong():
        out = ag.sigmoid(x)
        node = out._node
        if node is not None:
            node.backward_fn = lambda g: (2 * g,)
        return ag.sum_all(out)

    assert check_gradients(wrong, [x]).max_rel_error > 1e-2


# ---------------------------------------------------------------- Adam


def test_adam_first_step_moves_by_lr():
    p = ag.parameter([1.0])
    p.grad = np.array([1.0])
    state = adam_step({"p": p}, AdamState())
    # m_hat = v_hat = 1 at t = 1, so the step is lr / (1 + eps)
    np.testing.assert_allclose(p.data, [1.0 - 0.001 / (1 + 1e-8)], rtol=0, atol=1e-15)
    assert state.step == 1


def test_adam_zero_gradient_leaves_params_and_decays_moments():
    p = ag.parameter([0.5, -0.5])
    state = AdamState()
    p.grad = np.array([1.0, 1.0])
    adam_step({"p": p}, state)
    before = p.data.copy()
    m_before = state.m["p"].copy()
    p.grad = np.zeros(2)
    adam_step({"p": p}, state)
    np.testing.assert_array_equal(p.data, before - 0.001 * (state.m["p"] / (1 - 0.9**2))
                                  / (np.sqrt(state.v["p"] / (1 - 0.999**2)) + 1e-8))
    np.testing.assert_allclose(state.m["p"], 0.9 * m_before)
    p2 = ag.parameter([0.5])
    p2.grad = np.zeros(1)
    s2 = adam_step({"p": p2}, AdamState())
    assert p2.data[0] == 0.5 and s2.m["p"][0] == 0.0


def test_adam_missing_gradient_names_group():
    with pytest.raises(ValueError, match="'enc.pgn.W'"):
        adam_step({"enc.pgn.W": ag.parameter(np.ones(2))}, AdamState())


def test_adam_step_counter_increases():
    p = ag.parameter([1.0])
    state = AdamState()
    for k in range(1, 4):
        p.grad = np.array([0.1 * k])
        adam_step({"p": p}, state)
        assert state.step == k
        assert state.m["p"].shape == p.data.shape == state.v["p"].shape


def _ten_steps(seed):
    rng = np.random.default_rng(seed)
    W = ag.parameter(rng.normal(size=(4, 3)))
    x = rng.normal(size=(5, 4))
    state = AdamState()
    for _ in range(10):
        loss = ag.sum_all(ag.tanh(ag.matmul(ag.dropout(ag.constant(x), 0.2, rng), W)))
        ag.backward(loss, [W])
        adam_step({"W": W}, state)
    return W.data


def test_adam_runs_are_bitwise_reproducible():
    assert _ten_steps(4).tobytes() == _ten_steps(4).tobytes()


# ---------------------------------------------------------------- checkpoints


@settings(max_examples=50)
@given(st.dictionaries(
    st.text(min_size=1, max_size=12),
    arrays(np.float64, st.lists(st.integers(1, 4), min_size=0, max_size=3).map(tuple),
           elements=st.floats(allow_nan=False)),
    max_size=4))
def test_checkpoint_round_trip_is_exact(groups):
    buf = io.BytesIO()
    write_checkpoint(buf, groups)
    buf.seek(0)
    back = read_checkpoint(buf)
    assert list(back) == list(groups)
    for k in groups:
        assert back[k].shape == np.asarray(groups[k]).shape
        assert back[k].tobytes() == np.asarray(groups[k], dtype="<f8").tobytes()


def test_checkpoint_layout_bytes():
    buf = io.BytesIO()
    write_checkpoint(buf, {"ab": np.array([[1.0, 2.0]])})
    raw = buf.getvalue()
    assert raw[:8] == b"SRLCKPT1"
    assert raw[8:12] == (2).to_bytes(4, "little") and raw[12:14] == b"ab"
    assert raw[14:18] == (2).to_bytes(4, "little")
    assert raw[18:34] == (1).to_bytes(8, "little") + (2).to_bytes(8, "little")
    assert np.frombuffer(raw[34:], "<f8").tolist() == [1.0, 2.0]


def test_checkpoint_rejects_bad_magic_and_truncation():
    with pytest.raises(ValueError, match="magic"):
        read_checkpoint(io.BytesIO(b"NOTACKPT"))
    buf = io.BytesIO()
    write_checkpoint(buf, {"w": np.ones(3)})
    with pytest.raises(ValueError, match="truncated"):
        read_checkpoint(io.BytesIO(buf.getvalue()[:-4]))


def test_param_store_freeze_and_strict_load():
    store = ParamStore()
    store.add("a", np.ones(2))
    store.add("b", np.zeros((2, 2)), frozen=True)
    assert list(store.trainable()) == ["a"]
    with pytest.raises(KeyError, match="duplicate"):
        store.add("a", np.ones(1))
    with pytest.raises(KeyError, match="lacks"):
        store.load_arrays({"a": np.ones(2)})
    with pytest.raises(ValueError, match="shape"):
        store.load_arrays({"a": np.ones(3), "b": np.zeros((2, 2))})
