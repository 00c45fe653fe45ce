import numpy as np
import pytest

from xsrl import autograd as ag
from xsrl.gradcheck import (
    FIXTURES,
    ROUNDOFF_ULPS,
    STEP,
    TOLERANCE,
    check_gradients,
    relative_error,
    resolution_floor,
)


def test_relative_error_examples():
    np.testing.assert_allclose(relative_error([1.0, -2.0], [1.0001, -2.0], 1e-6), [1e-4 / 1.0001, 0.0])
    assert relative_error([0.0], [0.0], 1e-6)[0] == 0.0
    # both below the floor: the difference is measured against the floor
    assert relative_error([1e-9], [-1e-9], 1e-6)[0] == pytest.approx(2e-3)


def test_floor_is_the_difference_quotient_resolution():
    eps = np.finfo(np.float64).eps
    assert resolution_floor(0.3) == pytest.approx(ROUNDOFF_ULPS * eps / STEP / TOLERANCE)
    assert resolution_floor(50.0) == pytest.approx(50 * resolution_floor(1.0))


def test_small_relative_slip_in_full_model_is_detected():
    # a 0.1% error in one upstream gradient must still fail at the model scale
    fn, params = FIXTURES["srl_model"](np.random.default_rng(0))

    def skewed():
        loss = fn()
        node = loss._node
        if node is not None:  # None while probing under no_grad
            inner = node.backward_fn
            node.backward_fn = lambda g: tuple(None if r is None else 1.001 * r for r in inner(g))
        return loss

    assert check_gradients(skewed, params[:3]).max_rel_error > TOLERANCE
    assert check_gradients(fn, params[:3]).max_rel_error <= TOLERANCE
