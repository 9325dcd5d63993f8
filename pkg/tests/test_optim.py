"""Adam update rule against hand-computed values and a convergence run."""

import numpy as np
import pytest

from fanorm.ops import ShapeError
from fanorm.optim import AdamState, adam_step


def test_zero_gradient_leaves_params_unchanged():
    params = {"w": np.array([1.0, -2.0])}
    state = AdamState.for_params(params)
    adam_step(params, {"w": np.zeros(2)}, state, lr=0.1)
    assert np.array_equal(params["w"], [1.0, -2.0])
    assert state.t == 1


def test_two_steps_constant_gradient_hand_computed():
    # w0 = 1, g = 0.5 each step, lr = 0.1, defaults beta1/beta2/eps.
    # With a constant gradient the bias-corrected moments are mhat = g and
    # vhat = g^2 at every step, so each update is lr*g/(g + eps):
    #   step: 0.1 * 0.5 / (0.5 + 1e-8) = 0.09999999800000004
    #   w1 = 0.90000000199999996,  w2 = 0.80000000399999991
    params = {"w": np.array([1.0])}
    state = AdamState.for_params(params)
    adam_step(params, {"w": np.array([0.5])}, state, lr=0.1)
    assert abs(params["w"][0] - 0.90000000199999996) < 1e-7
    adam_step(params, {"w": np.array([0.5])}, state, lr=0.1)
    assert abs(params["w"][0] - 0.80000000399999991) < 1e-7


def test_quadratic_converges():
    # f(w) = sum((w - target)^2) in 3 variables, 500 steps at lr 0.05
    target = np.array([1.0, -2.0, 0.5])
    params = {"w": np.zeros(3)}
    state = AdamState.for_params(params)
    for _ in range(500):
        grad = 2.0 * (params["w"] - target)
        adam_step(params, {"w": grad}, state, lr=0.05)
    loss = float(np.sum((params["w"] - target) ** 2))
    assert loss < 1e-4


def test_moments_decay_at_zero_gradient():
    params = {"w": np.array([1.0])}
    state = AdamState.for_params(params)
    adam_step(params, {"w": np.array([2.0])}, state, lr=0.0)
    m1, v1 = state.m["w"][0], state.v["w"][0]
    adam_step(params, {"w": np.array([0.0])}, state, lr=0.0)
    assert state.m["w"][0] == pytest.approx(0.9 * m1)
    assert state.v["w"][0] == pytest.approx(0.999 * v1)


def test_rejects_nonfinite_gradient_without_mutating():
    params = {"a": np.array([1.0]), "b": np.array([2.0])}
    state = AdamState.for_params(params)
    with pytest.raises(ValueError):
        adam_step(params, {"a": np.array([0.1]), "b": np.array([np.nan])}, state, lr=0.1)
    # the whole step is rejected before any write
    assert params["a"][0] == 1.0 and params["b"][0] == 2.0
    assert state.t == 0


def test_rejects_missing_and_misshapen_gradients():
    params = {"w": np.zeros((2, 2))}
    state = AdamState.for_params(params)
    with pytest.raises(KeyError):
        adam_step(params, {}, state, lr=0.1)
    with pytest.raises(ShapeError):
        adam_step(params, {"w": np.zeros(3)}, state, lr=0.1)
