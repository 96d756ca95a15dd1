import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lacd.numerics import (
    AdamState,
    ContractError,
    Param,
    adam_step,
    bce_loss,
    cosine_sim,
    cosine_sim_backward,
    elu,
    elu_backward,
    finite_diff_check,
    glorot,
    leaky_relu,
    leaky_relu_backward,
    linear_backward,
    linear_forward,
    relu,
    relu_backward,
    sigmoid,
    sigmoid_backward,
    zero_grads,
)


def test_linear_identity():
    W = Param("W", np.eye(3))
    x = np.array([[1.0, 2.0, 3.0]])
    assert np.array_equal(linear_forward(x, W), x)


def test_linear_hand_product():
    W = Param("W", np.array([[3.0], [4.0]]))
    y = linear_forward(np.array([[1.0, 2.0]]), W)
    assert y.tolist() == [[11.0]]


def test_linear_shape_mismatch():
    with pytest.raises(ContractError):
        linear_forward(np.ones((1, 3)), Param("W", np.ones((2, 2))))


def test_linear_backward_matches_fd():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 3))
    W = Param("W", rng.normal(size=(3, 2)))
    b = Param("b", rng.normal(size=(2,)))

    def f():
        zero_grads([W, b])
        y = linear_forward(x, W, b)
        linear_backward(x, W, b, np.ones_like(y))
        return float(y.sum())

    assert finite_diff_check(f, [W, b], h=1e-5) <= 1e-6


def test_activation_values():
    assert relu(np.array([-1.0]))[0] == 0.0
    assert relu(np.array([2.0]))[0] == 2.0
    assert leaky_relu(np.array([-1.0]))[0] == pytest.approx(-0.2)
    assert sigmoid(np.array([0.0]))[0] == 0.5
    assert elu(np.array([-1.0]))[0] == pytest.approx(math.expm1(-1.0))


def test_activation_grads_match_fd():
    rng = np.random.default_rng(1)
    # keep inputs away from the relu/leaky kinks at 0
    x0 = rng.normal(size=(5, 4))
    x0[np.abs(x0) < 0.05] = 0.5
    pairs = [
        (relu, relu_backward),
        (leaky_relu, leaky_relu_backward),
        (sigmoid, sigmoid_backward),
        (elu, elu_backward),
    ]
    for fwd, bwd in pairs:
        p = Param("x", x0.copy())

        def f():
            zero_grads([p])
            y = fwd(p.value)
            p.grad += bwd(p.value, np.ones_like(y))
            return float(fwd(p.value).sum())

        assert finite_diff_check(f, [p], h=1e-6) <= 1e-6, fwd.__name__


def test_sigmoid_extreme_inputs_stay_finite():
    out = sigmoid(np.array([-1e4, 1e4]))
    assert out[0] == 0.0 and out[1] == 1.0


def test_cosine_values():
    u = np.array([1.0, 2.0, 2.0])
    v = np.array([2.0, 1.0, 2.0])
    assert cosine_sim(u, u) == pytest.approx(1.0)
    assert cosine_sim(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0
    assert cosine_sim(u, v) == pytest.approx(8.0 / 9.0)
    assert cosine_sim(np.zeros(3), u) == 0.0


def test_cosine_backward_matches_fd():
    rng = np.random.default_rng(2)
    u = Param("u", rng.normal(size=(3,)))
    v = Param("v", rng.normal(size=(3,)))

    def f():
        zero_grads([u, v])
        c = cosine_sim(u.value, v.value)
        du, dv = cosine_sim_backward(u.value, v.value, 1.0)
        u.grad += du
        v.grad += dv
        return c

    assert finite_diff_check(f, [u, v], h=1e-6) <= 1e-6


@given(
    st.lists(st.floats(-10, 10), min_size=2, max_size=6),
    st.floats(0.1, 50.0),
)
def test_cosine_bounded_symmetric_scale_invariant(values, alpha):
    u = np.array(values)
    v = np.roll(u, 1) + 1.0
    c = cosine_sim(u, v)
    assert -1.0 - 1e-12 <= c <= 1.0 + 1e-12
    assert c == pytest.approx(cosine_sim(v, u))
    assert cosine_sim(alpha * u, v) == pytest.approx(c, abs=1e-9)


def test_bce_values():
    loss, _ = bce_loss(np.array([1.0, 0.0]), np.array([1.0, 0.0]))
    assert 0.0 < loss <= 1.2e-7
    loss, _ = bce_loss(np.array([0.5]), np.array([1.0]))
    assert loss == pytest.approx(math.log(2.0))
    with pytest.raises(ContractError):
        bce_loss(np.array([]), np.array([]))


def test_bce_gradient_matches_fd():
    rng = np.random.default_rng(3)
    p = Param("yh", rng.uniform(0.05, 0.95, size=(6,)))
    y = (rng.uniform(size=6) > 0.5).astype(float)

    def f():
        zero_grads([p])
        loss, grad = bce_loss(p.value, y)
        p.grad += grad
        return loss

    assert finite_diff_check(f, [p], h=1e-6) <= 1e-6


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8))
def test_bce_nonnegative(preds):
    y = np.array([1.0 if p > 0.5 else 0.0 for p in preds])
    loss, _ = bce_loss(np.array(preds), y)
    assert loss >= 0.0


def test_adam_zero_grad_keeps_values():
    p = Param("p", np.array([[1.0, -2.0]]))
    state = AdamState(lr=0.1)
    adam_step([p], state)
    assert np.array_equal(p.value, [[1.0, -2.0]])
    assert state.t == 1


def test_adam_first_step_hand_value():
    p = Param("p", np.array([[0.0]]))
    p.grad[:] = 1.0
    adam_step([p], AdamState(lr=0.1))
    # bias-corrected m_hat = v_hat = 1 on step 1
    assert p.value[0, 0] == pytest.approx(-0.1, rel=1e-6)


def test_adam_descends_quadratic():
    p = Param("p", np.array([[3.0]]))
    state = AdamState(lr=0.05)
    losses = []
    for _ in range(50):
        p.zero_grad()
        losses.append(0.5 * float(p.value[0, 0] ** 2))
        p.grad[:] = p.value
        adam_step([p], state)
    assert losses[-1] < losses[0]


def test_finite_diff_on_quadratic_and_negative_control():
    rng = np.random.default_rng(4)
    p = Param("p", rng.normal(size=(3, 2)))

    def good():
        zero_grads([p])
        p.grad += p.value
        return 0.5 * float((p.value**2).sum())

    assert finite_diff_check(good, [p]) <= 1e-8

    def corrupted():
        zero_grads([p])
        p.grad += p.value * 1.5
        return 0.5 * float((p.value**2).sum())

    assert finite_diff_check(corrupted, [p]) > 1e-2


def test_glorot_deterministic():
    a = glorot(np.random.default_rng(7), 4, 5)
    b = glorot(np.random.default_rng(7), 4, 5)
    assert np.array_equal(a, b)
    assert np.abs(a).max() <= math.sqrt(6.0 / 9.0)
