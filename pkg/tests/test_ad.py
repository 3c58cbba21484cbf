"""Tensor, tape, op, and gradient-check behavior."""

import math

import numpy as np
import pytest

from cdrnde import ad
from cdrnde.ad import (Tape, Tensor, add, addcol, backward, col, cols, colscale,
                       colsum, exp, grad_check, hadamard, hconcat, log, matmul,
                       matvec, one_minus, pick, scale, sigmoid, stack_cols, sub,
                       tanh, tsum)
from cdrnde.errors import ContractError, ShapeError


def test_matvec_hand_values():
    w = Tensor([[1.0, 2.0], [3.0, 4.0]])
    x = Tensor([1.0, 1.0])
    assert matvec(w, x).data.tolist() == [3.0, 7.0]


def test_matvec_identity_and_zero():
    x = Tensor([2.0, -1.0, 0.5])
    assert matvec(Tensor(np.eye(3)), x).data.tolist() == x.data.tolist()
    assert matvec(Tensor(np.zeros((2, 3))), x).data.tolist() == [0.0, 0.0]


def test_elementwise_hand_values():
    assert sigmoid(Tensor([0.0])).data[0] == 0.5
    assert tanh(Tensor([0.0])).data[0] == 0.0
    got = hadamard(Tensor([2.0, 3.0]), Tensor([4.0, 0.5]))
    assert got.data.tolist() == [8.0, 1.5]
    assert scale(2.0, Tensor([1.0, -2.0])).data.tolist() == [2.0, -4.0]
    assert one_minus(Tensor([0.25, 1.0])).data.tolist() == [0.75, 0.0]


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError) as err:
        add(Tensor([1.0, 2.0]), Tensor([1.0, 2.0, 3.0]))
    assert "(2,)" in str(err.value) and "(3,)" in str(err.value)
    with pytest.raises(ShapeError) as err:
        matvec(Tensor(np.zeros((2, 3))), Tensor(np.zeros(2)))
    assert "(2, 3)" in str(err.value)


def test_backward_sum_gives_ones():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    with Tape() as tape:
        loss = tsum(x)
    backward(loss, tape)
    assert x.grad.data.tolist() == [1.0, 1.0, 1.0]


def test_backward_square_at_two():
    x = Tensor([2.0], requires_grad=True)
    with Tape() as tape:
        loss = tsum(hadamard(x, x))
    backward(loss, tape)
    assert x.grad.data.tolist() == [4.0]


def test_backward_through_sigmoid_chain():
    # loss = sigmoid(w x) with w = 0, x = 1: dloss/dw = sigma'(0) * x = 0.25
    w = Tensor(np.zeros((1, 1)), requires_grad=True)
    x = Tensor([1.0])
    with Tape() as tape:
        loss = tsum(sigmoid(matvec(w, x)))
    backward(loss, tape)
    assert w.grad.data[0, 0] == 0.25


def test_backward_requires_scalar_loss():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        y = add(x, x)
    with pytest.raises(ContractError):
        backward(y, tape)


def test_backward_on_empty_tape_fails():
    x = Tensor(np.asarray(3.0), requires_grad=True)
    with pytest.raises(ContractError):
        backward(x, Tape())


def test_grads_accumulate_when_input_reused():
    x = Tensor([3.0], requires_grad=True)
    with Tape() as tape:
        loss = tsum(add(x, x))
    backward(loss, tape)
    assert x.grad.data.tolist() == [2.0]


def test_backward_linearity():
    rng = np.random.default_rng(0)
    w = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
    x = Tensor(rng.standard_normal(3))
    a, b = 2.5, -1.25

    def grads_of(fn):
        w.grad = None
        with Tape() as tape:
            loss = fn()
        backward(loss, tape)
        return w.grad.data.copy()

    loss1 = lambda: tsum(tanh(matvec(w, x)))
    loss2 = lambda: tsum(hadamard(matvec(w, x), matvec(w, x)))
    g1 = grads_of(loss1)
    g2 = grads_of(loss2)
    combined = grads_of(lambda: add(scale(a, loss1()), scale(b, loss2())))
    assert np.max(np.abs(combined - (a * g1 + b * g2))) <= 1e-12


def test_forward_and_gradients_bit_identical():
    rng = np.random.default_rng(1)
    w = Tensor(rng.standard_normal((4, 4)), requires_grad=True)
    x = Tensor(rng.standard_normal(4))

    def run():
        w.grad = None
        with Tape() as tape:
            loss = tsum(sigmoid(matvec(w, x)))
        backward(loss, tape)
        return loss.data.copy(), w.grad.data.copy()

    la, ga = run()
    lb, gb = run()
    assert np.array_equal(la, lb) and np.array_equal(ga, gb)


def _random_case(rng, h=3, k=4):
    return (Tensor(rng.standard_normal((h, h)), requires_grad=True),
            Tensor(rng.standard_normal(h), requires_grad=True),
            Tensor(rng.standard_normal((h, k)), requires_grad=True))


OP_CASES = [
    ("add", lambda w, v, m: tsum(add(v, v))),
    ("sub", lambda w, v, m: tsum(sub(v, scale(0.5, v)))),
    ("hadamard", lambda w, v, m: tsum(hadamard(v, v))),
    ("scale", lambda w, v, m: tsum(scale(-1.5, v))),
    ("sigmoid", lambda w, v, m: tsum(sigmoid(v))),
    ("tanh", lambda w, v, m: tsum(tanh(v))),
    ("exp", lambda w, v, m: tsum(exp(scale(0.3, v)))),
    ("log", lambda w, v, m: tsum(log(add(hadamard(v, v), Tensor(np.full(v.shape, 1.5)))))),
    ("matvec", lambda w, v, m: tsum(matvec(w, v))),
    ("matmul", lambda w, v, m: tsum(tanh(matmul(w, m)))),
    ("addcol", lambda w, v, m: tsum(addcol(m, v))),
    ("colscale", lambda w, v, m: tsum(colscale(m, np.array([0.5, -1.0, 2.0, 0.25])))),
    ("colsum", lambda w, v, m: tsum(tanh(colsum(m)))),
    ("pick", lambda w, v, m: pick(sigmoid(v), 1)),
    ("stack_cols", lambda w, v, m: tsum(tanh(stack_cols([v, scale(2.0, v)])))),
    ("col", lambda w, v, m: tsum(hadamard(col(m, 2), col(m, 2)))),
    ("cols", lambda w, v, m: tsum(tanh(cols(m, 1, 3)))),
    ("hconcat", lambda w, v, m: tsum(sigmoid(hconcat([m, scale(0.5, m)])))),
    ("one_minus", lambda w, v, m: tsum(hadamard(one_minus(sigmoid(v)), v))),
]


@pytest.mark.parametrize("name,build", OP_CASES, ids=[c[0] for c in OP_CASES])
def test_each_op_passes_gradient_check(name, build):
    rng = np.random.default_rng(hash(name) % 2**32)
    w, v, m = _random_case(rng)
    err = grad_check(lambda: build(w, v, m), [w, v, m], eps=1e-5)
    assert err <= 1e-6, f"{name}: relative error {err}"


def test_grad_check_square_is_tight():
    theta = Tensor(np.asarray([3.0]), requires_grad=True)
    err = grad_check(lambda: tsum(hadamard(theta, theta)), [theta], eps=1e-5)
    assert err < 1e-7


def test_grad_check_flags_non_finite_probe():
    theta = Tensor(np.asarray([0.0]), requires_grad=True)

    def loss():
        # log becomes nan for the negative probe point
        return tsum(log(theta))

    assert math.isinf(grad_check(loss, [theta], eps=1e-5))


def test_no_recording_without_tape():
    x = Tensor([1.0], requires_grad=True)
    y = add(x, x)
    assert y.requires_grad
    with Tape() as tape:
        add(x, x)
        assert len(tape) == 1
    assert ad.active_tape() is None


def test_constants_are_not_recorded():
    x = Tensor([1.0])
    with Tape() as tape:
        add(x, x)
    assert len(tape) == 0
