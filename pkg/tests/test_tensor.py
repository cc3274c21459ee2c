import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmta.tensor import (ShapeError, Tensor, concat, default_dtype, grad_check,
                         layer_norm)


@pytest.fixture(autouse=True)
def f64():
    with default_dtype(np.float64):
        yield


def test_matmul_identity():
    eye = Tensor(np.eye(2))
    m = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert np.allclose((eye @ m).data, m.data)


def test_matmul_forced():
    a = Tensor([[1.0, 2.0]])
    b = Tensor([[3.0], [4.0]])
    assert (a @ b).data[0, 0] == 11.0


def test_matmul_triple_loop_oracle():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 2))
    expected = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                expected[i, j] += a[i, k] * b[k, j]
    got = (Tensor(a) @ Tensor(b)).data
    assert np.abs(got - expected).max() < 1e-12


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        Tensor(np.zeros((2, 3))) @ Tensor(np.zeros((2, 3)))


def test_sigmoid_tanh_points():
    assert Tensor([0.0]).sigmoid().data[0] == 0.5
    assert Tensor([0.0]).tanh().data[0] == 0.0
    assert abs(Tensor([np.log(3.0)]).sigmoid().data[0] - 0.75) < 1e-12


def test_sigmoid_saturates_finite():
    x = Tensor([-1e4, 1e4])
    out = x.sigmoid().data
    assert np.isfinite(out).all()
    assert 0.0 <= out[0] and out[1] <= 1.0


def test_softmax_symmetry_and_stability():
    assert np.allclose(Tensor([0.0, 0.0]).softmax().data, [0.5, 0.5])
    out = Tensor([1000.0, 0.0]).softmax().data
    assert np.isfinite(out).all()
    assert abs(out[0] - 1.0) < 1e-6


def test_softmax_direct_normalization():
    out = Tensor(np.log([1.0, 2.0, 3.0])).softmax().data
    assert np.abs(out - np.array([1, 2, 3]) / 6.0).max() < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8))
def test_softmax_is_distribution(xs):
    out = Tensor(np.array(xs, dtype=np.float64)).softmax().data
    assert (out >= 0).all()
    assert abs(out.sum() - 1.0) < 1e-6


def test_grad_check_quadratic():
    x = Tensor([3.0], requires_grad=True)
    assert grad_check(lambda: (x * x).sum(), [x]) < 1e-8


def test_grad_check_constant_zero():
    x = Tensor([1.0, 2.0], requires_grad=True)
    c = Tensor([5.0])
    err = grad_check(lambda: (c * c).sum() + x.sum() * 0.0, [x])
    assert err == 0.0


def test_gradient_accumulation_sums():
    # parameter used twice: adjoints from both uses must add
    x = Tensor([1.0, 2.0], requires_grad=True)
    a = np.array([3.0, 4.0])
    b = np.array([5.0, 6.0])
    loss = (x * Tensor(a)).sum() + (x * Tensor(b)).sum()
    loss.backward()
    assert np.allclose(x.grad, a + b)


def test_frozen_inputs_get_no_grad():
    x = Tensor([1.0, 2.0])  # requires_grad False
    w = Tensor([3.0, 4.0], requires_grad=True)
    (x * w).sum().backward()
    assert x.grad is None
    assert w.grad is not None


def _composite(params):
    """Touches every primitive: matmul, add, mul, div, pow, sigmoid, tanh,
    relu, log, exp, softmax, concat, mean, sum, layer_norm, slicing,
    reshape, transpose, clamp."""
    a, b, scale, shift = params
    m = a @ b.transpose()
    act = m.sigmoid() + m.tanh() * 0.5 + m.relu()
    sm = act.softmax(axis=-1)
    ln = layer_norm(m, scale, shift)
    cat = concat([sm, ln], axis=-1)
    pos = (cat * cat + 1.0).log() + (cat * 0.1).exp()
    mixed = pos / (1.0 + (cat ** 2.0))
    sliced = mixed[:, 1:3].reshape(-1)
    return sliced.mean() + mixed.sum() * 0.01 + cat.clamp(-0.5, 0.5).sum() * 0.1


@pytest.mark.parametrize("seed", range(100))
def test_primitive_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    b = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    scale = Tensor(1.0 + 0.1 * rng.standard_normal(3), requires_grad=True)
    shift = Tensor(0.1 * rng.standard_normal(3), requires_grad=True)
    err = grad_check(lambda: _composite((a, b, scale, shift)),
                     [a, b, scale, shift])
    assert err < 1e-4


def test_values_finite_after_forward_backward():
    rng = np.random.default_rng(1)
    a = Tensor(rng.standard_normal((4, 4)), requires_grad=True)
    out = (a @ a.transpose()).tanh().softmax(axis=-1).sum()
    out.backward()
    assert np.isfinite(out.data).all()
    assert np.isfinite(a.grad).all()


def test_concat_gradient_splits():
    a = Tensor([1.0, 2.0], requires_grad=True)
    b = Tensor([3.0], requires_grad=True)
    out = concat([a, b], axis=0)
    (out * Tensor([1.0, 2.0, 3.0])).sum().backward()
    assert np.allclose(a.grad, [1.0, 2.0])
    assert np.allclose(b.grad, [3.0])
