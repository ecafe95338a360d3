"""
Tests for the tensor kernel: ops, differentiation and AdamW.
"""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src import tensor as tn
from src.exceptions import ConfigError, DimensionError, NonFiniteError
from src.tensor import AdamWConfig, AdamWState, AttentionWeights, Tensor


def numeric_grad(fn, x, eps=1e-6):
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        plus, minus = x.copy(), x.copy()
        plus[idx] += eps
        minus[idx] -= eps
        grad[idx] = (fn(plus) - fn(minus)) / (2 * eps)
    return grad


def test_matmul_shape_mismatch_raises():
    with pytest.raises(DimensionError):
        tn.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_backward_needs_scalar():
    x = Tensor.parameter(np.ones((2, 2)))
    with pytest.raises(DimensionError):
        tn.backward(tn.relu(x), [x])


def test_non_finite_values_rejected():
    with pytest.raises(NonFiniteError):
        Tensor(np.array([1.0, np.nan]))


def test_elementwise_dispatch():
    x = Tensor(np.array([[-1.0, 2.0]]))
    assert np.allclose(tn.elementwise("relu", x).data, [[0.0, 2.0]])
    with pytest.raises(ConfigError):
        tn.elementwise("tanh", x)


def test_mean_rows_of_empty_matrix_raises():
    with pytest.raises(DimensionError):
        tn.mean_rows(Tensor(np.zeros((0, 3))))


def test_sigmoid_stays_inside_unit_interval():
    out = tn.sigmoid(Tensor(np.array([-500.0, 0.0, 500.0]))).data
    assert np.all(out > 0) and np.all(out < 1)
    assert out[1] == pytest.approx(0.5)


def test_softmax_rows_sum_to_one():
    x = Tensor(np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]]))
    s = tn.softmax_rows(x).data
    assert np.allclose(s.sum(axis=1), 1.0)
    assert np.allclose(s[1], 1.0 / 3)


def test_layer_norm_normalises_rows():
    x = Tensor(np.array([[1.0, 2.0, 3.0, 4.0]]))
    out = tn.layer_norm(x, Tensor(np.ones(4)), Tensor(np.zeros(4))).data
    assert out.mean() == pytest.approx(0.0, abs=1e-6)
    assert out.std() == pytest.approx(1.0, abs=1e-3)


def test_l2_norm_gradient_at_zero_is_zero():
    x = Tensor.parameter(np.zeros(3))
    (grad,) = tn.backward(tn.l2_norm(x), [x])
    assert np.all(grad == 0)


def test_unreachable_parameter_gets_zero_gradient():
    a = Tensor.parameter(np.ones(2))
    b = Tensor.parameter(np.ones(2))
    grads = tn.backward(tn.sum_all(a), [a, b])
    assert np.all(grads[0] == 1) and np.all(grads[1] == 0)


def test_attention_head_count_must_divide_width():
    x = Tensor(np.ones((2, 6)))
    w = AttentionWeights(*(Tensor(np.eye(6)) for _ in range(4)))
    with pytest.raises(ConfigError):
        tn.multi_head_attention(x, x, x, w, heads=4)


def test_single_token_attention_returns_projected_value():
    x = Tensor(np.array([[1.0, 2.0]]))
    v = Tensor(np.array([[3.0, -1.0]]))
    eye = Tensor(np.eye(2))
    out, maps = tn.multi_head_attention(x, x, v, AttentionWeights(eye, eye, eye, eye), heads=1)
    assert np.allclose(out.data, v.data)
    assert np.allclose(maps[0].data, [[1.0]])


def test_composite_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    with tn.use_dtype(np.float64):
        x0 = rng.normal(size=(3, 4))
        w = Tensor(rng.normal(size=(4, 4)))
        gain, bias = Tensor(rng.normal(size=4)), Tensor(rng.normal(size=4))
        wq, wk, wv, wo = (Tensor(rng.normal(size=(4, 4)) * 0.5) for _ in range(4))

        def f(x: Tensor) -> Tensor:
            h = tn.sigmoid(tn.matmul(x, w))
            att, _ = tn.multi_head_attention(h, h, h, AttentionWeights(wq, wk, wv, wo), heads=2)
            normed = tn.layer_norm(tn.add(h, att), gain, bias)
            return tn.l2_norm(tn.mean_rows(normed))

        x = Tensor.parameter(x0)
        (analytic,) = tn.backward(f(x), [x])
        numeric = numeric_grad(lambda arr: f(Tensor(arr)).item(), x0)
    assert np.allclose(analytic, numeric, rtol=1e-3, atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=1, max_value=4), st.integers(min_value=1, max_value=4))
def test_broadcast_rows_gradient_sums_rows(n, d):
    v = Tensor.parameter(np.arange(d, dtype=float))
    (grad,) = tn.backward(tn.sum_all(tn.broadcast_rows(v, n)), [v])
    assert np.allclose(grad, n)


def test_glorot_bounds(rng):
    w = tn.glorot_uniform(rng, 6, 10)
    assert w.dtype == np.float32
    assert np.abs(w).max() <= np.sqrt(6.0 / 16)


def test_adamw_first_step_hand_computed():
    params = {"p": np.array([1.0], dtype=np.float32)}
    state = AdamWState(AdamWConfig())
    tn.adamw_step(params, {"p": np.array([0.5], dtype=np.float32)}, state)
    # bias-corrected moments give a step of lr * sign(g); decay scales by 1 - lr * wd
    expected = 1.0 * (1 - 0.005 * 1e-5) - 0.005 * 0.5 / (0.5 + 1e-8)
    assert params["p"][0] == pytest.approx(expected, rel=1e-6)
    assert state.step_count == 1


def test_adamw_rejects_non_finite_gradient_without_touching_params():
    params = {"a": np.array([1.0], dtype=np.float32), "b": np.array([2.0], dtype=np.float32)}
    state = AdamWState()
    with pytest.raises(NonFiniteError):
        tn.adamw_step(params, {"a": np.array([0.1], dtype=np.float32),
                               "b": np.array([np.inf], dtype=np.float32)}, state)
    assert params["a"][0] == 1.0 and params["b"][0] == 2.0
    assert state.step_count == 0


def test_adamw_shape_mismatch():
    with pytest.raises(DimensionError):
        tn.adamw_step({"a": np.zeros(2, dtype=np.float32)}, {"a": np.zeros(3, dtype=np.float32)}, AdamWState())


def test_use_dtype_restores_previous():
    assert tn.current_dtype() is np.float32
    with tn.use_dtype(np.float64):
        assert Tensor([1.0]).data.dtype == np.float64
    assert Tensor([1.0]).data.dtype == np.float32
