import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ganssl_lab import autodiff as ad
from ganssl_lab.autodiff import MlpParams, Tensor, backward, forward_mlp, grad_check, init_mlp, parameter
from ganssl_lab.errors import ContractError, NumericError, ShapeError


def dense_forward(params, x):
    """Plain numpy forward pass, written independently of the Tensor code."""
    h = np.asarray(x, dtype=np.float64)
    n = len(params.weights)
    for i in range(n):
        w = params.weights[i].data
        b = params.biases[i].data
        out = np.zeros(w.shape[1])
        for j in range(w.shape[1]):
            out[j] = sum(h[k] * w[k, j] for k in range(w.shape[0])) + b[j]
        h = np.maximum(out, 0.0) if i < n - 1 else out
    return h


def test_zero_network_outputs_zero():
    params = MlpParams((3, 5, 2), [np.zeros((3, 5)), np.zeros((5, 2))], [np.zeros(5), np.zeros(2)])
    out = forward_mlp(params, np.array([1.0, -2.0, 3.0]))
    assert out.shape == (2,)
    assert np.all(out.data == 0.0)


def test_relu_clamps_negative_preactivation():
    params = MlpParams((1, 1, 1), [np.eye(1), np.eye(1)], [np.zeros(1), np.zeros(1)])
    assert forward_mlp(params, np.array([-3.0])).data[0] == 0.0
    assert forward_mlp(params, np.array([3.0])).data[0] == 3.0


def test_forward_matches_dense_oracle():
    params = init_mlp([1, 100, 100, 1], np.random.default_rng(7))
    for b in params.biases:
        b.data = np.random.default_rng(8).normal(size=b.shape) * 0.1
    got = forward_mlp(params, np.array([0.5])).data
    want = dense_forward(params, [0.5])
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


def test_forward_batch_matches_single_rows():
    params = init_mlp([2, 8, 3], np.random.default_rng(1))
    x = np.random.default_rng(2).normal(size=(5, 2))
    batch = forward_mlp(params, x).data
    for i in range(5):
        np.testing.assert_allclose(batch[i], forward_mlp(params, x[i]).data, rtol=0, atol=1e-14)


def test_forward_rejects_wrong_input_dim():
    params = init_mlp([2, 4, 1], np.random.default_rng(0))
    with pytest.raises(ShapeError):
        forward_mlp(params, np.zeros(3))


def test_forward_is_bitwise_deterministic():
    params = init_mlp([1, 100, 100, 1], np.random.default_rng(3))
    x = np.linspace(-1, 1, 17)[:, None]
    assert forward_mlp(params, x).data.tobytes() == forward_mlp(params, x).data.tobytes()


def test_params_validate_shapes_and_finiteness():
    with pytest.raises(ShapeError):
        MlpParams((2, 3), [np.zeros((3, 2))], [np.zeros(3)])
    with pytest.raises(NumericError):
        MlpParams((1, 1), [np.array([[np.nan]])], [np.zeros(1)])


def test_init_is_glorot_uniform_with_zero_bias():
    params = init_mlp([4, 6, 2], np.random.default_rng(0))
    for w, (fi, fo) in zip(params.weights, [(4, 6), (6, 2)]):
        assert np.all(np.abs(w.data) <= np.sqrt(6 / (fi + fo)))
    assert all(np.all(b.data == 0) for b in params.biases)


def test_linear_gradient():
    w = parameter(3.0)
    out = w * 2.0
    grads = backward(out)
    assert grads[w] == pytest.approx(2.0)
    assert w.grad == pytest.approx(2.0)


def test_dead_relu_has_zero_gradient():
    u = parameter(-1.0)
    backward(u.relu())
    assert u.grad == 0.0


def test_relu_subgradient_at_zero_is_zero():
    u = parameter(0.0)
    out = u.relu()
    backward(out)
    assert out.data == 0.0 and u.grad == 0.0


def test_backward_requires_scalar():
    w = parameter(np.ones(3))
    with pytest.raises(ContractError):
        backward(w * 2.0)


def test_shared_subexpression_accumulates():
    x = parameter(1.5)
    y = x * x + x * 3.0
    backward(y)
    assert x.grad == pytest.approx(2 * 1.5 + 3.0)


def test_topological_order_puts_inputs_first():
    a = parameter(1.0)
    b = a.exp()
    c = b * a + b
    order = ad.topological_order(c)
    pos = {id(n): i for i, n in enumerate(order)}
    for node in order:
        for parent in node._parents:
            assert pos[id(parent)] < pos[id(node)]


def test_elementwise_ops_against_finite_differences():
    rng = np.random.default_rng(4)
    x = parameter(rng.uniform(0.5, 2.0, size=(3, 4)))
    y = parameter(rng.uniform(0.5, 2.0, size=(4,)))

    def objective(_):
        z = (x * y + x / y - y) ** 2
        return (z.log() + z.exp() * 0.01 + (x - 1.0).abs()).sum() + x.logsumexp(axis=1).softplus().mean()

    assert grad_check(objective, [x, y], 1e-6) < 1e-6


def test_getitem_and_matmul_gradients():
    rng = np.random.default_rng(5)
    a = parameter(rng.normal(size=(4, 3)))
    b = parameter(rng.normal(size=(3, 2)))

    def objective(_):
        m = a @ b
        return m[np.arange(4), np.array([0, 1, 1, 0])].sum() + m.T.reshape(-1).mean()

    assert grad_check(objective, [a, b], 1e-6) < 1e-8


def test_full_network_gradients_match_finite_differences():
    params = init_mlp([1, 100, 100, 1], np.random.default_rng(11))
    for b in params.biases:
        b.data = np.random.default_rng(12).normal(size=b.shape) * 0.1
    x = np.random.default_rng(13).normal(size=(6, 1))

    def objective(p):
        return (forward_mlp(p, x) ** 2).mean()

    assert grad_check(objective, params, 1e-5) <= 1e-4


def test_grad_check_exact_for_quadratic():
    w = parameter(np.random.default_rng(0).normal(size=10))
    assert grad_check(lambda p: (w * w).sum() * 0.5, [w], 1e-5) <= 1e-9


def test_grad_check_constant_objective():
    w = parameter(np.ones(4))
    assert grad_check(lambda p: Tensor(3.0), [w], 1e-5) == 0.0


def test_grad_check_rejects_bad_inputs():
    w = parameter(np.ones(2))
    with pytest.raises(ContractError):
        grad_check(lambda p: (w * w).sum(), [w], 0.0)
    with pytest.raises(NumericError):
        grad_check(lambda p: (w * np.inf).sum(), [w], 1e-5)


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_network_gradients(seed):
    rng = np.random.default_rng(seed)
    params = init_mlp([2, 16, 16, 3], rng)
    x = rng.normal(size=(5, 2))
    target = rng.normal(size=(5, 3))

    def objective(p):
        return ((forward_mlp(p, x) - target) ** 2).mean()

    assert grad_check(objective, params, 1e-5) <= 1e-4
