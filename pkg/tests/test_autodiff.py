import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalkt import autodiff as ad
from causalkt.errors import ContractError, DimensionError, DomainError

from conftest import numeric_grad, rel_error


def test_matmul_identity():
    a = ad.tensor([[1.0, 0.0], [0.0, 1.0]])
    b = ad.tensor([[2.0, 3.0], [4.0, 5.0]])
    np.testing.assert_array_equal(ad.matmul(a, b).value, [[2, 3], [4, 5]])


def test_matmul_row_by_column():
    out = ad.matmul(ad.tensor([[1.0, 2.0]]), ad.tensor([[3.0], [4.0]]))
    np.testing.assert_array_equal(out.value, [[11.0]])


def test_matmul_shape_error_reports_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        ad.matmul(ad.tensor(np.ones((2, 3))), ad.tensor(np.ones((2, 3))))


def test_matmul_gradient_matches_finite_differences(rng):
    a = ad.tensor(rng.normal(size=(4, 3)), requires_grad=True)
    b = ad.tensor(rng.normal(size=(3, 2)), requires_grad=True)
    ad.backward(ad.sum(ad.matmul(a, b)))
    # d sum(ab) / da = ones @ b^T: every row is the row-sums of b
    np.testing.assert_allclose(a.grad, np.tile(b.value.sum(axis=1), (4, 1)))
    fd = numeric_grad(lambda: (a.value @ b.value).sum(), a.value)
    assert rel_error(a.grad, fd) < 1e-6
    fd_b = numeric_grad(lambda: (a.value @ b.value).sum(), b.value)
    assert rel_error(b.grad, fd_b) < 1e-6


def test_elementwise_values():
    assert ad.sigmoid(ad.tensor(0.0)).value == 0.5
    assert ad.tanh(ad.tensor(0.0)).value == 0.0
    np.testing.assert_allclose(ad.exp(ad.tensor([[0.0, np.log(2.0)]])).value, [[1.0, 2.0]])
    np.testing.assert_array_equal(ad.neg(ad.tensor([1.0, -2.0])).value, [-1.0, 2.0])
    np.testing.assert_array_equal(ad.scale(ad.tensor([1.0, -2.0]), 3).value, [3.0, -6.0])


def test_sigmoid_is_stable_for_large_inputs():
    out = ad.sigmoid(ad.tensor([-800.0, 800.0])).value
    assert np.all(np.isfinite(out))
    np.testing.assert_array_equal(out, [0.0, 1.0])


def test_binary_shape_mismatch():
    with pytest.raises(DimensionError):
        ad.add(ad.tensor(np.ones((2, 2))), ad.tensor(np.ones((3, 3))))
    with pytest.raises(DimensionError):
        ad.mul(ad.tensor(np.ones((2, 3))), ad.tensor(np.ones((3, 2))))


def test_reductions():
    a = ad.tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(ad.row_sum(a).value, [3.0, 7.0])
    np.testing.assert_array_equal(ad.col_sum(a).value, [4.0, 6.0])
    assert ad.sum_all(a).value == 10.0
    assert ad.global_max(ad.tensor([[-1.0, 5.0], [2.0, 0.0]])).value == 5.0
    np.testing.assert_array_equal(ad.row_max(a).value, [2.0, 4.0])


def test_reduction_of_empty_array():
    with pytest.raises(DomainError):
        ad.sum(ad.tensor(np.zeros((0, 3))))
    with pytest.raises(DomainError):
        ad.global_max(ad.tensor(np.zeros((0,))))


def test_row_sum_gradient_is_all_ones(rng):
    a = ad.tensor(rng.normal(size=(3, 4)), requires_grad=True)
    ad.backward(ad.sum(ad.row_sum(a)))
    np.testing.assert_array_equal(a.grad, np.ones((3, 4)))


def test_max_gradient_goes_to_first_argmax():
    a = ad.tensor([[3.0, 1.0, 3.0], [0.0, 2.0, 2.0]], requires_grad=True)
    ad.backward(ad.global_max(a))
    np.testing.assert_array_equal(a.grad, [[1, 0, 0], [0, 0, 0]])
    b = ad.tensor([[3.0, 1.0, 3.0], [0.0, 2.0, 2.0]], requires_grad=True)
    ad.backward(ad.sum(ad.row_max(b)))
    np.testing.assert_array_equal(b.grad, [[1, 0, 0], [0, 1, 0]])


def test_quadratic_gradient():
    w = ad.tensor([1.0, 2.0, 3.0], requires_grad=True)
    ad.backward(ad.sum(ad.mul(w, w)))
    np.testing.assert_array_equal(w.grad, [2.0, 4.0, 6.0])


def test_constant_leaf_has_zero_gradient():
    w = ad.tensor([1.0, 2.0], requires_grad=True)
    c = ad.tensor([5.0, 7.0])
    ad.backward(ad.sum(ad.mul(w, c)))
    np.testing.assert_array_equal(c.grad, [0.0, 0.0])
    np.testing.assert_array_equal(w.grad, [5.0, 7.0])


def test_backward_requires_scalar():
    w = ad.tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ContractError):
        ad.backward(ad.mul(w, w))


def test_backward_twice_is_forbidden():
    w = ad.tensor([1.0, 2.0], requires_grad=True)
    loss = ad.sum(ad.mul(w, w))
    ad.backward(loss)
    with pytest.raises(ContractError):
        ad.backward(loss)


def test_diamond_graph_accumulates_both_paths():
    x = ad.tensor([2.0], requires_grad=True)
    left = ad.scale(x, 3.0)
    right = ad.mul(x, x)
    ad.backward(ad.sum(ad.add(left, right)))
    np.testing.assert_allclose(x.grad, [3.0 + 2 * 2.0])


def test_ops_do_not_mutate_inputs(rng):
    a_val = rng.normal(size=(3, 3))
    a = ad.tensor(a_val.copy(), requires_grad=True)
    b = ad.tensor(a_val.T.copy(), requires_grad=True)
    out = ad.sum(ad.div(ad.exp(ad.matmul(a, b)), ad.row_sum(ad.exp(a), keepdims=True)))
    ad.backward(out)
    np.testing.assert_array_equal(a.value, a_val)
    np.testing.assert_array_equal(b.value, a_val.T)


def _composite(a, b, c):
    """A graph touching every differentiable op."""
    x = ad.matmul(ad.tanh(a), ad.transpose(b))  # (3, 3)
    x = ad.sub(x, ad.global_max(x))
    y = ad.div(ad.exp(x), ad.row_sum(ad.exp(x), keepdims=True))
    y = ad.div(y, ad.col_sum(y, keepdims=True))
    z = ad.add(ad.mul(ad.sigmoid(y), c), ad.neg(ad.scale(ad.row_max(y, keepdims=True), 0.3)))
    w = ad.softplus(ad.take(z, [0, 2, 2], axis=0))
    v = ad.concat([ad.reshape(w, (9,)), ad.log(ad.add(ad.mean(z, axis=0), 2.0))], axis=0)
    return ad.sum(ad.mul(v, v))


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_composite_graph_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    a = ad.tensor(rng.normal(size=(3, 2)), requires_grad=True)
    b = ad.tensor(rng.normal(size=(3, 2)), requires_grad=True)
    c = ad.tensor(rng.normal(size=(3, 3)), requires_grad=True)
    ad.backward(_composite(a, b, c))

    def f():
        return _composite(ad.tensor(a.value), ad.tensor(b.value), ad.tensor(c.value)).value

    for t in (a, b, c):
        assert rel_error(t.grad, numeric_grad(f, t.value)) < 1e-4


def test_adam_zero_gradient_leaves_params_and_decays_moments():
    p = np.array([1.0, -2.0])
    m = np.array([0.5, 0.5])
    v = np.array([0.25, 0.25])
    ad.adam_step(p, np.zeros(2), m, v, t=3, lr=0.1)
    # m stays nonzero so the parameter still moves; with zero moments it would not
    p0 = np.array([1.0, -2.0])
    m0, v0 = np.zeros(2), np.zeros(2)
    ad.adam_step(p0, np.zeros(2), m0, v0, t=1, lr=0.1)
    np.testing.assert_array_equal(p0, [1.0, -2.0])
    np.testing.assert_allclose(m, [0.45, 0.45])
    np.testing.assert_allclose(v, [0.25 * 0.999] * 2)


def test_adam_first_step_moves_by_lr():
    p, m, v = np.array([0.0]), np.zeros(1), np.zeros(1)
    ad.adam_step(p, np.ones(1), m, v, t=1, lr=1e-3)
    # closed form: m_hat = 1, v_hat = 1, step = lr / (1 + eps)
    np.testing.assert_allclose(p, [-1e-3 / (1 + 1e-8)], rtol=1e-12)


def test_adam_shape_check():
    with pytest.raises(DimensionError):
        ad.adam_step(np.zeros(2), np.zeros(3), np.zeros(2), np.zeros(2), 1, 0.1)


def test_adam_is_deterministic(rng):
    init = rng.normal(size=(4, 4))
    results = []
    for _ in range(2):
        w = ad.tensor(init.copy(), requires_grad=True)
        opt = ad.Adam([w], lr=0.01)
        for _ in range(20):
            opt.zero_grad()
            ad.backward(ad.sum(ad.mul(ad.tanh(w), ad.tanh(w))))
            opt.step()
        results.append(w.value.copy())
    assert np.array_equal(results[0], results[1])


def test_clip_grad_norm():
    grads = [np.array([3.0]), np.array([4.0])]
    clipped, norm = ad.clip_grad_norm(grads, 1.0)
    assert norm == 5.0
    np.testing.assert_allclose([clipped[0][0], clipped[1][0]], [0.6, 0.8])
    same, _ = ad.clip_grad_norm(grads, 10.0)
    assert same[0][0] == 3.0
