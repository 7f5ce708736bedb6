import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dgsta.errors import ParameterError, ShapeError
from dgsta.gradcheck import check_op, numeric_grad, rel_error
from dgsta.tensor import (
    Tape,
    Tensor,
    add,
    apply_mask,
    cross_entropy,
    dropout,
    layer_norm,
    linear,
    matmul,
    mean_pool_rows,
    merge_heads,
    reshape,
    scale,
    softmax_rows,
    transpose,
)

SEEDS = range(20)


def u(rng, *shape):
    return rng.uniform(-1, 1, size=shape)


# --- matmul -----------------------------------------------------------------


def test_matmul_identity(rng):
    a = u(rng, 3, 3)
    np.testing.assert_array_equal(matmul(np.eye(3), a).data, a)


def test_matmul_hand_example():
    out = matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[1.0], [1.0]]))
    np.testing.assert_array_equal(out.data, [[3.0], [7.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.zeros((2, 3)), np.zeros((2, 3)))


def test_matmul_deterministic(rng):
    a, b = u(rng, 40, 30), u(rng, 30, 20)
    assert np.array_equal(matmul(a, b).data, matmul(a, b).data)


@pytest.mark.parametrize("seed", SEEDS)
def test_matmul_grad_sum(seed):
    r = np.random.default_rng(seed)
    errs = check_op(matmul, [u(r, 4, 3), u(r, 3, 5)])
    assert max(errs) <= 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_matmul_batched_broadcast_grad(seed):
    r = np.random.default_rng(seed)
    errs = check_op(matmul, [u(r, 2, 1, 4, 3), u(r, 3, 3, 2)], probe=u(r, 2, 3, 4, 2))
    assert max(errs) <= 1e-6


# --- softmax ----------------------------------------------------------------


def test_softmax_uniform():
    np.testing.assert_allclose(softmax_rows(np.zeros((1, 3))).data, [[1 / 3] * 3], atol=1e-15)


def test_softmax_eta_saturates():
    y = softmax_rows(np.array([[-9e15, 0.0]])).data
    assert y[0, 0] <= 1e-12
    assert y[0, 1] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("seed", SEEDS)
def test_softmax_jvp(seed):
    r = np.random.default_rng(seed)
    assert max(check_op(softmax_rows, [u(r, 3, 5)], probe=u(r, 3, 5))) <= 1e-6


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 8)), elements=st.floats(-50, 50)))
def test_softmax_rows_are_distributions(m):
    y = softmax_rows(m).data
    assert np.all((y >= 0) & (y <= 1))
    np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-9)


# --- layer norm -------------------------------------------------------------


def test_layer_norm_constant_row_is_zero():
    out = layer_norm(np.full((1, 4), 3.0), np.ones(4), np.zeros(4)).data
    np.testing.assert_array_equal(out, np.zeros((1, 4)))


def test_layer_norm_two_values():
    out = layer_norm(np.array([[1.0, 3.0]]), np.ones(2), np.zeros(2)).data
    np.testing.assert_allclose(out, [[-1.0, 1.0]], atol=1e-5)


@pytest.mark.parametrize("seed", SEEDS)
def test_layer_norm_grad(seed):
    r = np.random.default_rng(seed)
    errs = check_op(lambda x, g, b: layer_norm(x, g, b), [u(r, 3, 6), u(r, 6), u(r, 6)], probe=u(r, 3, 6))
    assert max(errs) <= 1e-5


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(2, 16)), elements=st.floats(-100, 100)))
def test_layer_norm_moments(x):
    spread = x.std(axis=1)
    x = x[spread > 1e-2]
    if x.size == 0:
        return
    D = x.shape[1]
    y = layer_norm(x, np.ones(D), np.zeros(D)).data
    assert np.all(np.abs(y.mean(axis=1)) <= 1e-7)
    # eps=1e-5 shifts the variance by at most eps / var
    assert np.all(np.abs(y.var(axis=1) - 1) <= 1e-5 / x.var(axis=1) + 1e-9)


def test_layer_norm_moments_bound_nondegenerate(rng):
    x = rng.normal(size=(50, 32))
    y = layer_norm(x, np.ones(32), np.zeros(32)).data
    assert np.abs(y.mean(axis=1)).max() <= 1e-7
    assert np.abs(y.var(axis=1) - 1).max() <= 1e-4


def test_layer_norm_rejects_bad_gain():
    with pytest.raises(ShapeError):
        layer_norm(np.zeros((2, 3)), np.ones(4), np.zeros(3))


# --- linear -----------------------------------------------------------------


def test_linear_zero_weights_gives_bias(rng):
    b = np.array([1.0, -2.0])
    out = linear(u(rng, 5, 3), np.zeros((3, 2)), b).data
    np.testing.assert_array_equal(out, np.tile(b, (5, 1)))


def test_linear_identity(rng):
    x = u(rng, 4, 3)
    np.testing.assert_array_equal(linear(x, np.eye(3), np.zeros(3)).data, x)


@pytest.mark.parametrize("seed", SEEDS)
def test_linear_grad(seed):
    r = np.random.default_rng(seed)
    assert max(check_op(linear, [u(r, 4, 3), u(r, 3, 2), u(r, 2)], probe=u(r, 4, 2))) <= 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_linear_stacked_heads_grad(seed):
    r = np.random.default_rng(seed)
    errs = check_op(linear, [u(r, 2, 1, 5, 3), u(r, 4, 3, 2), u(r, 4, 1, 2)], probe=u(r, 2, 4, 5, 2))
    assert max(errs) <= 1e-6


def test_linear_shape_error():
    with pytest.raises(ShapeError):
        linear(np.zeros((2, 3)), np.zeros((4, 2)))


# --- dropout ----------------------------------------------------------------


def test_dropout_rate_zero_identity(rng):
    x = Tensor(u(rng, 3, 4))
    assert dropout(x, 0.0, True, rng) is x


def test_dropout_eval_identity(rng):
    x = Tensor(u(rng, 3, 4))
    assert dropout(x, 0.2, False) is x


def test_dropout_rejects_rate_one(rng):
    with pytest.raises(ParameterError):
        dropout(np.ones((2, 2)), 1.0, True, rng)


def test_dropout_zeroed_fraction():
    r = np.random.default_rng(0)
    y = dropout(np.ones((1000, 1000)), 0.2, True, r).data
    frac = np.mean(y == 0)
    assert 0.198 <= frac <= 0.202
    np.testing.assert_allclose(np.unique(y), [0.0, 1.25])


def test_dropout_grad_uses_same_mask():
    x = Tensor(np.ones((50, 50)), requires_grad=True)
    with Tape() as tape:
        y = dropout(x, 0.3, True, np.random.default_rng(3))
    tape.backward(y, np.ones(y.shape))
    np.testing.assert_array_equal(x.grad, y.data)


def test_dropout_seeded():
    a = dropout(np.ones((20, 20)), 0.2, True, np.random.default_rng(5)).data
    b = dropout(np.ones((20, 20)), 0.2, True, np.random.default_rng(5)).data
    assert np.array_equal(a, b)


# --- pooling / loss ---------------------------------------------------------


def test_mean_pool_single_row():
    np.testing.assert_array_equal(mean_pool_rows(np.array([[1.0, 2.0]])).data, [1.0, 2.0])


def test_mean_pool_symmetric():
    np.testing.assert_array_equal(mean_pool_rows(np.array([[0.0, 2.0], [2.0, 0.0]])).data, [1.0, 1.0])


def test_mean_pool_empty():
    with pytest.raises(ShapeError):
        mean_pool_rows(np.zeros((0, 3)))


@pytest.mark.parametrize("seed", SEEDS)
def test_mean_pool_grad(seed):
    r = np.random.default_rng(seed)
    assert max(check_op(mean_pool_rows, [u(r, 5, 3)], probe=u(r, 3))) <= 1e-6


def test_cross_entropy_uniform():
    assert float(cross_entropy(np.zeros(7), 3).data) == pytest.approx(np.log(7), abs=1e-12)


def test_cross_entropy_saturated():
    assert float(cross_entropy(np.array([20.0, -20.0]), 0).data) == pytest.approx(0.0, abs=1e-15)


def test_cross_entropy_label_range():
    with pytest.raises(ParameterError):
        cross_entropy(np.zeros(3), 3)


@pytest.mark.parametrize("seed", SEEDS)
def test_cross_entropy_grad(seed):
    r = np.random.default_rng(seed)
    label = int(r.integers(0, 5))
    assert max(check_op(lambda z: cross_entropy(z, label), [u(r, 5)])) <= 1e-6


def test_cross_entropy_grad_formula(rng):
    z = Tensor(u(rng, 4), requires_grad=True)
    with Tape() as tape:
        loss = cross_entropy(z, 2)
    tape.backward(loss)
    p = np.exp(z.data) / np.exp(z.data).sum()
    np.testing.assert_allclose(z.grad, p - np.eye(4)[2], atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_cross_entropy_batch_grad(seed):
    r = np.random.default_rng(seed)
    labels = r.integers(0, 4, size=3)
    assert max(check_op(lambda z: cross_entropy(z, labels), [u(r, 3, 4)])) <= 1e-6


# --- remaining plumbing ops ---------------------------------------------------


@pytest.mark.parametrize("seed", range(5))
def test_mask_scale_transpose_reshape_merge_grads(seed):
    r = np.random.default_rng(seed)
    mask = (r.random((4, 4)) > 0.5).astype(float)
    np.fill_diagonal(mask, 1)
    # moderate eta: with -9e15 the finite-difference sum has no significant digits left
    assert max(check_op(lambda w: apply_mask(w, mask, -3.0), [u(r, 4, 4)], probe=u(r, 4, 4))) <= 1e-6
    assert max(check_op(lambda a: scale(a, 0.3), [u(r, 3, 2)], probe=u(r, 3, 2))) <= 1e-6
    assert max(check_op(transpose, [u(r, 3, 2)], probe=u(r, 2, 3))) <= 1e-6
    assert max(check_op(lambda a: reshape(a, (6,)), [u(r, 3, 2)], probe=u(r, 6))) <= 1e-6
    assert max(check_op(merge_heads, [u(r, 2, 3, 4)], probe=u(r, 3, 8))) <= 1e-6
    assert max(check_op(add, [u(r, 2, 3, 4), u(r, 3, 4)], probe=u(r, 2, 3, 4))) <= 1e-6


def test_apply_mask_values():
    w = np.array([[1.0, 2.0], [3.0, 4.0]])
    m = np.array([[1, 0], [0, 1]])
    np.testing.assert_array_equal(apply_mask(w, m, -9e15).data, [[1.0, -9e15], [-9e15, 4.0]])


def test_merge_heads_concatenates_in_head_order(rng):
    x = u(rng, 3, 5, 2)
    np.testing.assert_array_equal(merge_heads(x).data, np.concatenate(list(x), axis=1))


def test_outputs_are_read_only(rng):
    out = matmul(u(rng, 2, 2), u(rng, 2, 2))
    with pytest.raises(ValueError):
        out.data[0, 0] = 1.0


def test_tape_accumulates_shared_input(rng):
    x = Tensor(u(rng, 3, 3), requires_grad=True)
    with Tape() as tape:
        y = add(x, x)
    tape.backward(y, np.ones((3, 3)))
    np.testing.assert_array_equal(x.grad, 2 * np.ones((3, 3)))


def test_no_tape_no_record(rng):
    x = Tensor(u(rng, 2, 2), requires_grad=True)
    y = matmul(x, x)
    assert y.requires_grad and x.grad is None


def test_numeric_grad_of_quadratic():
    g = numeric_grad(lambda v: float((v**2).sum()), np.array([1.0, -2.0]))
    assert rel_error(g, [2.0, -4.0]) < 1e-9
