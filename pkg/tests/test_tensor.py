import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iianet import tensor as T
from iianet.errors import DimensionError
from iianet.tensor import Tensor, grad, make_rng, no_grad


def leaf(a):
    return Tensor(np.asarray(a, dtype=float), requires_grad=True)


def test_rng_is_pcg64_and_reproducible():
    a, b = make_rng(5), make_rng(5)
    assert isinstance(a.bit_generator, np.random.PCG64)
    assert np.array_equal(a.standard_normal(8), b.standard_normal(8))


def test_float64_storage():
    assert Tensor([1, 2, 3]).data.dtype == np.float64


def test_backward_simple_chain():
    x = leaf([1.0, 2.0, 3.0])
    y = T.tsum(x * x + 3.0 * x)
    y.backward()
    assert np.allclose(x.grad, 2 * x.data + 3)


def test_backward_requires_scalar():
    x = leaf([1.0, 2.0])
    with pytest.raises(Exception):
        (x * 2.0).backward()


def test_shared_subexpression_accumulates():
    x = leaf([2.0])
    y = x * x
    z = T.tsum(y + y * x)  # 2x^2... d/dx (x^2 + x^3) = 2x + 3x^2
    (g,) = grad(z, [x])
    assert np.allclose(g, 2 * 2 + 3 * 4)


def test_unreachable_gets_zero_grad():
    x, y = leaf([1.0, 2.0]), leaf([[3.0]])
    (gx, gy) = grad(T.tsum(x), [x, y])
    assert np.array_equal(gx, [1, 1]) and np.array_equal(gy, [[0.0]])


def test_no_grad_records_nothing():
    x = leaf([1.0])
    with no_grad():
        y = x * 2.0
    assert y.node is None and not y.requires_grad


def test_broadcast_mismatch_is_dimension_error():
    with pytest.raises(DimensionError):
        T.add(leaf(np.ones((2, 4))), leaf(np.ones((1, 3))))


def test_softmax_rows_sum_to_one_and_stable():
    x = Tensor(np.array([[1000.0, 1000.0, -1000.0], [0.0, 1.0, 2.0]]))
    s = T.softmax(x, axis=-1).data
    assert np.all(np.isfinite(s))
    assert np.allclose(s.sum(-1), 1.0, atol=1e-15)
    assert np.allclose(s[0], [0.5, 0.5, 0.0])


def test_sigmoid_extreme_inputs():
    s = T.sigmoid(Tensor([-800.0, 0.0, 800.0])).data
    assert np.array_equal(s, [0.0, 0.5, 1.0])


def test_getitem_fancy_index_accumulates():
    x = leaf(np.arange(4.0))
    (g,) = grad(T.tsum(x[np.array([0, 0, 3])]), [x])
    assert np.array_equal(g, [2, 0, 0, 1])


def test_split_concat_roundtrip():
    x = Tensor(np.arange(24.0).reshape(2, 6, 2))
    parts = T.split(x, [1, 4, 1], axis=1)
    assert [p.shape[1] for p in parts] == [1, 4, 1]
    assert np.array_equal(T.concat(parts, axis=1).data, x.data)


def test_einsum_matches_numpy(rng):
    a, b = rng.standard_normal((2, 3, 4)), rng.standard_normal((4, 5))
    assert np.allclose(T.einsum("bij,jk->bik", Tensor(a), Tensor(b)).data, np.einsum("bij,jk->bik", a, b))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_matmul_grad_matches_closed_form(n, m, seed):
    r = make_rng(seed)
    a, b = leaf(r.standard_normal((n, m))), leaf(r.standard_normal((m, 3)))
    ga, gb = grad(T.tsum(T.matmul(a, b)), [a, b])
    assert np.allclose(ga, np.ones((n, 3)) @ b.data.T)
    assert np.allclose(gb, a.data.T @ np.ones((n, 3)))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8))
def test_softmax_is_shift_invariant(vals):
    x = np.array(vals)
    a = T.softmax(Tensor(x)).data
    b = T.softmax(Tensor(x + 17.0)).data
    assert np.allclose(a, b, atol=1e-12)
