import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import loop_einstein
from entf.tensor_core import (
    ShapeError,
    as_tensor,
    einstein_product,
    frobenius_norm,
    group_transpose,
    hadamard,
    hadamard_div,
    identity_tensor,
    inner_product,
    nmode_product_matrix,
    nmode_product_vector,
    outer_product,
    trace,
)
from entf.linalg import unfold

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_as_tensor_rejects_bad_input():
    with pytest.raises(ShapeError):
        as_tensor(3.0)
    with pytest.raises(ShapeError):
        as_tensor(np.zeros((2, 0)))
    with pytest.raises(ShapeError):
        as_tensor([1, 2, 3], shape=(2, 2))
    with pytest.raises(ValueError):
        as_tensor([1.0, np.nan])
    t = as_tensor(range(6), shape=(2, 3))
    assert t.dtype == np.float64 and t[1, 0] == 3.0


def test_einstein_small_cases():
    np.testing.assert_array_equal(einstein_product(np.ones((2, 2)), np.ones((2, 2)), 1), np.full((2, 2), 2.0))
    out = einstein_product(np.ones((2, 2, 2)), np.ones((2, 2)), 2)
    np.testing.assert_array_equal(out, [4.0, 4.0])


def test_einstein_matches_loops(rng):
    a = rng.standard_normal((3, 2, 4))
    b = rng.standard_normal((2, 4, 5))
    np.testing.assert_allclose(einstein_product(a, b, 2), loop_einstein(a, b, 2), rtol=1e-12, atol=1e-13)


def test_einstein_full_contraction_is_1x1(rng):
    a = rng.standard_normal((2, 3))
    out = einstein_product(a, a, 2)
    assert out.shape == (1, 1)
    assert out[0, 0] == pytest.approx(np.sum(a * a))


def test_einstein_errors_name_mode():
    with pytest.raises(ShapeError, match="mode 2 of a"):
        einstein_product(np.ones((2, 3, 4)), np.ones((3, 5, 2)), 2)
    with pytest.raises(ValueError, match="arity"):
        einstein_product(np.ones((2, 2)), np.ones((2, 2)), 3)


def test_transpose_reverses_product(rng):
    # (a *_M b)^T = b^T *_M a^T
    a = rng.standard_normal((2, 3, 4, 2))
    b = rng.standard_normal((4, 2, 5))
    lhs = group_transpose(einstein_product(a, b, 2), 2)
    rhs = einstein_product(group_transpose(b, 2), group_transpose(a, 2), 2)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-13)


def test_identity_tensor_is_neutral(rng):
    a = rng.standard_normal((2, 3, 4))
    np.testing.assert_allclose(einstein_product(identity_tensor((2, 3)), a, 2), a, atol=1e-15)
    np.testing.assert_allclose(einstein_product(a, identity_tensor((3, 4)), 2), a, atol=1e-15)
    assert trace(identity_tensor((2, 3))) == 6.0


def test_norm_invariant_under_orthonormal_contraction(rng):
    q, _ = np.linalg.qr(rng.standard_normal((12, 12)))
    u = q.reshape(3, 4, 3, 4)
    a = rng.standard_normal((5, 3, 4))
    assert frobenius_norm(einstein_product(a, u, 2)) == pytest.approx(frobenius_norm(a), rel=1e-10)


def test_nmode_matrix_cases(rng):
    a = rng.standard_normal((2, 3))
    np.testing.assert_array_equal(nmode_product_matrix(a, np.eye(3), 1), a)
    out = nmode_product_matrix(np.ones((2, 2, 2)), np.ones((1, 2)), 0)
    np.testing.assert_array_equal(out, np.full((1, 2, 2), 2.0))

    a = rng.standard_normal((3, 4, 2))
    u = rng.standard_normal((5, 4))
    want = np.zeros((3, 5, 2))
    for i, j, k in itertools.product(range(3), range(5), range(2)):
        want[i, j, k] = sum(a[i, n, k] * u[j, n] for n in range(4))
    np.testing.assert_allclose(nmode_product_matrix(a, u, 1), want, rtol=1e-12)
    with pytest.raises(ValueError):
        nmode_product_matrix(a, u, 3)
    with pytest.raises(ShapeError):
        nmode_product_matrix(a, u, 0)


def test_nmode_vector_cases(rng):
    y = rng.dirichlet(np.ones(3), size=(4, 5))
    y = np.moveaxis(y, -1, 0)
    np.testing.assert_allclose(nmode_product_vector(y, np.ones(3), 0), np.ones((4, 5)), atol=1e-14)
    np.testing.assert_array_equal(nmode_product_vector(np.eye(2), [1.0, 1.0], 0), [1.0, 1.0])

    a = rng.standard_normal((4, 3, 2))
    v = rng.standard_normal(3)
    want = np.array([[sum(a[i, n, k] * v[n] for n in range(3)) for k in range(2)] for i in range(4)])
    np.testing.assert_allclose(nmode_product_vector(a, v, 1), want, rtol=1e-12)


def test_group_transpose_cases(rng):
    m = rng.standard_normal((2, 3))
    np.testing.assert_array_equal(group_transpose(m, 1), m.T)
    a = rng.standard_normal((2, 3, 4))
    t = group_transpose(a, 1)
    assert t.shape == (3, 4, 2)
    for i, j, k in itertools.product(range(2), range(3), range(4)):
        assert t[j, k, i] == a[i, j, k]
    with pytest.raises(ValueError):
        group_transpose(a, 3)


@given(arrays(np.float64, st.lists(st.integers(1, 4), min_size=2, max_size=4).map(tuple), elements=finite), st.data())
@settings(max_examples=50, deadline=None)
def test_group_transpose_involution(a, data):
    lead = data.draw(st.integers(1, a.ndim - 1))
    np.testing.assert_array_equal(group_transpose(group_transpose(a, lead), a.ndim - lead), a)


def test_inner_product_and_norm(rng):
    assert inner_product(np.eye(2), np.eye(2)) == 2.0
    assert inner_product([1.0, 0.0], [0.0, 1.0]) == 0.0
    a, b = rng.standard_normal((3, 4, 2)), rng.standard_normal((3, 4, 2))
    want = sum(a[idx] * b[idx] for idx in np.ndindex(a.shape))
    assert inner_product(a, b) == pytest.approx(want, rel=1e-12)
    # equals tr(a^T *_N b) for the split lead=1
    assert trace(einstein_product(group_transpose(a, 1), b, 1)) == pytest.approx(want, rel=1e-12)
    assert frobenius_norm(np.zeros((3, 3))) == 0.0
    assert frobenius_norm(np.eye(2)) == pytest.approx(math.sqrt(2))
    assert frobenius_norm(a) == pytest.approx(math.sqrt(inner_product(a, a)), rel=1e-14)
    with pytest.raises(ShapeError):
        inner_product(a, b[:2])


def test_elementwise_ops(rng):
    a = rng.uniform(0.1, 1, (3, 4))
    b = rng.standard_normal((3, 4))
    np.testing.assert_array_equal(hadamard(a, np.ones_like(a)), a)
    np.testing.assert_array_equal(hadamard_div(a, a), np.ones_like(a))
    want = np.array([[a[i, j] / max(b[i, j], 1e-12) for j in range(4)] for i in range(3)])
    np.testing.assert_array_equal(hadamard_div(a, b), want)
    with pytest.raises(ValueError):
        hadamard_div(a, b, 0.0)
    with pytest.raises(ShapeError):
        hadamard(a, b.T)


@given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, (3, 4), elements=st.floats(0.5, 10)))
@settings(max_examples=30, deadline=None)
def test_elementwise_commutes_with_transpose(a, b):
    np.testing.assert_array_equal(group_transpose(hadamard(a, b), 1), hadamard(a.T, b.T))
    np.testing.assert_array_equal(group_transpose(hadamard_div(a, b), 1), hadamard_div(a.T, b.T))


def test_outer_product(rng):
    np.testing.assert_array_equal(outer_product(np.ones(2), np.ones(3)), np.ones((2, 3)))
    e1, e2 = np.eye(3)[0], np.eye(3)[1]
    o = outer_product(e1, e2)
    assert o[0, 1] == 1.0 and o.sum() == 1.0
    x = rng.standard_normal((5, 3))
    y = rng.standard_normal((3, 2, 4))
    total = sum(outer_product(x[:, i], y[i]) for i in range(3))
    np.testing.assert_allclose(total, einstein_product(x, y, 1), rtol=1e-12, atol=1e-14)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_unfolding_homomorphism(seed):
    rng = np.random.default_rng(seed)
    lead = rng.integers(1, 3)
    m = rng.integers(1, 3)
    trail = rng.integers(1, 3)
    sa = tuple(rng.integers(1, 4, lead))
    sm = tuple(rng.integers(1, 4, m))
    sb = tuple(rng.integers(1, 4, trail))
    a = rng.standard_normal(sa + sm)
    b = rng.standard_normal(sm + sb)
    lhs = unfold(einstein_product(a, b, m), lead)
    rhs = unfold(a, lead) @ unfold(b, m)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)
