"""Dense tensors and the Einstein-product algebra.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in C order.
:func:`as_tensor` is the single validating constructor; every operation in
this module accepts array-likes and returns freshly allocated arrays.

Mode indices are 0-based, following numpy's ``axis`` convention.
"""
from __future__ import annotations

import math

import numpy as np

DEFAULT_EPS_DIV = 1e-12


class ShapeError(ValueError):
    """Raised when operand shapes are not conformable."""


def as_tensor(data, shape=None) -> np.ndarray:
    """Return ``data`` as a validated float64 C-ordered tensor.

    Parameters
    ----------
    data : array_like
        Tensor entries. A flat sequence is accepted together with ``shape``.
    shape : sequence of int, optional
        Extents to reshape ``data`` to (row-major, last index fastest).

    Raises
    ------
    ShapeError
        If the order is 0, an extent is < 1, or ``data`` does not fill ``shape``.
    ValueError
        If any entry is NaN or infinite.
    """
    arr = np.array(data, dtype=np.float64, order="C", copy=True)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if arr.size != math.prod(shape):
            raise ShapeError(
                f"data of length {arr.size} does not fill shape {shape}"
            )
        arr = arr.reshape(shape)
    if arr.ndim < 1:
        raise ShapeError("tensors must have order >= 1")
    if any(s < 1 for s in arr.shape):
        raise ShapeError(f"all extents must be >= 1, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor entries must be finite")
    return arr


def _asarray(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float64)


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def einstein_product(a, b, m: int) -> np.ndarray:
    """Contract the last ``m`` modes of ``a`` with the first ``m`` modes of ``b``.

    The result has the leading ``a.ndim - m`` extents of ``a`` followed by the
    trailing ``b.ndim - m`` extents of ``b``. A fully contracted product is
    returned as a 1x1 tensor.
    """
    a, b = _asarray(a), _asarray(b)
    if m < 1:
        raise ValueError(f"contraction arity must be >= 1, got {m}")
    if m > a.ndim or m > b.ndim:
        raise ValueError(
            f"contraction arity {m} exceeds operand orders {a.ndim} and {b.ndim}"
        )
    for i in range(m):
        ea, eb = a.shape[a.ndim - m + i], b.shape[i]
        if ea != eb:
            raise ShapeError(
                f"mode {a.ndim - m + i} of a (extent {ea}) does not match "
                f"mode {i} of b (extent {eb})"
            )
    free_a = a.shape[: a.ndim - m]
    free_b = b.shape[m:]
    inner = math.prod(b.shape[:m])
    # row-major: grouping leading/trailing modes is a free reshape
    out = np.dot(
        a.reshape(math.prod(free_a), inner), b.reshape(inner, math.prod(free_b))
    )
    shape = free_a + free_b
    if not shape:
        shape = (1, 1)
    return out.reshape(shape)


def nmode_product_matrix(a, u, mode: int) -> np.ndarray:
    """n-mode product ``a x_mode u`` with a J x I_mode matrix ``u``."""
    a, u = _asarray(a), _asarray(u)
    if not 0 <= mode < a.ndim:
        raise ValueError(f"mode {mode} out of range for order {a.ndim}")
    if u.ndim != 2:
        raise ShapeError(f"u must be a matrix, got order {u.ndim}")
    if u.shape[1] != a.shape[mode]:
        raise ShapeError(
            f"u has {u.shape[1]} columns but mode {mode} has extent {a.shape[mode]}"
        )
    out = np.tensordot(a, u, axes=([mode], [1]))
    return np.ascontiguousarray(np.moveaxis(out, -1, mode))


def nmode_product_vector(a, v, mode: int) -> np.ndarray:
    """Contract mode ``mode`` of ``a`` against the vector ``v`` (order drops by one)."""
    a, v = _asarray(a), _asarray(v)
    if not 0 <= mode < a.ndim:
        raise ValueError(f"mode {mode} out of range for order {a.ndim}")
    if v.ndim != 1 or v.shape[0] != a.shape[mode]:
        raise ShapeError(
            f"vector of shape {v.shape} does not match extent {a.shape[mode]} of mode {mode}"
        )
    out = np.tensordot(a, v, axes=([mode], [0]))
    if out.ndim == 0:
        out = out.reshape(1)
    return np.ascontiguousarray(out)


def group_transpose(a, lead: int) -> np.ndarray:
    """Swap the leading ``lead`` modes with the remaining trailing modes."""
    a = _asarray(a)
    if not 1 <= lead < a.ndim:
        raise ValueError(f"lead must satisfy 1 <= lead < {a.ndim}, got {lead}")
    axes = tuple(range(lead, a.ndim)) + tuple(range(lead))
    return np.ascontiguousarray(np.transpose(a, axes))


def identity_tensor(shape) -> np.ndarray:
    """Identity under ``*_N`` for tensors of the given ``shape``: shape + shape."""
    shape = tuple(int(s) for s in shape)
    n = math.prod(shape)
    return np.eye(n).reshape(shape + shape)


def trace(a) -> float:
    """Sum of ``a[i..., i...]`` for a tensor of shape ``dims + dims``."""
    a = _asarray(a)
    if a.ndim % 2:
        raise ShapeError(f"trace needs an even order, got {a.ndim}")
    half = a.ndim // 2
    if a.shape[:half] != a.shape[half:]:
        raise ShapeError(f"trace needs shape dims+dims, got {a.shape}")
    n = math.prod(a.shape[:half])
    return float(np.trace(a.reshape(n, n)))


def inner_product(a, b) -> float:
    a, b = _asarray(a), _asarray(b)
    _check_same_shape(a, b)
    return float(np.dot(a.ravel(), b.ravel()))


def frobenius_norm(a) -> float:
    a = _asarray(a).ravel()
    return float(math.sqrt(np.dot(a, a)))


def hadamard(a, b) -> np.ndarray:
    a, b = _asarray(a), _asarray(b)
    _check_same_shape(a, b)
    return a * b


def hadamard_div(a, b, eps_div: float = DEFAULT_EPS_DIV) -> np.ndarray:
    """Elementwise ``a / max(b, eps_div)``."""
    a, b = _asarray(a), _asarray(b)
    _check_same_shape(a, b)
    if not eps_div > 0:
        raise ValueError("eps_div must be positive")
    return a / np.maximum(b, eps_div)


def outer_product(a, b) -> np.ndarray:
    a, b = _asarray(a), _asarray(b)
    return np.multiply.outer(a, b)
