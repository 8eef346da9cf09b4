"""Factorizations over the Einstein product.

The tensor SVD is the matrix SVD of the group unfolding; E-QR is a
modified Gram-Schmidt sweep over the trailing-mode slices of a tensor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor_core import ShapeError, einstein_product, frobenius_norm


class RankDeficientError(np.linalg.LinAlgError):
    """The columns handed to E-QR are numerically linearly dependent."""


@dataclass
class EqrResult:
    q: np.ndarray
    r: np.ndarray

    def reconstruct(self) -> np.ndarray:
        # q x_{N+1} r^T
        return einstein_product(self.q, self.r, 1)


@dataclass
class TsvdResult:
    """Thin tensor SVD ``a = u *_1 diag(s) *_1 v^T`` over a lead/trail split.

    ``u`` has shape ``lead_shape + (k,)``, ``v`` has shape ``trail_shape + (k,)``
    and ``s`` holds the ``k = min(prod(lead_shape), prod(trail_shape))``
    singular values in nonincreasing order.
    """

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray
    lead: int

    def reconstruct(self) -> np.ndarray:
        us = self.u * self.s
        vt = np.moveaxis(self.v, -1, 0)
        return einstein_product(us, vt, 1)

    def rank(self, rtol: float = 1e-10) -> int:
        """Number of singular values above ``rtol * s_max``."""
        if self.s.size == 0 or self.s[0] == 0:
            return 0
        return int(np.count_nonzero(self.s > rtol * self.s[0]))


def unfold(a, lead: int) -> np.ndarray:
    """Group unfolding: leading ``lead`` modes to rows, the rest to columns."""
    a = np.asarray(a, dtype=np.float64)
    if not 0 <= lead <= a.ndim:
        raise ValueError(f"lead {lead} out of range for order {a.ndim}")
    rows = math.prod(a.shape[:lead])
    return np.ascontiguousarray(a).reshape(rows, -1)


def fold(m, shape, lead: int) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    m = np.asarray(m, dtype=np.float64)
    shape = tuple(int(s) for s in shape)
    rows = math.prod(shape[:lead])
    cols = math.prod(shape[lead:])
    if m.shape != (rows, cols):
        raise ShapeError(
            f"matrix of shape {m.shape} cannot fold to {shape} with lead={lead}"
        )
    return np.ascontiguousarray(m).reshape(shape)


def eqr(a, rank_tol: float = 1e-12) -> EqrResult:
    """Einstein QR of ``a`` whose final mode indexes the k "columns".

    Modified Gram-Schmidt: each column is projected against the running
    orthonormalized ones. The diagonal of ``r`` is nonnegative.

    Raises
    ------
    RankDeficientError
        If some diagonal entry falls below ``rank_tol * ||a||_F``.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim < 2:
        raise ShapeError("eqr needs at least one column mode plus the column index")
    k = a.shape[-1]
    cols = np.ascontiguousarray(np.moveaxis(a, -1, 0)).reshape(k, -1)
    thresh = rank_tol * frobenius_norm(a)
    q = np.empty_like(cols)
    r = np.zeros((k, k))
    for j in range(k):
        w = cols[j].copy()
        for i in range(j):
            r[i, j] = np.dot(q[i], w)
            w -= r[i, j] * q[i]
        r[j, j] = math.sqrt(np.dot(w, w))
        if r[j, j] <= thresh or r[j, j] == 0.0:
            raise RankDeficientError(
                f"column {j} is linearly dependent on the previous ones "
                f"(R[{j},{j}] = {r[j, j]:.3e})"
            )
        q[j] = w / r[j, j]
    q = np.ascontiguousarray(np.moveaxis(q.reshape((k,) + a.shape[:-1]), 0, -1))
    return EqrResult(q=q, r=r)


def tsvd(a, lead: int) -> TsvdResult:
    a = np.asarray(a, dtype=np.float64)
    if not 1 <= lead < a.ndim:
        raise ValueError(f"lead must satisfy 1 <= lead < {a.ndim}, got {lead}")
    u, s, vt = np.linalg.svd(unfold(a, lead), full_matrices=False)
    k = s.shape[0]
    return TsvdResult(
        u=u.reshape(a.shape[:lead] + (k,)),
        s=s,
        v=np.ascontiguousarray(vt.T).reshape(a.shape[lead:] + (k,)),
        lead=lead,
    )


def truncated_svd(a, rank: int) -> np.ndarray:
    """Best rank-``rank`` approximation of the matrix ``a`` in Frobenius norm."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"truncated_svd needs a matrix, got order {a.ndim}")
    if not 1 <= rank <= min(a.shape):
        raise ValueError(f"rank must be in [1, {min(a.shape)}], got {rank}")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return (u[:, :rank] * s[:rank]) @ vt[:rank]


def lstsq_tensor_columns(a, b, rank_tol: float = 1e-12):
    """Solve ``min_x ||a x_{N+1} x - b||_F`` through E-QR.

    Returns ``(gamma, residual_norm)``. ``b`` must have the shape of one
    column slice ``a[..., j]``. The projections ``Q^T b`` are accumulated in
    modified Gram-Schmidt order, which also leaves the residual behind.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if b.shape != a.shape[:-1]:
        raise ShapeError(f"b of shape {b.shape} does not match columns of {a.shape}")
    res = eqr(a, rank_tol=rank_tol)
    k = a.shape[-1]
    qcols = np.moveaxis(res.q, -1, 0).reshape(k, -1)
    w = b.ravel().copy()
    y = np.empty(k)
    for i in range(k):
        y[i] = np.dot(qcols[i], w)
        w -= y[i] * qcols[i]
    gamma = _back_substitute(res.r, y)
    return gamma, math.sqrt(np.dot(w, w))


def _back_substitute(r: np.ndarray, y: np.ndarray) -> np.ndarray:
    k = r.shape[0]
    x = np.zeros(k)
    for i in range(k - 1, -1, -1):
        x[i] = (y[i] - np.dot(r[i, i + 1 :], x[i + 1 :])) / r[i, i]
    return x
