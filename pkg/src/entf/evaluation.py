"""Quality metrics for recovered cubes, endmembers and abundances."""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .tensor_core import ShapeError, frobenius_norm


@dataclass
class UnmixReport:
    mse: float
    sam_per_endmember: list
    sam_mean: float
    mse_y: float
    permutation: list

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def csv_header(self) -> list:
        r = len(self.sam_per_endmember)
        return ["mse", "sam_mean", "mse_y"] + [f"sam_{i}" for i in range(r)] + ["permutation"]

    def csv_row(self) -> list:
        perm = " ".join(str(p) for p in self.permutation)
        return [repr(self.mse), repr(self.sam_mean), repr(self.mse_y)] + [
            repr(s) for s in self.sam_per_endmember
        ] + [perm]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.csv_header())
        w.writerow(self.csv_row())
        return buf.getvalue()


def mse(a, a_hat) -> float:
    """``||a - a_hat||_F / numel`` (the norm itself, not its square)."""
    a = np.asarray(a, dtype=np.float64)
    a_hat = np.asarray(a_hat, dtype=np.float64)
    if a.shape != a_hat.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {a_hat.shape}")
    return frobenius_norm(a - a_hat) / a.size


def sam(u, v) -> float:
    """Spectral angle between two spectra, in radians."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ShapeError(f"spectra have different lengths: {u.size} vs {v.size}")
    nu, nv = frobenius_norm(u), frobenius_norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("undefined angle: zero spectrum")
    return math.acos(min(1.0, max(-1.0, float(np.dot(u, v)) / (nu * nv))))


def sam_matrix(x_true, x_hat) -> np.ndarray:
    """``out[i, j] = sam(x_true[:, i], x_hat[:, j])``."""
    x_true = np.asarray(x_true, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    r = x_true.shape[1]
    return np.array([[sam(x_true[:, i], x_hat[:, j]) for j in range(r)] for i in range(r)])


def match_endmembers(x_true, x_hat) -> list:
    """Assignment minimizing the total SAM.

    Returns ``perm`` such that estimated column ``perm[i]`` is paired with
    true column ``i``.
    """
    x_true = np.asarray(x_true)
    x_hat = np.asarray(x_hat)
    if x_true.shape != x_hat.shape:
        raise ShapeError(f"shape mismatch: {x_true.shape} vs {x_hat.shape}")
    rows, cols = linear_sum_assignment(sam_matrix(x_true, x_hat))
    perm = [0] * len(rows)
    for i, j in zip(rows, cols):
        perm[i] = int(j)
    return perm


def brute_force_match(x_true, x_hat) -> list:
    """Exhaustive search over all r! assignments (small r only)."""
    cost = sam_matrix(x_true, x_hat)
    r = cost.shape[0]
    best = min(
        itertools.permutations(range(r)),
        key=lambda p: sum(cost[i, p[i]] for i in range(r)),
    )
    return list(best)


def mse_y(y_true, y_hat, permutation, n_bands: int) -> float:
    """``||y_true - y_hat[perm]||_F / (n_bands * J * K)``."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)[list(permutation)]
    if y_true.shape != y_hat.shape:
        raise ShapeError(f"shape mismatch: {y_true.shape} vs {y_hat.shape}")
    return frobenius_norm(y_true - y_hat) / (n_bands * y_true[0].size)


def evaluate_unmixing(a, x_true, y_true, x_hat, y_hat, a_hat=None) -> UnmixReport:
    """Metrics of an estimate against ground truth.

    ``a`` is the reference cube; ``a_hat`` defaults to ``x_hat *_1 y_hat``.
    """
    a = np.asarray(a, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if a_hat is None:
        a_hat = np.tensordot(x_hat, y_hat, axes=1)
    perm = match_endmembers(x_true, x_hat)
    sams = [sam(x_true[:, i], x_hat[:, perm[i]]) for i in range(len(perm))]
    return UnmixReport(
        mse=mse(a, a_hat),
        sam_per_endmember=sams,
        sam_mean=float(np.mean(sams)),
        mse_y=mse_y(y_true, y_hat, perm, a.shape[0]),
        permutation=perm,
    )
