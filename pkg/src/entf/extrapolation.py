"""Tensor sequence extrapolation (RRE, TET) and the restarted ENTF drivers.

Both methods produce ``T = X_n - [dX_n, ..., dX_{n+q-1}] xbar_{N+1} gamma``
and differ in how ``gamma`` is found: RRE solves a least-squares problem on
second differences by E-QR, TET solves a small Hankel system built from
scalar projections of the differences onto a probe tensor.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import RankDeficientError, lstsq_tensor_columns
from .solver import (
    EntfConfig,
    EntfResult,
    EntfState,
    check_input,
    entf_step,
    finish,
    has_converged,
    initialize,
    objective,
    prox_l1,
    surrogate_q,
    trace_row,
    working_problem,
)
from .tensor_core import nmode_product_vector

log = logging.getLogger(__name__)

METHODS = ("rre", "tet")
PROBES = ("difference", "random")
DEFAULT_ORDER = {"rre": 3, "tet": 2}


class ExtrapolationFailed(ArithmeticError):
    """No extrapolant could be formed; the caller should keep its last iterate."""


@dataclass
class ExtrapConfig:
    """Extrapolation settings.

    For RRE, ``order`` is the number of base sweeps per cycle, so a window
    holds ``order + 1`` iterates and ``order - 1`` second differences. For
    TET it is the Hankel order ``k``, with ``2k`` sweeps per cycle.
    ``order=None`` takes the per-method default (3 for RRE, 2 for TET).
    The window opens with the iterate the cycle starts from unless
    ``include_start`` is off, in which case one extra sweep fills it.
    ``literal_rhs`` builds the TET right-hand side from second differences
    instead of first differences; it exists for comparison only.
    ``safeguard`` rejects extrapolants that raise the objective.
    """

    method: str = "tet"
    order: int | None = None
    probe: str = "difference"
    probe_seed: int = 0
    restart_clamp: bool = True
    safeguard: bool = True
    literal_rhs: bool = False
    include_start: bool = True

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.order is None:
            self.order = DEFAULT_ORDER[self.method]
        if self.probe not in PROBES:
            raise ValueError(f"probe must be one of {PROBES}, got {self.probe!r}")
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.method == "rre" and self.order < 2:
            raise ValueError("RRE needs order >= 2 (at least three iterates)")

    @property
    def window_length(self) -> int:
        return self.order + 1 if self.method == "rre" else 2 * self.order + 1

    @property
    def sweeps_per_cycle(self) -> int:
        return self.window_length - 1 if self.include_start else self.window_length


@dataclass
class IterateWindow:
    """Bounded buffer of same-shape iterates, oldest first."""

    capacity: int
    iterates: list = field(default_factory=list)

    def push(self, t) -> None:
        t = np.asarray(t, dtype=np.float64)
        if self.iterates and t.shape != self.iterates[0].shape:
            raise ValueError(f"iterate shape {t.shape} differs from {self.iterates[0].shape}")
        self.iterates.append(t.copy())
        if len(self.iterates) > self.capacity:
            del self.iterates[0]

    def clear(self) -> None:
        self.iterates.clear()

    def __len__(self) -> int:
        return len(self.iterates)


def differences(window) -> list:
    xs = list(window)
    if len(xs) < 2:
        raise ValueError("need at least two iterates for first differences")
    return [xs[i + 1] - xs[i] for i in range(len(xs) - 1)]


def second_differences(window) -> list:
    xs = list(window)
    if len(xs) < 3:
        raise ValueError("need at least three iterates for second differences")
    return [xs[i + 2] - 2.0 * xs[i + 1] + xs[i] for i in range(len(xs) - 2)]


def _combine(x0: np.ndarray, deltas: list, gamma: np.ndarray) -> np.ndarray:
    stack = np.stack(deltas, axis=-1)
    return x0 - nmode_product_vector(stack, gamma, stack.ndim - 1).reshape(x0.shape)


def rre(window, return_info: bool = False):
    """Reduced rank extrapolation from ``m >= 3`` iterates.

    Uses ``q = m - 2`` second-difference columns. Raises
    :class:`ExtrapolationFailed` when they are numerically dependent
    (including the stagnated, constant-window case).
    """
    xs = list(window)
    if len(xs) < 3:
        raise ValueError("RRE needs at least three iterates")
    q = len(xs) - 2
    d1 = differences(xs)
    d2 = second_differences(xs)
    cols = np.stack(d2[:q], axis=-1)
    try:
        gamma, resid = lstsq_tensor_columns(cols, d1[0])
    except RankDeficientError as exc:
        raise ExtrapolationFailed(str(exc)) from exc
    t = _combine(xs[0], d1[:q], gamma)
    return (t, gamma, resid) if return_info else t


def tet_system(window, k: int, probe, literal_rhs: bool = False):
    """Hankel matrix ``A[i, j] = <W, d2X_{i+j}>`` and right-hand side
    ``b[i] = <W, dX_i>`` (or ``<W, d2X_i>`` with ``literal_rhs``)."""
    xs = list(window)
    if len(xs) < 2 * k + 1:
        raise ValueError(f"TET of order {k} needs {2 * k + 1} iterates, got {len(xs)}")
    w = np.asarray(probe, dtype=np.float64).ravel()
    d1 = differences(xs)
    d2 = second_differences(xs)
    s1 = np.array([np.dot(w, d.ravel()) for d in d1])
    s2 = np.array([np.dot(w, d.ravel()) for d in d2])
    a = np.array([[s2[i + j] for j in range(k)] for i in range(k)])
    b = (s2 if literal_rhs else s1)[:k].copy()
    return a, b


def tet(window, k: int = 1, probe=None, literal_rhs: bool = False, return_info: bool = False):
    """Topological extrapolation of order ``k`` from ``2k + 1`` iterates.

    ``probe`` defaults to the first difference of the window. Raises
    :class:`ExtrapolationFailed` when the Hankel system is singular.
    """
    xs = list(window)
    d1 = differences(xs)
    if probe is None:
        probe = d1[0]
    a, b = tet_system(xs, k, probe, literal_rhs)
    qm, rm = np.linalg.qr(a)
    diag = np.abs(np.diag(rm))
    scale = max(np.abs(a).max(), np.abs(b).max(), 0.0)
    if scale == 0.0 or diag.min() <= 1e-13 * scale * k:
        raise ExtrapolationFailed("singular TET system")
    gamma = np.linalg.solve(rm, qm.T @ b)
    if not np.all(np.isfinite(gamma)):
        raise ExtrapolationFailed("non-finite TET coefficients")
    resid = float(np.linalg.norm(a @ gamma - b))
    t = _combine(xs[0], d1[:k], gamma)
    return (t, gamma, resid) if return_info else t


def combination_coefficients(gamma) -> np.ndarray:
    """Weights ``alpha`` with ``T = sum_j alpha_j X_{n+j}`` implied by ``gamma``."""
    gamma = np.asarray(gamma, dtype=np.float64)
    q = gamma.size
    alpha = np.zeros(q + 1)
    alpha[0] = 1.0
    for j, g in enumerate(gamma):
        # -g * (X_{j+1} - X_j)
        alpha[j] += g
        alpha[j + 1] -= g
    return alpha


def extrapolate(window, ecfg: ExtrapConfig, rng=None):
    """Dispatch to RRE or TET; returns ``(T, residual)``."""
    if ecfg.method == "rre":
        t, _, resid = rre(window, return_info=True)
        return t, resid
    probe = None
    if ecfg.probe == "random":
        rng = rng if rng is not None else np.random.default_rng(ecfg.probe_seed)
        probe = rng.standard_normal(np.shape(window[0]))
    t, _, resid = tet(window, ecfg.order, probe, ecfg.literal_rhs, return_info=True)
    return t, resid


def _restart_state(state: EntfState, tx, ty, a_work, cfg: EntfConfig, ecfg: ExtrapConfig):
    if ecfg.restart_clamp:
        tx = np.maximum(tx, 0.0)
        ty = np.maximum(ty, 0.0)
    if state.asc > 0:
        tx[-1] = state.asc
    cand = EntfState(
        x=tx,
        y=ty,
        p=prox_l1(ty, cfg.threshold),
        q=surrogate_q(tx, cfg.rank_x, state.asc),
        iter=state.iter,
        asc=state.asc,
        rel_change_x=state.rel_change_x,
        rel_change_y=state.rel_change_y,
        objective_history=state.objective_history,
    )
    return cand, objective(cand, a_work, cfg)


def run_extrapolated(a, cfg: EntfConfig, ecfg: ExtrapConfig, init: EntfState | None = None) -> EntfResult:
    """Restarted ENTF: run a cycle of base sweeps, extrapolate the X and Y
    sequences independently and restart from the extrapolants.

    The convergence test of :func:`entf.solver.run_entf` is applied after
    every base sweep and ``cfg.max_iter`` caps the total number of sweeps.
    ``result.cycles`` holds one row per extrapolation attempt:
    ``(cycle, iter, residual_x, residual_y, accepted)``.
    """
    ecfg.validate()
    a = check_input(a)
    cfg = cfg.resolve(a)
    a_work = working_problem(a, cfg)
    state = init if init is not None else initialize(a, cfg)
    rng = np.random.default_rng(ecfg.probe_seed)
    trace, cycles = [], []
    converged = False
    cycle = 0
    while state.iter < cfg.max_iter and not converged:
        xs, ys = ([state.x], [state.y]) if ecfg.include_start else ([], [])
        for _ in range(ecfg.sweeps_per_cycle):
            state = entf_step(state, a_work, cfg)
            trace.append(trace_row(state))
            xs.append(state.x)
            ys.append(state.y)
            if has_converged(state, cfg):
                converged = True
                break
            if state.iter >= cfg.max_iter:
                break
        if converged or state.iter >= cfg.max_iter:
            break
        cycle += 1
        try:
            tx, rx = extrapolate(xs, ecfg, rng)
            ty, ry = extrapolate(ys, ecfg, rng)
        except ExtrapolationFailed as exc:
            log.debug("cycle %d: no extrapolation (%s)", cycle, exc)
            cycles.append((cycle, state.iter, math.nan, math.nan, False))
            continue
        cand, obj = _restart_state(state, tx, ty, a_work, cfg, ecfg)
        ok = bool(np.all(np.isfinite(cand.x)) and np.all(np.isfinite(cand.y)))
        if ok and ecfg.safeguard:
            ok = obj <= state.objective_history[-1]
        cycles.append((cycle, state.iter, rx, ry, ok))
        if ok:
            state = cand
    return finish(state, converged, trace, cycles)


def entf_rre(a, cfg: EntfConfig, ecfg: ExtrapConfig | None = None, init=None) -> EntfResult:
    ecfg = ecfg if ecfg is not None else ExtrapConfig(method="rre")
    if ecfg.method != "rre":
        raise ValueError("entf_rre needs an RRE extrapolation config")
    return run_extrapolated(a, cfg, ecfg, init)


def entf_tet(a, cfg: EntfConfig, ecfg: ExtrapConfig | None = None, init=None) -> EntfResult:
    ecfg = ecfg if ecfg is not None else ExtrapConfig(method="tet")
    if ecfg.method != "tet":
        raise ValueError("entf_tet needs a TET extrapolation config")
    return run_extrapolated(a, cfg, ecfg, init)
