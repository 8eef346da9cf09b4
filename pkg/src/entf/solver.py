"""Multiplicative-update ENTF solver.

Factorizes a nonnegative cube ``a`` (bands first, then spatial modes) as
``x *_1 y`` with ``x`` of shape ``(I, r)`` and ``y`` of shape ``(r, J, K, ...)``.
Each sweep updates, in order, the endmembers ``x``, the abundances ``y``,
the sparse surrogate ``p`` (soft threshold of ``y``) and the low-rank
surrogate ``q`` (truncated SVD of ``x``).

Sum-to-one of the abundances is encouraged by appending a constant band of
height ``gamma`` to the cube and a matching row to ``x``; that row is held
fixed during the iterations and stripped from everything reported.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import truncated_svd
from .tensor_core import (
    DEFAULT_EPS_DIV,
    einstein_product,
    frobenius_norm,
    group_transpose,
)

log = logging.getLogger(__name__)

MODES = ("unmixing", "denoising")
ASC_SCALE = 25.0


class SolverDivergenceError(FloatingPointError):
    """The iterates stopped being finite."""


@dataclass
class EntfConfig:
    """Solver hyperparameters.

    ``lambda_s`` may be the string ``"auto"``, in which case it is computed
    from the cube with :func:`compute_lambda_s`. ``gamma_asc=None`` picks
    ``25 * max(a)`` in unmixing mode and disables augmentation in denoising
    mode. ``rank_x=None`` means full rank, which makes ``q`` equal ``x``.
    """

    r: int
    lambda_s: float | str = 0.0
    lambda_x: float = 0.0
    lambda_y: float = 0.0
    rank_x: int | None = None
    gamma_asc: float | None = None
    mode: str = "denoising"
    eps_stop: float = 1e-5
    max_iter: int = 2000
    eps_div: float = DEFAULT_EPS_DIV
    seed: int = 0

    def validate(self) -> None:
        if int(self.r) != self.r or self.r < 1:
            raise ValueError(f"r must be a positive integer, got {self.r}")
        if isinstance(self.lambda_s, str):
            if self.lambda_s != "auto":
                raise ValueError(f"lambda_s must be a number or 'auto', got {self.lambda_s!r}")
        elif self.lambda_s < 0:
            raise ValueError("lambda_s must be >= 0")
        if self.lambda_x < 0 or self.lambda_y < 0:
            raise ValueError("lambda_x and lambda_y must be >= 0")
        if self.lambda_s != 0 and not self.lambda_y > 0:
            raise ValueError("lambda_y must be > 0 when lambda_s is nonzero")
        if self.rank_x is not None and self.rank_x < 1:
            raise ValueError("rank_x must be >= 1")
        if self.gamma_asc is not None and self.gamma_asc < 0:
            raise ValueError("gamma_asc must be >= 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.eps_stop > 0:
            raise ValueError("eps_stop must be > 0")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")
        if not self.eps_div > 0:
            raise ValueError("eps_div must be > 0")

    def resolve(self, a: np.ndarray) -> "EntfConfig":
        """Return a copy with every data-dependent default made concrete."""
        self.validate()
        cfg = dataclasses.replace(self)
        if cfg.lambda_s == "auto":
            cfg.lambda_s = compute_lambda_s(a)
        if cfg.gamma_asc is None:
            cfg.gamma_asc = ASC_SCALE * float(np.max(a)) if cfg.mode == "unmixing" else 0.0
        rmax = min(a.shape[0], cfg.r)
        if cfg.rank_x is None:
            cfg.rank_x = rmax
        if cfg.rank_x > rmax:
            raise ValueError(f"rank_x must be <= min(I, r) = {rmax}, got {cfg.rank_x}")
        return cfg

    @property
    def threshold(self) -> float:
        if self.lambda_s == 0:
            return 0.0
        return float(self.lambda_s) / self.lambda_y


@dataclass
class EntfState:
    """Iterates of the solver.

    ``x`` is the working endmember tensor; when ``asc > 0`` its last row is
    the pinned augmentation row of height ``asc`` (see :attr:`endmembers`).
    """

    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    q: np.ndarray
    iter: int = 0
    asc: float = 0.0
    rel_change_x: float = math.inf
    rel_change_y: float = math.inf
    objective_history: list = field(default_factory=list)

    @property
    def endmembers(self) -> np.ndarray:
        return self.x[:-1] if self.asc > 0 else self.x


@dataclass
class EntfResult:
    x: np.ndarray
    y: np.ndarray
    converged: bool
    iterations: int
    reconstruction: np.ndarray
    objective_history: list
    trace: list
    cycles: list = field(default_factory=list)


def compute_lambda_s(a) -> float:
    """Sparsity weight from the per-band l1/Frobenius ratios of the cube.

    Constant bands contribute 0 and one-hot bands contribute ``1/sqrt(I)``;
    an all-zero band contributes 0. Both extremes come out exact: bands are
    scaled to unit peak first and the per-band terms are averaged before
    the ``sqrt(I)`` factor is applied.
    """
    a = np.asarray(a, dtype=np.float64)
    n_bands = a.shape[0]
    n_pix = a[0].size
    if n_pix == 1:
        raise ValueError("lambda_s is undefined for a single pixel (sqrt(JK) - 1 = 0)")
    bands = np.abs(a.reshape(n_bands, n_pix))
    peak = bands.max(axis=1, keepdims=True)
    bands = np.divide(bands, peak, out=np.zeros_like(bands), where=peak > 0)
    l1 = bands.sum(axis=1)
    sq = (bands * bands).sum(axis=1)
    root = math.sqrt(n_pix)
    # sqrt(l1^2 / sq) rather than l1 / sqrt(sq): integer-valued for constant bands
    ratio = np.sqrt(np.divide(l1 * l1, sq, out=np.full(n_bands, float(n_pix)), where=sq > 0))
    # 1 <= ratio <= root up to rounding
    terms = np.clip((root - ratio) / (root - 1.0), 0.0, 1.0)
    return float(math.sqrt(n_bands) * np.mean(terms))


def prox_l1(y, threshold: float) -> np.ndarray:
    """Soft threshold ``sgn(y) * max(|y| - threshold, 0)``."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    y = np.asarray(y, dtype=np.float64)
    return np.sign(y) * np.maximum(np.abs(y) - threshold, 0.0)


def augment_for_asc(a, x, gamma: float):
    """Append a constant band ``gamma`` to the cube and a row ``gamma`` to ``x``."""
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    a = np.asarray(a, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    a_aug = np.concatenate([a, np.full((1,) + a.shape[1:], gamma)], axis=0)
    x_aug = np.concatenate([x, np.full((1, x.shape[1]), gamma)], axis=0)
    return a_aug, x_aug


def strip_asc(x) -> np.ndarray:
    return np.asarray(x)[:-1]


def _yyt(y: np.ndarray) -> np.ndarray:
    return einstein_product(y, group_transpose(y, 1), y.ndim - 1)


def _guarded(num: np.ndarray, den: np.ndarray, eps: float) -> np.ndarray:
    # nonpositive denominators (possible through lambda*(x - q)) are raised to eps
    return num / np.maximum(den, eps)


def update_x(state: EntfState, a, cfg: EntfConfig) -> np.ndarray:
    x, y = state.x, state.y
    num = einstein_product(a, group_transpose(y, 1), y.ndim - 1)
    den = x @ _yyt(y)
    if cfg.lambda_x:
        den = den + cfg.lambda_x * (x - state.q)
    new = np.maximum(0.0, x * _guarded(num, den, cfg.eps_div))
    if state.asc > 0:
        new[-1] = state.asc
    return new


def update_y(state: EntfState, a, cfg: EntfConfig) -> np.ndarray:
    """Abundance update; ``state.x`` must already hold this sweep's endmembers."""
    x, y = state.x, state.y
    num = einstein_product(x.T, a, 1)
    den = einstein_product(x.T @ x, y, 1)
    if cfg.lambda_y:
        den = den + cfg.lambda_y * (y - state.p)
    return np.maximum(0.0, y * _guarded(num, den, cfg.eps_div))


def update_q(x, rank_x: int) -> np.ndarray:
    """Low-rank surrogate of ``x``; deliberately not clamped to be nonnegative."""
    x = np.asarray(x, dtype=np.float64)
    if not 1 <= rank_x <= min(x.shape):
        raise ValueError(f"rank_x must be in [1, {min(x.shape)}], got {rank_x}")
    if rank_x == min(x.shape):
        return x.copy()
    return truncated_svd(x, rank_x)


def surrogate_q(x: np.ndarray, rank_x: int, asc: float) -> np.ndarray:
    """``update_q`` on the endmember rows; the pinned row is copied through."""
    if asc > 0:
        return np.concatenate([update_q(x[:-1], rank_x), x[-1:]], axis=0)
    return update_q(x, rank_x)


def objective(state: EntfState, a, cfg: EntfConfig) -> float:
    resid = a - einstein_product(state.x, state.y, 1)
    val = 0.5 * float(np.vdot(resid, resid))
    if cfg.lambda_s:
        val += float(cfg.lambda_s) * float(np.abs(state.p).sum())
    if cfg.lambda_y:
        val += 0.5 * cfg.lambda_y * frobenius_norm(state.y - state.p) ** 2
    if cfg.lambda_x:
        val += 0.5 * cfg.lambda_x * frobenius_norm(state.x - state.q) ** 2
    return val


def relative_change(new: np.ndarray, old: np.ndarray) -> float:
    den = frobenius_norm(old)
    num = frobenius_norm(new - old)
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den


def working_problem(a, cfg: EntfConfig):
    """Return the cube the solver iterates on (augmented when ASC is active)."""
    a = np.asarray(a, dtype=np.float64)
    if cfg.gamma_asc:
        return np.concatenate(
            [a, np.full((1,) + a.shape[1:], cfg.gamma_asc)], axis=0
        )
    return a


def initialize(a, cfg: EntfConfig) -> EntfState:
    """Uniform ``(eps_div, 1]`` factors from ``cfg.seed``; ``p = y`` and ``q = x``.

    ``cfg`` must be resolved (see :meth:`EntfConfig.resolve`).
    """
    a = np.asarray(a, dtype=np.float64)
    rng = np.random.default_rng(cfg.seed)
    lo = cfg.eps_div
    x = 1.0 - (1.0 - lo) * rng.random((a.shape[0], cfg.r))
    y = 1.0 - (1.0 - lo) * rng.random((cfg.r,) + a.shape[1:])
    asc = float(cfg.gamma_asc or 0.0)
    if asc > 0:
        _, x = augment_for_asc(a, x, asc)
    return EntfState(x=x, y=y, p=y.copy(), q=x.copy(), asc=asc)


def entf_step(state: EntfState, a_work, cfg: EntfConfig) -> EntfState:
    """One sweep X -> Y -> P -> Q on the working (possibly augmented) cube."""
    x = update_x(state, a_work, cfg)
    y = update_y(dataclasses.replace(state, x=x), a_work, cfg)
    p = prox_l1(y, cfg.threshold)
    q = surrogate_q(x, cfg.rank_x, state.asc)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise SolverDivergenceError(f"non-finite iterate at sweep {state.iter + 1}")
    new = EntfState(
        x=x,
        y=y,
        p=p,
        q=q,
        iter=state.iter + 1,
        asc=state.asc,
        rel_change_x=relative_change(
            x[:-1] if state.asc > 0 else x, state.endmembers
        ),
        rel_change_y=relative_change(y, state.y),
        objective_history=state.objective_history,
    )
    new.objective_history.append(objective(new, a_work, cfg))
    return new


def has_converged(state: EntfState, cfg: EntfConfig) -> bool:
    return state.rel_change_x <= cfg.eps_stop and state.rel_change_y <= cfg.eps_stop


def check_input(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim < 2:
        raise ValueError(f"input must have a band mode and spatial modes, got order {a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ValueError("input cube has non-finite entries")
    if np.any(a < 0):
        raise ValueError("input cube must be nonnegative")
    return a


def trace_row(state: EntfState) -> tuple:
    return (state.iter, state.objective_history[-1], state.rel_change_x, state.rel_change_y)


def finish(state: EntfState, converged: bool, trace: list, cycles=None) -> EntfResult:
    x = state.endmembers.copy()
    return EntfResult(
        x=x,
        y=state.y.copy(),
        converged=converged,
        iterations=state.iter,
        reconstruction=einstein_product(x, state.y, 1),
        objective_history=list(state.objective_history),
        trace=trace,
        cycles=cycles or [],
    )


def run_entf(a, cfg: EntfConfig, init: EntfState | None = None) -> EntfResult:
    """Iterate :func:`entf_step` until both relative changes drop below
    ``cfg.eps_stop`` or ``cfg.max_iter`` sweeps have run."""
    a = check_input(a)
    cfg = cfg.resolve(a)
    a_work = working_problem(a, cfg)
    state = init if init is not None else initialize(a, cfg)
    trace = []
    converged = False
    while state.iter < cfg.max_iter:
        state = entf_step(state, a_work, cfg)
        trace.append(trace_row(state))
        if has_converged(state, cfg):
            converged = True
            break
    log.debug("entf: %d sweeps, converged=%s", state.iter, converged)
    return finish(state, converged, trace)
