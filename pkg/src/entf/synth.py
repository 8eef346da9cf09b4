"""Synthetic hyperspectral scenes under the linear mixing model."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor_core import einstein_product, frobenius_norm

ENDMEMBER_FAMILIES = ("smooth", "random")
ABUNDANCE_FAMILIES = ("dirichlet", "smooth")


@dataclass
class SyntheticScene:
    endmembers: np.ndarray  # I x r
    abundances: np.ndarray  # r x J x K
    clean: np.ndarray
    noisy: np.ndarray
    snr_db: float  # realized, after clamping; inf when noiseless
    seed: int


def gen_endmembers(i_bands: int, r: int, seed, family: str = "smooth") -> np.ndarray:
    """Strictly positive, unit-max spectra as the columns of an ``I x r`` tensor.

    ``smooth`` columns are a floor plus 2-4 Gaussian bumps whose widths are
    at least 2.5 bands; ``random`` columns are i.i.d. uniform.
    """
    if r < 2 or i_bands < r:
        raise ValueError(f"need r >= 2 and i_bands >= r, got r={r}, i_bands={i_bands}")
    rng = np.random.default_rng(seed)
    if family == "random":
        x = 1.0 - rng.random((i_bands, r))
    elif family == "smooth":
        t = np.arange(i_bands, dtype=np.float64)
        lo_w = max(2.5, 0.06 * i_bands)
        hi_w = max(4.0, 0.2 * i_bands)
        x = np.empty((i_bands, r))
        for c in range(r):
            col = np.full(i_bands, 0.05 + 0.1 * rng.random())
            for _ in range(rng.integers(2, 5)):
                centre = rng.uniform(-0.1, 1.1) * (i_bands - 1)
                width = rng.uniform(lo_w, hi_w)
                col += rng.uniform(0.2, 1.0) * np.exp(-0.5 * ((t - centre) / width) ** 2)
            x[:, c] = col
    else:
        raise ValueError(f"unknown endmember family {family!r}; expected one of {ENDMEMBER_FAMILIES}")
    return x / x.max(axis=0)


def gen_abundances(r: int, j: int, k: int, seed, family: str = "dirichlet") -> np.ndarray:
    """Abundance maps of shape ``r x J x K`` with every pixel on the simplex.

    ``smooth`` maps are a softmax of random cubic polynomial fields over the
    image plane, which gives spatially coherent regions with near-pure areas.
    """
    if r < 2:
        raise ValueError("need r >= 2")
    rng = np.random.default_rng(seed)
    if family == "dirichlet":
        y = rng.dirichlet(np.ones(r), size=(j, k))
        y = np.moveaxis(y, -1, 0)
    elif family == "smooth":
        u, v = np.meshgrid(np.linspace(-1, 1, j), np.linspace(-1, 1, k), indexing="ij")
        basis = np.stack([u**p * v**q for p in range(4) for q in range(4 - p)])
        coef = rng.normal(size=(r, basis.shape[0]))
        fields = np.tensordot(coef, basis, axes=1)
        fields *= 4.0 / fields.std(axis=(1, 2), keepdims=True)
        fields -= fields.max(axis=0, keepdims=True)
        y = np.exp(fields)
    else:
        raise ValueError(f"unknown abundance family {family!r}; expected one of {ABUNDANCE_FAMILIES}")
    y = np.ascontiguousarray(y)
    return y / y.sum(axis=0, keepdims=True)


def snr_db(clean, noisy) -> float:
    err = frobenius_norm(np.asarray(noisy) - np.asarray(clean))
    if err == 0:
        return math.inf
    return 20.0 * math.log10(frobenius_norm(clean) / err)


def add_noise(clean, snr: float, seed, clamp: bool = True) -> np.ndarray:
    """Add i.i.d. Gaussian noise rescaled so that the SNR is exactly ``snr`` dB.

    The SNR is the ratio of whole-cube Frobenius energies. With ``clamp`` the
    result is clipped at zero afterwards, which nudges the realized SNR up.
    """
    if snr < 0:
        raise ValueError("snr_db must be >= 0")
    clean = np.asarray(clean, dtype=np.float64)
    signal = frobenius_norm(clean)
    if signal == 0:
        raise ValueError("cannot set an SNR on an all-zero cube")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(clean.shape)
    noise *= signal / (frobenius_norm(noise) * 10.0 ** (snr / 20.0))
    noisy = clean + noise
    if clamp:
        np.maximum(noisy, 0.0, out=noisy)
    return noisy


def make_scene(
    bands: int,
    width: int,
    height: int,
    r: int,
    snr: float | None = None,
    seed: int = 0,
    endmember_family: str = "smooth",
    abundance_family: str = "dirichlet",
) -> SyntheticScene:
    """Generate a full scene; ``snr=None`` (or inf) leaves it noiseless."""
    s_end, s_abund, s_noise = np.random.SeedSequence(seed).spawn(3)
    x = gen_endmembers(bands, r, s_end, endmember_family)
    y = gen_abundances(r, width, height, s_abund, abundance_family)
    clean = einstein_product(x, y, 1)
    if snr is None or math.isinf(snr):
        noisy = clean.copy()
        realized = math.inf
    else:
        noisy = add_noise(clean, snr, s_noise)
        realized = snr_db(clean, noisy)
    return SyntheticScene(x, y, clean, noisy, realized, seed)
