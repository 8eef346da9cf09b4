"""Nonnegative tensor factorization under the Einstein product, with
sequence extrapolation and synthetic hyperspectral scenes."""
from .extrapolation import ExtrapConfig, entf_rre, entf_tet, rre, tet
from .solver import EntfConfig, EntfResult, run_entf
from .synth import make_scene

__all__ = [
    "EntfConfig",
    "EntfResult",
    "ExtrapConfig",
    "entf_rre",
    "entf_tet",
    "make_scene",
    "rre",
    "run_entf",
    "tet",
]
__version__ = "0.1.0"
