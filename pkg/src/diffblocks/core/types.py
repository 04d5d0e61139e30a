"""Common type definitions for diffblocks."""

from enum import Enum
from typing import Protocol

import numpy as np
from numpy.typing import NDArray

FloatArray = NDArray[np.float64]


class FluxKind(str, Enum):
    """Diffusivity catalog; values are the config/CLI strings."""
    LINEAR = "linear"
    PERONA_MALIK_EXP = "pm_exp"
    CHARBONNIER = "charbonnier"


class Scheme(str, Enum):
    """Time stepping / solver schemes selectable from the harness."""
    EXPLICIT = "explicit"
    FSI = "fsi"
    IMPLICIT = "implicit"
    MULTIGRID = "multigrid"


class CompareMode(str, Enum):
    """Named scheme comparisons."""
    FSI_VS_EXPLICIT = "fsi_vs_explicit"
    IMPLICIT_VS_EXPLICIT = "implicit_vs_explicit"
    MULTIGRID_VS_JACOBI = "multigrid_vs_jacobi"
    STABILITY_CONVERSE = "stability_converse"


class CoarseSolver(str, Enum):
    """How the coarsest multigrid level is solved."""
    DIRECT = "direct"
    SMOOTHER_ONLY = "smoother_only"


class Operator(Protocol):
    """A linear map K: R^n_in -> R^n_out with an exact adjoint."""

    @property
    def n_in(self) -> int:
        ...

    @property
    def n_out(self) -> int:
        ...

    def apply(self, u: FloatArray) -> FloatArray:
        """Return K u."""
        ...

    def apply_adjoint(self, v: FloatArray) -> FloatArray:
        """Return Kᵀ v."""
        ...
