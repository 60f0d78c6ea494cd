"""Pseudospectral toolkit for quantitative scattering bounds.

Periodic grids, a catalog of time-dependent potentials with analytic Fourier
data, time-translated interaction operators and their iterated time
integrals, wave-operator series, split-step and nonlinear propagation, and
the estimation machinery that audits the bounds.
"""

__version__ = "0.1.0"

from .grids import (
    CutoffProfile,
    Field,
    GridSpec,
    Multiplier,
    NyquistWarning,
    forward_transform,
    free_propagate,
    inverse_transform,
    lp_norm,
    make_cutoff,
)

__all__ = [
    "__version__",
    "GridSpec",
    "Field",
    "Multiplier",
    "CutoffProfile",
    "NyquistWarning",
    "forward_transform",
    "inverse_transform",
    "free_propagate",
    "make_cutoff",
    "lp_norm",
]
