"""Periodic pseudospectral grids, fields, multipliers, and frequency cutoffs.

Everything downstream works on a uniform periodic box [-L, L)^dim with N points
per axis (N a power of two). The frequency lattice is xi_k = (pi/L) k for
k in [-N/2, N/2), stored in FFT order. Transforms are unitary, so the free
flow and all diagonal-in-frequency operators are exactly norm preserving in l2.
"""

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
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
    "dense_transform_matrix",
]


class NyquistWarning(UserWarning):
    """Raised when a frequency threshold reaches or exceeds the grid Nyquist line."""


def _is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on [-half_length, half_length)^dim.

    Parameters
    ----------
    dim : int
        Spatial dimension, 1 to 3.
    points_per_axis : int
        Points per axis N, a power of two, at least 8.
    half_length : float
        Box half width L. Cell size is h = 2L/N and the frequency lattice
        spacing is pi/L.
    """

    dim: int
    points_per_axis: int
    half_length: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2, or 3, got {self.dim}")
        if not _is_power_of_two(self.points_per_axis) or self.points_per_axis < 8:
            raise ValueError(
                f"points_per_axis must be a power of two >= 8, got {self.points_per_axis}"
            )
        if not self.half_length > 0:
            raise ValueError(f"half_length must be positive, got {self.half_length}")

    @property
    def n(self):
        return self.points_per_axis

    @property
    def h(self):
        return 2.0 * self.half_length / self.points_per_axis

    @property
    def size(self):
        return self.points_per_axis**self.dim

    @property
    def shape(self):
        return (self.points_per_axis,) * self.dim

    @property
    def freq_step(self):
        return math.pi / self.half_length

    @property
    def nyquist(self):
        """Largest frequency magnitude on the lattice, (N/2) * pi/L."""
        return (self.points_per_axis // 2) * self.freq_step

    @cached_property
    def x_axis(self):
        """Sample positions along one axis, x_j = -L + j h."""
        return -self.half_length + self.h * np.arange(self.points_per_axis)

    @cached_property
    def xi_axis(self):
        """Frequency lattice along one axis in FFT order."""
        return 2.0 * math.pi * np.fft.fftfreq(self.points_per_axis, d=self.h)

    @cached_property
    def x_mesh(self):
        """Tuple of dim position arrays, each flattened row-major to length size."""
        axes = np.meshgrid(*([self.x_axis] * self.dim), indexing="ij")
        return tuple(a.reshape(-1) for a in axes)

    @cached_property
    def xi_mesh(self):
        """Tuple of dim frequency arrays (FFT order), flattened row-major."""
        axes = np.meshgrid(*([self.xi_axis] * self.dim), indexing="ij")
        return tuple(a.reshape(-1) for a in axes)

    @cached_property
    def xi_squared(self):
        """|xi|^2 on the flattened frequency lattice."""
        out = np.zeros(self.size)
        for a in self.xi_mesh:
            out += a * a
        return out

    @cached_property
    def xi_radius(self):
        return np.sqrt(self.xi_squared)

    @cached_property
    def index_mesh(self):
        """Signed integer lattice indices k per axis (FFT order), flattened."""
        k = np.rint(self.xi_axis / self.freq_step).astype(int)
        axes = np.meshgrid(*([k] * self.dim), indexing="ij")
        return tuple(a.reshape(-1) for a in axes)


@dataclass
class Field:
    """A complex field sampled on a grid; values flat, row-major, length grid.size."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex).reshape(-1)
        if vals.size != self.grid.size:
            raise ValueError(
                f"field length {vals.size} does not match grid size {self.grid.size}"
            )
        # fresh storage so callers can treat fields as values
        self.values = vals.copy() if vals is self.values else vals

    def shaped(self):
        return self.values.reshape(self.grid.shape)

    def copy(self):
        return Field(self.grid, self.values.copy())


@dataclass
class Multiplier:
    """Diagonal-in-frequency operator given by a symbol on the frequency lattice."""

    grid: GridSpec
    symbol: np.ndarray

    def __post_init__(self):
        sym = np.asarray(self.symbol).reshape(-1)
        if sym.size != self.grid.size:
            raise ValueError("symbol length does not match grid size")
        self.symbol = sym

    def apply(self, field):
        if field.grid != self.grid:
            raise ValueError("field and multiplier live on different grids")
        spec = np.fft.fftn(field.shaped(), norm="ortho").reshape(-1)
        out = np.fft.ifftn(
            (self.symbol * spec).reshape(self.grid.shape), norm="ortho"
        )
        return Field(self.grid, out.reshape(-1))

    def apply_raw(self, shaped_values):
        """Same operator on a raw shaped array (batch axes allowed on the left)."""
        spec = np.fft.fftn(shaped_values, axes=tuple(range(-self.grid.dim, 0)))
        spec *= self.symbol.reshape(self.grid.shape)
        return np.fft.ifftn(spec, axes=tuple(range(-self.grid.dim, 0)))


# degree-9 smoothstep on [1/2, 1]: the unique polynomial of degree 9 that rises
# 0 -> 1 with four vanishing derivatives at both ends, so the profile is C^4
_SMOOTH9 = (126.0, -420.0, 540.0, -315.0, 70.0)  # coefficients of u^5 .. u^9


@dataclass(frozen=True)
class CutoffProfile:
    """C^4 threshold shape: 0 below 1/2, 1 above 1, degree-9 smoothstep between.

    Thresholding at scale M is profile(t / M).
    """

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        u = np.clip(2.0 * lam - 1.0, 0.0, 1.0)
        u5 = u**5
        out = u5 * (
            _SMOOTH9[0]
            + u * (_SMOOTH9[1] + u * (_SMOOTH9[2] + u * (_SMOOTH9[3] + u * _SMOOTH9[4])))
        )
        return out

    def scaled(self, t, threshold):
        if threshold <= 0:
            raise ValueError(f"cutoff threshold must be positive, got {threshold}")
        return self(np.asarray(t, dtype=float) / threshold)


def make_cutoff(grid, kind, threshold, profile=None):
    """Frequency cutoff multiplier.

    kind "high" keeps |xi| >= threshold (smoothly, onset at threshold/2); "low" is
    its exact complement, so high + low is the identity by construction. A
    threshold at or beyond the grid Nyquist line still returns a multiplier but
    emits NyquistWarning, since the surviving band is not resolved.
    """
    if profile is None:
        profile = CutoffProfile()
    if threshold <= 0:
        raise ValueError(f"cutoff threshold must be positive, got {threshold}")
    if kind not in ("high", "low"):
        raise ValueError(f"cutoff kind must be 'high' or 'low', got {kind!r}")
    if threshold >= grid.nyquist:
        warnings.warn(
            f"cutoff threshold {threshold} reaches the Nyquist line {grid.nyquist:.6g}",
            NyquistWarning,
            stacklevel=2,
        )
    sym = profile.scaled(grid.xi_radius, threshold)
    if kind == "low":
        sym = 1.0 - sym
    return Multiplier(grid, sym)


def forward_transform(field):
    """Unitary DFT of a field; returns the flat spectral vector (FFT order)."""
    return np.fft.fftn(field.shaped(), norm="ortho").reshape(-1)


def inverse_transform(grid, spectrum):
    """Inverse of forward_transform."""
    spec = np.asarray(spectrum, dtype=complex).reshape(grid.shape)
    return Field(grid, np.fft.ifftn(spec, norm="ortho").reshape(-1))


def free_propagate(field, t):
    """Free flow for time t: the multiplier exp(-i t |xi|^2)."""
    if t == 0:
        return field.copy()
    sym = np.exp(-1j * t * field.grid.xi_squared)
    return Multiplier(field.grid, sym).apply(field)


def free_propagate_raw(grid, shaped_values, t):
    """Free flow on a raw shaped array (batch axes allowed)."""
    axes = tuple(range(-grid.dim, 0))
    spec = np.fft.fftn(shaped_values, axes=axes)
    spec *= np.exp(-1j * t * grid.xi_squared).reshape(grid.shape)
    return np.fft.ifftn(spec, axes=axes)


def lp_norm(field, p):
    """Discrete L^p norm (sum |v|^p h^dim)^(1/p); p = inf is the max norm."""
    if p != math.inf and p < 1:
        raise ValueError(f"p must be >= 1 or inf, got {p}")
    mags = np.abs(field.values)
    if p == math.inf:
        return float(mags.max())
    hd = field.grid.h**field.grid.dim
    if p == 2:
        # fsum-free fast path, still accurate: dot product in double
        return float(math.sqrt(float(np.dot(mags, mags)) * hd))
    return float((np.sum(mags**p) * hd) ** (1.0 / p))


def dense_transform_matrix(grid):
    """Dense unitary DFT matrix on the flattened grid (size x size).

    Kronecker product of per-axis unitary DFT matrices; intended for small
    grids where dense-operator oracles are affordable.
    """
    n = grid.points_per_axis
    j = np.arange(n)
    f1 = np.exp(-2j * math.pi * np.outer(j, j) / n) / math.sqrt(n)
    out = f1
    for _ in range(grid.dim - 1):
        out = np.kron(out, f1)
    return out
