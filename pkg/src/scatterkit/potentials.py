"""Catalog of time-dependent potentials with analytic Fourier data.

Every potential here knows how to evaluate itself on a grid, produce its
continuum Fourier transform on the frequency lattice, and report the scalar
constants that drive the operator bounds downstream: the total variation of
the Fourier data m(t), its time accumulation c(t), and (for the smooth
families) derivative-budget constants of Mikhlin type.

Conventions: the continuum transform carries the (2pi)^(-n/2) prefactor, i.e.
V(x) = (2pi)^(-n/2) * integral of V-hat(xi) e^(i xi.x) d xi. Lattice
coefficients c_k are defined by V(x_j) = sum_k c_k e^(i xi_k . x_j), so for a
well-resolved potential c_k ~ (2pi)^(-n/2) V-hat(xi_k) (pi/L)^n.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .grids import CutoffProfile, Field

__all__ = [
    "TimeEnvelope",
    "ConstEnvelope",
    "QuenchEnvelope",
    "TanhEnvelope",
    "LogOscEnvelope",
    "InversePowerEnvelope",
    "PlaneWaveSum",
    "GaussianWell",
    "Enveloped",
    "Moving",
    "SelfSimilar",
    "SumPotential",
    "PotentialConstants",
    "UnsupportedSpecError",
    "evaluate",
    "fourier_data",
    "total_variation",
    "accumulated_c",
    "lattice_coefficients",
    "lattice_mass",
    "accumulated_lattice_mass",
    "mikhlin_data",
    "planewave_terms",
    "modal_terms",
    "ModalData",
]

_TWO_PI = 2.0 * math.pi


class UnsupportedSpecError(ValueError):
    """The requested analysis is not defined for this potential family."""


# ---------------------------------------------------------------------------
# time envelopes
# ---------------------------------------------------------------------------


class TimeEnvelope:
    """Base for scalar time profiles with closed-form derivatives to order 4."""

    family_constant = None  # derivative-budget constant where the family has one

    def __call__(self, t):
        return self.derivative(t, 0)

    def derivative(self, t, order):
        raise NotImplementedError

    def breakpoints(self):
        """Times where the profile is not smooth, for quadrature splitting."""
        return ()

    def _signed(self, t, order):
        """Evaluate an even-in-t profile given its derivative at |t|."""
        t = np.asarray(t, dtype=float)
        val = self._derivative_abs(np.abs(t), order)
        if order % 2 == 1:
            val = np.where(t < 0, -val, val)
        return val


@dataclass(frozen=True)
class ConstEnvelope(TimeEnvelope):
    value: float = 1.0
    family_constant = 1.0

    def derivative(self, t, order):
        t = np.asarray(t, dtype=float)
        if order == 0:
            return np.full_like(t, self.value)
        return np.zeros_like(t)


# derivative tables of the degree-9 smoothstep, for the smooth quench profile
_S9 = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 126.0, -420.0, 540.0, -315.0, 70.0])
_S9_DERIVS = [_S9]
for _ in range(4):
    _S9_DERIVS.append(np.polynomial.polynomial.polyder(_S9_DERIVS[-1]))


@dataclass(frozen=True)
class QuenchEnvelope(TimeEnvelope):
    """Switch-on at a delay: sharp step at t = delay, or the C^4 ramp on
    [delay, 2*delay] built from the cutoff profile."""

    delay: float
    smooth: bool = False
    family_constant = 1.0

    def __post_init__(self):
        if self.delay <= 0:
            raise ValueError("quench delay must be positive")

    def derivative(self, t, order):
        t = np.asarray(t, dtype=float)
        if not self.smooth:
            if order == 0:
                return (t >= self.delay).astype(float)
            return np.zeros_like(t)
        u = t / self.delay - 1.0
        inside = (u > 0.0) & (u < 1.0)
        out = np.zeros_like(t)
        if order == 0:
            out = np.where(u >= 1.0, 1.0, out)
            out = np.where(
                inside, np.polynomial.polynomial.polyval(np.clip(u, 0, 1), _S9), out
            )
            return out
        coeffs = _S9_DERIVS[order]
        val = np.polynomial.polynomial.polyval(np.clip(u, 0, 1), coeffs)
        return np.where(inside, val / self.delay**order, out)

    def breakpoints(self):
        if self.smooth:
            return (self.delay, 2.0 * self.delay)
        return (self.delay,)


@dataclass(frozen=True)
class TanhEnvelope(TimeEnvelope):
    """tanh(t); derivative budget constant 4 for the weighted sups."""

    family_constant = 4.0

    def derivative(self, t, order):
        t = np.asarray(t, dtype=float)
        s = np.tanh(t)
        if order == 0:
            return s
        w = 1.0 - s * s
        if order == 1:
            return w
        if order == 2:
            return -2.0 * s * w
        if order == 3:
            return w * (6.0 * s * s - 2.0)
        if order == 4:
            return w * (16.0 * s - 24.0 * s**3)
        raise ValueError("derivatives implemented to order 4")


@dataclass(frozen=True)
class LogOscEnvelope(TimeEnvelope):
    """sin(omega * log(1+|t|)) / (1+|t|)^decay, the slow log-phase oscillation."""

    omega: float
    decay: float = 0.0
    family_constant = 2.0

    def _derivative_abs(self, t, order):
        # f = Im (1+t)^(i omega - decay); d^a f = Im [prod_(j<a)(i w - d - j)] (1+t)^(i w - d - a)
        z = complex(-self.decay, self.omega)
        coef = 1.0 + 0.0j
        for j in range(order):
            coef *= z - j
        return np.imag(coef * (1.0 + t) ** (z - order))

    def derivative(self, t, order):
        return self._signed(t, order)


@dataclass(frozen=True)
class InversePowerEnvelope(TimeEnvelope):
    """sum_j coeffs[j-1] / (1+|t|)^j, j = 1..len(coeffs)."""

    coeffs: tuple
    t0: float = 1.0
    family_constant = 2.0

    def _derivative_abs(self, t, order):
        out = np.zeros_like(t)
        for idx, a in enumerate(self.coeffs):
            j = idx + 1
            fac = 1.0
            for m in range(order):
                fac *= -(j + m)
            out = out + a * fac * (1.0 + t) ** (-(j + order))
        return out

    def derivative(self, t, order):
        return self._signed(t, order)


# ---------------------------------------------------------------------------
# potential variants
# ---------------------------------------------------------------------------


def _as_vec(v, name):
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a flat vector")
    return tuple(float(x) for x in arr)


class PotentialBase:
    @property
    def is_static(self):
        return False

    def breakpoints(self):
        return ()

    def envelope_bound(self, t):
        """|scalar time factor| at t, used by fast mass evaluations."""
        return np.ones_like(np.asarray(t, dtype=float))

    def _fourier_at(self, xi_cols, t):
        raise UnsupportedSpecError(
            f"{type(self).__name__} has no pointwise continuum Fourier data"
        )

    def _atoms(self, t):
        """List of (amplitude(t), frequency vector) for the atomic spectral part."""
        return []

    def spectral_extent(self):
        raise UnsupportedSpecError(
            f"{type(self).__name__} has no finite spectral extent"
        )


@dataclass(frozen=True)
class PlaneWaveSum(PotentialBase):
    """Finite sum of plane waves a_j exp(i b_j . x).

    Frequencies must sit on the target grid's lattice; they are snapped within
    snap_tol * (pi/L) and rejected beyond that.
    """

    terms: tuple  # ((complex amplitude, frequency tuple), ...)
    snap_tol: float = 1e-8

    def __post_init__(self):
        norm = tuple((complex(a), _as_vec(b, "frequency")) for a, b in self.terms)
        object.__setattr__(self, "terms", norm)
        if not norm:
            raise ValueError("PlaneWaveSum needs at least one term")
        dims = {len(b) for _, b in norm}
        if len(dims) != 1:
            raise ValueError("all frequencies must share one dimension")

    @property
    def dim(self):
        return len(self.terms[0][1])

    @property
    def is_static(self):
        return True

    def lattice_indices(self, grid):
        """Per-term integer lattice indices; raises if any term is off-lattice."""
        step = grid.freq_step
        half = grid.points_per_axis // 2
        out = []
        for a, b in self.terms:
            ks = []
            for comp in b:
                k = int(round(comp / step))
                if abs(comp - k * step) > self.snap_tol * step:
                    raise ValueError(
                        f"frequency component {comp} is off-lattice "
                        f"(nearest lattice point {k * step}, spacing {step})"
                    )
                if not (-half <= k <= half - 1):
                    raise ValueError(
                        f"frequency component {comp} falls outside the lattice range"
                    )
                ks.append(k)
            out.append(tuple(ks))
        return out

    def _values(self, x_cols, t):
        out = np.zeros_like(x_cols[0], dtype=complex)
        for a, b in self.terms:
            phase = np.zeros_like(x_cols[0])
            for comp, xs in zip(b, x_cols):
                phase = phase + comp * xs
            out += a * np.exp(1j * phase)
        return out

    def _atoms(self, t):
        return [(a, np.asarray(b)) for a, b in self.terms]

    def spectral_extent(self):
        return max(float(np.linalg.norm(b)) for _, b in self.terms)


@dataclass(frozen=True)
class GaussianWell(PotentialBase):
    """A exp(-|x - center|^2 / (2 sigma^2)); Fourier data in closed form."""

    amplitude: float
    sigma: float
    center: tuple = (0.0,)

    def __post_init__(self):
        object.__setattr__(self, "center", _as_vec(self.center, "center"))
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def dim(self):
        return len(self.center)

    @property
    def is_static(self):
        return True

    def _values(self, x_cols, t):
        q = np.zeros_like(x_cols[0])
        for c, xs in zip(self.center, x_cols):
            q = q + (xs - c) ** 2
        return self.amplitude * np.exp(-q / (2.0 * self.sigma**2)) + 0j

    def _fourier_at(self, xi_cols, t):
        s2 = self.sigma**2
        out = np.full_like(xi_cols[0], self.amplitude * self.sigma**self.dim, dtype=complex)
        for c, xs in zip(self.center, xi_cols):
            out = out * np.exp(-0.5 * s2 * xs**2 - 1j * c * xs)
        return out

    def _fourier_axis_factor(self, xi, c, order):
        """d^order/dxi^order of exp(-s2 xi^2/2 - i c xi), divided by the exponential."""
        s2 = self.sigma**2
        s = -s2 * xi - 1j * c
        if order == 0:
            return np.ones_like(xi, dtype=complex)
        if order == 1:
            return s
        if order == 2:
            return s * s - s2
        if order == 3:
            return s**3 - 3.0 * s2 * s
        if order == 4:
            return s**4 - 6.0 * s2 * s * s + 3.0 * s2 * s2
        raise ValueError("axis derivatives implemented to order 4")

    def fourier_derivative_at(self, xi_cols, orders):
        """Mixed partial of V-hat, orders a tuple of per-axis derivative counts."""
        out = self._fourier_at(xi_cols, 0.0)
        for axis, order in enumerate(orders):
            if order:
                out = out * self._fourier_axis_factor(
                    xi_cols[axis], self.center[axis], order
                )
        return out

    def spectral_extent(self):
        return 8.5 / self.sigma


@dataclass(frozen=True)
class Enveloped(PotentialBase):
    """spatial potential times a scalar time envelope."""

    spatial: PotentialBase
    envelope: TimeEnvelope

    @property
    def dim(self):
        return self.spatial.dim

    @property
    def is_static(self):
        return isinstance(self.envelope, ConstEnvelope) and self.spatial.is_static

    def breakpoints(self):
        return tuple(self.envelope.breakpoints()) + tuple(self.spatial.breakpoints())

    def envelope_bound(self, t):
        return np.abs(self.envelope(t)) * self.spatial.envelope_bound(t)

    def _values(self, x_cols, t):
        return complex(self.envelope(t)) * self.spatial._values(x_cols, t)

    def _fourier_at(self, xi_cols, t):
        return complex(self.envelope(t)) * self.spatial._fourier_at(xi_cols, t)

    def _atoms(self, t):
        f = complex(self.envelope(t))
        return [(a * f, b) for a, b in self.spatial._atoms(t)]

    def spectral_extent(self):
        return self.spatial.spectral_extent()


_PATHS = ("sin_log", "sqrt_shift", "linear")


@dataclass(frozen=True)
class Moving(PotentialBase):
    """spatial potential translated along path(t) * velocity.

    Paths: sin_log  -> sin(log(1 + |t|))       (bounded, derivative-budget class)
           sqrt_shift -> sqrt(1 + |t|)          (unbounded drift, outside that class)
           linear   -> t                        (constant-velocity drift)
    """

    spatial: PotentialBase
    path: str
    velocity: tuple

    def __post_init__(self):
        if self.path not in _PATHS:
            raise ValueError(f"path must be one of {_PATHS}, got {self.path!r}")
        object.__setattr__(self, "velocity", _as_vec(self.velocity, "velocity"))
        if len(self.velocity) != self.spatial.dim:
            raise ValueError("velocity dimension does not match the spatial part")

    @property
    def dim(self):
        return self.spatial.dim

    def path_value(self, t):
        t = np.asarray(t, dtype=float)
        if self.path == "sin_log":
            return np.sin(np.log1p(np.abs(t)))
        if self.path == "sqrt_shift":
            return np.sqrt(1.0 + np.abs(t))
        return t

    def offset(self, t):
        return np.asarray(self.velocity) * float(self.path_value(t))

    def envelope_bound(self, t):
        return self.spatial.envelope_bound(t)

    def _values(self, x_cols, t):
        off = self.offset(t)
        shifted = tuple(xs - o for xs, o in zip(x_cols, off))
        return self.spatial._values(shifted, t)

    def _fourier_at(self, xi_cols, t):
        off = self.offset(t)
        phase = np.zeros_like(xi_cols[0])
        for o, xs in zip(off, xi_cols):
            phase = phase + o * xs
        return np.exp(-1j * phase) * self.spatial._fourier_at(xi_cols, t)

    def _atoms(self, t):
        off = self.offset(t)
        return [
            (a * np.exp(-1j * float(np.dot(off, b))), b)
            for a, b in self.spatial._atoms(t)
        ]

    def spectral_extent(self):
        return self.spatial.spectral_extent()


@dataclass(frozen=True)
class SelfSimilar(PotentialBase):
    """sin(omega t)/|t|^(n/2) * V1(x/t), switched on for |t| >= onset."""

    spatial: PotentialBase
    onset: float
    omega: float

    def __post_init__(self):
        if self.onset <= 0:
            raise ValueError("onset must be positive")

    @property
    def dim(self):
        return self.spatial.dim

    def amplitude(self, t):
        t = np.asarray(t, dtype=float)
        mag = np.abs(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            amp = np.where(
                mag >= self.onset, np.sin(self.omega * t) / mag ** (self.dim / 2.0), 0.0
            )
        return amp

    def envelope_bound(self, t):
        return np.abs(self.amplitude(t))

    def breakpoints(self):
        return (self.onset,)

    def _values(self, x_cols, t):
        amp = float(self.amplitude(t))
        if amp == 0.0:
            return np.zeros_like(x_cols[0], dtype=complex)
        scaled = tuple(xs / t for xs in x_cols)
        return amp * self.spatial._values(scaled, t)

    def _fourier_at(self, xi_cols, t):
        amp = float(self.amplitude(t))
        if amp == 0.0:
            return np.zeros_like(xi_cols[0], dtype=complex)
        scaled = tuple(t * xs for xs in xi_cols)
        return amp * abs(t) ** self.dim * self.spatial._fourier_at(scaled, t)

    def spectral_extent(self):
        return self.spatial.spectral_extent() / self.onset


@dataclass(frozen=True)
class SumPotential(PotentialBase):
    parts: tuple

    def __post_init__(self):
        parts = tuple(self.parts)
        object.__setattr__(self, "parts", parts)
        if not parts:
            raise ValueError("SumPotential needs at least one part")
        dims = {p.dim for p in parts}
        if len(dims) != 1:
            raise ValueError("all parts must share one dimension")

    @property
    def dim(self):
        return self.parts[0].dim

    @property
    def is_static(self):
        return all(p.is_static for p in self.parts)

    def breakpoints(self):
        out = ()
        for p in self.parts:
            out = out + tuple(p.breakpoints())
        return out

    def envelope_bound(self, t):
        return sum(p.envelope_bound(t) for p in self.parts)

    def _values(self, x_cols, t):
        return sum(p._values(x_cols, t) for p in self.parts)

    def _fourier_at(self, xi_cols, t):
        out = np.zeros_like(xi_cols[0], dtype=complex)
        for p in self.parts:
            if not _is_atomic(p):
                out = out + p._fourier_at(xi_cols, t)
        return out

    def _atoms(self, t):
        out = []
        for p in self.parts:
            out.extend(p._atoms(t))
        return out

    def spectral_extent(self):
        return max(p.spectral_extent() for p in self.parts)


def _is_atomic(spec):
    """True if the spectral measure of spec is purely atomic (plane waves)."""
    if isinstance(spec, PlaneWaveSum):
        return True
    if isinstance(spec, (Enveloped, Moving)):
        return _is_atomic(spec.spatial)
    if isinstance(spec, SumPotential):
        return all(_is_atomic(p) for p in spec.parts)
    return False


def _has_atoms(spec):
    if isinstance(spec, PlaneWaveSum):
        return True
    if isinstance(spec, (Enveloped, Moving)):
        return _has_atoms(spec.spatial)
    if isinstance(spec, SumPotential):
        return any(_has_atoms(p) for p in spec.parts)
    return False


# ---------------------------------------------------------------------------
# grid-facing operations
# ---------------------------------------------------------------------------


def evaluate(spec, grid, t):
    """Sample V(., t) on the grid."""
    if spec.dim != grid.dim:
        raise ValueError("potential and grid dimensions differ")
    return Field(grid, spec._values(grid.x_mesh, t))


def fourier_data(spec, grid, t):
    """Continuum Fourier data on the frequency lattice (flat, FFT order).

    Smooth parts are the closed-form V-hat(xi_k, t). Atomic parts (plane
    waves) enter as single-cell weights a (2pi)^(n/2) / (pi/L)^n at their
    lattice point, so that the inverse Riemann sum reproduces the wave.
    """
    if spec.dim != grid.dim:
        raise ValueError("potential and grid dimensions differ")
    n = grid.dim
    out = np.zeros(grid.size, dtype=complex)
    if not _is_atomic(spec):
        out += _smooth_fourier(spec, grid.xi_mesh, t)
    atoms = spec._atoms(t)
    if atoms:
        cell = grid.freq_step**n
        shape = grid.shape
        half = grid.points_per_axis
        for a, b in atoms:
            ks = []
            for comp in b:
                k = int(round(comp / grid.freq_step))
                if abs(comp - k * grid.freq_step) > 1e-8 * grid.freq_step:
                    raise ValueError(
                        f"atomic frequency {comp} is off-lattice for this grid"
                    )
                ks.append(k % half)
            flat = np.ravel_multi_index(tuple(ks), shape)
            out[flat] += a * _TWO_PI ** (n / 2.0) / cell
    return out


def _smooth_fourier(spec, xi_cols, t):
    if isinstance(spec, SumPotential):
        return sum(
            _smooth_fourier(p, xi_cols, t)
            for p in spec.parts
            if not _is_atomic(p)
        )
    if _is_atomic(spec):
        return np.zeros_like(xi_cols[0], dtype=complex)
    return spec._fourier_at(xi_cols, t)


def lattice_coefficients(spec, grid, t):
    """Trigonometric coefficients c_k of the sampled potential (flat, FFT order)."""
    vals = evaluate(spec, grid, t).shaped()
    coeffs = np.fft.fftn(vals).reshape(-1) / grid.size
    parity = np.ones(grid.size)
    for k in grid.index_mesh:
        parity = parity * np.where(k % 2 == 0, 1.0, -1.0)
    return coeffs * parity


def lattice_mass(spec, grid, t):
    """Discrete coefficient mass sum_k |c_k| of the sampled potential."""
    vals = evaluate(spec, grid, t).shaped()
    return float(np.sum(np.abs(np.fft.fftn(vals))) / grid.size)


def accumulated_lattice_mass(spec, grid, T, num=257):
    """c_disc(T): Simpson accumulation of the lattice mass over [0, T]."""
    if T == 0:
        return 0.0
    ts = np.linspace(0.0, T, num if num % 2 == 1 else num + 1)
    vals = np.array([lattice_mass(spec, grid, s) for s in ts])
    return float(integrate.simpson(vals, x=ts))


# ---------------------------------------------------------------------------
# scalar constants
# ---------------------------------------------------------------------------

_QUAD_POINTS = {1: 4096, 2: 256, 3: 64}


def _quad_lattice(extent, dim):
    n = _QUAD_POINTS[dim]
    axis = np.linspace(-extent, extent, n, endpoint=False)
    step = axis[1] - axis[0]
    cols = np.meshgrid(*([axis] * dim), indexing="ij")
    return tuple(c.reshape(-1) for c in cols), step**dim


def total_variation(spec, t):
    """CL mass m(t) = (2pi)^(-n/2) * integral |V-hat(xi, t)| d xi.

    Atomic parts contribute sum |a_j(t)| exactly; smooth parts are integrated
    on a deterministic lattice covering the spectral extent (points per axis
    fixed by dimension, see _QUAD_POINTS).
    """
    n = spec.dim
    out = 0.0
    for a, _ in spec._atoms(t):
        out += abs(a)
    if not _is_atomic(spec):
        cols, cell = _quad_lattice(_smooth_extent(spec), n)
        vals = _smooth_fourier(spec, cols, t)
        out += float(np.sum(np.abs(vals))) * cell / _TWO_PI ** (n / 2.0)
    return out


def _smooth_extent(spec):
    if isinstance(spec, SumPotential):
        return max(
            _smooth_extent(p) for p in spec.parts if not _is_atomic(p)
        )
    return spec.spectral_extent()


def accumulated_c(spec, t, rtol=1e-9):
    """c(t) = integral_0^t m(s) ds, with m the CL mass of the Fourier data."""
    if t == 0:
        return 0.0
    if spec.is_static:
        return abs(t) * total_variation(spec, 0.0)
    pts = sorted(b for b in spec.breakpoints() if 0.0 < b < abs(t))
    val, _ = integrate.quad(
        lambda s: total_variation(spec, math.copysign(s, t)),
        0.0,
        abs(t),
        points=pts or None,
        limit=200,
        epsrel=rtol,
        epsabs=0.0,
    )
    return float(val)


# ---------------------------------------------------------------------------
# derivative-budget (Mikhlin-type) reporting
# ---------------------------------------------------------------------------


@dataclass
class PotentialConstants:
    """Scalar summary of a potential's bound-driving constants."""

    verdict: str  # "mikhlin" | "cl_only"
    mass_at_zero: float
    accumulated: float  # c(horizon)
    horizon: float
    family_c: float | None = None
    measured_c: float | None = None
    v0_mass: float | None = None
    k_m: float | None = None
    notes: str = ""


def _envelope_of(spec):
    if isinstance(spec, Enveloped):
        return spec.envelope
    return ConstEnvelope()


def _spatial_of(spec):
    if isinstance(spec, Enveloped):
        return spec.spatial
    return spec


def _measured_envelope_constant(env, horizon, samples=2001):
    """max over orders a<=4 of [sup_t (1+t)^a |f^(a)(t)| / (a! sup|f|)]^(1/a)."""
    ts = np.linspace(0.0, horizon, samples)
    ref = float(np.max(np.abs(env(ts))))
    if ref == 0.0:
        return 0.0
    best = 0.0
    for a in range(1, 5):
        sup = float(np.max((1.0 + ts) ** a * np.abs(env.derivative(ts, a)))) / (
            math.factorial(a) * ref
        )
        best = max(best, sup ** (1.0 / a))
    return best


def _gaussian_derivative_mass(spatial, max_order=2):
    """integral over xi of sum_(r,m; l,j<=2) |d^l_r d^j_m V-hat| (no prefactor)."""
    dim = spatial.dim
    cols, cell = _quad_lattice(spatial.spectral_extent(), dim)
    total = np.zeros_like(cols[0])
    for r in range(dim):
        for m in range(dim):
            for l in range(max_order + 1):
                for j in range(max_order + 1):
                    orders = [0] * dim
                    orders[r] += l
                    orders[m] += j
                    total = total + np.abs(
                        spatial.fourier_derivative_at(cols, tuple(orders))
                    )
    return float(np.sum(total)) * cell


def _km_estimate(spatial, n_r=512, dir_level=1, eta_scale=1.0):
    """Numeric estimate of the maximal 1D-transform constant K_m.

    For a panel of directions on the sphere (axis + diagonal sets), radial
    derivative orders j <= 2, offsets eta in a small sample, computes
    integral dk sup_eps |F_r[ r d^j V-hat(r dir - eta) exp(-eps/r) ](k)|
    and returns the largest value. A coarse, documented estimate: its only
    contract is stability under refinement, tested by doubling n_r and the
    direction panel.
    """
    dim = spatial.dim
    dirs = _direction_panel(dim, dir_level)
    weight = _sphere_measure(dim) / len(dirs)
    r_max = spatial.spectral_extent() + eta_scale * 2.0
    r = (np.arange(n_r) + 0.5) * (r_max / n_r)
    dr = r_max / n_r
    eps_grid = np.concatenate([[0.0], np.logspace(-3, 0, 7)])
    damp = np.exp(-eps_grid[:, None] / r[None, :])  # (n_eps, n_r)
    etas = [np.zeros(dim)]
    for ax in range(dim):
        e = np.zeros(dim)
        e[ax] = eta_scale
        etas.append(e)
    pad = 4 * n_r
    k_step = 2.0 * math.pi / (pad * dr)
    best = 0.0
    for eta in etas:
        for j in range(3):
            acc = 0.0
            for d in dirs:
                pts = tuple(r * d[ax] - eta[ax] for ax in range(dim))
                # radial derivative along the direction: chain rule over axes
                g = np.zeros(n_r, dtype=complex)
                if j == 0:
                    g = spatial.fourier_derivative_at(pts, (0,) * dim)
                else:
                    # sum over multi-indices of the j-th directional derivative
                    for combo in _axis_combos(dim, j):
                        coef = math.factorial(j)
                        orders = [0] * dim
                        for ax in combo:
                            orders[ax] += 1
                        for o in orders:
                            coef /= math.factorial(o)
                        dprod = np.prod([d[ax] for ax in combo])
                        g = g + coef * dprod * spatial.fourier_derivative_at(
                            pts, tuple(orders)
                        )
                integrand = r * g  # chi(r>=0) r (...)
                spect = np.fft.fft(integrand[None, :] * damp, n=pad, axis=1) * dr
                sup = np.max(np.abs(spect), axis=0)
                acc += weight * float(np.sum(sup)) * k_step
            best = max(best, acc)
    return best


def _axis_combos(dim, j):
    """Ordered-with-multiplicity axis tuples of length j (small j only)."""
    if j == 1:
        return [(ax,) for ax in range(dim)]
    out = []
    for a in range(dim):
        for b in range(a, dim):
            out.append((a, b))
    return out


def _direction_panel(dim, level):
    if dim == 1:
        return [np.array([1.0]), np.array([-1.0])]
    dirs = []
    for signs in np.ndindex(*((3,) * dim)):
        v = np.array(signs, dtype=float) - 1.0
        if not np.any(v):
            continue
        dirs.append(v / np.linalg.norm(v))
    if level > 1 and dim >= 2:
        extra = []
        for d in dirs:
            for ax in range(dim):
                e = np.zeros(dim)
                e[ax] = 1.0
                w = d + 0.5 * e
                extra.append(w / np.linalg.norm(w))
        dirs = dirs + extra
    return dirs


def _sphere_measure(dim):
    return {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}[dim]


def mikhlin_data(spec, horizon=32.0, n_r=512, dir_level=1, with_km=True):
    """Derivative-budget constants for the smooth catalog families.

    Returns PotentialConstants with the family constant (closed form where the
    family has one), a measured weighted-sup constant from the closed-form
    envelope derivatives, the derivative-sum mass of the spatial Fourier data,
    and a K_m estimate for time-independent wells. Plane-wave (atomic) specs
    get the "cl_only" verdict: the variation bound applies, the derivative
    budget does not. Families built around unbounded drifts or self-similar
    rescaling are outside this catalog and raise UnsupportedSpecError.
    """
    mass0 = total_variation(spec, 0.0)
    acc = accumulated_c(spec, horizon)
    if _is_atomic(spec):
        return PotentialConstants(
            verdict="cl_only",
            mass_at_zero=mass0,
            accumulated=acc,
            horizon=horizon,
            notes="atomic spectrum: variation bound only",
        )
    if isinstance(spec, SelfSimilar):
        raise UnsupportedSpecError(
            "self-similar rescaling is handled by the dilation route, not the "
            "derivative budget"
        )
    if isinstance(spec, Moving):
        if spec.path != "sin_log":
            raise UnsupportedSpecError(
                f"moving path {spec.path!r} has unbounded drift derivatives; "
                "no derivative-budget constant exists"
            )
        spatial = _spatial_of(spec.spatial)
        r_eff = spec.spatial.spectral_extent()
        speed = float(np.linalg.norm(spec.velocity))
        fam = 4.0 * speed * r_eff
        v0 = None
        if isinstance(spatial, GaussianWell):
            v0 = _gaussian_derivative_mass(spatial)
        return PotentialConstants(
            verdict="mikhlin",
            mass_at_zero=mass0,
            accumulated=acc,
            horizon=horizon,
            family_c=fam,
            v0_mass=v0,
            notes=f"bounded drift; effective support radius {r_eff:.3g}",
        )
    if isinstance(spec, SumPotential):
        subs = [mikhlin_data(p, horizon, n_r, dir_level, with_km=False) for p in spec.parts]
        if any(s.verdict == "cl_only" for s in subs):
            return PotentialConstants(
                verdict="cl_only",
                mass_at_zero=mass0,
                accumulated=acc,
                horizon=horizon,
                notes="sum contains an atomic part",
            )
        return PotentialConstants(
            verdict="mikhlin",
            mass_at_zero=mass0,
            accumulated=acc,
            horizon=horizon,
            family_c=max(s.family_c for s in subs),
            measured_c=max(s.measured_c or 0.0 for s in subs) or None,
            v0_mass=sum(s.v0_mass or 0.0 for s in subs) or None,
            notes="componentwise maximum/sum over parts",
        )

    env = _envelope_of(spec)
    spatial = _spatial_of(spec)
    if not isinstance(spatial, GaussianWell):
        raise UnsupportedSpecError(
            f"no derivative-budget rule for spatial part {type(spatial).__name__}"
        )
    fam = env.family_constant
    measured = _measured_envelope_constant(env, horizon)
    v0 = _gaussian_derivative_mass(spatial)
    km = None
    if with_km and isinstance(env, ConstEnvelope):
        km = _km_estimate(spatial, n_r=n_r, dir_level=dir_level)
    notes = ""
    if isinstance(env, LogOscEnvelope):
        s = math.hypot(env.omega, env.decay)
        notes = f"factorial prefactor 2^(s-1), s={s:.3g}, folded into the mass scale"
    return PotentialConstants(
        verdict="mikhlin",
        mass_at_zero=mass0,
        accumulated=acc,
        horizon=horizon,
        family_c=fam,
        measured_c=measured,
        v0_mass=v0,
        k_m=km,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# modal decompositions for the oscillatory fast paths
# ---------------------------------------------------------------------------


@dataclass
class ModalData:
    """Lattice-mode view of a potential on a grid.

    flat_indices : flat FFT-order lattice positions of the active modes
    k_vectors    : (modes, dim) integer lattice indices (signed)
    amplitude_of : callable t -> (modes,) complex coefficients c_k(t)
    separable    : True when amplitude_of(t) = c0 * scalar(t)
    """

    grid: object
    flat_indices: np.ndarray
    k_vectors: np.ndarray
    amplitude_of: object
    separable: bool


def planewave_terms(spec, grid, t):
    """Exact atoms (k index tuples, amplitudes at time t) for atomic specs."""
    if not _is_atomic(spec):
        raise UnsupportedSpecError(
            "exact plane-wave terms exist only for atomic-spectrum potentials"
        )
    step = grid.freq_step
    half = grid.points_per_axis // 2
    out = []
    for a, b in spec._atoms(t):
        ks = []
        for comp in b:
            k = int(round(comp / step))
            if abs(comp - k * step) > 1e-8 * step:
                raise ValueError(f"frequency component {comp} is off-lattice")
            if not (-half <= k <= half - 1):
                raise ValueError(f"frequency component {comp} outside the lattice")
            ks.append(k)
        out.append((tuple(ks), a))
    return out


def modal_terms(spec, grid, trunc=1e-13, probe_times=(0.0, 0.7, 1.9)):
    """Build the lattice-mode decomposition used by per-mode time integrals.

    The active index set is the union of supports of the sampled coefficient
    vectors at a few probe times. Amplitudes are factorized in closed form for
    static shapes under scalar envelopes or rigid motion; other families fall
    back to FFT sampling per requested time.
    """
    if spec.dim != grid.dim:
        raise ValueError("potential and grid dimensions differ")
    env = _envelope_of(spec)
    spatial = _spatial_of(spec)

    if isinstance(spec, Moving) or (
        isinstance(spec, Enveloped) and isinstance(spec.spatial, Moving)
    ):
        # rigid motion: phases e^{-i b . v path(t)} on static shape coefficients
        mover = spec if isinstance(spec, Moving) else spec.spatial
        scalar_env = env if isinstance(spec, Enveloped) else ConstEnvelope()
        base = lattice_coefficients(mover.spatial, grid, 0.0)
        idx = np.nonzero(np.abs(base) > trunc * np.max(np.abs(base)))[0]
        amps = base[idx]
        kvecs = np.stack([grid.index_mesh[a][idx] for a in range(grid.dim)], axis=1)
        bvecs = kvecs * grid.freq_step
        vel = np.asarray(mover.velocity)

        def amplitude_of(t, _amps=amps, _b=bvecs, _vel=vel, _m=mover, _e=scalar_env):
            ph = np.exp(-1j * float(_m.path_value(t)) * (_b @ _vel))
            return _amps * (complex(_e(t)) * ph)

        return ModalData(grid, idx, kvecs, amplitude_of, separable=False)

    if spatial.is_static and not isinstance(spec, SelfSimilar):
        base = lattice_coefficients(spatial, grid, 0.0)
        idx = np.nonzero(np.abs(base) > trunc * np.max(np.abs(base)))[0]
        amps = base[idx]
        kvecs = np.stack([grid.index_mesh[a][idx] for a in range(grid.dim)], axis=1)

        def amplitude_of(t, _amps=amps, _e=env):
            return _amps * complex(_e(t))

        return ModalData(grid, idx, kvecs, amplitude_of, separable=True)

    # general fallback: sample coefficients by FFT at each requested time
    support = np.zeros(grid.size, dtype=bool)
    scale = 0.0
    for tp in probe_times:
        c = lattice_coefficients(spec, grid, tp)
        scale = max(scale, float(np.max(np.abs(c))))
    for tp in probe_times:
        c = lattice_coefficients(spec, grid, tp)
        support |= np.abs(c) > trunc * scale
    idx = np.nonzero(support)[0]
    kvecs = np.stack([grid.index_mesh[a][idx] for a in range(grid.dim)], axis=1)

    def amplitude_of(t, _idx=idx, _spec=spec, _grid=grid):
        return lattice_coefficients(_spec, _grid, t)[_idx]

    return ModalData(grid, idx, kvecs, amplitude_of, separable=False)
