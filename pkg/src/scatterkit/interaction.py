"""The time-translated interaction operator and its damped time integrals.

For a potential V the central object is the conjugated multiplication
operator at time t,

    K_t(V) = exp(i t H0) V(., t) exp(-i t H0),    H0 = -Laplacian.

Two independent application routes exist on purpose. The spectral route
conjugates by the free multiplier, so frequencies pushed past the lattice
edge wrap around with the *wrapped* kinetic phase. The plane-wave route
decomposes V into lattice modes b and uses the exact identity on each: a mode
b shifts a source frequency q to b + q and contributes the true phase
exp(i t (b^2 + 2 b.q)). The routes agree to roundoff whenever no occupied
frequency wraps past Nyquist, and their disagreement on wrapped modes is
exactly the aliasing the grid cannot represent.

Damped time integrals int_0^inf e^(-eps t) K_t(V) dt are computed either by
direct quadrature at a documented horizon or mode by mode through the
oscillatory transforms of the envelope: closed forms for constant, sharp
switch-on, and tanh profiles, and a piecewise-linear rule on a geometric time
mesh otherwise. At eps = 0 the closed forms return the abelian limit and
refuse resonant mode pairs by name.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import potentials
from .grids import Field, forward_transform, free_propagate, inverse_transform, lp_norm
from .potentials import ConstEnvelope, QuenchEnvelope, TanhEnvelope, modal_terms

__all__ = [
    "QuadratureSpec",
    "SingularModeError",
    "apply_kt",
    "maximal_kt",
    "MaximalReport",
    "translation_kernel_mass",
    "integrate_kt",
    "integrate_damped_quad",
    "integrate_damped_modal",
    "oscillatory_transform",
    "damped_horizon",
]


class SingularModeError(ZeroDivisionError):
    """A resonant mode pair met an undamped closed-form denominator."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite quadrature on a uniform mesh: trapezoid or simpson."""

    rule: str = "trapezoid"
    nodes: int = 257

    def __post_init__(self):
        if self.rule not in ("trapezoid", "simpson"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        if self.nodes < 2:
            raise ValueError("need at least two quadrature nodes")
        if self.rule == "simpson" and self.nodes % 2 == 0:
            raise ValueError("simpson needs an odd node count")

    def mesh(self, a, b):
        ts = np.linspace(a, b, self.nodes)
        h = (b - a) / (self.nodes - 1)
        if self.rule == "trapezoid":
            w = np.full(self.nodes, h)
            w[0] = w[-1] = h / 2.0
        else:
            w = np.full(self.nodes, 2.0 * h / 3.0)
            w[1::2] = 4.0 * h / 3.0
            w[0] = w[-1] = h / 3.0
        return ts, w


# ---------------------------------------------------------------------------
# applying K_t
# ---------------------------------------------------------------------------


def _mode_phase_ints(grid, b_ints):
    """Integer phase |b|^2 + 2 b.q over all source modes q (exact arithmetic)."""
    acc = np.zeros(grid.size, dtype=np.int64)
    bsq = 0
    for ax, b in enumerate(b_ints):
        b = int(b)
        bsq += b * b
        acc = acc + 2 * b * grid.index_mesh[ax].astype(np.int64)
    return acc + bsq


def _shift_by_mode(grid, flat_values, kvec):
    # e^(i xi_b x) relative to the box corner -L is (-1)^(sum b) times the
    # pure FFT mode, so odd modes flip sign in FFT coordinates
    sign = -1.0 if int(sum(int(k) for k in kvec)) % 2 else 1.0
    shaped = flat_values.reshape(grid.shape)
    rolled = np.roll(
        shaped, shift=tuple(int(k) for k in kvec), axis=tuple(range(grid.dim))
    )
    return sign * rolled.reshape(-1)


def apply_kt(spec, field, t, route="spectral", modal=None):
    """Apply K_t(V) to a field.

    route "spectral": conjugation by the free multiplier (wrapped phases past
    Nyquist). route "planewave": exact per-mode frequency shifts with true
    phases; pass a precomputed modal decomposition to amortize repeat calls.
    """
    grid = field.grid
    if route == "spectral":
        flowed = free_propagate(field, t)
        v = potentials.evaluate(spec, grid, t).values
        return free_propagate(Field(grid, v * flowed.values), -t)
    if route != "planewave":
        raise ValueError(f"unknown route {route!r}")
    if modal is None:
        modal = modal_terms(spec, grid)
    psi_hat = forward_transform(field)
    step2 = grid.freq_step**2
    amps = modal.amplitude_of(t)
    out = np.zeros(grid.size, dtype=complex)
    for amp, kvec in zip(amps, modal.k_vectors):
        if amp == 0.0:
            continue
        theta = step2 * _mode_phase_ints(grid, kvec)
        out += amp * _shift_by_mode(grid, np.exp(1j * t * theta) * psi_hat, kvec)
    return inverse_transform(grid, out)


@dataclass
class MaximalReport:
    sup: float
    argmax_time: float
    times: np.ndarray
    norms: np.ndarray


def maximal_kt(spec, field, times, p=2, route="spectral"):
    """sup over the sampled times of ||K_t(V) psi||_p, with the full profile."""
    times = np.asarray(times, dtype=float)
    norms = np.array(
        [lp_norm(apply_kt(spec, field, t, route=route), p) for t in times]
    )
    best = int(np.argmax(norms))
    return MaximalReport(float(norms[best]), float(times[best]), times, norms)


def translation_kernel_mass(grid, displacement, p=2):
    """Induced p -> p norm of the grid translation by a real displacement.

    Translation acts as the frequency phase exp(i a xi); for fractional-cell
    displacements its position kernel is a discrete Dirichlet column whose
    absolute sum exceeds one, which is exactly why mass-type bounds transfer
    to p = 2 on the lattice but not to p in {1, inf}.
    """
    if p == 2:
        return 1.0
    if p not in (1, math.inf):
        raise ValueError("translation mass implemented for p in {1, 2, inf}")
    disp = np.atleast_1d(np.asarray(displacement, dtype=float))
    if disp.size != grid.dim:
        raise ValueError("displacement dimension does not match the grid")
    total = 1.0
    for a in disp:
        kernel = np.fft.ifft(np.exp(1j * a * grid.xi_axis))
        total *= float(np.sum(np.abs(kernel)))
    return total


# ---------------------------------------------------------------------------
# time integrals
# ---------------------------------------------------------------------------


def integrate_kt(
    spec, field, t0, t1, quad=QuadratureSpec(), weight=None, route="spectral"
):
    """Quadrature for int_t0^t1 w(t) K_t(V) psi dt on the uniform mesh."""
    grid = field.grid
    modal = modal_terms(spec, grid) if route == "planewave" else None
    ts, ws = quad.mesh(t0, t1)
    if weight is not None:
        ws = ws * np.asarray([weight(t) for t in ts])
    acc = np.zeros(grid.size, dtype=complex)
    for t, w in zip(ts, ws):
        if w == 0.0:
            continue
        acc += w * apply_kt(spec, field, t, route=route, modal=modal).values
    return Field(grid, acc)


def damped_horizon(eps, tail_tol=1e-8, lead=0.0):
    """Truncation time for e^(-eps t) tails at the requested tolerance."""
    if eps <= 0:
        raise ValueError("damped horizons need eps > 0")
    return lead + math.log(1.0 / tail_tol) / eps


def phase_resolved_quad(grid, span, budget=0.5, rule="simpson", cap=200001):
    """Quadrature spec whose step keeps max|xi|^2 dt below the phase budget.

    The fastest mode oscillates like e^(i t max|xi|^2); resolving that phase
    to `budget` radians per step is the default node rule for damped-integral
    quadratures. Node count is capped and forced odd for Simpson pairing.
    """
    if span <= 0 or budget <= 0:
        raise ValueError("span and budget must be positive")
    top = grid.dim * grid.nyquist**2
    nodes = int(math.ceil(span * top / budget)) + 1
    nodes = min(nodes, cap)
    if nodes % 2 == 0:
        nodes += 1
    return QuadratureSpec(rule, max(nodes, 5))


def integrate_damped_quad(
    spec,
    field,
    eps,
    quad=QuadratureSpec(nodes=2049),
    horizon=None,
    tail_tol=1e-8,
    route="spectral",
):
    """int_0^inf e^(-eps t) K_t(V) psi dt truncated at a documented horizon."""
    if eps <= 0:
        raise ValueError("quadrature route needs eps > 0")
    T = horizon if horizon is not None else damped_horizon(eps, tail_tol)
    return integrate_kt(
        spec,
        field,
        0.0,
        T,
        quad=quad,
        weight=lambda t: math.exp(-eps * t),
        route=route,
    )


# -- oscillatory envelope transforms ----------------------------------------


def _linear_moment(alpha, beta, a, b, z, ea, eb):
    """int_a^b (alpha + beta t) e^(z t) dt, stable for small |z (b-a)|.

    ea and eb are e^(z a) and e^(z b), precomputed so adjacent segments can
    share their endpoint exponentials.
    """
    d = b - a
    small = np.abs(z) * d < 1e-5
    zs = np.where(small, 1.0, z)  # placeholder where the series branch wins
    closed = eb * ((alpha + beta * b) / zs - beta / zs**2) - ea * (
        (alpha + beta * a) / zs - beta / zs**2
    )
    c0 = alpha + beta * a
    series = ea * (
        c0 * (d + z * d**2 / 2.0 + z**2 * d**3 / 6.0 + z**3 * d**4 / 24.0)
        + beta
        * (d**2 / 2.0 + z * d**3 / 3.0 + z**2 * d**4 / 8.0 + z**3 * d**5 / 30.0)
    )
    return np.where(small, series, closed)


def _filon_transform(samples, nodes, z):
    """Transform of a sampled envelope, linear between nodes, against e^(zt)."""
    z = np.asarray(z, dtype=complex)
    nodes = np.asarray(nodes, dtype=float)
    samples = np.asarray(samples, dtype=complex)
    beta = (samples[1:] - samples[:-1]) / (nodes[1:] - nodes[:-1])
    alpha = samples[:-1] - beta * nodes[:-1]
    flat = z.reshape(-1)
    acc = np.zeros(flat.shape, dtype=complex)
    # blocks keep the (segments x modes) temporaries under ~16 MB apiece
    step = max(2, (1 << 20) // max(flat.size, 1))
    for i in range(0, len(nodes) - 1, step):
        hi = min(i + step, len(nodes) - 1)
        ends = np.exp(nodes[i : hi + 1, None] * flat[None, :])
        acc += _linear_moment(
            alpha[i:hi, None],
            beta[i:hi, None],
            nodes[i:hi, None],
            nodes[i + 1 : hi + 1, None],
            flat[None, :],
            ends[:-1],
            ends[1:],
        ).sum(axis=0)
    return acc.reshape(z.shape)


def _filon_mesh(eps, breaks, sup_env, tail_tol, delta):
    if eps <= 0:
        raise ValueError("the piecewise-linear transform needs eps > 0")
    t_end = damped_horizon(eps, tail_tol / max(sup_env, tail_tol))
    nodes = [0.0]
    for brk in sorted(b for b in breaks if 0.0 < b < t_end):
        t = nodes[-1]
        while t < brk - 1e-15:
            t = min(brk, (1.0 + t) * math.exp(delta) - 1.0)
            nodes.append(t)
    t = nodes[-1]
    while t < t_end:
        t = (1.0 + t) * math.exp(delta) - 1.0
        nodes.append(t)
    if len(nodes) > 60000:
        raise ValueError(
            f"oscillatory mesh would need {len(nodes)} nodes; "
            "raise eps or loosen tail_tol"
        )
    return np.array(nodes)


def _has_closed_transform(env):
    if isinstance(env, (ConstEnvelope, TanhEnvelope)):
        return True
    return isinstance(env, QuenchEnvelope) and not env.smooth


def oscillatory_transform(env, z, eps=None, tail_tol=1e-10, delta=0.02):
    """int_0^inf f(t) e^(z t) dt for an envelope f and exponent array z.

    Closed forms: constant, sharp switch-on (delay phase over the pole), and
    tanh, whose alternating expansion in e^(-2t) resums to digamma
    differences. Everything else samples f on a geometric mesh and integrates
    the linear interpolant exactly; that route needs Re z < 0.

    Purely imaginary z is accepted by the closed forms as the abelian limit;
    a vanishing exponent raises SingularModeError.
    """
    z = np.asarray(z, dtype=complex)
    if isinstance(env, ConstEnvelope):
        if np.any(z == 0.0):
            raise SingularModeError("zero exponent in the constant-envelope transform")
        return -env.value / z
    if isinstance(env, QuenchEnvelope) and not env.smooth:
        if np.any(z == 0.0):
            raise SingularModeError("zero exponent in the switch-on transform")
        return -np.exp(z * env.delay) / z
    if isinstance(env, TanhEnvelope):
        if np.any(z == 0.0):
            raise SingularModeError("zero exponent in the tanh transform")
        return (
            -1.0 / z
            - 0.5 * (special.digamma(1.0 - z / 4.0) - special.digamma(0.5 - z / 4.0))
        )
    if eps is None:
        eps = float(np.min(-z.real))
    ts = _filon_mesh(eps, env.breakpoints(), 1.0, tail_tol, delta)
    return _filon_transform(env(ts).astype(complex), ts, z)


def _strip_time(env, breaks):
    """A time where the envelope is safely nonzero, for factoring shapes."""
    probes = [0.0, 1.0, 2.0]
    if breaks:
        probes.append(2.0 * max(breaks) + 1.0)
    for t in probes:
        if abs(complex(env(t))) > 1e-12:
            return t
    raise ValueError("envelope is numerically zero at all probe times")


def integrate_damped_modal(spec, field, eps, tail_tol=1e-10, delta=0.02, modal=None):
    """Mode-by-mode evaluation of int_0^inf e^(-eps t) K_t(V) psi dt.

    Each lattice mode b of V contributes its envelope transform evaluated at
    the exact exponents i(b^2 + 2 b.q) - eps over all source modes q,
    followed by the frequency shift by b. Separable specs use the closed
    transforms where the envelope has one; non-separable time dependence
    (rigid motion, rescaling) is sampled per mode on the geometric mesh.

    eps = 0 is accepted only on the closed-form path (the abelian limit);
    a resonant pair there raises SingularModeError naming both modes.
    """
    grid = field.grid
    if eps < 0:
        raise ValueError("damping must be nonnegative")
    if modal is None:
        modal = modal_terms(spec, grid)
    psi_hat = forward_transform(field)
    out = np.zeros(grid.size, dtype=complex)
    step2 = grid.freq_step**2

    env = potentials._envelope_of(spec)
    closed = modal.separable and _has_closed_transform(env)

    shape_amp = None
    if modal.separable:
        t_ref = _strip_time(env, spec.breakpoints())
        shape_amp = modal.amplitude_of(t_ref) / complex(env(t_ref))

    nodes = None
    env_samples = None
    mode_samples = None
    if not closed:
        if eps <= 0:
            raise ValueError(
                "eps = 0 is available only for closed-form envelope transforms"
            )
        sup_env = float(
            np.max(np.abs(spec.envelope_bound(np.linspace(0.0, 64.0, 257))))
        )
        nodes = _filon_mesh(
            eps, spec.breakpoints(), max(sup_env, 1.0), tail_tol, delta
        )
        if modal.separable:
            env_samples = env(nodes).astype(complex)
        else:
            mode_samples = np.stack([modal.amplitude_of(t) for t in nodes], axis=1)

    for m, kvec in enumerate(modal.k_vectors):
        theta_int = _mode_phase_ints(grid, kvec)
        z = 1j * (step2 * theta_int.astype(float)) - eps
        if modal.separable:
            amp = shape_amp[m]
            if amp == 0.0:
                continue
            if closed:
                if eps == 0.0 and np.any(theta_int == 0):
                    q = int(np.argmax(theta_int == 0))
                    q_vec = tuple(
                        int(grid.index_mesh[ax][q]) for ax in range(grid.dim)
                    )
                    raise SingularModeError(
                        f"potential mode {tuple(int(k) for k in kvec)} resonates "
                        f"with source mode {q_vec}: undamped denominator vanishes"
                    )
                g = amp * oscillatory_transform(env, z)
            else:
                g = amp * _filon_transform(env_samples, nodes, z)
        else:
            g = _filon_transform(mode_samples[m], nodes, z)
        out += _shift_by_mode(grid, g * psi_hat, kvec)
    return inverse_transform(grid, out)
