"""Iterated interaction integrals, damped series, and finite-horizon wave maps.

The k-th series term over a horizon T is the ordered simplex integral

    I^(k)(T) = int_{0 < t_k < ... < t_1 < T} K_{t_k} ... K_{t_1} dt,

smallest time leftmost, which is exactly the k-th Duhamel iterate of
U(0,T) e^{-iTH0} = sum_k i^k I^(k)(T). All orders come out of one backward
sweep: with A_0 = psi and A_m(s) = int_s^T K_tau A_{m-1}(tau) dtau, the term
is I^(k) psi = A_k(0), and each order costs one batch of operator
applications on the shared node mesh plus one cumulative suffix integral.

Damped variants insert e^(-eps t) either on the smallest time variable of
each term (the default, matching the series definition) or on the largest
(first-applied) variable; the two coincide at first order. Both reuse the
same operator evaluations: the weighted rows feed the reported term, the
unweighted rows feed the next order.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as sci_integrate

from . import potentials
from .grids import Field, free_propagate, lp_norm
from .interaction import QuadratureSpec, _mode_phase_ints, damped_horizon
from .potentials import accumulated_lattice_mass, modal_terms
from .propagate import StepSpec, evolve, oracle_evolve

__all__ = [
    "SeriesTerms",
    "born_terms",
    "damped_terms",
    "partial_sums",
    "BornLedger",
    "born_vs_direct",
    "AbelianScan",
    "abelian_scan",
    "wave_map",
    "theta_map",
    "cauchy_gap",
]


class _KtBatch:
    """Applies K_(t_i) to row i of a node-indexed state array.

    Node data (potential samples and kinetic phases, or modal amplitudes and
    mode phases) is cached at construction and shared by every order of a
    sweep.
    """

    def __init__(self, spec, grid, ts, route):
        self.grid = grid
        self.ts = np.asarray(ts, dtype=float)
        self.route = route
        if route == "spectral":
            self.phase = np.exp(-1j * np.outer(self.ts, grid.xi_squared))
            self.v_rows = np.stack(
                [potentials.evaluate(spec, grid, t).values for t in self.ts]
            )
        elif route == "planewave":
            modal = modal_terms(spec, grid)
            self.modal = modal
            self.amp_rows = np.stack([modal.amplitude_of(t) for t in self.ts])
            step2 = grid.freq_step**2
            self.thetas = np.stack(
                [
                    step2 * _mode_phase_ints(grid, kv).astype(float)
                    for kv in modal.k_vectors
                ]
            )
            self.signs = np.array(
                [
                    -1.0 if int(sum(int(k) for k in kv)) % 2 else 1.0
                    for kv in modal.k_vectors
                ]
            )
        else:
            raise ValueError(f"unknown route {route!r}")

    def _fft(self, rows, inverse=False):
        n = rows.shape[0]
        shaped = rows.reshape((n,) + self.grid.shape)
        axes = tuple(range(1, self.grid.dim + 1))
        op = np.fft.ifftn if inverse else np.fft.fftn
        return op(shaped, axes=axes, norm="ortho").reshape(n, -1)

    def apply(self, rows):
        grid = self.grid
        n = rows.shape[0]
        if self.route == "spectral":
            freq = self._fft(rows) * self.phase
            pos = self._fft(freq, inverse=True) * self.v_rows
            freq2 = self._fft(pos) * np.conj(self.phase)
            return self._fft(freq2, inverse=True)
        freq = self._fft(rows)
        out = np.zeros_like(freq)
        axes = tuple(range(1, grid.dim + 1))
        for m, kvec in enumerate(self.modal.k_vectors):
            contrib = np.exp(1j * self.ts[:, None] * self.thetas[m][None, :]) * freq
            contrib *= self.amp_rows[:, m][:, None]
            rolled = np.roll(
                contrib.reshape((n,) + grid.shape),
                shift=tuple(int(k) for k in kvec),
                axis=axes,
            ).reshape(n, -1)
            out += self.signs[m] * rolled
        return self._fft(out, inverse=True)


def _suffix_integral(rows, ts, rule):
    """S_i = int_(t_i)^(t_end) of the row data, by cumulative quadrature."""
    if rule == "trapezoid":
        prefix = sci_integrate.cumulative_trapezoid(rows, x=ts, axis=0, initial=0)
    else:
        # scipy's cumulative_simpson drops imaginary parts, so split
        prefix = sci_integrate.cumulative_simpson(
            rows.real, x=ts, axis=0, initial=0
        ) + 1j * sci_integrate.cumulative_simpson(rows.imag, x=ts, axis=0, initial=0)
    return prefix[-1][None, :] - prefix


@dataclass
class SeriesTerms:
    """Series terms I^(k) psi for k = 0..orders on a fixed node mesh."""

    grid: object
    terms: list  # Field per order, starting at the identity term
    node_times: np.ndarray
    rule: str
    eps: float = 0.0
    damping: str | None = None

    @property
    def orders(self):
        return len(self.terms) - 1

    def term_norms(self, p=2):
        return [lp_norm(t, p) for t in self.terms]


def _sweep(spec, psi, ts, rule, orders, route, weight=None, damping=None):
    grid = psi.grid
    batch = _KtBatch(spec, grid, ts, route)
    n = len(ts)
    rows = np.broadcast_to(psi.values, (n, grid.size)).copy()
    terms = [psi.copy()]
    for m in range(1, orders + 1):
        rows = batch.apply(rows)
        if weight is not None and damping == "first_applied" and m == 1:
            rows = rows * weight[:, None]
        if weight is not None and damping == "last_applied":
            weighted = _suffix_integral(rows * weight[:, None], ts, rule)
            terms.append(Field(grid, weighted[0].copy()))
            rows = _suffix_integral(rows, ts, rule)
        else:
            rows = _suffix_integral(rows, ts, rule)
            terms.append(Field(grid, rows[0].copy()))
    return terms


def born_terms(spec, psi, T, orders, quad=QuadratureSpec(nodes=2049), route="spectral"):
    """Series terms over the finite horizon [0, T].

    orders = 0 is the degenerate truncation: the identity term alone.
    """
    if orders < 0:
        raise ValueError("order count cannot be negative")
    ts, _ = quad.mesh(0.0, T)
    if orders == 0:
        return SeriesTerms(psi.grid, [psi.copy()], ts, quad.rule)
    terms = _sweep(spec, psi, ts, quad.rule, orders, route)
    return SeriesTerms(psi.grid, terms, ts, quad.rule)


def damped_terms(
    spec,
    psi,
    eps,
    orders,
    quad=QuadratureSpec(nodes=2049),
    horizon=None,
    tail_tol=1e-8,
    damping="last_applied",
    route="spectral",
):
    """Damped series terms, truncated at the e^(-eps t) horizon.

    damping "last_applied" weights the smallest (outermost) time variable of
    every term, the form the series is defined with; "first_applied" weights
    the largest variable, damping the whole simplex through the first
    integration. Inner integrals are truncated at the same horizon; their
    tails are oscillatory and enter only through the damped outer variable.
    """
    if eps <= 0:
        raise ValueError("damped sweeps need eps > 0")
    if damping not in ("last_applied", "first_applied"):
        raise ValueError(f"unknown damping placement {damping!r}")
    T = horizon if horizon is not None else damped_horizon(eps, tail_tol)
    ts, _ = quad.mesh(0.0, T)
    weight = np.exp(-eps * ts)
    terms = _sweep(spec, psi, ts, quad.rule, orders, route, weight, damping)
    return SeriesTerms(psi.grid, terms, ts, quad.rule, eps=eps, damping=damping)


def partial_sums(series):
    """S_K = sum_(k<=K) i^k I^(k) psi for every K up to the computed order."""
    grid = series.grid
    acc = np.zeros(grid.size, dtype=complex)
    sums = []
    for k, term in enumerate(series.terms):
        acc = acc + (1j) ** k * term.values
        sums.append(Field(grid, acc.copy()))
    return sums


# ---------------------------------------------------------------------------
# series against direct propagation
# ---------------------------------------------------------------------------


@dataclass
class BornLedger:
    horizon: float
    orders: int
    term_norms: list
    residuals: list  # ||partial sum - reference||_2 per order 0..K
    majorant: list  # c^k / k! per order, c the accumulated lattice mass
    tail_bounds: list  # c^(K+1)/(K+1)! e^c remainder estimates
    mass_accumulated: float
    reference_norm: float


def born_vs_direct(
    spec,
    psi,
    T,
    orders,
    quad=QuadratureSpec(nodes=2049),
    route="spectral",
    reference="oracle",
    dt=1e-3,
):
    """Partial sums of the series against U(0,T)e^(-iTH0) psi.

    reference "oracle" uses the dense integrator (small grids only);
    "split_step" uses the production evolver at the given dt.
    """
    grid = psi.grid
    series = born_terms(spec, psi, T, orders, quad=quad, route=route)
    freed = free_propagate(psi, T)
    if reference == "oracle":
        ref = oracle_evolve(spec, freed, t1=0.0, t0=T)
    elif reference == "split_step":
        ref = evolve(spec, freed, T, 0.0, StepSpec(dt=dt)).final
    else:
        raise ValueError(f"unknown reference {reference!r}")
    sums = partial_sums(series)
    residuals = [
        lp_norm(Field(grid, s.values - ref.values), 2) for s in sums
    ]
    c = accumulated_lattice_mass(spec, grid, T)
    majorant = [c**k / math.factorial(k) for k in range(orders + 1)]
    tails = [
        c ** (k + 1) / math.factorial(k + 1) * math.exp(c) for k in range(orders + 1)
    ]
    return BornLedger(
        horizon=T,
        orders=orders,
        term_norms=series.term_norms(),
        residuals=residuals,
        majorant=majorant,
        tail_bounds=tails,
        mass_accumulated=c,
        reference_norm=lp_norm(ref, 2),
    )


# ---------------------------------------------------------------------------
# Abelian limit
# ---------------------------------------------------------------------------


@dataclass
class AbelianScan:
    eps_schedule: np.ndarray
    values: list  # damped partial sum at the top order, one per eps
    gaps: np.ndarray  # L2 Cauchy differences between consecutive eps
    extrapolated: Field  # linear-in-eps model through the last two points

    @property
    def monotone(self):
        return bool(np.all(np.diff(self.gaps) < 0))


def abelian_scan(spec, psi, eps_schedule, orders, damping="last_applied", **kwargs):
    """Damped series sums along a decreasing eps schedule.

    Reports the Cauchy gaps between consecutive sums and the limit predicted
    by a linear-in-eps model through the two smallest eps values. The limit
    itself is an extrapolation, never asserted; the gaps are the honest
    convergence record.
    """
    eps_schedule = np.asarray(sorted(eps_schedule, reverse=True), dtype=float)
    if len(eps_schedule) < 2:
        raise ValueError("a scan needs at least two eps values")
    sums = []
    for eps in eps_schedule:
        series = damped_terms(spec, psi, eps, orders, damping=damping, **kwargs)
        sums.append(partial_sums(series)[-1])
    gaps = np.array(
        [
            lp_norm(Field(psi.grid, b.values - a.values), 2)
            for a, b in zip(sums[:-1], sums[1:])
        ]
    )
    e1, e0 = eps_schedule[-2], eps_schedule[-1]
    v1, v0 = sums[-2].values, sums[-1].values
    slope = (v1 - v0) / (e1 - e0)
    limit = Field(psi.grid, v0 - slope * e0)
    return AbelianScan(eps_schedule, sums, gaps, limit)


# ---------------------------------------------------------------------------
# finite-horizon wave maps
# ---------------------------------------------------------------------------


def wave_map(spec, psi, u, dt=1e-3, method="split_step"):
    """U(0,u) e^(-i u H0) psi: free flow to u, interacting flow back."""
    freed = free_propagate(psi, u)
    if method == "oracle":
        return oracle_evolve(spec, freed, t1=0.0, t0=u)
    return evolve(spec, freed, u, 0.0, StepSpec(dt=dt)).final


def theta_map(spec, psi, u, dt=1e-3, method="split_step"):
    """e^(i u H0) U(u,0) psi: interacting flow to u, free flow stripped."""
    if method == "oracle":
        evolved = oracle_evolve(spec, psi, t1=u, t0=0.0)
    else:
        evolved = evolve(spec, psi, 0.0, u, StepSpec(dt=dt)).final
    return free_propagate(evolved, -u)


def cauchy_gap(spec, psi, s1, s2, dt=1e-3, kind="theta", method="split_step"):
    """L2 increment of the wave map between two horizons."""
    fn = theta_map if kind == "theta" else wave_map
    a = fn(spec, psi, s1, dt=dt, method=method)
    b = fn(spec, psi, s2, dt=dt, method=method)
    return lp_norm(Field(psi.grid, b.values - a.values), 2)
