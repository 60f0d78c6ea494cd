"""Time propagation: a dense reference integrator and the split-step evolver.

The dense route builds the full Hamiltonian matrix from the explicit DFT
matrix and integrates the Schrodinger system with a high-order ODE solver at
tight tolerance. It shares no FFT code with the production path, which is the
point: it is the ground truth everything else is checked against. It refuses
grids beyond a hard cell cap rather than silently taking minutes.

The production evolver is Strang splitting: half a free step, the full
potential phase at the interval midpoint, half a free step. Envelope
breakpoints (quench switch-ons, self-similar onsets) are inserted into the
step mesh so no step straddles a discontinuity.
"""

import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import potentials
from .grids import Field, GridSpec, dense_transform_matrix, lp_norm

__all__ = [
    "ORACLE_CELL_CAP",
    "dense_hamiltonian",
    "oracle_evolve",
    "StepSpec",
    "Trajectory",
    "evolve",
    "BoundStateReport",
    "bound_state_report",
    "finite_gap_norm",
]

ORACLE_CELL_CAP = 1024


def _check_cap(grid):
    if grid.size > ORACLE_CELL_CAP:
        raise ValueError(
            f"dense reference path is capped at {ORACLE_CELL_CAP} cells; "
            f"this grid has {grid.size}"
        )


def dense_hamiltonian(spec, grid, t):
    """Full matrix of -Laplacian + V(., t) in the position basis."""
    _check_cap(grid)
    f = dense_transform_matrix(grid)
    h = (f.conj().T * grid.xi_squared) @ f
    if spec is not None:
        h = h + np.diag(potentials.evaluate(spec, grid, t).values)
    return h


def oracle_evolve(spec, psi0, t1, t0=0.0, rtol=1e-10, atol=1e-10):
    """Dense-matrix reference propagation of psi0 from t0 to t1.

    spec may be None for free flow. Uses DOP853 at the given tolerances on
    the full state vector; cost is O(size^2) per right-hand side, so this is
    for validation fixtures only.
    """
    grid = psi0.grid
    _check_cap(grid)
    f = dense_transform_matrix(grid)
    h0 = (f.conj().T * grid.xi_squared) @ f

    if spec is None:

        def rhs(t, y):
            return -1j * (h0 @ y)

    else:

        def rhs(t, y):
            v = potentials.evaluate(spec, grid, t).values
            return -1j * (h0 @ y + v * y)

    if t1 == t0:
        return psi0.copy()
    sol = solve_ivp(
        rhs, (t0, t1), psi0.values, method="DOP853", rtol=rtol, atol=atol
    )
    if not sol.success:
        raise RuntimeError(f"reference integration failed: {sol.message}")
    return Field(grid, sol.y[:, -1])


# ---------------------------------------------------------------------------
# split-step propagation
# ---------------------------------------------------------------------------


@dataclass
class StepSpec:
    """Step control for the split-step evolver.

    dt is the target step magnitude; record lists times at which to store the
    state (they are inserted into the mesh, so storage is exact, not
    interpolated); record_mid stores the state at every step midpoint, which
    the fixed-point iterations downstream consume.
    """

    dt: float
    record: tuple = ()
    record_mid: bool = False

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be a positive step magnitude")


@dataclass
class Trajectory:
    grid: GridSpec
    times: np.ndarray
    states: np.ndarray  # (records, cells)
    mid_times: np.ndarray | None = None
    mid_states: np.ndarray | None = None

    @property
    def final(self):
        return Field(self.grid, self.states[-1])

    def state_at(self, t, tol=1e-9):
        hits = np.nonzero(np.abs(self.times - t) <= tol)[0]
        if len(hits) == 0:
            raise KeyError(f"time {t} was not recorded")
        return Field(self.grid, self.states[hits[0]])

    def save_binary(self, path):
        header = struct.pack(
            "<iidi",
            self.grid.dim,
            self.grid.points_per_axis,
            self.grid.half_length,
            len(self.times),
        )
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.asarray(self.times, dtype="<f8").tobytes())
            for row in self.states:
                inter = np.empty(2 * row.size, dtype="<f8")
                inter[0::2] = row.real
                inter[1::2] = row.imag
                fh.write(inter.tobytes())

    @classmethod
    def load_binary(cls, path):
        with open(path, "rb") as fh:
            raw = fh.read()
        dim, n_axis, half_length, n_rec = struct.unpack_from("<iidi", raw, 0)
        grid = GridSpec(dim, n_axis, half_length)
        off = struct.calcsize("<iidi")
        times = np.frombuffer(raw, dtype="<f8", count=n_rec, offset=off).copy()
        off += 8 * n_rec
        states = np.empty((n_rec, grid.size), dtype=complex)
        for i in range(n_rec):
            inter = np.frombuffer(raw, dtype="<f8", count=2 * grid.size, offset=off)
            states[i] = inter[0::2] + 1j * inter[1::2]
            off += 16 * grid.size
        return cls(grid, times, states)

    def save_csv(self, path):
        """Per-record summary rows: time, mass, sup. Deterministic formatting."""
        with open(path, "w") as fh:
            fh.write("time,mass,sup\n")
            for t, row in zip(self.times, self.states):
                mass = lp_norm(Field(self.grid, row), 2)
                sup = float(np.max(np.abs(row)))
                fh.write(f"{t:.17g},{mass:.17g},{sup:.17g}\n")


def _step_mesh(spec, t0, t1, dt, record):
    """Step edges from t0 to t1 honoring breakpoints and record times."""
    lo, hi = (t0, t1) if t0 <= t1 else (t1, t0)
    marks = {float(lo), float(hi)}
    if spec is not None:
        for b in spec.breakpoints():
            for s in (b, -b):
                if lo < s < hi:
                    marks.add(float(s))
    for r in record:
        if lo < r < hi:
            marks.add(float(r))
    pts = sorted(marks)
    edges = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(1, math.ceil((b - a) / dt - 1e-12))
        edges.extend(a + (b - a) * i / n for i in range(1, n + 1))
    mesh = np.array(edges)
    return mesh if t0 <= t1 else mesh[::-1]


def evolve(spec, psi0, t0, t1, steps):
    """Strang split-step propagation of psi0 from t0 to t1 under spec.

    spec may be None (free flow). Each step applies exp(-i h xi^2/2) in
    frequency, the potential phase exp(-i h V(., mid)) in position, and the
    second half free step; both substeps are unitary, so mass is conserved to
    roundoff. Recorded midpoint states are taken after the first half free
    step, i.e. at midpoint time to the same order as the scheme itself.
    """
    grid = psi0.grid
    if t1 == t0:
        states = psi0.values[None, :].copy()
        return Trajectory(grid, np.array([t0]), states)
    mesh = _step_mesh(spec, t0, t1, steps.dt, steps.record)
    record = sorted(set(float(r) for r in steps.record))
    shape = grid.shape
    psi = psi0.values.copy()

    kinetic_cache = {}

    def half_kick(vec, h):
        key = round(h, 15)
        mult = kinetic_cache.get(key)
        if mult is None:
            mult = np.exp(-0.5j * h * grid.xi_squared).reshape(shape)
            kinetic_cache[key] = mult
        shaped = np.fft.fftn(vec.reshape(shape), norm="ortho")
        return np.fft.ifftn(mult * shaped, norm="ortho").reshape(-1)

    rec_times = [float(mesh[0])]
    rec_states = [psi.copy()]
    mid_times = []
    mid_states = []
    want = [r for r in record if min(t0, t1) < r < max(t0, t1)]
    if t0 > t1:
        want = want[::-1]
    ptr = 0

    for a, b in zip(mesh[:-1], mesh[1:]):
        h = b - a
        mid = 0.5 * (a + b)
        psi = half_kick(psi, h)
        if steps.record_mid:
            mid_times.append(mid)
            mid_states.append(psi.copy())
        if spec is not None:
            v = potentials.evaluate(spec, grid, mid).values
            psi = psi * np.exp(-1j * h * v)
        psi = half_kick(psi, h)
        while ptr < len(want) and abs(want[ptr] - b) <= 1e-9 * max(1.0, abs(b)):
            rec_times.append(float(b))
            rec_states.append(psi.copy())
            ptr += 1
    if abs(rec_times[-1] - mesh[-1]) > 1e-12 * max(1.0, abs(mesh[-1])):
        rec_times.append(float(mesh[-1]))
        rec_states.append(psi.copy())

    traj = Trajectory(
        grid,
        np.array(rec_times),
        np.array(rec_states),
        np.array(mid_times) if steps.record_mid else None,
        np.array(mid_states) if steps.record_mid else None,
    )
    return traj


# ---------------------------------------------------------------------------
# spectral sanity helpers
# ---------------------------------------------------------------------------


@dataclass
class BoundStateReport:
    energies: np.ndarray
    count: int
    threshold: float


def bound_state_report(spec, grid, t=0.0, threshold=-1e-8):
    """Negative spectrum of the dense Hamiltonian at time t.

    Requires a real potential (Hermitian matrix). Fixture design uses this to
    confirm scattering-only configurations.
    """
    h = dense_hamiltonian(spec, grid, t)
    v_imag = float(np.max(np.abs(np.diag(h).imag)))
    if v_imag > 1e-10:
        raise ValueError("bound-state scan needs a real potential")
    evals = np.linalg.eigvalsh((h + h.conj().T) / 2.0)
    neg = evals[evals < threshold]
    return BoundStateReport(neg, int(neg.size), threshold)


def finite_gap_norm(traj, t_a, t_b):
    """L2 distance between two recorded states of a trajectory."""
    fa = traj.state_at(t_a)
    fb = traj.state_at(t_b)
    return lp_norm(Field(traj.grid, fb.values - fa.values), 2)
