"""Norm estimation: exact dense norms, probe ensembles, decay fits, audits.

Exact operator norms come from materializing the operator as a matrix on
small grids (same hard cap as the dense reference integrator) and computing
the induced norm directly: largest singular value at p = 2, extreme
column/row absolute sums at p = 1 and infinity. Ensemble estimates are lower
bounds by construction; reports say which member achieved the maximum so
fixtures can be tightened by hand.
"""

import math
from dataclasses import dataclass

import numpy as np

from .grids import Field, lp_norm, make_cutoff

__all__ = [
    "dense_norm",
    "operator_matrix",
    "dense_operator_norm",
    "Ensemble",
    "make_ensemble",
    "NormReport",
    "op_norm",
    "FitReport",
    "decay_fit",
    "AuditRow",
    "bound_audit",
]

_MATRIX_CAP = 1024


def dense_norm(mat, p):
    """Induced p -> p norm of an explicit matrix, p in {1, 2, inf}."""
    mat = np.asarray(mat)
    if p == 1:
        return float(np.max(np.sum(np.abs(mat), axis=0)))
    if p == math.inf or p == "inf":
        return float(np.max(np.sum(np.abs(mat), axis=1)))
    if p == 2:
        return float(np.linalg.svd(mat, compute_uv=False)[0])
    raise ValueError("exact dense norms exist for p in {1, 2, inf}")


def operator_matrix(apply_op, grid):
    """Materialize a linear operator on fields as its full matrix.

    apply_op maps Field -> Field. Columns are images of position basis
    vectors. Capped at the dense-path cell limit.
    """
    if grid.size > _MATRIX_CAP:
        raise ValueError(
            f"operator materialization is capped at {_MATRIX_CAP} cells; "
            f"this grid has {grid.size}"
        )
    cols = np.empty((grid.size, grid.size), dtype=complex)
    basis = np.zeros(grid.size, dtype=complex)
    for j in range(grid.size):
        basis[j] = 1.0
        cols[:, j] = apply_op(Field(grid, basis)).values
        basis[j] = 0.0
    return cols


def dense_operator_norm(apply_op, grid, p):
    """Exact induced norm of a grid operator via materialization.

    Note the induced norm of the matrix equals the induced norm of the
    operator between the weighted lp spaces for p = 2 (the weight h^(n/2)
    cancels) and for p in {1, inf} up to the lattice weight, which also
    cancels since both sides carry the same h^n factor.
    """
    return dense_norm(operator_matrix(apply_op, grid), p)


# ---------------------------------------------------------------------------
# probe ensembles
# ---------------------------------------------------------------------------


@dataclass
class Ensemble:
    grid: object
    kind: str
    seed: int
    members: list  # of Field, unit L2 norm


def _member_rng(seed, index):
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,)))
    )


def _normalized(grid, values):
    f = Field(grid, values)
    n = lp_norm(f, 2)
    if n == 0.0:
        raise ValueError("degenerate zero member")
    return Field(grid, f.values / n)


def make_ensemble(grid, kind, count=64, seed=0, cutoff=None, sigma=None):
    """Probe states for norm estimation.

    kinds:
      gaussian_random  iid complex normal values per cell
      plane_packets    Gaussian bump with a random lattice carrier
      near_delta       tight bump, width ~ two cells, at a random center
      high_cutoff      random state pushed above the frequency threshold
                       `cutoff` (defaults to half the Nyquist frequency)
    """
    members = []
    for i in range(count):
        rng = _member_rng(seed, i)
        if kind == "gaussian_random":
            vals = rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size)
        elif kind == "plane_packets":
            width = sigma if sigma is not None else grid.half_length / 8.0
            center = rng.uniform(-grid.half_length / 2, grid.half_length / 2, grid.dim)
            kmax = max(1, grid.points_per_axis // 4)
            carrier = rng.integers(-kmax, kmax + 1, grid.dim) * grid.freq_step
            q = np.zeros(grid.size)
            phase = np.zeros(grid.size)
            for ax in range(grid.dim):
                q = q + (grid.x_mesh[ax] - center[ax]) ** 2
                phase = phase + carrier[ax] * grid.x_mesh[ax]
            vals = np.exp(-q / (2 * width**2)) * np.exp(1j * phase)
        elif kind == "near_delta":
            width = sigma if sigma is not None else 2.0 * grid.h
            center = rng.uniform(-grid.half_length / 2, grid.half_length / 2, grid.dim)
            q = np.zeros(grid.size)
            for ax in range(grid.dim):
                q = q + (grid.x_mesh[ax] - center[ax]) ** 2
            vals = np.exp(-q / (2 * width**2)) + 0j
        elif kind == "high_cutoff":
            thr = cutoff if cutoff is not None else grid.nyquist / 2.0
            raw = rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size)
            vals = make_cutoff(grid, "high", thr).apply(Field(grid, raw)).values
        else:
            raise ValueError(f"unknown ensemble kind {kind!r}")
        members.append(_normalized(grid, vals))
    return Ensemble(grid, kind, seed, members)


@dataclass
class NormReport:
    p: float
    estimate: float  # best member ratio: a lower bound on the true norm
    mean: float
    argmax: int
    count: int
    linearity_defect: float | None = None


def op_norm(apply_op, ensemble, p=2, check_linearity=True, linearity_tol=1e-8):
    """Ensemble lower estimate of the induced p -> p norm of apply_op.

    When check_linearity is set, a random superposition of two members must
    map to the matching superposition of images; a defect beyond tolerance
    raises, since a norm report for a non-linear map would be meaningless.
    """
    grid = ensemble.grid
    defect = None
    if check_linearity and len(ensemble.members) >= 2:
        x = ensemble.members[0]
        y = ensemble.members[-1]
        alpha = 0.37 - 0.59j
        lhs = apply_op(Field(grid, alpha * x.values + y.values)).values
        rhs = alpha * apply_op(x).values + apply_op(y).values
        scale = max(lp_norm(Field(grid, rhs), 2), 1e-300)
        defect = lp_norm(Field(grid, lhs - rhs), 2) / scale
        if defect > linearity_tol:
            raise ValueError(
                f"operator is not linear to tolerance (defect {defect:.3e})"
            )
    ratios = []
    for member in ensemble.members:
        denom = lp_norm(member, p)
        if denom == 0.0:
            continue
        ratios.append(lp_norm(apply_op(member), p) / denom)
    ratios = np.array(ratios)
    return NormReport(
        p=p,
        estimate=float(np.max(ratios)),
        mean=float(np.mean(ratios)),
        argmax=int(np.argmax(ratios)),
        count=len(ratios),
        linearity_defect=defect,
    )


# ---------------------------------------------------------------------------
# decay fits and bound audits
# ---------------------------------------------------------------------------


@dataclass
class FitReport:
    rate: float  # slope of log(value) against log(time)
    amplitude: float
    max_log_residual: float


def decay_fit(times, values):
    """Least-squares power-law fit value ~ amplitude * time^rate.

    Requires at least four strictly positive (time, value) pairs.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size < 4:
        raise ValueError("need at least four samples for a decay fit")
    if np.any(times <= 0) or np.any(values <= 0):
        raise ValueError("decay fits need strictly positive times and values")
    lt = np.log(times)
    lv = np.log(values)
    design = np.stack([lt, np.ones_like(lt)], axis=1)
    coef, *_ = np.linalg.lstsq(design, lv, rcond=None)
    resid = lv - design @ coef
    return FitReport(
        rate=float(coef[0]),
        amplitude=float(math.exp(coef[1])),
        max_log_residual=float(np.max(np.abs(resid))),
    )


@dataclass
class AuditRow:
    label: str
    measured: float
    bound: float
    ratio: float
    ok: bool


def bound_audit(label, measured, bound, slack=1.0):
    """One bound-check row: measured against slack * bound."""
    limit = slack * bound
    ratio = measured / bound if bound > 0 else math.inf
    ok = measured <= limit + 1e-12 * max(1.0, abs(limit))
    return AuditRow(label, float(measured), float(bound), float(ratio), bool(ok))
