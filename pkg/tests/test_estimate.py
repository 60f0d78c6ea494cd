import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scatterkit.estimate import (
    bound_audit,
    decay_fit,
    dense_norm,
    dense_operator_norm,
    make_ensemble,
    op_norm,
    operator_matrix,
)
from scatterkit.grids import Field, GridSpec, forward_transform, free_propagate, lp_norm
from conftest import random_field


# ---------------------------------------------------------------------------
# exact dense norms
# ---------------------------------------------------------------------------


def test_dense_norm_hand_matrix():
    mat = np.array([[1.0, -2.0], [3.0j, 4.0]])
    assert dense_norm(mat, 1) == pytest.approx(6.0)
    assert dense_norm(mat, math.inf) == pytest.approx(7.0)
    assert dense_norm(mat, 2) == pytest.approx(np.linalg.norm(mat, 2))
    with pytest.raises(ValueError, match="1, 2, inf"):
        dense_norm(mat, 4)


@given(st.integers(0, 10**6))
@settings(max_examples=25, deadline=None)
def test_dense_norm_transpose_duality(seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    mat = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    # the 1 and inf induced norms swap under conjugate transpose, 2 is fixed
    assert dense_norm(mat, 1) == pytest.approx(dense_norm(mat.conj().T, math.inf))
    assert dense_norm(mat, 2) == pytest.approx(dense_norm(mat.conj().T, 2))


def test_operator_matrix_identity(grid1d):
    mat = operator_matrix(lambda f: f, grid1d)
    assert np.array_equal(mat, np.eye(grid1d.size))


def test_operator_matrix_cap():
    big = GridSpec(1, 2048, 16.0)
    with pytest.raises(ValueError, match="capped"):
        operator_matrix(lambda f: f, big)


def test_multiplier_norm_is_sup(grid1d):
    v = 1.0 + 0.5 * np.sin(math.pi * grid1d.x_mesh[0] / grid1d.half_length)
    mult = lambda f: Field(grid1d, v * f.values)
    for p in (1, 2, math.inf):
        assert dense_operator_norm(mult, grid1d, p) == pytest.approx(np.max(v))


def test_free_flow_unitary_at_p2(grid1d):
    got = dense_operator_norm(lambda f: free_propagate(f, 0.7), grid1d, 2)
    assert got == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# probe ensembles
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "kind", ["gaussian_random", "plane_packets", "near_delta", "high_cutoff"]
)
def test_ensemble_reproducible_and_normalized(grid1d_fine, kind):
    a = make_ensemble(grid1d_fine, kind, count=6, seed=9)
    b = make_ensemble(grid1d_fine, kind, count=6, seed=9)
    assert len(a.members) == 6
    for ma, mb in zip(a.members, b.members):
        assert np.array_equal(ma.values, mb.values)
        assert lp_norm(ma, 2) == pytest.approx(1.0, abs=1e-12)
    assert not np.allclose(a.members[0].values, a.members[1].values)


def test_ensemble_prefix_stability(grid1d):
    # growing the count must not reshuffle earlier members
    short = make_ensemble(grid1d, "gaussian_random", count=3, seed=4)
    long = make_ensemble(grid1d, "gaussian_random", count=8, seed=4)
    for ms, ml in zip(short.members, long.members):
        assert np.array_equal(ms.values, ml.values)


def test_high_cutoff_members_live_above_threshold(grid1d_fine):
    thr = grid1d_fine.nyquist / 2.0
    ens = make_ensemble(grid1d_fine, "high_cutoff", count=4, seed=2)
    low = grid1d_fine.xi_radius <= thr / 2.0 + 1e-12  # symbol vanishes there
    for m in ens.members:
        assert np.max(np.abs(forward_transform(m)[low])) < 1e-14


def test_ensemble_unknown_kind(grid1d):
    with pytest.raises(ValueError, match="kind"):
        make_ensemble(grid1d, "uniform_disk", count=2)


# ---------------------------------------------------------------------------
# ensemble norm estimates
# ---------------------------------------------------------------------------


def test_op_norm_multiplier_bracketed():
    grid = GridSpec(1, 64, 8.0)
    v = np.exp(-grid.x_mesh[0] ** 2)
    mult = lambda f: Field(grid, v * f.values)
    report = op_norm(mult, make_ensemble(grid, "near_delta", count=24, seed=5))
    # lower bound by construction; near-delta probes land within random-center
    # distance of the peak, so most of the sup is recovered
    assert report.estimate <= 1.0 + 1e-12
    assert report.estimate > 0.75
    assert report.mean <= report.estimate
    assert 0 <= report.argmax < report.count == 24
    assert report.linearity_defect < 1e-12


def test_op_norm_rejects_nonlinear(grid1d):
    square = lambda f: Field(grid1d, f.values**2)
    ens = make_ensemble(grid1d, "gaussian_random", count=4, seed=1)
    with pytest.raises(ValueError, match="linear"):
        op_norm(square, ens)
    report = op_norm(square, ens, check_linearity=False)
    assert report.linearity_defect is None


def test_op_norm_never_exceeds_dense(grid1d):
    rng = np.random.Generator(np.random.PCG64(7))
    v = rng.standard_normal(grid1d.size) + 1j * rng.standard_normal(grid1d.size)
    mult = lambda f: Field(grid1d, v * f.values)
    ens = make_ensemble(grid1d, "gaussian_random", count=32, seed=3)
    for p in (1, 2, math.inf):
        exact = dense_operator_norm(mult, grid1d, p)
        assert op_norm(mult, ens, p=p).estimate <= exact + 1e-12


# ---------------------------------------------------------------------------
# decay fits and audit rows
# ---------------------------------------------------------------------------


def test_decay_fit_recovers_power_law():
    times = np.linspace(1.0, 9.0, 12)
    fit = decay_fit(times, 3.2 * times**-1.5)
    assert fit.rate == pytest.approx(-1.5, abs=1e-12)
    assert fit.amplitude == pytest.approx(3.2, rel=1e-12)
    assert fit.max_log_residual < 1e-12


def test_decay_fit_validation():
    with pytest.raises(ValueError, match="four"):
        decay_fit([1.0, 2.0, 3.0], [1.0, 0.5, 0.3])
    with pytest.raises(ValueError, match="positive"):
        decay_fit([0.0, 1.0, 2.0, 3.0], [1.0, 1.0, 1.0, 1.0])
    with pytest.raises(ValueError, match="positive"):
        decay_fit([1.0, 2.0, 3.0, 4.0], [1.0, -1.0, 1.0, 1.0])


def test_bound_audit_rows():
    row = bound_audit("calm", 0.8, 1.0)
    assert row.ok and row.ratio == pytest.approx(0.8)
    row = bound_audit("hot", 1.3, 1.0)
    assert not row.ok
    assert bound_audit("slacked", 1.3, 1.0, slack=1.5).ok
    row = bound_audit("vacuous", 0.5, 0.0)
    assert row.ratio == math.inf and not row.ok
