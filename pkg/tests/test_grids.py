import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scatterkit.grids import (
    CutoffProfile,
    Field,
    GridSpec,
    Multiplier,
    NyquistWarning,
    dense_transform_matrix,
    forward_transform,
    free_propagate,
    inverse_transform,
    lp_norm,
    make_cutoff,
)
from conftest import random_field


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(4, 16, 4.0)
    with pytest.raises(ValueError):
        GridSpec(1, 24, 4.0)  # not a power of two
    with pytest.raises(ValueError):
        GridSpec(1, 4, 4.0)  # too few points
    with pytest.raises(ValueError):
        GridSpec(1, 16, -1.0)


def test_grid_conventions(grid1d):
    assert grid1d.h == pytest.approx(0.5)
    assert grid1d.x_axis[0] == pytest.approx(-4.0)
    assert grid1d.x_axis[-1] == pytest.approx(4.0 - 0.5)
    assert grid1d.freq_step == pytest.approx(math.pi / 4.0)
    assert grid1d.nyquist == pytest.approx(8 * math.pi / 4.0)
    # FFT ordering: positive frequencies first, then the negative block
    assert grid1d.xi_axis[1] == pytest.approx(grid1d.freq_step)
    assert grid1d.xi_axis[-1] == pytest.approx(-grid1d.freq_step)
    assert np.max(grid1d.xi_radius) == pytest.approx(grid1d.nyquist)


def test_transforms_are_unitary(grid2d):
    f = random_field(grid2d, seed=1)
    spec = forward_transform(f)
    assert np.linalg.norm(spec) == pytest.approx(np.linalg.norm(f.values))
    back = inverse_transform(grid2d, spec)
    assert np.max(np.abs(back.values - f.values)) < 1e-13


def test_dense_transform_matches_fft(grid2d):
    f = random_field(grid2d, seed=2)
    mat = dense_transform_matrix(grid2d)
    assert np.max(np.abs(mat @ f.values - forward_transform(f))) < 1e-12
    ident = mat.conj().T @ mat
    assert np.max(np.abs(ident - np.eye(grid2d.size))) < 1e-12


@given(k=st.integers(min_value=-8, max_value=7), t=st.floats(-4, 4))
def test_free_flow_on_plane_waves(k, t):
    grid = GridSpec(1, 16, 4.0)
    xi = k * grid.freq_step
    wave = Field(grid, np.exp(1j * xi * grid.x_mesh[0]))
    out = free_propagate(wave, t)
    expected = np.exp(-1j * t * xi**2) * wave.values
    assert np.max(np.abs(out.values - expected)) < 1e-10


def test_free_flow_composes(grid1d):
    f = random_field(grid1d, seed=4)
    one = free_propagate(free_propagate(f, 0.4), 0.35)
    two = free_propagate(f, 0.75)
    assert np.max(np.abs(one.values - two.values)) < 1e-12
    assert lp_norm(one, 2) == pytest.approx(lp_norm(f, 2))


def test_free_flow_zero_time_is_identity(grid1d):
    f = random_field(grid1d, seed=6)
    out = free_propagate(f, 0.0)
    assert np.array_equal(out.values, f.values)
    assert out.values is not f.values


@given(lam=st.floats(0.5, 1.0))
def test_cutoff_profile_complementary(lam):
    # the ramp is point-symmetric about its midpoint 3/4
    prof = CutoffProfile()
    assert prof(np.array([lam])) + prof(np.array([1.5 - lam])) == pytest.approx(1.0)


def test_cutoff_profile_shape():
    prof = CutoffProfile()
    lam = np.linspace(-1, 3, 401)
    vals = prof(lam)
    assert np.all(vals[lam <= 0.5] == 0.0)
    assert np.all(vals[lam >= 1.0] == 1.0)
    assert np.all(np.diff(vals) >= -1e-15)


def test_high_low_cutoffs_partition(grid1d_fine):
    hi = make_cutoff(grid1d_fine, "high", 3.0)
    lo = make_cutoff(grid1d_fine, "low", 3.0)
    assert np.max(np.abs(hi.symbol + lo.symbol - 1.0)) == 0.0
    # high part vanishes at and below half threshold, is one beyond it
    r = grid1d_fine.xi_radius
    assert np.all(hi.symbol[r <= 1.5] == 0.0)
    assert np.all(hi.symbol[r >= 3.0] == 1.0)


def test_cutoff_near_nyquist_warns(grid1d):
    with pytest.warns(NyquistWarning):
        make_cutoff(grid1d, "high", grid1d.nyquist)


def test_cutoff_rejects_bad_args(grid1d):
    with pytest.raises(ValueError):
        make_cutoff(grid1d, "band", 1.0)
    with pytest.raises(ValueError):
        make_cutoff(grid1d, "high", 0.0)


def test_multiplier_batched_matches_single(grid1d):
    mult = make_cutoff(grid1d, "high", 2.0)
    members = [random_field(grid1d, seed=s) for s in range(3)]
    batch = np.stack([m.values.reshape(grid1d.shape) for m in members])
    out = mult.apply_raw(batch)
    for i, m in enumerate(members):
        single = mult.apply(m).values.reshape(grid1d.shape)
        assert np.max(np.abs(out[i] - single)) < 1e-13


def test_lp_norms(grid1d):
    vals = np.zeros(grid1d.size, dtype=complex)
    vals[3] = 2.0
    f = Field(grid1d, vals)
    assert lp_norm(f, math.inf) == pytest.approx(2.0)
    assert lp_norm(f, 2) == pytest.approx(2.0 * math.sqrt(grid1d.h))
    assert lp_norm(f, 1) == pytest.approx(2.0 * grid1d.h)
    with pytest.raises(ValueError):
        lp_norm(f, 0.5)


def test_field_shape_validation(grid1d):
    with pytest.raises(ValueError):
        Field(grid1d, np.ones(grid1d.size + 1))
