import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as sci_integrate

from scatterkit.estimate import dense_operator_norm
from scatterkit.grids import Field, GridSpec, forward_transform, inverse_transform, lp_norm
from scatterkit.interaction import (
    QuadratureSpec,
    SingularModeError,
    apply_kt,
    integrate_damped_modal,
    integrate_damped_quad,
    integrate_kt,
    maximal_kt,
    oscillatory_transform,
    translation_kernel_mass,
)
from scatterkit.potentials import (
    ConstEnvelope,
    Enveloped,
    GaussianWell,
    LogOscEnvelope,
    Moving,
    PlaneWaveSum,
    QuenchEnvelope,
    TanhEnvelope,
    evaluate,
    lattice_mass,
)
from conftest import random_field


def band_limit(field, keep):
    """Zero all modes with any |k| component above keep."""
    grid = field.grid
    spec = forward_transform(field)
    mask = np.ones(grid.size, dtype=bool)
    for ax in range(grid.dim):
        mask &= np.abs(grid.index_mesh[ax]) <= keep
    return inverse_transform(grid, np.where(mask, spec, 0.0))


def plane_wave(grid, k):
    phase = np.zeros(grid.size)
    for ax, kk in enumerate(np.atleast_1d(k)):
        phase = phase + kk * grid.freq_step * grid.x_mesh[ax]
    return Field(grid, np.exp(1j * phase))


# ---------------------------------------------------------------------------
# applying K_t
# ---------------------------------------------------------------------------


def test_kt_exact_phase_on_plane_waves(grid1d):
    # K_t(a e^{ibx}) e^{iqx} = a e^{it(b^2+2bq)} e^{i(b+q)x}, no wrap involved
    step = grid1d.freq_step
    b, q, t = 2, 3, 0.83
    pws = PlaneWaveSum(terms=((0.7 - 0.2j, (b * step,)),))
    probe = plane_wave(grid1d, q)
    out = apply_kt(pws, probe, t, route="planewave")
    theta = step**2 * (b * b + 2 * b * q)
    expected = (0.7 - 0.2j) * np.exp(1j * t * theta) * plane_wave(grid1d, b + q).values
    assert np.max(np.abs(out.values - expected)) < 1e-13


def test_kt_routes_agree_off_the_wrap(grid1d):
    step = grid1d.freq_step
    pws = PlaneWaveSum(terms=((0.5, (2 * step,)), (0.3j, (-step,))))
    probe = band_limit(random_field(grid1d, seed=21), keep=5)  # 5 + 2 < 8
    for t in (0.0, 0.61, 2.7):
        spectral = apply_kt(pws, probe, t, route="spectral")
        planewave = apply_kt(pws, probe, t, route="planewave")
        assert np.max(np.abs(spectral.values - planewave.values)) < 1e-12


def test_kt_routes_differ_on_wrapped_modes(grid1d):
    # a full-band probe pushes modes past Nyquist: the wrapped kinetic phase
    # and the true phase genuinely disagree, which is the aliasing boundary
    step = grid1d.freq_step
    pws = PlaneWaveSum(terms=((1.0, (3 * step,)),))
    probe = random_field(grid1d, seed=22)
    spectral = apply_kt(pws, probe, 0.77, route="spectral")
    planewave = apply_kt(pws, probe, 0.77, route="planewave")
    assert np.max(np.abs(spectral.values - planewave.values)) > 1e-3


def test_kt_l2_norm_equals_sup_of_potential(grid1d):
    # conjugation by a unitary leaves the 2 -> 2 norm of multiplication at
    # sup |V|; the dense materialization confirms it exactly
    well = GaussianWell(amplitude=-0.8, sigma=1.0, center=(0.3,))
    vmax = float(np.max(np.abs(evaluate(well, grid1d, 0.0).values)))
    for t in (0.0, 0.9):
        norm = dense_operator_norm(lambda f: apply_kt(well, f, t), grid1d, 2)
        assert norm == pytest.approx(vmax, rel=1e-10)


@settings(max_examples=20)
@given(
    t=st.floats(-3.0, 3.0),
    amps=st.lists(
        st.complex_numbers(max_magnitude=2.0, allow_nan=False, allow_infinity=False),
        min_size=1,
        max_size=3,
    ),
    seed=st.integers(0, 10_000),
)
def test_kt_mass_bound_at_p2(t, amps, seed):
    grid = GridSpec(1, 16, 4.0)
    step = grid.freq_step
    terms = tuple((a, ((i + 1) * step,)) for i, a in enumerate(amps))
    pws = PlaneWaveSum(terms=terms)
    psi = random_field(grid, seed=seed)
    mass = lattice_mass(pws, grid, 0.0)
    out = apply_kt(pws, psi, t, route="planewave")
    assert lp_norm(out, 2) <= mass * lp_norm(psi, 2) * (1 + 1e-12)


@settings(max_examples=20)
@given(t=st.floats(-2.0, 2.0), seed=st.integers(0, 10_000))
def test_kt_p1_bound_with_translation_factors(t, seed):
    # per mode the operator is modulation times translation by 2 t b, so the
    # sharp lattice bound at p = 1 carries the Dirichlet column mass
    grid = GridSpec(1, 16, 4.0)
    step = grid.freq_step
    pws = PlaneWaveSum(terms=((0.4, (2 * step,)), (0.2j, (-3 * step,))))
    psi = random_field(grid, seed=seed)
    out = apply_kt(pws, psi, t, route="planewave")
    bound = sum(
        abs(a) * translation_kernel_mass(grid, 2.0 * t * np.asarray(b), 1)
        for a, b in pws.terms
    )
    assert lp_norm(out, 1) <= bound * lp_norm(psi, 1) * (1 + 1e-12)


def test_translation_kernel_mass(grid1d):
    # whole-cell displacement is a permutation; fractional cells cost more
    assert translation_kernel_mass(grid1d, (grid1d.h,), 1) == pytest.approx(1.0)
    assert translation_kernel_mass(grid1d, (grid1d.h,), math.inf) == pytest.approx(1.0)
    frac = translation_kernel_mass(grid1d, (0.5 * grid1d.h,), 1)
    assert frac > 1.5  # the Dirichlet column sum, ~ (2/pi) log N
    assert translation_kernel_mass(grid1d, (0.37,), 2) == 1.0


def test_maximal_kt(grid1d):
    well = GaussianWell(amplitude=1.0, sigma=1.0, center=(0.0,))
    psi = random_field(grid1d, seed=30)
    rep = maximal_kt(well, psi, np.linspace(0, 2, 9))
    assert rep.sup == pytest.approx(np.max(rep.norms))
    assert rep.sup >= rep.norms[0]


# ---------------------------------------------------------------------------
# quadrature machinery
# ---------------------------------------------------------------------------


def test_quadrature_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(rule="gauss")
    with pytest.raises(ValueError):
        QuadratureSpec(rule="simpson", nodes=10)
    ts, ws = QuadratureSpec(rule="simpson", nodes=5).mesh(0.0, 1.0)
    assert np.sum(ws) == pytest.approx(1.0)
    ts, ws = QuadratureSpec(rule="trapezoid", nodes=9).mesh(0.0, 2.0)
    assert np.sum(ws) == pytest.approx(2.0)


def test_integrate_kt_with_weight(grid1d):
    # potential = identity in disguise: zero-frequency plane wave, so
    # K_t = 1 and the integral reduces to the scalar weight integral
    pws = PlaneWaveSum(terms=((1.0, (0.0,)),))
    psi = random_field(grid1d, seed=31)
    out = integrate_kt(
        pws, psi, 0.0, 2.0, QuadratureSpec("simpson", 129), weight=lambda t: t
    )
    assert np.max(np.abs(out.values - 2.0 * psi.values)) < 1e-10


# ---------------------------------------------------------------------------
# oscillatory transforms
# ---------------------------------------------------------------------------


def quad_reference(env, theta, eps, upper):
    def re_part(t):
        return float(np.real(env(t) * np.exp((1j * theta - eps) * t)))

    def im_part(t):
        return float(np.imag(env(t) * np.exp((1j * theta - eps) * t)))

    re, _ = sci_integrate.quad(re_part, 0, upper, limit=800)
    im, _ = sci_integrate.quad(im_part, 0, upper, limit=800)
    return re + 1j * im


@pytest.mark.parametrize("theta", [0.3, 2.0, 17.0])
@pytest.mark.parametrize("eps", [0.05, 0.5])
def test_tanh_transform_matches_quadrature(theta, eps):
    z = 1j * theta - eps
    got = oscillatory_transform(TanhEnvelope(), np.array([z]))[0]
    ref = quad_reference(TanhEnvelope(), theta, eps, upper=40.0 / eps)
    assert abs(got - ref) < 1e-8


def test_sharp_quench_transform():
    env = QuenchEnvelope(delay=1.3)
    z = 1j * 2.0 - 0.4
    got = oscillatory_transform(env, np.array([z]))[0]
    assert got == pytest.approx(-np.exp(z * 1.3) / z)


@pytest.mark.parametrize("theta", [0.5, 4.0])
def test_filon_transform_logosc_matches_quadrature(theta):
    # piecewise-linear error is quadratic in the mesh ratio delta
    env = LogOscEnvelope(omega=3.0, decay=0.5)
    eps = 0.3
    z = 1j * theta - eps
    got = oscillatory_transform(env, np.array([z]), eps=eps, delta=0.004)[0]
    ref = quad_reference(env, theta, eps, upper=90.0)
    assert abs(got - ref) < 2e-5


def test_filon_transform_smooth_quench_matches_quadrature():
    env = QuenchEnvelope(delay=0.7, smooth=True)
    eps, theta = 0.4, 1.7
    z = 1j * theta - eps
    got = oscillatory_transform(env, np.array([z]), eps=eps, delta=0.004)[0]
    ref = quad_reference(env, theta, eps, upper=60.0)
    assert abs(got - ref) < 2e-5


def test_const_transform_zero_exponent_raises():
    with pytest.raises(SingularModeError):
        oscillatory_transform(ConstEnvelope(), np.array([0.0 + 0.0j]))


# ---------------------------------------------------------------------------
# damped integrals: modal against quadrature and closed forms
# ---------------------------------------------------------------------------


def test_damped_modal_resolvent_identity(grid1d):
    # single mode against a single source: c/(eps - i theta) exactly
    step = grid1d.freq_step
    b, q, eps = 2, 1, 0.5
    pws = PlaneWaveSum(terms=((0.9, (b * step,)),))
    probe = plane_wave(grid1d, q)
    out = integrate_damped_modal(pws, probe, eps)
    theta = step**2 * (b * b + 2 * b * q)
    expected = 0.9 / (eps - 1j * theta) * plane_wave(grid1d, b + q).values
    assert np.max(np.abs(out.values - expected)) < 1e-12


def test_damped_modal_matches_quadrature_static():
    grid = GridSpec(1, 32, 8.0)
    well = GaussianWell(amplitude=0.5, sigma=1.0, center=(0.0,))
    psi = band_limit(random_field(grid, seed=41), keep=4)
    eps = 0.8
    modal = integrate_damped_modal(well, psi, eps)
    quad = integrate_damped_quad(
        well, psi, eps, quad=QuadratureSpec("simpson", 8193), tail_tol=1e-10,
        route="planewave",
    )
    err = lp_norm(Field(grid, modal.values - quad.values), 2)
    assert err < 1e-6 * lp_norm(modal, 2)


def test_damped_modal_tanh_matches_quadrature():
    grid = GridSpec(1, 32, 8.0)
    spec = Enveloped(
        GaussianWell(amplitude=0.5, sigma=1.0, center=(0.0,)), TanhEnvelope()
    )
    psi = band_limit(random_field(grid, seed=43), keep=4)
    eps = 0.8
    modal = integrate_damped_modal(spec, psi, eps)
    quad = integrate_damped_quad(
        spec, psi, eps, quad=QuadratureSpec("simpson", 8193), tail_tol=1e-10,
        route="planewave",
    )
    err = lp_norm(Field(grid, modal.values - quad.values), 2)
    assert err < 1e-6 * lp_norm(modal, 2)


def test_damped_modal_moving_matches_quadrature():
    grid = GridSpec(1, 64, 16.0)
    mover = Moving(
        spatial=GaussianWell(amplitude=0.4, sigma=1.0, center=(0.0,)),
        path="sin_log",
        velocity=(1.0,),
    )
    psi = band_limit(random_field(grid, seed=47), keep=8)
    eps = 0.5
    modal = integrate_damped_modal(mover, psi, eps, tail_tol=1e-8)
    quad = integrate_damped_quad(
        mover, psi, eps, quad=QuadratureSpec("simpson", 4097), tail_tol=1e-8,
        route="planewave",
    )
    err = lp_norm(Field(grid, modal.values - quad.values), 2)
    assert err < 5e-3 * lp_norm(modal, 2)


def test_damped_modal_abelian_limit_and_resonance(grid1d):
    step = grid1d.freq_step
    # odd mode: theta = b^2 + 2 b q = 1 + 2q never vanishes on integers
    odd = PlaneWaveSum(terms=((0.5, (step,)),))
    psi = random_field(grid1d, seed=53)
    at_zero = integrate_damped_modal(odd, psi, 0.0)
    small = integrate_damped_modal(odd, psi, 1e-7)
    gap = lp_norm(Field(grid1d, at_zero.values - small.values), 2)
    assert gap < 1e-5
    # even mode resonates: b = 2 against q = -1
    even = PlaneWaveSum(terms=((0.5, (2 * step,)),))
    with pytest.raises(SingularModeError, match=r"\(2,\).*\(-1,\)"):
        integrate_damped_modal(even, psi, 0.0)


def test_damped_quad_rejects_zero_eps(grid1d):
    well = GaussianWell(amplitude=1.0, sigma=1.0, center=(0.0,))
    with pytest.raises(ValueError):
        integrate_damped_quad(well, random_field(grid1d), 0.0)
