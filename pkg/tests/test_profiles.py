import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from mhdlab.profiles import (ProfileError, ProfileSpec, build_background, check_decay, eval_profile,
                             geometric_grid, mri_criterion, profile_functions, rayleigh_potential)


def rational(A=1.0, p=0.75, B=0.0, q=1.0, eps=0.05):
    return ProfileSpec(kind="rational", parameters=(A, p, B, q), epsilon=eps)


def test_constant_rotation_has_zero_derivatives():
    prof = eval_profile(rational(A=2.0, p=0.0), geometric_grid(10.0, 200))
    assert np.all(prof.d_omega2 == 0)
    assert np.all(prof.d_b == 0)


def test_default_profile_closed_form_derivative():
    r = geometric_grid(12.0, 300)
    prof = eval_profile(ProfileSpec.default(), r)
    expected = -3 * r * (1 + r**2) ** (-2.5)
    np.testing.assert_allclose(prof.d_omega2, expected, rtol=1e-13, atol=0)
    assert np.all(prof.d_omega2 < 0)


@pytest.mark.parametrize("n", [256, 512])
def test_table_derivative_fourth_order(n):
    # frozen oracle: max errors on uniform [0.05, 6] grids at n and 2n nodes
    def err(m):
        r = np.linspace(0.05, 6.0, m)
        w = (1 + r**2) ** -0.75
        spec = ProfileSpec.from_table(r, w, np.ones_like(r))
        prof = eval_profile(spec, r)
        return np.max(np.abs(prof.d_omega2 + 3 * r * (1 + r**2) ** -2.5))

    order = np.log2(err(n) / err(2 * n))
    assert 3.5 < order < 4.6


def test_eval_profile_rejects_bad_inputs():
    with pytest.raises(ProfileError):
        eval_profile(rational(B=-2.0, q=1.0), geometric_grid(5.0, 50))
    with pytest.raises(ProfileError):
        eval_profile(ProfileSpec.default(), [1.0, 0.5, 2.0])
    with pytest.raises(ProfileError):
        ProfileSpec(epsilon=0.0)
    with pytest.raises(ProfileError):
        ProfileSpec(beta=0.5)


def test_decay_default_profile_alpha_half():
    prof = eval_profile(ProfileSpec.default(), geometric_grid(1000.0, 800, r_min=1e-3))
    rep = check_decay(prof)
    assert rep.ok, rep.failed()
    # d(omega^2) ~ r^-4 in the outer decade
    assert rep.exponents["d_omega2_outer"] == pytest.approx(-4.0, abs=0.02)
    assert rep.alpha_fit == pytest.approx(0.5, abs=0.01)


def test_decay_constant_b_passes_b_conditions():
    rep = check_decay(eval_profile(ProfileSpec.default(), geometric_grid(1000.0, 400, r_min=1e-3)))
    assert rep.passes["outer_d_b"] and rep.passes["inner_d_b"]
    assert rep.exponents["d_b_outer"] is None


def test_decay_slow_rotation_fails_finite_energy():
    rep = check_decay(eval_profile(rational(p=0.25), geometric_grid(1000.0, 400, r_min=1e-3)))
    assert not rep.passes["finite_energy_omega"]
    assert rep.exponents["omega_outer"] == pytest.approx(-0.5, abs=0.02)


def test_decay_short_grid_names_decade():
    with pytest.raises(ProfileError, match="decade"):
        check_decay(eval_profile(ProfileSpec.default(), np.linspace(1.0, 5.0, 50)))


def test_mri_criterion_cases():
    r = geometric_grid(12.0, 200)
    flat = mri_criterion(eval_profile(rational(p=0.0), r))
    assert flat.marginal and not flat.stable_rayleigh
    rep = mri_criterion(eval_profile(ProfileSpec.default(), r))
    assert not rep.stable_rayleigh and rep.r0 == r[1]
    w = np.sqrt(1 + r / (1 + r))
    rising = mri_criterion(eval_profile(ProfileSpec.from_table(r, w, np.ones_like(r)), r))
    assert rising.stable_rayleigh


def test_rayleigh_potential_values():
    r = geometric_grid(12.0, 101, r_min=0.01)
    r = np.sort(np.append(r, 1.0))
    prof = eval_profile(ProfileSpec.default(), r)
    F = rayleigh_potential(prof, 0.05)
    i = np.searchsorted(r, 1.0)
    assert F[i] == pytest.approx(-3 * 2**-2.5 / 0.0025, rel=1e-13)
    np.testing.assert_allclose(F, prof.d_omega2 / (0.0025 * r), rtol=1e-14)
    assert np.all(rayleigh_potential(eval_profile(rational(p=0.0), r), 0.3) == 0)


def test_background_constant_b():
    r = geometric_grid(12.0, 401)
    spec = ProfileSpec.default(epsilon=0.1)
    bg = build_background(spec, eval_profile(spec, r))
    np.testing.assert_allclose(bg.psi0, -0.1 * r**2 / 2, rtol=1e-12)
    np.testing.assert_allclose(bg.v0_theta / r, eval_profile(spec, r).omega, rtol=1e-15)


def test_background_gaussian_b_matches_quadrature():
    spec = ProfileSpec(kind="gaussian", parameters=(1.0, 2.0, 1.0), epsilon=0.2)
    r = np.linspace(0.01, 5.0, 2049)
    bg = build_background(spec, eval_profile(spec, r))
    f = profile_functions(spec)["b"]
    for i in (100, 1000, 2048):
        ref = -0.2 * quad(lambda s: s * f(s), 0.0, r[i], epsabs=1e-13, epsrel=1e-13, limit=200)[0]
        assert abs(bg.psi0[i] - ref) < 1e-10


def test_flux_antiderivative_closed_forms():
    for spec in (rational(B=0.5, q=1.0), rational(B=0.5, q=2.5),
                 ProfileSpec(kind="gaussian", parameters=(1.0, 2.0, 0.7))):
        fn = profile_functions(spec)
        ref = quad(lambda s: s * fn["b"](s), 0, 3.0, epsabs=1e-14)[0]
        assert fn["int_sb"](3.0) == pytest.approx(ref, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(B=st.floats(0.0, 3.0), q=st.floats(0.6, 3.0), eps=st.floats(0.05, 2.0))
def test_background_flux_monotone(B, q, eps):
    spec = rational(B=B, q=q, eps=eps)
    r = geometric_grid(8.0, 120)
    bg = build_background(spec, eval_profile(spec, r))
    assert bg.psi0[0] <= 0 and abs(bg.psi0[0]) <= eps * (1 + B) * r[0] ** 2
    assert np.all(np.diff(bg.psi0) <= 0)


def test_profile_csv_header():
    prof = eval_profile(ProfileSpec.default(), geometric_grid(2.0, 10))
    lines = prof.to_csv().splitlines()
    assert lines[0] == "r,omega,b,d_omega2,d_b,d2_b"
    assert len(lines) == 11
