import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mhdlab.axi_fields import AxiField, GridRZ, energy_norm, project_state, sobolev_norm
from mhdlab.evolution import SimilarityNonlinearModel, step
from mhdlab.nonuniqueness import (BackgroundCutoff, ConstructionConfig, ConstructionError, EigenEntry, Trajectory,
                                  WeakTestFunction, agreement, background_force, build_xlim, cutoff,
                                  direct_unstable_trajectory, duhamel_map, energy_slack, fixed_point,
                                  force_parts, make_test_bank, select_beta, separation_fit, similarity_background,
                                  smooth_step, tail_check, to_physical, trajectory_difference, trend_gaps, weak_residuals,
                                  x_norm)
from mhdlab.profiles import ProfileSpec

SPEC = ProfileSpec(kind="rational", parameters=(2.0, 0.75, 0.0, 1.0), epsilon=0.6)
CUT = BackgroundCutoff((3.0, 5.0), (5.0, 7.0))


@pytest.fixture(scope="module")
def grid():
    return GridRZ.similarity(16, 32, R=8.0, Z=8.0)


@pytest.fixture(scope="module")
def xi0(grid):
    return similarity_background(SPEC, grid, CUT)


def unit_mode(grid, seed=0):
    rng = np.random.default_rng(seed)
    y = AxiField.from_vector(grid, rng.standard_normal(AxiField.zeros(grid).to_vector().size))
    rho = np.sqrt(grid.r_f[:, None] ** 2 + grid.z[None, :] ** 2)
    y.u_theta = y.u_theta * cutoff(rho, 3.0, 6.0)
    y.phi = y.phi * cutoff(rho, 3.0, 6.0)
    y = project_state(y)
    y.frame = "similarity"
    return y * (1.0 / energy_norm(y))


def small_config(grid, **kw):
    opts = dict(beta=2.0, a=1.0, eta=unit_mode(grid), tau_start=-6.0, tau_end=0.0, dt=0.02, seed_amplitude=1e-3)
    opts.update(kw)
    return ConstructionConfig(**opts)


def test_smooth_step_and_cutoff():
    x = np.linspace(-1, 2, 301)
    s = smooth_step(x)
    assert np.all(s[x <= 0] == 0) and np.all(s[x >= 1] == 1)
    assert np.all(np.diff(s) >= 0)
    assert smooth_step(0.5) == pytest.approx(0.5)
    assert cutoff(2.0, 3.0, 5.0) == 1.0 and cutoff(6.0, 3.0, 5.0) == 0.0


def test_background_needs_truncated_grid():
    with pytest.raises(ConstructionError):
        similarity_background(SPEC, GridRZ(8, 4.0, 8))


def test_background_vanishes_outside_cutoff(grid, xi0):
    rho = np.sqrt(grid.r_f[:, None] ** 2 + grid.z[None, :] ** 2)
    assert np.all(xi0.u_theta[rho >= 5.0] == 0)
    assert np.all(xi0.phi[rho >= 7.0] == 0)
    assert np.max(np.abs(xi0.u_theta)) > 0


def test_force_of_zero_background_is_zero(grid):
    F = background_force(3.0, AxiField.zeros(grid, "similarity"))
    assert energy_norm(F) == 0.0


@settings(max_examples=6, deadline=None)
@given(beta=st.floats(0.5, 50.0))
def test_force_scales_termwise(beta):
    g = GridRZ.similarity(16, 32, R=8.0, Z=8.0)
    x0 = similarity_background(SPEC, g, CUT)
    p = force_parts(x0)
    F1, F2 = background_force(beta, x0), background_force(2 * beta, x0)
    lin = (F2 - F1 * 4.0) * (-1.0 / (2 * beta))  # 2 beta L - 4 beta L = -2 beta L
    quad = (F2 - F1 * 2.0) * (1.0 / (2 * beta**2))  # 4 beta^2 Q - 2 beta^2 Q = 2 beta^2 Q
    assert energy_norm(lin - p.linear) <= 1e-10 * energy_norm(p.linear)
    assert energy_norm(quad - p.quadratic) <= 1e-10 * energy_norm(p.quadratic)


def test_background_is_discretely_steady(grid, xi0):
    beta = 5.0
    F = background_force(beta, xi0)
    m = SimilarityNonlinearModel(grid, F)
    y = xi0 * beta
    for i in range(20):
        y = step(y, 0.02, m, -1.0 + 0.02 * i)
    assert energy_norm(y - xi0 * beta) <= 1e-11 * beta * energy_norm(xi0)
    # the doubled quadratic term does not keep the background steady
    Fd = background_force(beta, xi0, convention="double")
    yd = step(xi0 * beta, 0.02, SimilarityNonlinearModel(grid, Fd), 0.0)
    assert energy_norm(yd - xi0 * beta) > 1e-6 * beta * energy_norm(xi0)
    with pytest.raises(ConstructionError):
        force_parts(xi0, convention="triple")


def test_build_xlim_identity_and_derivative(grid):
    eta = unit_mode(grid)
    assert energy_norm(build_xlim(eta, 1.7, 0.0) - eta) == 0.0
    assert sobolev_norm(build_xlim(eta, 1.7, 0.8), 2) == pytest.approx(math.exp(1.36) * sobolev_norm(eta, 2),
                                                                        rel=1e-13)
    errs = []
    for h in (1e-2, 5e-3):
        fd = (build_xlim(eta, 1.7, 0.3 + h) - build_xlim(eta, 1.7, 0.3 - h)) * (1 / (2 * h))
        errs.append(energy_norm(fd - build_xlim(eta, 1.7, 0.3) * 1.7))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.01)
    with pytest.raises(ConstructionError):
        build_xlim(eta, -1.0, 0.0)


def test_config_validation(grid):
    eta = unit_mode(grid)
    with pytest.raises(ConstructionError):
        small_config(grid, a=-1.0)
    with pytest.raises(ConstructionError):
        small_config(grid, eta=eta * 2.0)
    with pytest.raises(ConstructionError):
        small_config(grid, tau_start=-1.0)
    cfg = small_config(grid, tau_start=-6.005)
    assert cfg.epsilon0 == 0.5 and cfg.n_steps * cfg.dt == pytest.approx(cfg.tau_end - cfg.tau_start)


def test_trajectory_cubic_interpolation_exact_for_cubics(grid):
    eta = unit_mode(grid)
    taus = np.linspace(0, 1, 11)
    traj = Trajectory(taus, [eta * (t**3 - 2 * t) for t in taus])
    t = 0.437
    assert energy_norm(traj.at(t) - eta * (t**3 - 2 * t)) < 1e-13
    assert traj.index(0.3) == 3
    with pytest.raises(ConstructionError):
        traj.at(1.5)
    with pytest.raises(ConstructionError):
        traj.index(0.35)


def test_duhamel_of_nothing_is_zero(grid, xi0):
    out = duhamel_map(None, small_config(grid), xi0, include_lim=False)
    assert all(energy_norm(s) == 0.0 for s in out.states)


def test_duhamel_response_grows_at_twice_a(grid, xi0):
    cfg = small_config(grid)
    out = duhamel_map(None, cfg, xi0)
    sel = out.taus >= -2.0
    vals = [sobolev_norm(s, 3) for s, k in zip(out.states, sel) if k]
    slope = np.polyfit(out.taus[sel], np.log(vals), 1)[0]
    assert slope == pytest.approx(2 * cfg.a, rel=0.05)


def test_duhamel_tail_is_negligible(grid, xi0):
    # doubling the window toward -infinity moves the image at tau_end by e^{-(2a - lambda) T}
    assert tail_check(small_config(grid, tau_start=-12.0), xi0) < 1e-8


@pytest.fixture(scope="module")
def small_fixed(grid, xi0):
    return fixed_point(small_config(grid), xi0)


def test_fixed_point_contracts_and_is_start_independent(grid, xi0, small_fixed):
    cfg = small_fixed.config
    assert small_fixed.ratios and max(small_fixed.ratios) < 0.5
    again = fixed_point(cfg, xi0, start=duhamel_map(None, cfg, xi0))
    d = x_norm(trajectory_difference(small_fixed.per, again.per), cfg.a, cfg.epsilon0, cfg.N)
    assert d <= 1e-8 * x_norm(small_fixed.per, cfg.a, cfg.epsilon0, cfg.N)
    other = fixed_point(cfg, xi0, start=Trajectory(small_fixed.per.taus,
                                                   [p * -3.0 for p in duhamel_map(None, cfg, xi0).states]))
    d = x_norm(trajectory_difference(small_fixed.per, other.per), cfg.a, cfg.epsilon0, cfg.N)
    assert d <= 1e-8 * x_norm(small_fixed.per, cfg.a, cfg.epsilon0, cfg.N)
    # the fixed point reproduces itself under the map
    img = duhamel_map(small_fixed.per, cfg, xi0)
    d = x_norm(trajectory_difference(img, small_fixed.per), cfg.a, cfg.epsilon0, cfg.N)
    assert d <= 1e-9 * x_norm(small_fixed.per, cfg.a, cfg.epsilon0, cfg.N)


def test_zero_seed_direct_trajectory_stays_on_background(grid, xi0):
    cfg = small_config(grid, tau_start=-6.0)
    F = background_force(cfg.beta, xi0)
    d = direct_unstable_trajectory(cfg, xi0, F, amplitude=0.0, tau_end=-5.0)
    bg = xi0 * cfg.beta
    assert max(energy_norm(s - bg) for s in d.states) <= 1e-12 * energy_norm(bg)


def test_agreement_measures_relative_perturbation(grid, xi0, small_fixed):
    cfg = small_fixed.config
    bg = xi0 * cfg.beta
    per = small_fixed.per

    def direct(scale):
        return Trajectory(per.taus, [bg + build_xlim(cfg.eta, cfg.a, t, cfg.seed_amplitude) + p * scale
                                     for t, p in zip(per.taus, per.states)])

    # exact decomposition: only the cancellation of the much larger background remains
    assert agreement(direct(1.0), per, cfg, xi0)["relative"] < 1e-3
    assert agreement(direct(1.1), per, cfg, xi0)["relative"] == pytest.approx(0.1, abs=1e-3)


def test_agreement_accepts_a_tail_and_rejects_a_shifted_grid(xi0, small_fixed):
    cfg = small_fixed.config
    bg = xi0 * cfg.beta
    per = small_fixed.per
    full = [bg + build_xlim(cfg.eta, cfg.a, t, cfg.seed_amplitude) + p for t, p in zip(per.taus, per.states)]
    k = len(per) // 2
    tail = Trajectory(per.taus[k:], full[k:])
    assert agreement(tail, per, cfg, xi0)["relative"] < 1e-3
    shifted = Trajectory(per.taus[k:] + 0.5 * cfg.dt, full[k:])
    with pytest.raises(ConstructionError, match="tail"):
        agreement(shifted, per, cfg, xi0)


def pair_from(grid, xi0, n=60):
    beta, a = 2.0, 1.0
    eta = unit_mode(grid)
    taus = np.linspace(-4.0, 0.0, n + 1)
    states = [xi0 * beta + eta * (1e-3 * math.exp(a * t)) for t in taus]
    return to_physical(Trajectory(taus, states), np.exp(taus), beta, xi0, background_force(beta, xi0), a)


def test_pullback_norms_and_extrapolation(grid, xi0):
    pair = pair_from(grid, xi0)
    for t in (0.1, 0.5, 1.0):
        assert pair.l2_background(t) == pytest.approx(t**0.25 * 2.0 * energy_norm(xi0), rel=1e-14)
    rf, _, z, prof = pair.physical("background", 4 * math.exp(-2))
    assert rf[-1] == pytest.approx(grid.r_f[-1] * 2 * math.exp(-1))
    assert energy_norm(pair.force_at(4.0) * 8.0 - pair.force) < 1e-14 * energy_norm(pair.force)
    with pytest.raises(ConstructionError):
        to_physical(pair.second, [2.0], 2.0, xi0, pair.force, 1.0)
    with pytest.raises(ConstructionError):
        to_physical(pair.second, [0.0], 2.0, xi0, pair.force, 1.0)


def test_separation_slope_of_pure_mode(grid, xi0):
    fit = separation_fit(pair_from(grid, xi0))
    assert fit["slope"] == pytest.approx(1.25, rel=1e-6)
    assert fit["rel_err"] < fit["tol"]


def test_test_bank_layout():
    bank = make_test_bank((-2.0, 0.0))
    assert len(bank) == 24 and len({b.name for b in bank}) == 24
    tf = bank[1]
    taus = np.linspace(-2.5, 0.5, 601)
    th = tf.theta(taus)
    assert np.all(th[(taus <= tf.window[0]) | (taus >= tf.window[1])] == 0)
    h = 1e-5
    mid = np.linspace(tf.window[0] + 0.1, tf.window[1] - 0.1, 7)
    fd = (tf.theta(mid + h) - tf.theta(mid - h)) / (2 * h)
    np.testing.assert_allclose(tf.dtheta(mid), fd, rtol=1e-6, atol=1e-9)


def test_test_function_profiles_are_unit_and_solenoidal(grid):
    from mhdlab.axi_fields import operators

    psi = WeakTestFunction("t", (3.0, 0.0), 2.5, (0.0, 1.0)).profile(grid)
    assert energy_norm(psi) == pytest.approx(1.0)
    assert operators(grid).weighted_div_norm(psi.u_r, psi.u_z) < 1e-12


def test_steady_background_weak_residual_and_energy(grid, xi0):
    beta = 3.0
    F = background_force(beta, xi0)
    taus = np.linspace(-2.0, 0.0, 41)
    states = [xi0 * beta] * len(taus)
    res = weak_residuals(taus, states, F, make_test_bank((taus[0], taus[-1])))
    scale = max(max(r["momentum_scale"], r["induction_scale"]) for r in res)
    assert max(max(abs(r["momentum"]), abs(r["induction"])) for r in res) <= 1e-10 * max(scale, 1.0)
    es = energy_slack(taus, states, F)
    assert es["relative"] >= -1e-5


def test_eigen_selection_and_trend(grid):
    mode = unit_mode(grid)

    def entry(beta, lam, ideal=False, residual=1e-9):
        return EigenEntry(beta, lam, 0.01, residual, mode, ideal)

    es = [entry(25, 2.0 + 1.0j), entry(50, 6.9 + 0.001j), entry(100, 17.5 + 0j)]
    assert select_beta(es).beta == 50
    gaps, ok = trend_gaps(es, 0.2252)
    assert ok and gaps == sorted(gaps, reverse=True)
    _, ok = trend_gaps([entry(25, 4.0), entry(50, 6.9)], 0.2252)
    assert not ok
    with pytest.raises(ConstructionError):
        select_beta([entry(25, 2.0 + 1.0j), entry(50, 3.0, residual=1e-3)])
    assert json.loads(json.dumps(es[2].summary()))["real"] is True
