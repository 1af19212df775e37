"""Acceptance criteria 1-9 at their stated tolerances and time budgets.

Each test prints one ``criterion N: PASS|FAIL ...`` line.  Criteria 4, 6, 7 and 8 share
one eigenvalue sweep and one construction through module fixtures.
"""

import math
import time

import numpy as np
import pytest
from scipy.special import j1, jn_zeros

from mhdlab.axi_fields import AxiField, GridRZ, energy_norm, project_state, resample_truncated, resample_z
from mhdlab.evolution import (EvolutionConfig, ImplicitPart, Model, evolve, heun_tolerance, make_model,
                              measure_growth, propagator_eigs, step)
from mhdlab.nonuniqueness import (ConstructionConfig, background_force, construct, direct_unstable_trajectory,
                                  select_beta, separation_fit, similarity_background, similarity_eigenpair,
                                  to_physical, trend_gaps, verify)
from mhdlab.profiles import ProfileSpec, eval_profile, geometric_grid, rayleigh_potential
from mhdlab.radial_spectrum import assemble_pencil, pencil_eigenvalues, total_negative_count

pytestmark = pytest.mark.slow

CONSTRUCTION_PROFILE = ProfileSpec(kind="rational", parameters=(2.0, 0.75, 0.0, 1.0), epsilon=0.6)
BETAS = (25.0, 50.0, 100.0)


@pytest.fixture
def emit(capsys):
    def _emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
    return _emit


def random_solenoidal(grid, seed=0, frame="physical"):
    rng = np.random.default_rng(seed)
    n = AxiField.zeros(grid, frame).to_vector().size
    return project_state(AxiField.from_vector(grid, rng.standard_normal(n), frame=frame))


def orders(values):
    v = np.asarray(values)
    return np.log2(np.abs(v[:-2] - v[1:-1]) / np.abs(v[1:-1] - v[2:]))


def test_criterion_1_mri_certificate(emit):
    t0 = time.perf_counter()
    spec = ProfileSpec.default()
    summ = total_negative_count(eval_profile(spec, geometric_grid(12.0, 514)), 0.05)
    wall = time.perf_counter() - t0
    agree = all(r.n_neg == r.n_neg_dense for r in summ.per_k)
    ok = summ.total >= 1 and summ.k_star is not None and summ.k_star <= 32 and agree and wall < 10
    emit(1, ok, f"total={summ.total} k_star={summ.k_star} ldl==dense={agree} wall={wall:.1f}s")
    assert ok


def test_criterion_2_stability_side(emit):
    t0 = time.perf_counter()
    spec = ProfileSpec(kind="rational", parameters=(1.0, 0.75, 0.0, 1.0), epsilon=10.0)
    summ = total_negative_count(eval_profile(spec, geometric_grid(12.0, 514)), 10.0)
    # Alfven waves at eps = 10 are fast: dt keeps w dt near 0.1 so the tolerance stays far below MRI rates,
    # and the 8-point z grid (k <= 4) holds the low wavenumbers that are least stabilized by the field
    g = GridRZ(128, 12.0, 8)
    cfg = EvolutionConfig(dt=0.0025, t_end=15.0, epsilon=10.0)
    m = make_model(cfg, g)
    fit = measure_growth(random_solenoidal(g), cfg, model=m)
    tol = heun_tolerance(m, cfg.dt)
    wall = time.perf_counter() - t0
    ok = summ.total == 0 and fit.rate <= 2 * tol and wall < 60
    emit(2, ok, f"total={summ.total} rate={fit.rate:.3e} bound={2 * tol:.3e} w*dt={m.max_frequency() * cfg.dt:.3f} "
                f"wall={wall:.1f}s")
    assert ok


def test_criterion_3_arnoldi_vs_evolution(emit):
    t0 = time.perf_counter()
    g = GridRZ(256, 12.0, 128)
    cfg = EvolutionConfig(dt=0.05, t_end=150.0, epsilon=0.05)
    model = make_model(cfg, g)
    # each z wavenumber evolves independently, so Arnoldi runs on the 32-point grid that still holds every
    # unstable k, and the mode is then checked as an eigenvector of the full 256 x 128 step map
    small = GridRZ(256, 12.0, 32)
    lead = propagator_eigs(cfg, make_model(cfg, small), small, n_modes=1, tol=1e-8, rate_estimate=0.2)[0]
    lam = lead.eigenvalue
    full = resample_z(lead.state, 128)
    resid = energy_norm(step(full, cfg, model) - full * math.exp(lam.real * cfg.dt)) / energy_norm(full)
    fit = measure_growth(random_solenoidal(g), cfg, model=model)
    wall = time.perf_counter() - t0
    rel = abs(fit.rate - lam.real) / lam.real
    real = abs(lam.imag) <= 1e-3 * abs(lam.real)
    ok = rel <= 0.02 and real and resid <= 1e-8 and wall < 600
    emit(3, ok, f"arnoldi={lam.real:.6f}{lam.imag:+.1e}i fit={fit.rate:.6f} rel={rel:.2e} "
                f"full-grid residual={resid:.1e} wall={wall:.0f}s")
    assert ok


@pytest.fixture(scope="module")
def construction_grid():
    return GridRZ.similarity(48, 96, R=12.0, Z=12.0)


@pytest.fixture(scope="module")
def xi0(construction_grid):
    return similarity_background(CONSTRUCTION_PROFILE, construction_grid)


@pytest.fixture(scope="module")
def sweep(xi0):
    t0 = time.perf_counter()
    ideal = similarity_eigenpair(xi0, 0.0, ideal=True)
    entries = [similarity_eigenpair(xi0, b) for b in BETAS]
    return ideal, entries, time.perf_counter() - t0


def test_criterion_4_large_beta_trend(sweep, emit):
    ideal, entries, wall = sweep
    gaps, ok = trend_gaps(entries, ideal.eigenvalue.real)
    ok = ok and wall < 1800
    rates = " ".join(f"b={e.beta:g}:{e.eigenvalue.real:.4f}{e.eigenvalue.imag:+.3f}i" for e in entries)
    emit(4, ok, f"Lambda0={ideal.eigenvalue.real:.4f} {rates} gaps={[round(x, 4) for x in gaps]} "
                f"wall={wall:.0f}s")
    assert ok


def test_criterion_5_zero_beta_bound(construction_grid, emit):
    t0 = time.perf_counter()
    g = construction_grid
    cfg = EvolutionConfig(dt=0.02, t_end=30.0, frame="similarity", beta=0.0, viscous=True)
    m = make_model(cfg, g, background=AxiField.zeros(g, "similarity"))
    fit = measure_growth(random_solenoidal(g, frame="similarity"), cfg, model=m)
    wall = time.perf_counter() - t0
    ok = fit.rate <= -0.25 + 0.03 and wall < 300
    emit(5, ok, f"rate={fit.rate:.4f} bound={-0.22} wall={wall:.0f}s")
    assert ok


@pytest.fixture(scope="module")
def built(sweep, xi0):
    _, entries, _ = sweep
    chosen = select_beta(entries)
    t0 = time.perf_counter()
    con = construct(xi0, chosen)
    t_con = time.perf_counter() - t0
    t0 = time.perf_counter()
    pair = con.pair()
    rep = verify(pair, construction=con)
    return con, pair, rep, t_con, time.perf_counter() - t0


def test_criterion_6_fixed_point(built, emit):
    con, _, rep, t_con, _ = built
    fp, d = rep.fixed_point, rep.perturbation_decay_fit
    ok = fp["max_ratio"] < 0.5 and d["ratio"] >= 1.5 and t_con < 1800
    emit(6, ok, f"beta={fp['beta']:g} a={fp['a']:.4f} ratios={[f'{r:.2e}' for r in fp['ratios']]} "
                f"retunes={fp['retunes']} decay/a={d['ratio']:.3f} wall={t_con:.0f}s")
    assert ok


def test_criterion_7_nonuniqueness(built, emit):
    con, pair, rep, t_con, t_ver = built
    sep, agr = rep.separation_fit, rep.agreement
    same_force = pair.force is con.force and np.array_equal(pair.force.to_vector(), con.force.to_vector())
    ok = (sep["rel_err"] <= 0.05 and agr["relative"] <= 0.02 and same_force and rep.vanishing["ok"]
          and t_con + t_ver < 3600)
    emit(7, ok, f"slope={sep['slope']:.4f} expected={sep['expected']:.4f} rel={sep['rel_err']:.1e} "
                f"agreement={agr['relative']:.2e} vanishing={rep.vanishing['ok']} same_force={same_force}")
    assert ok


def test_criterion_8_weak_form_energy_domain(built, xi0, emit):
    con, pair, rep, _, t_ver = built
    t0 = time.perf_counter()
    checks = rep.checks()
    weak = rep.weak_residuals["max"]
    energy = {k: rep.energy_slack[k]["relative"] for k in ("background", "second")}
    # same physics on a box of twice the size at the same spacing
    big = GridRZ.similarity(96, 192, R=24.0, Z=24.0)
    xi0_big = similarity_background(CONSTRUCTION_PROFILE, big)
    beta = con.fixed.config.beta
    guess = resample_truncated(con.eigen.mode, big)
    eig = similarity_eigenpair(xi0_big, beta, v0=guess)
    eta = eig.mode * (1.0 / energy_norm(eig.mode))
    a = eig.eigenvalue.real
    tau_start = math.log(pair.times[0])
    cfg = ConstructionConfig(beta=beta, a=a, eta=eta, tau_start=tau_start, tau_end=con.fixed.config.tau_end,
                             dt=eig.dt)
    force = background_force(beta, xi0_big)
    direct = direct_unstable_trajectory(cfg, xi0_big, force, tau_end=cfg.tau_start + 2.5 / a)
    big_pair = to_physical(direct, np.exp(direct.taus), beta, xi0_big, force, a)
    big_slope = separation_fit(big_pair, (cfg.tau_start, cfg.tau_start + 2.0 / a))["slope"]
    change = abs(big_slope - rep.separation_fit["slope"]) / rep.separation_fit["slope"]
    wall = t_ver + time.perf_counter() - t0
    ok = (checks["weak_background"] and checks["weak_second"] and checks["energy_background"]
          and checks["energy_second"] and len(rep.weak_residuals["second"]) >= 20 and change < 0.01
          and wall < 1200)
    emit(8, ok, f"weak={weak} energy={energy} bank={len(rep.weak_residuals['second'])} "
                f"slope_change={change:.1e} (R=Z=24: {big_slope:.4f}) scaling={rep.scaling_check['max_residual']:.1e} "
                f"wall={wall:.0f}s")
    assert ok


J11 = jn_zeros(1, 1)[0]


class HeatModel(Model):
    def __init__(self, grid):
        self.grid = grid
        self.implicit = ImplicitPart(grid, nu=1.0)

    def explicit(self, y, t):
        return AxiField.zeros(y.grid, y.frame)


def test_criterion_9_discretization_order(emit):
    spec = ProfileSpec.default()

    def lowest(n):
        p = eval_profile(spec, geometric_grid(12.0, n + 2))
        return pencil_eigenvalues(assemble_pencil(rayleigh_potential(p, 0.05), 1, p.r))[0]

    o_spec = orders([lowest(n) for n in (128, 256, 512, 1024)])

    # global error against the exact decaying Bessel mode, space and time refined together
    def heat_error(n, T=0.05):
        g = GridRZ(n, 1.0, 8)
        rf, z = g.r_f[:, None], g.z[None, :]
        y0 = AxiField.zeros(g)
        y0.u_theta = j1(J11 * rf) * np.cos(z)
        y0.phi = rf * j1(J11 * rf) * np.sin(z)
        cfg = EvolutionConfig(dt=0.05 / n, t_end=T)
        y = evolve(y0, cfg, HeatModel(g))
        return energy_norm(y - y0 * math.exp(-(J11**2 + 1) * cfg.n_steps * cfg.dt)) / energy_norm(y0)

    e = np.array([heat_error(n) for n in (16, 32, 64)])
    o_heat = np.log2(e[:-1] / e[1:])

    # linearized ideal MRI: time self-convergence of the state and space self-convergence of the rate
    g = GridRZ(24, 12.0, 8)
    m = make_model(EvolutionConfig(dt=0.05, t_end=1.0, epsilon=0.05), g)
    y0 = random_solenoidal(g, 3)
    runs = [evolve(y0, EvolutionConfig(dt=0.05 / f, t_end=2.0), m) for f in (1, 2, 4, 8)]
    d = [energy_norm(runs[i] - runs[i + 1]) for i in range(3)]
    o_time = np.log2(np.array(d[:-1]) / np.array(d[1:]))

    def rate(n):
        gg = GridRZ(n, 12.0, 8)
        cfg = EvolutionConfig(dt=0.01, t_end=1.0, epsilon=0.05)
        return propagator_eigs(cfg, make_model(cfg, gg), gg, tol=1e-10, rate_estimate=0.15)[0].eigenvalue.real

    o_space = orders([rate(n) for n in (32, 64, 128)])
    all_orders = np.concatenate([o_spec, o_heat, o_time, o_space])
    ok = bool(np.all((all_orders >= 1.8) & (all_orders <= 2.2)))
    emit(9, ok, f"spectrum={np.round(o_spec, 3)} heat={np.round(o_heat, 3)} mri_dt={np.round(o_time, 3)} "
                f"mri_nr={np.round(o_space, 3)}")
    assert ok
