"""Time integration of the linearized and nonlinear axisymmetric MHD systems.

Two frames share one staggered grid (see :mod:`mhdlab.axi_fields`):

* ``physical``: periodic z, linearization about the rotating column
  ``v0 = r omega e_theta``, ``H0 = eps b e_z``;
* ``similarity``: truncated box in the self-similar variables, with the drift
  ``(1 + xi . grad) / 2``, the Laplacian and the coupling to a background
  state held on the grid.

Stepping is IMEX: diffusion and drift (and hyperdiffusion) by Crank-Nicolson,
everything else by Heun, with a Leray projection after each stage.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.stats import linregress

from .axi_fields import AxiField, GridRZ, advect, energy_norm, induction, operators, project_state
from .profiles import ProfileSpec, profile_functions


class EvolutionError(RuntimeError):
    pass


BLOWUP = 1e10


@dataclass
class EvolutionConfig:
    dt: float
    t_end: float
    scheme: str = "imex-cn-heun"
    viscous: bool = False
    frame: str = "physical"
    beta: float = 1.0
    epsilon: float = 0.05
    hyperdiffusion: float = 0.0
    drift: bool = True
    renorm_every: int = 50

    def __post_init__(self):
        if self.dt <= 0 or self.t_end < 0:
            raise EvolutionError("dt must be positive and t_end non-negative")
        if self.frame not in ("physical", "similarity"):
            raise EvolutionError(f"unknown frame {self.frame!r}")
        if self.scheme != "imex-cn-heun":
            raise EvolutionError(f"unknown scheme {self.scheme!r}")
        if self.beta < 0 or self.epsilon <= 0 or self.hyperdiffusion < 0:
            raise EvolutionError("beta, hyperdiffusion must be >= 0 and epsilon > 0")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class GrowthFit:
    rate: float
    window: tuple[float, float]
    r2: float
    mode_norm_history: np.ndarray  # columns t, log ||.||
    converged: bool = False


@dataclass
class EigenMode:
    eigenvalue: complex
    multiplier: complex
    horizon: float
    state: AxiField
    residual: float


# ---------------------------------------------------------------------------
# component-wise linear operators


def laplacian(state: AxiField) -> AxiField:
    """Vector Laplacian with cylindrical terms; Grad-Shafranov form on phi."""
    ops, rad = state.ops, state.ops.rad
    vec = lambda f: rad.lap_face_vec @ f + ops.d2z(f)
    return AxiField(state.grid, vec(state.u_r), vec(state.u_theta),
                    rad.lap_center @ state.u_z + ops.d2z(state.u_z),
                    rad.gs_face @ state.phi + ops.d2z(state.phi), vec(state.B_theta),
                    frame=state.frame)


def drift(state: AxiField) -> AxiField:
    """(1 + xi . grad) / 2 on vectors; on the flux function (-1 + xi . grad) / 2."""
    ops = state.ops
    zo = ops.zo
    vf = lambda f: 0.5 * (f + ops.r_dr_face(f) + zo.z_dz(f))
    return AxiField(state.grid, vf(state.u_r), vf(state.u_theta),
                    0.5 * (state.u_z + ops.r_dr_center(state.u_z) + zo.z_dz(state.u_z)),
                    0.5 * (-state.phi + ops.r_dr_face(state.phi) + zo.z_dz(state.phi)),
                    vf(state.B_theta), frame=state.frame)


class ImplicitPart:
    """D = nu * Laplacian + drift - hyper * d_z^4 and solves with (I - c D)."""

    def __init__(self, grid: GridRZ, nu: float = 0.0, use_drift: bool = False, hyper: float = 0.0):
        self.grid, self.nu, self.use_drift, self.hyper = grid, nu, use_drift, hyper
        if use_drift and grid.periodic:
            raise EvolutionError("the drift term needs a truncated grid")
        self._cache: dict = {}
        self.active = nu > 0 or use_drift or hyper > 0
        if not grid.periodic:
            self._mats = self._truncated_matrices()

    def _truncated_matrices(self):
        g = self.grid
        ops = operators(g)
        rad, zo = ops.rad, ops.zo
        Iz = sp.identity(g.n_z)
        Dz4 = zo.Dzz @ zo.Dzz

        def build(Lr, Rr, sign):
            n = Lr.shape[0]
            Ir = sp.identity(n)
            M = self.nu * (sp.kron(Lr, Iz) + sp.kron(Ir, zo.Dzz))
            if self.use_drift:
                M = M + 0.5 * (sign * sp.kron(Ir, Iz) + sp.kron(Rr, Iz) + sp.kron(Ir, zo.zDz))
            if self.hyper:
                M = M - self.hyper * sp.kron(Ir, Dz4)
            return M.tocsc()

        Rf = (sp.diags(rad.rf) @ rad.dr_face).tocsr()
        Rc = (sp.diags(rad.rc) @ rad.dr_center).tocsr()
        return {"vec": build(rad.lap_face_vec, Rf, 1.0), "uz": build(rad.lap_center, Rc, 1.0),
                "phi": build(rad.gs_face, Rf, -1.0)}

    def apply(self, s: AxiField) -> AxiField:
        if not self.active:
            return AxiField.zeros(s.grid, s.frame)
        if not self.grid.periodic:
            m = self._mats
            f = lambda M, a: (M @ a.ravel()).reshape(a.shape)
            return AxiField(s.grid, f(m["vec"], s.u_r), f(m["vec"], s.u_theta), f(m["uz"], s.u_z),
                            f(m["phi"], s.phi), f(m["vec"], s.B_theta), frame=s.frame)
        out = laplacian(s) * self.nu if self.nu else AxiField.zeros(s.grid, s.frame)
        if self.hyper:
            ops = s.ops
            h4 = lambda a: ops.d2z(ops.d2z(a))
            out = out - AxiField(s.grid, h4(s.u_r), h4(s.u_theta), h4(s.u_z), h4(s.phi),
                                 h4(s.B_theta), frame=s.frame) * self.hyper
        return out

    def _periodic_solve(self, Lr, a, c):
        ops = operators(self.grid)
        k2 = ops.zo.k2
        ah = np.fft.rfft(a, axis=-1)
        out = np.empty_like(ah)
        ab = np.zeros((3, Lr.shape[0]))
        ab[0, 1:] = Lr.diagonal(1)
        ab[2, :-1] = Lr.diagonal(-1)
        d0 = Lr.diagonal()
        for m, kk in enumerate(k2):
            band = -c * self.nu * ab
            band[1] = 1 - c * (self.nu * (d0 - kk) - self.hyper * kk**2)
            out[:, m] = sla.solve_banded((1, 1), band, ah[:, m])
        return np.fft.irfft(out, n=self.grid.n_z, axis=-1)

    def solve(self, s: AxiField, c: float) -> AxiField:
        """(I - c D)^{-1} s."""
        if not self.active:
            return s.copy()
        if self.grid.periodic:
            rad = operators(self.grid).rad
            f = self._periodic_solve
            return AxiField(s.grid, f(rad.lap_face_vec, s.u_r, c), f(rad.lap_face_vec, s.u_theta, c),
                            f(rad.lap_center, s.u_z, c), f(rad.gs_face, s.phi, c),
                            f(rad.lap_face_vec, s.B_theta, c), frame=s.frame)
        if c not in self._cache:
            I = lambda M: sp.identity(M.shape[0], format="csc")
            self._cache[c] = {k: spla.splu((I(M) - c * M).tocsc()) for k, M in self._mats.items()}
        lu = self._cache[c]
        f = lambda L, a: L.solve(a.ravel()).reshape(a.shape)
        shp = s.u_r.shape
        vec = lu["vec"].solve(np.stack([s.u_r.ravel(), s.u_theta.ravel(), s.B_theta.ravel()], axis=1))
        return AxiField(s.grid, vec[:, 0].reshape(shp), vec[:, 1].reshape(shp), f(lu["uz"], s.u_z),
                        f(lu["phi"], s.phi), vec[:, 2].reshape(shp), frame=s.frame)


# ---------------------------------------------------------------------------
# physical frame


@dataclass
class PhysicalBackground:
    """Rotating column sampled on a grid: faces and centres."""

    grid: GridRZ
    epsilon: float
    omega_f: np.ndarray
    kappa_f: np.ndarray  # (1/r) d_r (r^2 omega) = 2 omega + r omega'
    d_omega_f: np.ndarray
    b_f: np.ndarray
    b_c: np.ndarray
    d_b_c: np.ndarray

    @classmethod
    def from_spec(cls, spec: ProfileSpec, grid: GridRZ, epsilon: float | None = None):
        fn = profile_functions(spec)
        rf, rc = grid.r_f, grid.r_c
        eps = spec.epsilon if epsilon is None else epsilon
        col = lambda v: np.asarray(v, dtype=float)[:, None]
        om = fn["omega"](rf)
        dom = fn["d_omega"](rf)
        return cls(grid, eps, col(om), col(2 * om + rf * dom), col(dom), col(fn["b"](rf)),
                   col(fn["b"](rc)), col(fn["d_b"](rc)))

    def max_frequency(self) -> float:
        """Rough bound on the fastest explicit frequency (rotation plus Alfven)."""
        g = self.grid
        kmax = math.pi / g.h_z
        rot = 2 * float(np.max(np.abs(self.omega_f))) + float(np.sqrt(np.max(np.abs(self.kappa_f * 2 * self.omega_f))))
        return rot + self.epsilon * float(np.max(np.abs(self.b_f))) * kmax


def rhs_linear_ideal(state: AxiField, background: PhysicalBackground, epsilon: float | None = None) -> AxiField:
    """Linearized ideal system about the rotating column, pressure projected out."""
    if state.frame != "physical" or not state.grid.periodic:
        raise EvolutionError("rhs_linear_ideal needs a physical-frame state on a periodic grid")
    bg = background
    eps = bg.epsilon if epsilon is None else epsilon
    ops = state.ops
    Br, Bz = state.B_r, state.B_z
    du_r = 2 * bg.omega_f * state.u_theta + eps * bg.b_f * ops.dz(Br)
    du_t = -bg.kappa_f * state.u_r + eps * bg.b_f * ops.dz(state.B_theta)
    du_z = eps * bg.b_c * ops.dz(Bz) + eps * bg.d_b_c * (ops.rad.avg_f2c @ Br)
    dphi = eps * ops.rf * bg.b_f * state.u_r
    dBt = eps * bg.b_f * ops.dz(state.u_theta) + bg.d_omega_f * ops.dz(state.phi)
    du_r, du_z, p = ops.project(du_r, du_z)
    out = AxiField(state.grid, du_r, du_t, du_z, dphi, dBt, frame="physical")
    out.pressure = p
    return out


def rhs_linear_viscous(state: AxiField, background: PhysicalBackground, epsilon: float | None = None,
                       beta: float = 1.0) -> AxiField:
    """beta * ideal coupling + vector Laplacian."""
    out = laplacian(state)
    if beta:
        out = out + rhs_linear_ideal(state, background, epsilon) * beta
    return project_state(out)


# ---------------------------------------------------------------------------
# similarity frame


def nonlinear_term(state: AxiField, project: bool = True) -> AxiField:
    """N(Xi) = (-P(u.grad u - B.grad B), curl(u x B)) with B carried by phi."""
    g = state.grid
    u, B = state.velocity(), state.magnetic()
    vel = advect(u, u, g) - advect(B, B, g)
    dphi, dBt = induction(u, state.phi, B, g)
    vr, vz = -vel.r, -vel.z
    if project:
        vr, vz, _ = state.ops.project(vr, vz)
    return AxiField(g, vr, -vel.t, vz, dphi, dBt, frame=state.frame)


def coupling(state: AxiField, background: AxiField, project: bool = True) -> AxiField:
    """Linearization of N about ``background`` applied to ``state``."""
    g = state.grid
    u, B = state.velocity(), state.magnetic()
    u0, B0 = background.velocity(), background.magnetic()
    vel = advect(u0, u, g) + advect(u, u0, g) - advect(B0, B, g) - advect(B, B0, g)
    p1, t1 = induction(u0, state.phi, B, g)
    p2, t2 = induction(u, background.phi, B0, g)
    vr, vz = -vel.r, -vel.z
    if project:
        vr, vz, _ = state.ops.project(vr, vz)
    return AxiField(g, vr, -vel.t, vz, p1 + p2, t1 + t2, frame=state.frame)


def rhs_leray_nonlinear(state: AxiField, background: AxiField | None = None,
                        force: AxiField | None = None) -> AxiField:
    """drift + Laplacian + N(Xi) + F for the full similarity-frame state.

    ``background`` is accepted for interface symmetry only: the state already
    contains it.
    """
    if state.frame != "similarity":
        raise EvolutionError("rhs_leray_nonlinear needs a similarity-frame state")
    out = drift(state) + laplacian(state) + nonlinear_term(state)
    if force is not None:
        out = out + force
    return project_state(out)


def rhs_linear_similarity(state: AxiField, background: AxiField, beta: float,
                          viscous: bool = True, use_drift: bool = True) -> AxiField:
    """L_ss^beta: drift + Laplacian + beta * coupling to the unit background."""
    out = coupling(state, background) * beta
    if viscous:
        out = out + laplacian(state)
    if use_drift:
        out = out + drift(state)
    return project_state(out)


# ---------------------------------------------------------------------------
# models: explicit part E(Y, t) plus implicit part D


class Model:
    frame = "physical"
    grid: GridRZ
    implicit: ImplicitPart

    def explicit(self, y: AxiField, t: float) -> AxiField:  # pragma: no cover - interface
        raise NotImplementedError

    def max_frequency(self) -> float:
        return 0.0

    def full_rhs(self, y: AxiField, t: float = 0.0) -> AxiField:
        return project_state(self.explicit(y, t) + self.implicit.apply(y))


class IdealPhysicalModel(Model):
    def __init__(self, grid: GridRZ, background: PhysicalBackground, hyper: float = 0.0):
        self.grid, self.bg = grid, background
        self.implicit = ImplicitPart(grid, hyper=hyper)

    def explicit(self, y, t):
        return rhs_linear_ideal(y, self.bg)

    def max_frequency(self):
        return self.bg.max_frequency()


class ViscousPhysicalModel(Model):
    def __init__(self, grid: GridRZ, background: PhysicalBackground, beta: float):
        self.grid, self.bg, self.beta = grid, background, beta
        self.implicit = ImplicitPart(grid, nu=1.0)

    def explicit(self, y, t):
        if not self.beta:
            return AxiField.zeros(y.grid, y.frame)
        return rhs_linear_ideal(y, self.bg) * self.beta

    def max_frequency(self):
        return self.beta * self.bg.max_frequency()


def _background_speed(bg: AxiField) -> float:
    u, B = bg.velocity(), bg.magnetic()
    r = operators(bg.grid).rf
    vmax = max(float(np.max(np.abs(a))) for a in (u.r, u.t, u.z, B.r, B.t, B.z))
    swirl = float(np.max(np.abs(u.t / r)))
    g = bg.grid
    return vmax * math.pi * max(1 / g.h_r, 1 / g.h_z) + 2 * swirl


class SimilarityLinearModel(Model):
    """L_ss^beta (viscous) or the ideal box operator (viscous=False, use_drift=False)."""

    frame = "similarity"

    def __init__(self, grid: GridRZ, background: AxiField, beta: float, viscous: bool = True,
                 use_drift: bool = True, hyper: float = 0.0):
        self.grid, self.bg, self.beta = grid, background, beta
        self.viscous, self.use_drift = viscous, use_drift
        self.implicit = ImplicitPart(grid, nu=1.0 if viscous else 0.0, use_drift=use_drift, hyper=hyper)

    def explicit(self, y, t):
        if not self.beta:
            return AxiField.zeros(y.grid, y.frame)
        return coupling(y, self.bg, project=False) * self.beta

    def max_frequency(self):
        return self.beta * _background_speed(self.bg)


class SimilarityNonlinearModel(Model):
    """Full Leray-frame system for the complete state (background included)."""

    frame = "similarity"

    def __init__(self, grid: GridRZ, force: AxiField | None, speed_hint: float = 0.0):
        self.grid, self.force = grid, force
        self.implicit = ImplicitPart(grid, nu=1.0, use_drift=True)
        self._speed = speed_hint

    def explicit(self, y, t):
        out = nonlinear_term(y, project=False)
        return out + self.force if self.force is not None else out

    def max_frequency(self):
        return self._speed


class SourcedLinearModel(Model):
    """Linear model plus a time-dependent source given on the step grid."""

    def __init__(self, base: Model, source):
        self.base, self.source = base, source
        self.grid, self.frame, self.implicit = base.grid, base.frame, base.implicit

    def explicit(self, y, t):
        return self.base.explicit(y, t) + self.source(t)

    def max_frequency(self):
        return self.base.max_frequency()


def make_model(config: EvolutionConfig, grid: GridRZ, profile: ProfileSpec | None = None,
               background: AxiField | None = None) -> Model:
    if config.frame == "physical":
        spec = profile or ProfileSpec.default(epsilon=config.epsilon)
        bg = PhysicalBackground.from_spec(spec, grid, epsilon=config.epsilon)
        if config.viscous:
            return ViscousPhysicalModel(grid, bg, config.beta)
        return IdealPhysicalModel(grid, bg, hyper=config.hyperdiffusion)
    if background is None:
        raise EvolutionError("similarity-frame models need a background state")
    return SimilarityLinearModel(grid, background, config.beta, viscous=config.viscous,
                                 use_drift=config.drift, hyper=config.hyperdiffusion)


def cfl_limit(model: Model, safety: float = 1.0) -> float:
    f = model.max_frequency()
    return math.inf if f == 0 else safety * 2.0 / f


def check_cfl(config: EvolutionConfig, model: Model, safety: float = 1.0) -> None:
    lim = cfl_limit(model, safety)
    if config.dt > lim:
        raise EvolutionError(f"dt={config.dt:g} exceeds the advective CFL bound {lim:.3g}")


def heun_tolerance(model: Model, dt: float) -> float:
    """Growth rate Heun gives the fastest neutral oscillation: |G|^2 = 1 + (w dt)^4 / 4 per step."""
    z = model.max_frequency() * dt
    return math.log1p(z**4 / 4) / (2 * dt)


# ---------------------------------------------------------------------------
# stepping


def step(state: AxiField, config: EvolutionConfig | float, model: Model, t: float = 0.0) -> AxiField:
    """One IMEX step: Crank-Nicolson on the implicit part, Heun on the rest."""
    dt = config.dt if isinstance(config, EvolutionConfig) else float(config)
    D = model.implicit
    E0 = model.explicit(state, t)
    rhs = state + E0 * dt
    if D.active:
        rhs = rhs + D.apply(state) * (0.5 * dt)
        y2 = D.solve(rhs, 0.5 * dt)
    else:
        y2 = rhs
    y2 = project_state(y2)
    E1 = model.explicit(y2, t + dt)
    y1 = project_state(y2 + (E1 - E0) * (0.5 * dt))
    if not np.all(np.isfinite(y1.u_r)) or energy_norm(y1) > BLOWUP * max(1.0, energy_norm(state)):
        raise EvolutionError("norm blow-up: time step violates stability")
    y1.pressure = None
    return y1


def evolve(state: AxiField, config: EvolutionConfig, model: Model, t0: float = 0.0,
           callback=None, n_steps: int | None = None) -> AxiField:
    check_cfl(config, model)
    y = state
    n = config.n_steps if n_steps is None else n_steps
    for i in range(n):
        y = step(y, config, model, t0 + i * config.dt)
        if callback is not None:
            callback(i + 1, t0 + (i + 1) * config.dt, y)
    return y


def time_series_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "l2_velocity", "l2_magnetic", "div_residual"])
    for row in rows:
        w.writerow([repr(float(x)) for x in row])
    return buf.getvalue()


def diagnostics_row(t: float, y: AxiField) -> tuple[float, float, float, float]:
    from .axi_fields import inner

    g = y.grid
    v, B = y.velocity(), y.magnetic()
    return (t, math.sqrt(inner(v, v, g)), math.sqrt(inner(B, B, g)),
            y.ops.weighted_div_norm(y.u_r, y.u_z))


# ---------------------------------------------------------------------------
# growth and eigenmodes


def measure_growth(initial: AxiField, config: EvolutionConfig, fit_window=None,
                   model: Model | None = None, norm=energy_norm) -> GrowthFit:
    """Fit d/dt log ||Y(t)|| over ``fit_window`` (default: second half of the run)."""
    model = model or make_model(config, initial.grid)
    check_cfl(config, model)
    y = initial * (1.0 / norm(initial))
    log_scale = 0.0
    hist = [(0.0, 0.0)]
    for i in range(config.n_steps):
        y = step(y, config, model, i * config.dt)
        nrm = norm(y)
        hist.append(((i + 1) * config.dt, log_scale + math.log(nrm)))
        if (i + 1) % config.renorm_every == 0:
            log_scale += math.log(nrm)
            y = y * (1.0 / nrm)
    hist = np.array(hist)
    t0, t1 = fit_window if fit_window is not None else (0.5 * config.t_end, config.t_end)
    sel = (hist[:, 0] >= t0 - 1e-12) & (hist[:, 0] <= t1 + 1e-12)
    if sel.sum() < 3:
        raise EvolutionError("fit window holds fewer than 3 samples")
    fit = linregress(hist[sel, 0], hist[sel, 1])
    r2 = float(fit.rvalue**2)
    return GrowthFit(rate=float(fit.slope), window=(t0, t1), r2=r2, mode_norm_history=hist,
                     converged=r2 >= 0.999)


def _propagator(model: Model, config: EvolutionConfig, grid: GridRZ, frame: str, n_steps: int):
    def mv(v):
        y = AxiField.from_vector(grid, np.real(v), frame=frame)
        y = project_state(y)
        for i in range(n_steps):
            y = step(y, config, model, i * config.dt)
        return y.to_vector()

    return mv


def propagator_eigs(config: EvolutionConfig, model: Model, grid: GridRZ, n_modes: int = 1,
                    tol: float = 1e-10, horizon: float | None = None, rate_estimate: float | None = None,
                    v0: AxiField | None = None, maxiter: int = 200, ncv: int | None = None) -> list[EigenMode]:
    """Arnoldi on the time-T propagator; eigenvalues log(mu) / T, largest |mu| first."""
    check_cfl(config, model)
    frame = model.frame
    if horizon is None:
        lam = rate_estimate if rate_estimate else 1.0
        horizon = math.log(10.0) / abs(lam)
    n_steps = max(1, int(round(horizon / config.dt)))
    horizon = n_steps * config.dt
    mv = _propagator(model, config, grid, frame, n_steps)
    n = AxiField.zeros(grid, frame).to_vector().size
    op = spla.LinearOperator((n, n), matvec=mv, dtype=float)
    start = None
    if v0 is not None:
        start = project_state(v0).to_vector()
    else:
        rng = np.random.default_rng(1234)
        start = project_state(AxiField.from_vector(grid, rng.standard_normal(n), frame=frame)).to_vector()
    k = max(1, n_modes)
    ncv = ncv or min(n - 1, max(2 * k + 1, 20))
    try:
        mu, vecs = spla.eigs(op, k=k, which="LM", tol=tol, v0=start, maxiter=maxiter, ncv=ncv)
    except spla.ArpackNoConvergence as exc:
        raise EvolutionError(f"Arnoldi did not converge: {exc}") from exc
    order = np.argsort(-np.abs(mu))
    modes = []
    for j in order:
        vec = vecs[:, j]
        # rotate to the most real representative
        ph = np.angle(vec[np.argmax(np.abs(vec))])
        vec = vec * np.exp(-1j * ph)
        vr, vi = np.real(vec), np.imag(vec)
        Av = mv(vr) + 1j * mv(vi) if np.any(vi) else mv(vr)
        res = float(np.linalg.norm(Av - mu[j] * vec) / (abs(mu[j]) * np.linalg.norm(vec)))
        st = AxiField.from_vector(grid, vr, frame=frame)
        st = st * (1.0 / energy_norm(st))
        modes.append(EigenMode(eigenvalue=complex(np.log(mu[j]) / horizon), multiplier=complex(mu[j]),
                               horizon=horizon, state=st, residual=res))
    return modes


def leading_rate_estimate(model: Model, config: EvolutionConfig, grid: GridRZ, t_probe: float,
                          seed: int = 0) -> float:
    """Crude power-iteration estimate of the leading growth rate."""
    rng = np.random.default_rng(seed)
    n = AxiField.zeros(grid, model.frame).to_vector().size
    y = project_state(AxiField.from_vector(grid, rng.standard_normal(n), frame=model.frame))
    cfg = EvolutionConfig(dt=config.dt, t_end=t_probe, frame=config.frame, beta=config.beta,
                          epsilon=config.epsilon, viscous=config.viscous, renorm_every=config.renorm_every)
    fit = measure_growth(y, cfg, model=model)
    return fit.rate
