"""Two solutions with the same force and the same (zero) initial data.

The first is the self-similar background ``beta Xi0``; the second follows
the unstable eigenmode of the similarity-frame linearization,
``Xi = beta Xi0 + e^{a tau} eta + Xi_per``, where ``Xi_per`` is the fixed
point of a Duhamel map.  Both are computed on the truncated similarity box
and pulled back to physical variables for verification.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .axi_fields import AxiField, GridRZ, energy_norm, project_state, sobolev_norm
from .evolution import (EvolutionConfig, EvolutionError, SimilarityLinearModel, SimilarityNonlinearModel,
                        SourcedLinearModel, drift, laplacian, nonlinear_term, step)
from .profiles import ProfileSpec, profile_functions


class ConstructionError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# background


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(x > 0, np.exp(-1 / np.where(x > 0, x, 1)), 0.0)
        b = np.where(x < 1, np.exp(-1 / np.where(x < 1, 1 - x, 1)), 0.0)
    return a / (a + b)


def cutoff(rho, inner: float, outer: float):
    """1 inside ``inner``, 0 beyond ``outer``, smooth in between."""
    return 1.0 - smooth_step((np.asarray(rho) - inner) / (outer - inner))


@dataclass(frozen=True)
class BackgroundCutoff:
    velocity: tuple[float, float] = (6.0, 9.0)
    field: tuple[float, float] = (9.0, 11.5)


def similarity_background(spec: ProfileSpec, grid: GridRZ, cut: BackgroundCutoff | None = None) -> AxiField:
    """Unit background Xi0: swirl r omega and the field of -eps int s b ds, both cut off in |xi|."""
    if grid.periodic:
        raise ConstructionError("the similarity background lives on a truncated grid")
    cut = cut or BackgroundCutoff()
    fn = profile_functions(spec)
    rf, z = grid.r_f[:, None], grid.z[None, :]
    rho = np.sqrt(rf**2 + z**2)
    u_t = rf * fn["omega"](rf) * cutoff(rho, *cut.velocity)
    phi = -spec.epsilon * fn["int_sb"](rf) * cutoff(rho, *cut.field)
    zf = np.zeros(grid.face_shape)
    return AxiField(grid, zf, u_t, np.zeros(grid.center_shape), phi, zf.copy(), frame="similarity")


@dataclass
class ForceParts:
    linear: AxiField  # -(drift + Laplacian) Xi0, multiplied by beta
    quadratic: AxiField  # -N(Xi0) = P B(Xi0, Xi0), multiplied by beta^2


def force_parts(xi0: AxiField, convention: str = "single") -> ForceParts:
    lin = (drift(xi0) + laplacian(xi0)) * -1.0
    quad = nonlinear_term(xi0, project=False) * -1.0
    if convention == "double":
        quad = quad * 2.0
    elif convention != "single":
        raise ConstructionError(f"unknown force convention {convention!r}")
    return ForceParts(lin, quad)


def background_force(beta: float, xi0: AxiField, convention: str = "single",
                     project: bool = False) -> AxiField:
    """F making beta Xi0 steady: -beta (drift + Laplacian) Xi0 + beta^2 B(Xi0, Xi0).

    Left unprojected by default: its gradient part is absorbed by the pressure,
    and the IMEX step then keeps beta Xi0 fixed to rounding (the projection
    does not commute with the implicit solve).  ``convention="double"``
    doubles the quadratic term.
    """
    parts = force_parts(xi0, convention)
    F = parts.linear * beta + parts.quadratic * beta**2
    return project_state(F) if project else F


# ---------------------------------------------------------------------------
# construction


@dataclass
class ConstructionConfig:
    beta: float
    a: float
    eta: AxiField
    tau_start: float
    tau_end: float
    dt: float
    seed_amplitude: float = 1.0
    N: int = 3
    epsilon0: float | None = None
    picard_tol: float = 1e-9
    max_iter: int = 40
    max_retunes: int = 5

    def __post_init__(self):
        if self.a <= 0:
            raise ConstructionError("the growth rate a must be positive")
        nrm = energy_norm(self.eta)
        if abs(nrm - 1.0) > 1e-10:
            raise ConstructionError(f"eta must have unit L2 norm, got {nrm:.12g}")
        if self.tau_start > self.tau_end - 5.0 / self.a:
            raise ConstructionError("tau_start must lie at least 5/a before tau_end")
        if self.epsilon0 is None:
            self.epsilon0 = self.a / 2
        # keep the step equal to dt (the eigenpair belongs to that step map)
        self.tau_start = self.tau_end - self.n_steps * self.dt

    @property
    def n_steps(self) -> int:
        return max(1, int(round((self.tau_end - self.tau_start) / self.dt)))

    @property
    def step_size(self) -> float:
        return self.dt

    def with_window(self, tau_start: float, tau_end: float) -> "ConstructionConfig":
        kw = {k: getattr(self, k) for k in self.__dataclass_fields__}
        kw.update(tau_start=tau_start, tau_end=tau_end)
        return ConstructionConfig(**kw)


@dataclass
class Trajectory:
    """States on a uniform tau grid."""

    taus: np.ndarray
    states: list

    def __len__(self):
        return len(self.states)

    def index(self, tau: float) -> int:
        d = self.taus[1] - self.taus[0]
        i = int(round((tau - self.taus[0]) / d))
        if i < 0 or i >= len(self.states) or abs(self.taus[i] - tau) > 1e-9 * max(1.0, abs(tau)):
            raise ConstructionError(f"tau={tau} is not on the stored grid")
        return i

    def at(self, tau: float) -> AxiField:
        """Cubic (4-point Lagrange) interpolation in tau."""
        t = self.taus
        if tau < t[0] - 1e-12 or tau > t[-1] + 1e-12:
            raise ConstructionError(f"tau={tau} outside stored range [{t[0]}, {t[-1]}]")
        n = len(t)
        if n < 4:
            raise ConstructionError("cubic interpolation needs at least 4 stored states")
        j = int(np.clip(np.searchsorted(t, tau) - 2, 0, n - 4))
        idx = range(j, j + 4)
        out = None
        for i in idx:
            w = 1.0
            for m in idx:
                if m != i:
                    w *= (tau - t[m]) / (t[i] - t[m])
            term = self.states[i] * w
            out = term if out is None else out + term
        return out


def build_xlim(eta: AxiField, a: float, tau: float, amplitude: float = 1.0) -> AxiField:
    if a <= 0:
        raise ConstructionError("a must be positive")
    return eta * (amplitude * math.exp(a * tau))


def x_norm(traj: Trajectory, a: float, eps0: float, N: int = 3, stride: int = 1,
           window: tuple[float, float] | None = None) -> float:
    """sup_tau e^{-(a + eps0) tau} ||Y(tau)||_{H^N}, optionally restricted to ``window``."""
    best = 0.0
    lo, hi = window if window is not None else (-math.inf, math.inf)
    for i in range(0, len(traj), stride):
        tau = traj.taus[i]
        if lo - 1e-12 <= tau <= hi + 1e-12:
            best = max(best, math.exp(-(a + eps0) * tau) * sobolev_norm(traj.states[i], N))
    return best


def trajectory_difference(t1: Trajectory, t2: Trajectory) -> Trajectory:
    return Trajectory(t1.taus, [x - y for x, y in zip(t1.states, t2.states)])


def x_distance(t1: Trajectory, t2: Trajectory, a: float, eps0: float, N: int = 3) -> float:
    """x_norm of t1 - t2 without storing the difference trajectory."""
    return max(math.exp(-(a + eps0) * tau) * sobolev_norm(x - y, N)
               for tau, x, y in zip(t1.taus, t1.states, t2.states))


def _linear_model(cfg: ConstructionConfig, xi0: AxiField) -> SimilarityLinearModel:
    return SimilarityLinearModel(xi0.grid, xi0, cfg.beta, viscous=True, use_drift=True)


def duhamel_map(xi_per: Trajectory | None, cfg: ConstructionConfig, xi0: AxiField,
                include_lim: bool = True, keep_all: bool = True) -> Trajectory:
    """Solve dY/dtau = L Y + N(Xi_lim + Xi_per) from Y(tau_start) = 0.

    N is the quadratic part of the nonlinearity (unprojected; the step
    projects).  ``xi_per`` must live on the same tau grid (or be None for 0).
    With ``keep_all=False`` only the final state is returned.
    """
    dt = cfg.step_size
    taus = cfg.tau_start + dt * np.arange(cfg.n_steps + 1)
    if xi_per is not None and len(xi_per) != len(taus):
        raise ConstructionError("input trajectory does not match the construction time grid")
    zero = AxiField.zeros(xi0.grid, "similarity")

    def source(tau):
        i = int(round((tau - cfg.tau_start) / dt))
        x = build_xlim(cfg.eta, cfg.a, tau, cfg.seed_amplitude) if include_lim else zero
        if xi_per is not None:
            x = x + xi_per.states[i]
        return nonlinear_term(x, project=False)

    model = SourcedLinearModel(_linear_model(cfg, xi0), source)
    y = zero
    states = [y]
    for n in range(cfg.n_steps):
        try:
            y = step(y, dt, model, taus[n])
        except EvolutionError as exc:
            raise ConstructionError(f"Duhamel march blew up at tau={taus[n]:.4f}") from exc
        if keep_all:
            states.append(y)
    if not keep_all:
        return Trajectory(taus[-1:], [y])
    return Trajectory(taus, states)


@dataclass
class FixedPointResult:
    per: Trajectory
    ratios: list
    distances: list
    tau_start: float
    tau_end: float
    iterations: int
    config: ConstructionConfig
    retunes: int = 0


def _picard(cfg: ConstructionConfig, xi0: AxiField, start: Trajectory | None):
    eps0 = cfg.epsilon0
    cur = duhamel_map(start, cfg, xi0)
    dists, ratios = [], []
    for it in range(cfg.max_iter):
        nxt = duhamel_map(cur, cfg, xi0)
        d = x_distance(nxt, cur, cfg.a, eps0, cfg.N)
        ref = max(x_norm(nxt, cfg.a, eps0, cfg.N), 1e-300)
        if dists:
            ratios.append(d / dists[-1] if dists[-1] > 0 else 0.0)
        dists.append(d)
        cur = nxt
        if d <= cfg.picard_tol * ref:
            return cur, dists, ratios, it + 2
        if ratios and ratios[-1] >= 1.0:
            break
    return cur, dists, ratios, None


def fixed_point(cfg: ConstructionConfig, xi0: AxiField, start: Trajectory | None = None) -> FixedPointResult:
    """Picard iteration of the Duhamel map; tau_end is moved back by ln 2 / a while ratios >= 0.5."""
    for retune in range(cfg.max_retunes + 1):
        per, dists, ratios, its = _picard(cfg, xi0, start)
        good = its is not None and all(r < 0.5 for r in ratios)
        if good:
            return FixedPointResult(per, ratios, dists, cfg.tau_start, cfg.tau_end, its, cfg, retune)
        shift = math.log(2.0) / cfg.a
        cfg = cfg.with_window(cfg.tau_start - shift, cfg.tau_end - shift)
        start = None
    raise ConstructionError(f"Picard iteration failed to contract after {cfg.max_retunes} retunes: "
                            f"ratios={ratios}")


def direct_unstable_trajectory(cfg: ConstructionConfig, xi0: AxiField, force: AxiField,
                               amplitude: float | None = None, tau_end: float | None = None,
                               record=None) -> Trajectory:
    """March the full similarity system from beta Xi0 + amp e^{a tau_start} eta."""
    amp = cfg.seed_amplitude if amplitude is None else amplitude
    dt = cfg.step_size
    t_end = cfg.tau_end if tau_end is None else tau_end
    n = int(round((t_end - cfg.tau_start) / dt))
    taus = cfg.tau_start + dt * np.arange(n + 1)
    model = SimilarityNonlinearModel(xi0.grid, force)
    y = xi0 * cfg.beta + build_xlim(cfg.eta, cfg.a, cfg.tau_start, amp)
    states = [y]
    for i in range(n):
        try:
            y = step(y, dt, model, taus[i])
        except EvolutionError as exc:
            raise ConstructionError(f"direct march blew up at tau={taus[i]:.4f}") from exc
        if record is not None:
            record(taus[i + 1], y)
        states.append(y)
    return Trajectory(taus, states)


# ---------------------------------------------------------------------------
# eigenpairs of the similarity-frame linearization


@dataclass
class EigenEntry:
    beta: float
    eigenvalue: complex
    dt: float
    residual: float
    mode: AxiField = field(repr=False)
    ideal: bool = False

    @property
    def is_real(self) -> bool:
        return abs(self.eigenvalue.imag) <= 1e-3 * abs(self.eigenvalue.real)

    @property
    def scaled_rate(self) -> float:
        """Re(lambda) / beta (the ideal box rate itself when ``ideal``)."""
        return self.eigenvalue.real if self.ideal else self.eigenvalue.real / self.beta

    def summary(self) -> dict:
        return {"beta": self.beta, "ideal": self.ideal, "re": self.eigenvalue.real,
                "im": self.eigenvalue.imag, "scaled_rate": self.scaled_rate, "dt": self.dt,
                "residual": self.residual, "real": self.is_real}


def similarity_eigenpair(xi0: AxiField, beta: float, ideal: bool = False, tol: float = 1e-8,
                         dt_max: float = 0.02, cfl_safety: float = 0.8, rate_estimate: float | None = None,
                         v0: AxiField | None = None) -> EigenEntry:
    """Leading eigenpair of L_ss^beta (or of the ideal box operator) by Arnoldi on the step map."""
    from .evolution import cfl_limit, propagator_eigs

    g = xi0.grid
    if ideal:
        model = SimilarityLinearModel(g, xi0, 1.0, viscous=False, use_drift=False)
    else:
        model = SimilarityLinearModel(g, xi0, beta, viscous=True, use_drift=True)
    dt = min(dt_max, cfl_safety * cfl_limit(model))
    cfg = EvolutionConfig(dt=dt, t_end=1.0, frame="similarity", beta=beta)
    est = rate_estimate or (0.2 if ideal else 0.06 * beta)
    mode = propagator_eigs(cfg, model, g, n_modes=1, tol=tol, rate_estimate=est, v0=v0)[0]
    st = mode.state
    st.frame = "similarity"
    return EigenEntry(beta, mode.eigenvalue, dt, mode.residual, st, ideal)


def select_beta(entries: list[EigenEntry], residual_tol: float = 1e-6) -> EigenEntry:
    """Smallest beta with a converged, real, unstable eigenvalue."""
    for e in sorted((e for e in entries if not e.ideal), key=lambda e: e.beta):
        if e.eigenvalue.real > 0 and e.is_real and e.residual <= residual_tol:
            return e
    raise ConstructionError("no beta produced a converged real unstable eigenvalue")


def trend_gaps(entries: list[EigenEntry], ideal_rate: float) -> tuple[list[float], bool]:
    """|Re(lambda_beta) / beta - Lambda_0| by increasing beta, and whether it strictly decreases."""
    es = sorted((e for e in entries if not e.ideal), key=lambda e: e.beta)
    gaps = [abs(e.scaled_rate - ideal_rate) for e in es]
    ok = all(b < a for a, b in zip(gaps, gaps[1:])) and all(e.eigenvalue.real > 0 for e in es)
    return gaps, ok


# ---------------------------------------------------------------------------
# physical pullback


@dataclass
class SolutionPair:
    """(v1, H1) = beta Xi0(xi) / sqrt(t) and (v2, H2) = Xi(xi, tau) / sqrt(t), one force F(xi) / t^{3/2}."""

    beta: float
    a: float
    background: AxiField
    second: Trajectory
    force: AxiField
    times: np.ndarray

    @property
    def grid(self) -> GridRZ:
        return self.background.grid

    def _check(self, t: float) -> float:
        if t <= 0:
            raise ConstructionError("physical times must be positive")
        return math.log(t)

    def background_profile(self, t: float) -> AxiField:
        self._check(t)
        return self.background

    def second_profile(self, t: float) -> AxiField:
        return self.second.at(self._check(t))

    def physical(self, which: str, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, AxiField]:
        """(r_f, r_c, z) physical coordinates and the field values Xi / sqrt(t) there."""
        prof = self.background_profile(t) if which == "background" else self.second_profile(t)
        g, s = self.grid, math.sqrt(t)
        return g.r_f * s, g.r_c * s, g.z * s, prof * (1.0 / s)

    def force_at(self, t: float) -> AxiField:
        """f = F / t^{3/2} sampled at x = sqrt(t) xi."""
        self._check(t)
        return self.force * t**-1.5

    def l2_background(self, t: float) -> float:
        return t**0.25 * energy_norm(self.background_profile(t))

    def l2_second(self, t: float) -> float:
        return t**0.25 * energy_norm(self.second_profile(t))

    def l2_separation(self, t: float) -> float:
        return t**0.25 * energy_norm(self.second_profile(t) - self.background)


def to_physical(traj: Trajectory, times, beta: float, xi0: AxiField, force: AxiField, a: float) -> SolutionPair:
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0):
        raise ConstructionError("physical times must be positive")
    taus = np.log(times)
    lo, hi = traj.taus[0], traj.taus[-1]
    if np.any(taus < lo - 1e-12) or np.any(taus > hi + 1e-12):
        raise ConstructionError(f"requested times leave the stored range (0, e^{hi:.4g}] "
                                f"starting at e^{lo:.4g}: extrapolation refused")
    return SolutionPair(beta, a, xi0 * beta, traj, force, times)


# ---------------------------------------------------------------------------
# weak form and energy


def _bump(q):
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(q < 1, np.exp(-1.0 / np.where(q < 1, 1 - q, 1.0)), 0.0)


@dataclass(frozen=True)
class WeakTestFunction:
    """theta(tau) Psi(xi): a compactly supported space-time bump with solenoidal parts."""

    name: str
    center: tuple[float, float]
    width: float
    window: tuple[float, float]

    def theta(self, tau):
        t0, t1 = self.window
        x = (np.asarray(tau, dtype=float) - t0) / (t1 - t0)
        inside = (x > 0) & (x < 1)
        q = np.where(inside, x * (1 - x), 1.0)
        return np.where(inside, np.exp(-0.25 / q), 0.0)

    def dtheta(self, tau):
        t0, t1 = self.window
        x = (np.asarray(tau, dtype=float) - t0) / (t1 - t0)
        inside = (x > 0) & (x < 1)
        q = np.where(inside, x * (1 - x), 1.0)
        return np.where(inside, np.exp(-0.25 / q) * 0.25 * (1 - 2 * x) / q**2 / (t1 - t0), 0.0)

    def profile(self, grid: GridRZ) -> AxiField:
        from .axi_fields import recover_from_potentials

        rf, z = grid.r_f[:, None], grid.z[None, :]
        (rc, zc), s = self.center, self.width

        def b(dr, dz):
            return _bump(((rf - rc - dr) ** 2 + (z - zc - dz) ** 2) / s**2)

        chi = rf**2 * b(0.0, 0.0)
        phi = rf**2 * b(0.3 * s, -0.2 * s)
        _, _, u_r, u_z = recover_from_potentials(phi, chi, grid)
        psi = AxiField(grid, u_r, rf * b(-0.2 * s, 0.3 * s), u_z, phi, rf * b(0.1 * s, 0.2 * s),
                       frame="similarity")
        return psi * (1.0 / energy_norm(psi))


def make_test_bank(tau_window: tuple[float, float], n: int = 24) -> list[WeakTestFunction]:
    """Deterministic bank: bumps on a 4 x 6 lattice, alternating full and late time windows."""
    t0, t1 = tau_window
    centers = [(r, z) for r in (2.0, 4.0, 6.0, 8.0) for z in (-6.0, -3.5, -1.0, 1.5, 4.0, 6.5)]
    bank = []
    for i in range(n):
        c = centers[i % len(centers)]
        w = 2.5 if (i // len(centers)) % 2 == 0 else 1.8
        win = (t0, t1) if i % 2 == 0 else (t0 + 0.4 * (t1 - t0), t1)
        bank.append(WeakTestFunction(f"bump{i:02d}", c, w, win))
    return bank


def _simpson(y, x):
    from scipy.integrate import simpson

    return float(simpson(np.asarray(y), x=np.asarray(x)))


def weak_residuals(taus, states, force: AxiField, bank: list[WeakTestFunction]) -> list[dict]:
    """int theta' <Xi, Psi> + theta <RHS(Xi), Psi> dtau per equation, per unit-norm test function.

    RHS is the discrete similarity-frame right-hand side; the pressure gradient
    drops out against the discretely solenoidal test fields.
    """
    from .axi_fields import inner

    taus = np.asarray(taus, dtype=float)
    g = states[0].grid
    model = SimilarityNonlinearModel(g, force)
    profiles = [tf.profile(g) for tf in bank]
    n = len(states)
    cache: dict = {}
    pv = np.zeros((n, len(bank), 2))  # <Xi, Psi> (momentum, induction)
    pr = np.zeros((n, len(bank), 2))  # <RHS, Psi>
    for i, (y, tau) in enumerate(zip(states, taus)):
        key = id(y)
        if key not in cache:
            rhs = model.implicit.apply(y) + model.explicit(y, tau)
            yv, ym, rv, rm = y.velocity(), y.magnetic(), rhs.velocity(), rhs.magnetic()
            vals = []
            for P in profiles:
                Pv, Pm = P.velocity(), P.magnetic()
                vals.append((inner(yv, Pv, g), inner(ym, Pm, g), inner(rv, Pv, g), inner(rm, Pm, g)))
            cache = {key: np.array(vals)}
        v = cache[key]
        pv[i], pr[i] = v[:, :2], v[:, 2:]
    out = []
    for j, tf in enumerate(bank):
        th, dth = tf.theta(taus), tf.dtheta(taus)
        norm = math.sqrt(_simpson(th**2, taus))
        res = [(_simpson(dth * pv[:, j, e], taus) + _simpson(th * pr[:, j, e], taus)) / norm for e in (0, 1)]
        scale = [abs(_simpson(th * pr[:, j, e], taus)) / norm for e in (0, 1)]
        out.append({"name": tf.name, "momentum": res[0], "induction": res[1],
                    "momentum_scale": scale[0], "induction_scale": scale[1]})
    return out


def energy_slack(taus, states, force: AxiField) -> dict:
    """Worst E(t0) + work - E(t) - dissipation over stored t0 < t, in similarity variables.

    With t = e^tau: E = e^{tau/2} ||Xi||^2 / 2, dissipation rate e^{tau/2} <grad Xi, grad Xi>
    (the discrete form -<Xi, Lap_h Xi>) and work rate e^{tau/2} <F, Xi>.
    """
    from scipy.integrate import cumulative_simpson

    from .axi_fields import energy_inner

    taus = np.asarray(taus, dtype=float)
    w = np.exp(taus / 2)
    cache: dict = {}
    E, dis, work = [], [], []
    for y in states:
        key = id(y)
        if key not in cache:
            cache = {key: (energy_inner(y, y), -energy_inner(y, laplacian(y)), energy_inner(force, y))}
        e2, d2, fw = cache[key]
        E.append(e2)
        dis.append(d2)
        work.append(fw)
    E = 0.5 * w * np.array(E)
    D = cumulative_simpson(w * np.array(dis), x=taus, initial=0.0)
    W = cumulative_simpson(w * np.array(work), x=taus, initial=0.0)
    S = E + D - W  # slack(t0, t) = S(t0) - S(t)
    run_min = np.minimum.accumulate(S)
    worst = float(np.min(run_min[:-1] - S[1:])) if len(S) > 1 else 0.0
    scale = float(np.max(E))
    return {"min_slack": worst, "relative": worst / scale, "energy_scale": scale,
            "total_slack": float(S[0] - S[-1])}


# ---------------------------------------------------------------------------
# fits


def _fit(x, y):
    from scipy.stats import linregress

    f = linregress(np.asarray(x), np.asarray(y))
    return float(f.slope), float(f.intercept), float(f.rvalue**2)


def separation_fit(pair: SolutionPair, window: tuple[float, float] | None = None) -> dict:
    """Slope of log ||v1 - v2||_{L^2} against log t over the early window (default: first two e-foldings)."""
    taus = np.log(pair.times)
    if window is None:
        window = (taus[0], min(taus[-1], taus[0] + 2.0 / pair.a))
    sel = (taus >= window[0] - 1e-12) & (taus <= window[1] + 1e-12)
    ts = pair.times[sel]
    seps = np.array([pair.l2_separation(t) for t in ts])
    slope, icpt, r2 = _fit(np.log(ts), np.log(seps))
    expected = 0.25 + pair.a
    return {"slope": slope, "expected": expected, "rel_err": abs(slope - expected) / expected,
            "tol": 0.05, "window": list(window), "r2": r2}


def decay_fit(per: Trajectory, a: float, N: int = 3, n_efold: float = 2.0) -> dict:
    """Slope of log ||Xi_per||_{H^N} over the last ``n_efold`` e-foldings (1/a each)."""
    t1 = per.taus[-1]
    sel = per.taus >= t1 - n_efold / a - 1e-12
    vals = np.array([sobolev_norm(s, N) for s, keep in zip(per.states, sel) if keep])
    if np.any(vals <= 0):
        raise ConstructionError("perturbation vanishes inside the fit window")
    slope, _, r2 = _fit(per.taus[sel], np.log(vals))
    return {"slope": slope, "a": a, "ratio": slope / a, "required_ratio": 1.5, "r2": r2,
            "window": [float(t1 - n_efold / a), float(t1)]}


def agreement(direct: Trajectory, per: Trajectory, cfg: ConstructionConfig, xi0: AxiField,
              n_efold: float = 1.0) -> dict:
    """Relative X-norm distance of the two constructions over the last ``n_efold`` e-foldings.

    Measured against ||Xi_per||_X on the same window (the stricter of the possible references).
    """
    bg = xi0 * cfg.beta
    off = len(per) - len(direct)
    if off < 0 or abs(per.taus[off] - direct.taus[0]) > 1e-9 * max(1.0, abs(direct.taus[0])):
        raise ConstructionError("direct trajectory is not a tail of the fixed-point tau grid")
    taus = per.taus[off:]
    diff = Trajectory(taus, [d - bg - build_xlim(cfg.eta, cfg.a, t, cfg.seed_amplitude) - p
                             for d, p, t in zip(direct.states, per.states[off:], taus)])
    win = (per.taus[-1] - n_efold / cfg.a, per.taus[-1])
    num = x_norm(diff, cfg.a, cfg.epsilon0, cfg.N, window=win)
    den = x_norm(per, cfg.a, cfg.epsilon0, cfg.N, window=win)
    return {"x_distance": num, "x_per": den, "relative": num / den, "tol": 0.02, "window": list(win)}


def scaling_check(pair: SolutionPair, bank: list[WeakTestFunction], lam: float = 2.0) -> dict:
    """Rescale v -> lam v(lam x, lam^2 t), f -> lam^3 f(lam x, lam^2 t) and re-evaluate the weak residuals.

    In similarity variables the rescaled solution is Xi(xi, tau + 2 log lam) and the
    rescaled force profile is t^{3/2} lam^3 f(lam x, lam^2 t) = F(xi); both are built
    through the physical pullback rather than assumed.
    """
    shift = 2.0 * math.log(lam)
    ts = pair.times / lam**2
    states, taus = [], []
    for t, t_orig in zip(ts, pair.times):
        _, _, _, v = pair.physical("second", t_orig)  # v(lam x, lam^2 t) on x = sqrt(t) xi
        states.append(v * (lam * math.sqrt(t)))  # back to similarity variables at time t
        taus.append(math.log(t))
    F = pair.force_at(pair.times[-1]) * (lam**3 * ts[-1] ** 1.5)
    shifted = [WeakTestFunction(b.name, b.center, b.width, (b.window[0] - shift, b.window[1] - shift))
               for b in bank]
    res = weak_residuals(np.array(taus), states, F, shifted)
    worst = max(max(abs(r["momentum"]), abs(r["induction"])) for r in res)
    return {"lambda": lam, "max_residual": worst, "tol": 1e-5,
            "force_mismatch": energy_norm(F - pair.force) / energy_norm(pair.force)}


# ---------------------------------------------------------------------------
# construction driver and report


@dataclass
class Construction:
    xi0: AxiField
    force: AxiField
    eigen: EigenEntry
    config: ConstructionConfig
    fixed: FixedPointResult
    direct: Trajectory

    @property
    def per(self) -> Trajectory:
        return self.fixed.per

    def second(self) -> Trajectory:
        """Xi = beta Xi0 + Xi_lim + Xi_per on the fixed-point time grid."""
        cfg, bg = self.fixed.config, self.xi0 * self.fixed.config.beta
        return Trajectory(self.per.taus, [bg + build_xlim(cfg.eta, cfg.a, t, cfg.seed_amplitude) + p
                                          for t, p in zip(self.per.taus, self.per.states)])

    def pair(self) -> SolutionPair:
        cfg = self.fixed.config
        return to_physical(self.second(), np.exp(self.per.taus), cfg.beta, self.xi0, self.force, cfg.a)


def construct(xi0: AxiField, eigen: EigenEntry, tau_end: float = 0.0, n_efold: float = 16.0,
              N: int = 3, epsilon0: float | None = None, picard_tol: float = 1e-9,
              direct_n_efold: float = 10.0) -> Construction:
    """Fixed point over ``n_efold`` e-foldings ending at ``tau_end``, plus a direct march over the last
    ``direct_n_efold`` of them.

    The direct march amplifies the roundoff of the steady background by e^{a dtau}, so it starts
    later than the Duhamel window, at a point of the same tau grid.
    """
    a = eigen.eigenvalue.real
    if a <= 0 or not eigen.is_real:
        raise ConstructionError("the construction needs a real unstable eigenvalue")
    cfg = ConstructionConfig(beta=eigen.beta, a=a, eta=eigen.mode, tau_start=tau_end - n_efold / a,
                             tau_end=tau_end, dt=eigen.dt, N=N, epsilon0=epsilon0, picard_tol=picard_tol)
    fixed = fixed_point(cfg, xi0)
    force = background_force(cfg.beta, xi0)
    per = fixed.per
    j = max(0, len(per) - 1 - int(round(direct_n_efold / (a * fixed.config.dt))))
    direct = direct_unstable_trajectory(fixed.config.with_window(float(per.taus[j]), fixed.config.tau_end),
                                        xi0, force)
    return Construction(xi0, force, eigen, cfg, fixed, direct)


def two_start_difference(cfg: ConstructionConfig, xi0: AxiField) -> float:
    """Relative X-distance between the fixed points reached from 0 and from the first Duhamel image."""
    p0 = fixed_point(cfg, xi0).per
    p1 = fixed_point(cfg, xi0, start=duhamel_map(None, cfg, xi0)).per
    return x_distance(p0, p1, cfg.a, cfg.epsilon0, cfg.N) / x_norm(p0, cfg.a, cfg.epsilon0, cfg.N)


def tail_check(cfg: ConstructionConfig, xi0: AxiField) -> float:
    """Relative change of the Duhamel image at tau_end when the window length is doubled."""
    short = duhamel_map(None, cfg, xi0, keep_all=False)
    longer = cfg.with_window(cfg.tau_end - 2 * (cfg.tau_end - cfg.tau_start), cfg.tau_end)
    long_ = duhamel_map(None, longer, xi0, keep_all=False)
    a, b = short.states[-1], long_.states[-1]
    return sobolev_norm(a - b, cfg.N) / sobolev_norm(b, cfg.N)


def early_intercept(direct: Trajectory, cfg: ConstructionConfig, xi0: AxiField, n_efold: float = 2.0) -> dict:
    """Fit log ||Xi - beta Xi0|| = s tau + c over the early window; expect s = a, e^c = amplitude."""
    sel = direct.taus <= direct.taus[0] + n_efold / cfg.a + 1e-12
    bg = xi0 * cfg.beta
    vals = [energy_norm(s - bg) for s, k in zip(direct.states, sel) if k]
    slope, icpt, r2 = _fit(direct.taus[sel], np.log(vals))
    return {"slope": slope, "a": cfg.a, "amplitude": math.exp(icpt), "expected_amplitude": cfg.seed_amplitude}


@dataclass
class VerificationReport:
    weak_residuals: dict
    energy_slack: dict
    separation_fit: dict
    scaling_check: dict
    vanishing: dict
    perturbation_decay_fit: dict | None = None
    agreement: dict | None = None
    fixed_point: dict | None = None
    config_hash: str | None = None

    def checks(self) -> dict:
        wr, es = self.weak_residuals, self.energy_slack
        out = {
            "weak_background": wr["max"]["background"] <= wr["tol"],
            "weak_second": wr["max"]["second"] <= wr["tol"],
            "energy_background": es["background"]["relative"] >= -es["tol"],
            "energy_second": es["second"]["relative"] >= -es["tol"],
            "separation": self.separation_fit["rel_err"] <= self.separation_fit["tol"],
            "scaling": self.scaling_check["max_residual"] <= self.scaling_check["tol"],
            "vanishing": self.vanishing["ok"],
        }
        if self.perturbation_decay_fit is not None:
            d = self.perturbation_decay_fit
            out["perturbation_decay"] = d["ratio"] >= d["required_ratio"]
        if self.agreement is not None:
            out["agreement"] = self.agreement["relative"] <= self.agreement["tol"]
        if self.fixed_point is not None:
            out["contraction"] = self.fixed_point["max_ratio"] < self.fixed_point["ratio_tol"]
        return out

    @property
    def passed(self) -> bool:
        return all(self.checks().values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["checks"] = self.checks()
        d["passed"] = self.passed
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_plain)


def _plain(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def verify(pair: SolutionPair, test_bank: list[WeakTestFunction] | None = None,
           construction: Construction | None = None, weak_tol: float = 1e-5,
           energy_tol: float = 1e-5) -> VerificationReport:
    taus = np.log(pair.times)
    bank = test_bank if test_bank is not None else make_test_bank((taus[0], taus[-1]))
    if len(bank) < 20:
        raise ConstructionError("the weak-form bank needs at least 20 test functions")
    second = [pair.second_profile(t) for t in pair.times]
    background = [pair.background] * len(taus)
    wr = {"background": weak_residuals(taus, background, pair.force, bank),
          "second": weak_residuals(taus, second, pair.force, bank)}
    wr["max"] = {k: max(max(abs(r["momentum"]), abs(r["induction"])) for r in wr[k])
                 for k in ("background", "second")}
    wr["tol"] = weak_tol
    es = {"background": energy_slack(taus, background, pair.force),
          "second": energy_slack(taus, second, pair.force), "tol": energy_tol}
    l2_1 = np.array([pair.l2_background(t) for t in pair.times])
    l2_2 = np.array([pair.l2_second(t) for t in pair.times])
    s1, _, _ = _fit(np.log(pair.times), np.log(l2_1))
    s2, _, _ = _fit(np.log(pair.times), np.log(l2_2))
    vanishing = {"exponent_background": s1, "exponent_second": s2,
                 "ok": bool(s1 > 0 and s2 > 0 and np.all(np.diff(l2_1) > 0))}
    rep = VerificationReport(wr, es, separation_fit(pair), scaling_check(pair, bank), vanishing)
    if construction is not None:
        cfg = construction.fixed.config
        rep.perturbation_decay_fit = decay_fit(construction.per, cfg.a, cfg.N)
        rep.agreement = agreement(construction.direct, construction.per, cfg, construction.xi0)
        fp = construction.fixed
        rep.fixed_point = {"ratios": list(fp.ratios), "max_ratio": max(fp.ratios) if fp.ratios else 0.0,
                           "ratio_tol": 0.5, "iterations": fp.iterations, "retunes": fp.retunes,
                           "tau_start": fp.tau_start, "tau_end": fp.tau_end, "a": cfg.a, "beta": cfg.beta}
    return rep
