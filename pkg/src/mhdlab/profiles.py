"""Radial angular-velocity and magnetic profiles of the rotating background.

The steady state is a swirling flow ``v0 = r*omega(r) e_theta`` threaded by a
vertical field ``H0 = eps*b(r) e_z``.  Everything here works on 1-D radial
node tables; the 2-D solvers sample the same closed forms at their own nodes
through :func:`profile_functions`.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

KINDS = ("rational", "gaussian", "table")

# default family: omega = (1+r^2)^(-3/4), b = 1
DEFAULT_PARAMETERS = {
    "rational": [1.0, 0.75, 0.0, 1.0],
    "gaussian": [1.0, 1.0, 0.0],
}


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class ProfileSpec:
    """Analytic profile family plus the amplitudes eps and beta.

    ``rational``: parameters ``[A, p, B, q]`` give ``omega = A (1+r^2)^-p`` and
    ``b = 1 + B (1+r^2)^-q``.

    ``gaussian``: parameters ``[A, s, B]`` give ``omega = A exp(-r^2/s^2)`` and
    ``b = 1 + B exp(-r^2)``.

    ``table``: ``table_r``, ``table_omega``, ``table_b`` hold sampled values.
    """

    kind: str = "rational"
    parameters: tuple[float, ...] = tuple(DEFAULT_PARAMETERS["rational"])
    epsilon: float = 0.05
    beta: float = 1.0
    table_r: tuple[float, ...] = ()
    table_omega: tuple[float, ...] = ()
    table_b: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ProfileError(f"unknown profile kind {self.kind!r}; expected one of {KINDS}")
        if not self.epsilon > 0:
            raise ProfileError(f"epsilon must be > 0, got {self.epsilon}")
        if not self.beta >= 1:
            raise ProfileError(f"beta must be >= 1, got {self.beta}")
        nparam = {"rational": 4, "gaussian": 3, "table": 0}[self.kind]
        if self.kind != "table" and len(self.parameters) != nparam:
            raise ProfileError(f"{self.kind} profile takes {nparam} parameters, got {len(self.parameters)}")
        if self.kind == "table":
            n = len(self.table_r)
            if n < 5 or len(self.table_omega) != n or len(self.table_b) != n:
                raise ProfileError("table profile needs equal-length r/omega/b tables with >= 5 rows")

    @classmethod
    def default(cls, epsilon: float = 0.05, beta: float = 1.0) -> "ProfileSpec":
        return cls(epsilon=epsilon, beta=beta)

    @classmethod
    def from_table(cls, r, omega, b, epsilon: float = 0.05, beta: float = 1.0) -> "ProfileSpec":
        return cls(kind="table", parameters=(), epsilon=epsilon, beta=beta,
                   table_r=tuple(map(float, r)), table_omega=tuple(map(float, omega)),
                   table_b=tuple(map(float, b)))


@dataclass
class RadialProfile:
    r: np.ndarray
    omega: np.ndarray
    b: np.ndarray
    d_omega2: np.ndarray
    d_b: np.ndarray
    d2_b: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "omega", "b", "d_omega2", "d_b", "d2_b"])
        for row in zip(self.r, self.omega, self.b, self.d_omega2, self.d_b, self.d2_b):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


@dataclass
class BackgroundField:
    r: np.ndarray
    v0_theta: np.ndarray
    H0_z: np.ndarray
    psi0: np.ndarray
    beta: float


@dataclass
class DecayReport:
    alpha_fit: float | None
    beta_fit: float | None
    exponents: dict[str, float | None]
    residuals: dict[str, float]
    passes: dict[str, bool] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.passes.values())

    def failed(self) -> list[str]:
        return [k for k, v in self.passes.items() if not v]


@dataclass
class CriterionReport:
    stable_rayleigh: bool
    r0: float | None
    marginal: bool


# ---------------------------------------------------------------------------
# grids


def geometric_grid(r_max: float, n: int, r_min: float | None = None) -> np.ndarray:
    """Geometrically stretched nodes on [r_min, r_max]; r_min defaults to 1e-4 r_max."""
    if r_min is None:
        r_min = 1e-4 * r_max
    return np.geomspace(r_min, r_max, n)


def _check_grid(grid) -> np.ndarray:
    r = np.asarray(grid, dtype=float)
    if r.ndim != 1 or r.size < 3:
        raise ProfileError("grid must be a 1-D node list with at least 3 nodes")
    if r[0] <= 0:
        raise ProfileError(f"first grid node must be > 0, got {r[0]}")
    if np.any(np.diff(r) <= 0):
        raise ProfileError("grid must be strictly increasing")
    return r


# ---------------------------------------------------------------------------
# closed forms


def profile_functions(spec: ProfileSpec) -> dict[str, Callable[[np.ndarray], np.ndarray]]:
    """Callables for omega, b and their derivatives at arbitrary radii.

    Keys: ``omega``, ``d_omega``, ``d_omega2``, ``b``, ``d_b``, ``d2_b`` and
    ``int_sb`` (the antiderivative of ``s b(s)`` vanishing at 0).
    Tables are interpolated with a natural-free cubic spline, so their
    derivatives away from the table nodes are only as good as the spline.
    """
    if spec.kind == "rational":
        A, p, B, q = spec.parameters

        def omega(r):
            return A * (1 + r**2) ** (-p)

        def d_omega(r):
            return -2 * p * A * r * (1 + r**2) ** (-p - 1)

        def d_omega2(r):
            return -4 * p * A**2 * r * (1 + r**2) ** (-2 * p - 1)

        def b(r):
            return 1 + B * (1 + r**2) ** (-q)

        def d_b(r):
            return -2 * q * B * r * (1 + r**2) ** (-q - 1)

        def d2_b(r):
            u = 1 + r**2
            return -2 * q * B * (u ** (-q - 1) - 2 * (q + 1) * r**2 * u ** (-q - 2))

        def int_sb(r):
            u = 1 + np.asarray(r, dtype=float) ** 2
            if q == 1:
                return (u - 1) / 2 + B * np.log(u) / 2
            return (u - 1) / 2 + B * (u ** (1 - q) - 1) / (2 * (1 - q))

    elif spec.kind == "gaussian":
        A, s, B = spec.parameters

        def omega(r):
            return A * np.exp(-(r**2) / s**2)

        def d_omega(r):
            return -2 * r / s**2 * omega(r)

        def d_omega2(r):
            return -4 * r / s**2 * omega(r) ** 2

        def b(r):
            return 1 + B * np.exp(-(r**2))

        def d_b(r):
            return -2 * r * B * np.exp(-(r**2))

        def d2_b(r):
            return B * np.exp(-(r**2)) * (4 * r**2 - 2)

        def int_sb(r):
            return r**2 / 2 + B * (1 - np.exp(-(r**2))) / 2

    else:
        tr = np.asarray(spec.table_r)
        w_spl = CubicSpline(tr, np.asarray(spec.table_omega))
        w2_spl = CubicSpline(tr, np.asarray(spec.table_omega) ** 2)
        b_spl = CubicSpline(tr, np.asarray(spec.table_b))
        omega, b = w_spl, b_spl
        d_omega = w_spl.derivative()
        d_omega2 = w2_spl.derivative()
        d_b = b_spl.derivative()
        d2_b = b_spl.derivative(2)
        sb = CubicSpline(tr, tr * np.asarray(spec.table_b)).antiderivative()
        r0 = tr[0]

        def int_sb(r):
            # b taken constant on [0, r0]
            return spec.table_b[0] * r0**2 / 2 + sb(r) - sb(r0)

    return {"omega": omega, "d_omega": d_omega, "d_omega2": d_omega2,
            "b": b, "d_b": d_b, "d2_b": d2_b, "int_sb": int_sb}


def fd_weights(x0: float, x: np.ndarray, m: int) -> np.ndarray:
    """Finite-difference weights for the m-th derivative at x0 (Fornberg)."""
    n = len(x)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def fd_derivative(r: np.ndarray, f: np.ndarray, m: int = 1, order: int = 4) -> np.ndarray:
    """m-th derivative of nodal data on a nonuniform grid, formal order ``order``."""
    n = len(r)
    width = order + m  # stencil points for the requested order
    width = min(width + (width % 2 == 0 and m % 2 == 1), n)
    half = width // 2
    out = np.empty(n)
    for i in range(n):
        lo = min(max(i - half, 0), n - width)
        idx = slice(lo, lo + width)
        out[i] = fd_weights(r[i], r[idx], m) @ f[idx]
    return out


# ---------------------------------------------------------------------------
# operations


def eval_profile(spec: ProfileSpec, grid: Sequence[float]) -> RadialProfile:
    r = _check_grid(grid)
    if spec.kind == "table":
        tr = np.asarray(spec.table_r)
        _check_grid(tr)
        if len(tr) == len(r) and np.allclose(tr, r, rtol=0, atol=0):
            omega = np.asarray(spec.table_omega, dtype=float)
            b = np.asarray(spec.table_b, dtype=float)
        else:
            fns = profile_functions(spec)
            omega, b = fns["omega"](r), fns["b"](r)
        d_omega2 = fd_derivative(r, omega**2, 1)
        d_b = fd_derivative(r, b, 1)
        d2_b = fd_derivative(r, b, 2)
    else:
        fns = profile_functions(spec)
        omega = fns["omega"](r)
        b = fns["b"](r)
        d_omega2 = fns["d_omega2"](r)
        d_b = fns["d_b"](r)
        d2_b = fns["d2_b"](r)
    if np.any(b <= 0):
        bad = r[np.argmax(b <= 0)]
        raise ProfileError(f"magnetic profile b must be positive; b <= 0 at r = {bad:g}")
    return RadialProfile(r=r, omega=omega, b=b, d_omega2=d_omega2, d_b=d_b, d2_b=d2_b)


def _fit_exponent(r, f, window):
    sel = (r >= window[0]) & (r <= window[1]) & (np.abs(f) > 0)
    if sel.sum() < 3:
        return None, 0.0
    x, y = np.log(r[sel]), np.log(np.abs(f[sel]))
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return float(coef[0]), res


def _is_zero(f, scale=1.0):
    return bool(np.all(np.abs(f) <= 1e-13 * max(scale, 1.0)))


def check_decay(profile: RadialProfile, decade: float = 10.0) -> DecayReport:
    """Fit power-law exponents over the outer and inner decade of the grid."""
    r = profile.r
    if r[-1] / r[0] < decade**2:
        span = np.log10(r[-1] / r[0])
        raise ProfileError(
            f"grid spans {span:.2f} decades; need one inner decade and one outer decade "
            f"(two decades in total) for the exponent fits")
    inner = (r[0], r[0] * decade)
    outer = (r[-1] / decade, r[-1])

    exps: dict[str, float | None] = {}
    res: dict[str, float] = {}
    for name, f in (("d_omega2", profile.d_omega2), ("d_b", profile.d_b), ("omega", profile.omega)):
        zero = _is_zero(f)
        for side, win in (("outer", outer), ("inner", inner)):
            key = f"{name}_{side}"
            if zero:
                exps[key], res[key] = None, 0.0
            else:
                exps[key], res[key] = _fit_exponent(r, f, win)

    def ok_rate(key, bound):
        # None means identically zero on the grid, which satisfies any O(.) bound
        e = exps[key]
        return e is None or e > bound

    def ok_decay(key, bound):
        e = exps[key]
        return e is None or e < bound

    passes = {
        # outer: d(omega^2) = O(r^(-3-2 alpha)), d_b = O(r^(-1-2 alpha)), alpha > 0
        "outer_d_omega2": ok_decay("d_omega2_outer", -3.0),
        "outer_d_b": ok_decay("d_b_outer", -1.0),
        # inner: d(omega^2) = O(r^(beta-3)), d_b = O(r^(beta-1)), beta > 0
        "inner_d_omega2": ok_rate("d_omega2_inner", -3.0),
        "inner_d_b": ok_rate("d_b_inner", -1.0),
        # finite energy: omega = O(r^(-1-alpha))
        "finite_energy_omega": ok_decay("omega_outer", -1.0),
    }
    e = exps["d_omega2_outer"]
    alpha = None if e is None else (-e - 3.0) / 2.0
    e = exps["d_omega2_inner"]
    beta = None if e is None else e + 3.0
    return DecayReport(alpha_fit=alpha, beta_fit=beta, exponents=exps, residuals=res, passes=passes)


def mri_criterion(profile: RadialProfile, rtol: float = 1e-12) -> CriterionReport:
    d = profile.d_omega2[1:-1]
    r = profile.r[1:-1]
    tol = rtol * max(1.0, float(np.max(profile.omega**2)))
    if np.all(d > tol):
        return CriterionReport(stable_rayleigh=True, r0=None, marginal=False)
    neg = np.nonzero(d < -tol)[0]
    if neg.size:
        return CriterionReport(stable_rayleigh=False, r0=float(r[neg[0]]), marginal=False)
    return CriterionReport(stable_rayleigh=False, r0=None, marginal=True)


def rayleigh_potential(profile: RadialProfile, epsilon: float) -> np.ndarray:
    if not epsilon > 0:
        raise ProfileError("epsilon must be > 0")
    r, b = profile.r, profile.b
    if r[0] <= 0:
        raise ProfileError("r = 0 may not be a grid node")
    return profile.d_omega2 / (epsilon**2 * b**2 * r) + profile.d2_b / (r**2 * b) - profile.d_b / (r**3 * b)


def build_background(spec: ProfileSpec, profile: RadialProfile) -> BackgroundField:
    r, b = profile.r, profile.b
    integrand = r * b
    # [0, r0]: integrate the quadratic Taylor model of b about r0, then Simpson node to node
    r0 = r[0]
    head = b[0] * r0**2 / 2 - profile.d_b[0] * r0**3 / 6 + profile.d2_b[0] * r0**4 / 24
    tail = cumulative_simpson(integrand, x=r, initial=0.0)
    psi0 = -spec.epsilon * (head + tail)
    return BackgroundField(r=r, v0_theta=r * profile.omega, H0_z=spec.epsilon * b,
                           psi0=psi0, beta=spec.beta)
