"""Axisymmetric fields on a staggered (r, z) grid.

Layout (cell-centred in r, half a cell off the axis):

* faces ``r_f = h, 2h, ..., (n_r-1) h`` carry ``u_r, u_theta, B_theta, phi``;
  the axis face (r = 0) and the outer wall face (r = R) are not stored and
  are identically zero;
* centres ``r_c = (i + 1/2) h`` carry ``u_z`` and the pressure.

All quantities share the z nodes.  In periodic mode z derivatives are
pseudo-spectral; in truncated mode they are centred differences with zero
(Dirichlet) values just outside ``(-Z, Z)``.

The poloidal magnetic field is carried by its flux function,
``B_r = d_z phi / r`` and ``B_z = -d_r phi / r``, which makes the discrete
divergence of B vanish identically because the r and z difference operators
commute.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

COMPONENTS = ("u_r", "u_theta", "u_z", "phi", "B_theta")
FACE_COMPONENTS = ("u_r", "u_theta", "phi", "B_theta")


class FieldError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridRZ:
    """Staggered axisymmetric grid.

    ``z_length`` is the period (periodic) or the full extent ``2 Z_max``
    (truncated).  Truncated grids store ``n_z`` interior nodes.
    """

    n_r: int
    R: float
    n_z: int
    z_length: float = 2 * np.pi
    periodic: bool = True

    def __post_init__(self):
        if self.n_r < 3 or self.n_z < 2:
            raise FieldError("grid needs n_r >= 3 and n_z >= 2")
        if self.R <= 0 or self.z_length <= 0:
            raise FieldError("grid extents must be positive")
        if not self.periodic and self.n_z % 2:
            # odd-size antisymmetric centred difference is singular
            raise FieldError("truncated grids need an even n_z")

    @classmethod
    def similarity(cls, n_r: int, n_z: int, R: float = 12.0, Z: float = 12.0) -> "GridRZ":
        return cls(n_r=n_r, R=R, n_z=n_z, z_length=2 * Z, periodic=False)

    @property
    def h_r(self) -> float:
        return self.R / self.n_r

    @property
    def h_z(self) -> float:
        if self.periodic:
            return self.z_length / self.n_z
        return self.z_length / (self.n_z + 1)

    @property
    def Z(self) -> float:
        return self.z_length / 2

    @property
    def r_c(self) -> np.ndarray:
        return (np.arange(self.n_r) + 0.5) * self.h_r

    @property
    def r_f(self) -> np.ndarray:
        return np.arange(1, self.n_r) * self.h_r

    @property
    def z(self) -> np.ndarray:
        if self.periodic:
            return np.arange(self.n_z) * self.h_z
        return -self.Z + (np.arange(self.n_z) + 1) * self.h_z

    @property
    def face_shape(self) -> tuple[int, int]:
        return (self.n_r - 1, self.n_z)

    @property
    def center_shape(self) -> tuple[int, int]:
        return (self.n_r, self.n_z)

    @property
    def kz(self) -> np.ndarray:
        return 2 * np.pi * np.fft.rfftfreq(self.n_z, d=self.h_z)

    def descriptor(self) -> dict:
        return {"n_r": self.n_r, "R": self.R, "n_z": self.n_z, "z_length": self.z_length,
                "periodic": self.periodic}


# ---------------------------------------------------------------------------
# 1-D operators as sparse matrices


def _tri(lo, d, up):
    n = len(d)
    return sp.diags([lo, d, up], [-1, 0, 1], shape=(n, n), format="csr")


class RadialOps:
    """Sparse radial difference matrices on one grid (see module docstring)."""

    def __init__(self, n_r: int, h: float):
        self.n, self.h = n_r, h
        nf, nc = n_r - 1, n_r
        rf = np.arange(1, n_r) * h
        rc = (np.arange(n_r) + 0.5) * h
        rf_full = np.arange(n_r + 1) * h
        self.rf, self.rc = rf, rc
        # centres -> interior faces
        self.grad_c2f = sp.diags([-np.ones(nf), np.ones(nf)], [0, 1], shape=(nf, nc), format="csr") / h
        # interior faces -> centres, (1/r) d_r (r u)
        D = sp.diags([-rf, rf], [-1, 0], shape=(nc, nf), format="lil")
        self.div_f2c = (sp.diags(1 / (h * rc)) @ D.tocsr()).tocsr()
        # plain d_r from faces to centres (boundary faces are zero)
        self.dr_f2c = sp.diags([-np.ones(nf), np.ones(nf)], [-1, 0], shape=(nc, nf), format="csr") / h
        self.avg_f2c = sp.diags([0.5 * np.ones(nf), 0.5 * np.ones(nf)], [-1, 0], shape=(nc, nf), format="csr")
        self.avg_c2f = sp.diags([0.5 * np.ones(nf), 0.5 * np.ones(nf)], [0, 1], shape=(nf, nc), format="csr")
        # centred d_r at faces, zero neighbours at axis and wall
        self.dr_face = _tri(-np.ones(nf - 1), np.zeros(nf), np.ones(nf - 1)) / (2 * h)
        # centred d_r at centres: even ghost on the axis, odd (Dirichlet) ghost at the wall
        d = np.zeros(nc)
        d[0], d[-1] = -1.0, -1.0
        self.dr_center = _tri(-np.ones(nc - 1), d, np.ones(nc - 1)) / (2 * h)
        # (1/r) d_r (r d_r f) - f/r^2 at faces
        lo = rc[1:nf] / rf[1:]
        up = rc[1:nf] / rf[:-1]
        dia = -(rc[1:] + rc[:-1]) / rf - h**2 / rf**2
        self.lap_face_vec = _tri(lo, dia, up) / h**2
        # (1/r) d_r (r d_r f) at centres
        lo = rf_full[1:nc] / rc[1:]
        up = rf_full[1:nc] / rc[:-1]
        dia = -(rf_full[1:] + rf_full[:-1]) / rc
        dia[-1] -= rf_full[-1] / rc[-1]  # odd ghost at the wall
        self.lap_center = _tri(lo, dia, up) / h**2
        # r d_r (1/r d_r phi) at faces
        lo = rf[1:] / rc[1:nf]
        up = rf[:-1] / rc[1:nf]
        dia = -rf * (1 / rc[1:] + 1 / rc[:-1])
        self.gs_face = _tri(lo, dia, up) / h**2
        # pressure Laplacian, exactly div_f2c @ grad_c2f (Neumann ends)
        self.lap_p = (self.div_f2c @ self.grad_c2f).tocsr()


class ZOps:
    """z derivatives: spectral (periodic) or centred with Dirichlet ends."""

    def __init__(self, grid: GridRZ):
        self.periodic = grid.periodic
        self.n, self.h = grid.n_z, grid.h_z
        n, h = self.n, self.h
        if grid.periodic:
            k = grid.kz
            ik = 1j * k
            if n % 2 == 0:
                ik[-1] = 0.0  # Nyquist derivative is not representable
            self.ik = ik
            self.k2 = k**2
            self.sym_dzdz = ik * ik
        else:
            self.Dz = _tri(-np.ones(n - 1), np.zeros(n), np.ones(n - 1)) / (2 * h)
            self.Dzz = _tri(np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)) / h**2
            self.z = grid.z
            self.zDz = (sp.diags(self.z) @ self.Dz).tocsr()

    def dz(self, a: np.ndarray) -> np.ndarray:
        if self.periodic:
            return np.fft.irfft(self.ik * np.fft.rfft(a, axis=-1), n=self.n, axis=-1)
        return (self.Dz @ a.T).T

    def d2z(self, a: np.ndarray) -> np.ndarray:
        if self.periodic:
            return np.fft.irfft(-self.k2 * np.fft.rfft(a, axis=-1), n=self.n, axis=-1)
        return (self.Dzz @ a.T).T

    def z_dz(self, a: np.ndarray) -> np.ndarray:
        if self.periodic:
            raise FieldError("the similarity drift needs a truncated z axis")
        return (self.zDz @ a.T).T


class Operators:
    """Discrete calculus bound to one grid."""

    def __init__(self, grid: GridRZ):
        self.grid = grid
        self.rad = RadialOps(grid.n_r, grid.h_r)
        self.zo = ZOps(grid)
        g = grid
        self.rf = g.r_f[:, None]
        self.rc = g.r_c[:, None]
        self.w_f = 2 * np.pi * g.r_f[:, None] * g.h_r * g.h_z * np.ones((1, g.n_z))
        self.w_c = 2 * np.pi * g.r_c[:, None] * g.h_r * g.h_z * np.ones((1, g.n_z))
        self._poisson = None

    # radial helpers -------------------------------------------------------
    def R(self, M, a):
        return M @ a

    def dz(self, a):
        return self.zo.dz(a)

    def d2z(self, a):
        return self.zo.d2z(a)

    # magnetic recovery -----------------------------------------------------
    def B_r(self, phi):
        return self.dz(phi) / self.rf

    def B_z(self, phi):
        return -(self.rad.dr_f2c @ phi) / self.rc

    def div_face_center(self, v_r, v_z):
        """(1/r) d_r (r v_r) + d_z v_z at cell centres."""
        return self.rad.div_f2c @ v_r + self.dz(v_z)

    # projection ------------------------------------------------------------
    def _build_poisson(self):
        g = self.grid
        Lr = self.rad.lap_p
        if g.periodic:
            # Lr = diag(1/r_c) S with S symmetric: S v = lam diag(r_c) v
            S = (sp.diags(g.r_c) @ Lr).toarray()
            lam, V = sla.eigh(0.5 * (S + S.T), np.diag(g.r_c))
            sym = self.zo.sym_dzdz.real  # -k^2, zero at Nyquist
            den = lam[:, None] + sym[None, :]
            with np.errstate(divide="ignore"):
                inv = np.where(np.abs(den) < 1e-9 * np.abs(lam).max(), 0.0, 1.0 / den)
            self._poisson = ("fft", V, (V.T * g.r_c[None, :]), inv)
        else:
            # Dz Dz is symmetric negative definite for even n_z: a Kronecker-sum solve
            S = (sp.diags(g.r_c) @ Lr).toarray()
            lam, V = sla.eigh(0.5 * (S + S.T), np.diag(g.r_c))
            Dzz = (self.zo.Dz @ self.zo.Dz).toarray()
            mu, Q = sla.eigh(0.5 * (Dzz + Dzz.T))
            self._poisson = ("kron", V, V.T * g.r_c[None, :], Q, 1.0 / (lam[:, None] + mu[None, :]))

    def solve_pressure(self, div):
        if self._poisson is None:
            self._build_poisson()
        kind = self._poisson[0]
        if kind == "fft":
            _, V, VtW, inv = self._poisson
            dh = np.fft.rfft(div, axis=-1)
            ph = V @ (inv * (VtW @ dh))
            return np.fft.irfft(ph, n=self.grid.n_z, axis=-1)
        _, V, VtW, Q, inv = self._poisson
        return V @ ((inv * ((VtW @ div) @ Q)) @ Q.T)

    def project(self, v_r, v_z):
        """Discrete Leray projection of the poloidal pair; returns (v_r, v_z, p)."""
        div = self.div_face_center(v_r, v_z)
        p = self.solve_pressure(div)
        return v_r - self.rad.grad_c2f @ p, v_z - self.dz(p), p

    def weighted_div_norm(self, v_r, v_z):
        d = self.div_face_center(v_r, v_z)
        return float(np.sqrt(np.sum(self.w_c * d**2)))

    # similarity drift ------------------------------------------------------
    def r_dr_face(self, f):
        return self.rf * (self.rad.dr_face @ f)

    def r_dr_center(self, c):
        return self.rc * (self.rad.dr_center @ c)


@lru_cache(maxsize=16)
def operators(grid: GridRZ) -> Operators:
    return Operators(grid)


# ---------------------------------------------------------------------------
# field containers


@dataclass
class AxiField:
    """Axisymmetric state: velocity (u_r, u_theta, u_z) and magnetic (phi, B_theta)."""

    grid: GridRZ
    u_r: np.ndarray
    u_theta: np.ndarray
    u_z: np.ndarray
    phi: np.ndarray
    B_theta: np.ndarray
    pressure: np.ndarray | None = None
    frame: str = "physical"

    def __post_init__(self):
        g = self.grid
        for name in FACE_COMPONENTS:
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != g.face_shape:
                raise FieldError(f"{name} has shape {a.shape}, expected face shape {g.face_shape}")
            setattr(self, name, a)
        self.u_z = np.asarray(self.u_z, dtype=float)
        if self.u_z.shape != g.center_shape:
            raise FieldError(f"u_z has shape {self.u_z.shape}, expected {g.center_shape}")
        if self.frame not in ("physical", "similarity"):
            raise FieldError(f"unknown frame {self.frame!r}")

    @classmethod
    def zeros(cls, grid: GridRZ, frame: str = "physical") -> "AxiField":
        f, c = np.zeros(grid.face_shape), np.zeros(grid.center_shape)
        return cls(grid, f, f.copy(), c, f.copy(), f.copy(), frame=frame)

    @property
    def ops(self) -> Operators:
        return operators(self.grid)

    @property
    def B_r(self) -> np.ndarray:
        return self.ops.B_r(self.phi)

    @property
    def B_z(self) -> np.ndarray:
        return self.ops.B_z(self.phi)

    def velocity(self) -> "VecField":
        return VecField(self.u_r, self.u_theta, self.u_z)

    def magnetic(self) -> "VecField":
        return VecField(self.B_r, self.B_theta, self.B_z)

    # vector-space plumbing -------------------------------------------------
    def to_vector(self) -> np.ndarray:
        return np.concatenate([getattr(self, n).ravel() for n in COMPONENTS])

    @classmethod
    def from_vector(cls, grid: GridRZ, vec: np.ndarray, frame: str = "physical") -> "AxiField":
        nf = int(np.prod(grid.face_shape))
        nc = int(np.prod(grid.center_shape))
        sizes = [nf, nf, nc, nf, nf]
        parts = np.split(np.asarray(vec), np.cumsum(sizes)[:-1])
        shapes = [grid.face_shape, grid.face_shape, grid.center_shape, grid.face_shape, grid.face_shape]
        arrs = [p.reshape(s) for p, s in zip(parts, shapes)]
        return cls(grid, *arrs, frame=frame)

    def copy(self) -> "AxiField":
        return AxiField(self.grid, *(getattr(self, n).copy() for n in COMPONENTS),
                        pressure=None if self.pressure is None else self.pressure.copy(), frame=self.frame)

    def _combine(self, other, fn):
        return AxiField(self.grid, *(fn(getattr(self, n), getattr(other, n)) for n in COMPONENTS),
                        frame=self.frame)

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, c: float):
        return AxiField(self.grid, *(c * getattr(self, n) for n in COMPONENTS), frame=self.frame)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


@dataclass
class VecField:
    """Primitive vector components at native locations (r, theta: faces; z: centres)."""

    r: np.ndarray
    t: np.ndarray
    z: np.ndarray

    def __add__(self, o):
        return VecField(self.r + o.r, self.t + o.t, self.z + o.z)

    def __sub__(self, o):
        return VecField(self.r - o.r, self.t - o.t, self.z - o.z)

    def __mul__(self, c):
        return VecField(c * self.r, c * self.t, c * self.z)

    __rmul__ = __mul__


@dataclass
class PairState:
    """Xi = (V, W) view of an AxiField with a lazily filled norm cache."""

    field: AxiField
    _norms: dict = field(default_factory=dict, repr=False)

    @property
    def V(self) -> VecField:
        return self.field.velocity()

    @property
    def W(self) -> VecField:
        return self.field.magnetic()

    def norm(self, order: int = 0) -> float:
        if order not in self._norms:
            self._norms[order] = sobolev_norm(self.field, order)
        return self._norms[order]


# ---------------------------------------------------------------------------
# potentials and projection


def recover_from_potentials(phi: np.ndarray, chi: np.ndarray, grid: GridRZ):
    """(B_r, B_z, u_r, u_z) from the magnetic flux ``phi`` and velocity stream function ``chi``.

    Both potentials live on faces; the same stencil pair is used for both,
    so each recovered pair is discretely divergence-free.
    """
    ops = operators(grid)
    return ops.B_r(phi), ops.B_z(phi), ops.B_r(chi), ops.B_z(chi)


def leray_project(u_r: np.ndarray, u_z: np.ndarray, grid: GridRZ, tol: float = 1e-12):
    """Project (u_r, u_z) onto discretely divergence-free fields; returns (u_r, u_z, p)."""
    ops = operators(grid)
    pr, pz, p = ops.project(u_r, u_z)
    scale = max(1.0, float(np.sqrt(np.sum(ops.w_f * u_r**2) + np.sum(ops.w_c * u_z**2))))
    res = ops.weighted_div_norm(pr, pz)
    if res > tol * scale * 1e3:
        raise FieldError(f"pressure solve left divergence {res:.3e} (scale {scale:.3e})")
    return pr, pz, p


def project_state(state: AxiField) -> AxiField:
    out = state.copy()
    out.u_r, out.u_z, out.pressure = state.ops.project(state.u_r, state.u_z)
    return out


def resample_z(state: AxiField, n_z: int) -> AxiField:
    """Trigonometric interpolation of a periodic-grid state onto ``n_z`` z nodes."""
    g = state.grid
    if not g.periodic:
        raise FieldError("z resampling is only defined for periodic grids")
    new = GridRZ(g.n_r, g.R, n_z, g.z_length, True)
    m = min(g.n_z, n_z) // 2  # drop any Nyquist content

    def rs(a):
        ah = np.fft.rfft(a, axis=-1)
        out = np.zeros((a.shape[0], n_z // 2 + 1), dtype=complex)
        out[:, :m] = ah[:, :m]
        return np.fft.irfft(out * (n_z / g.n_z), n=n_z, axis=-1)

    return AxiField(new, *(rs(getattr(state, n)) for n in COMPONENTS), frame=state.frame)


def resample_truncated(state: AxiField, grid: GridRZ) -> AxiField:
    """Bilinear interpolation of a truncated-grid state onto another truncated grid, zero outside."""
    from scipy.interpolate import RegularGridInterpolator

    g = state.grid
    if g.periodic or grid.periodic:
        raise FieldError("resample_truncated needs truncated grids on both sides")
    zs = np.concatenate([[-g.Z], g.z, [g.Z]])

    def rs(a, r_old, r_new, face):
        lo = [0.0] if face else [-r_old[0]]
        rr = np.concatenate([lo, r_old, [g.R]])
        pad = np.zeros((a.shape[0] + 2, a.shape[1] + 2))
        pad[1:-1, 1:-1] = a
        if not face:
            pad[0, 1:-1] = a[0]  # even about the axis
        f = RegularGridInterpolator((rr, zs), pad, bounds_error=False, fill_value=0.0)
        R, Zg = np.meshgrid(r_new, grid.z, indexing="ij")
        return f(np.stack([R.ravel(), Zg.ravel()], axis=-1)).reshape(R.shape)

    comps = [rs(getattr(state, n), g.r_f, grid.r_f, True) if n in FACE_COMPONENTS
             else rs(getattr(state, n), g.r_c, grid.r_c, False) for n in COMPONENTS]
    return AxiField(grid, *comps, frame=state.frame)


def single_mode(state: AxiField, k: int) -> AxiField:
    """Keep only axial wavenumber ``k`` (periodic grids)."""
    g = state.grid

    def keep(a):
        ah = np.fft.rfft(a, axis=-1)
        mask = np.zeros(ah.shape[-1])
        mask[k] = 1.0
        return np.fft.irfft(ah * mask, n=g.n_z, axis=-1)

    return AxiField(g, *(keep(getattr(state, n)) for n in COMPONENTS), frame=state.frame)


def dominant_wavenumber(state: AxiField) -> int:
    spec = sum(np.sum(np.abs(np.fft.rfft(getattr(state, n), axis=-1)) ** 2, axis=0) for n in COMPONENTS)
    return int(np.argmax(spec))


# ---------------------------------------------------------------------------
# trilinear / bilinear forms


def advect(a: VecField, c: VecField, grid: GridRZ) -> VecField:
    """(a . grad) c in cylindrical components, including the curvature terms."""
    ops = operators(grid)
    rad = ops.rad
    az_f = rad.avg_c2f @ a.z
    ar_c = rad.avg_f2c @ a.r
    rf = ops.rf
    out_r = a.r * (rad.dr_face @ c.r) + az_f * ops.dz(c.r) - a.t * c.t / rf
    out_t = a.r * (rad.dr_face @ c.t) + az_f * ops.dz(c.t) + a.t * c.r / rf
    out_z = ar_c * (rad.dr_center @ c.z) + a.z * ops.dz(c.z)
    return VecField(out_r, out_t, out_z)


def inner(a: VecField, b: VecField, grid: GridRZ) -> float:
    """int a . b 2 pi r dr dz (midpoint in r, trapezoid in z)."""
    ops = operators(grid)
    return float(np.sum(ops.w_f * (a.r * b.r + a.t * b.t)) + np.sum(ops.w_c * a.z * b.z))


def trilinear_b(u: VecField, v: VecField, w: VecField, grid: GridRZ) -> float:
    return inner(advect(u, v, grid), w, grid)


def bilinear_B(phi1: AxiField, phi2: AxiField) -> tuple[VecField, VecField]:
    """Unprojected (u.grad v - U.grad V, u.grad V - U.grad v) for Phi1=(u,U), Phi2=(v,V)."""
    g = phi1.grid
    u, U = phi1.velocity(), phi1.magnetic()
    v, V = phi2.velocity(), phi2.magnetic()
    vel = advect(u, v, g) - advect(U, V, g)
    mag = advect(u, V, g) - advect(U, v, g)
    return vel, mag


def B0_form(phi1: AxiField, phi2: AxiField, phi3: AxiField) -> float:
    """b(u,v,w) - b(U,V,w) + b(u,V,W) - b(U,v,W)."""
    g = phi1.grid
    u, U = phi1.velocity(), phi1.magnetic()
    v, V = phi2.velocity(), phi2.magnetic()
    w, W = phi3.velocity(), phi3.magnetic()
    return (trilinear_b(u, v, w, g) - trilinear_b(U, V, w, g)
            + trilinear_b(u, V, W, g) - trilinear_b(U, v, W, g))


def induction(a: VecField, phi: np.ndarray, b: VecField, grid: GridRZ):
    """curl(a x b) for velocity ``a`` and magnetic field ``b`` with flux ``phi``.

    Returns the flux-function tendency ``-a_p . grad phi`` and the toroidal
    tendency ``d_z E_r - d_r E_z`` with E = a x b, so the result stays exactly
    divergence-free.
    """
    ops = operators(grid)
    rad = ops.rad
    az_f = rad.avg_c2f @ a.z
    dphi = -(a.r * (rad.dr_face @ phi) + az_f * ops.dz(phi))
    E_r = a.t * (rad.avg_c2f @ b.z) - az_f * b.t
    E_z = (rad.avg_f2c @ a.r) * (rad.avg_f2c @ b.t) - (rad.avg_f2c @ a.t) * (rad.avg_f2c @ b.r)
    dBt = ops.dz(E_r) - rad.grad_c2f @ E_z
    return dphi, dBt


# ---------------------------------------------------------------------------
# norms


def _pad_r(a, n, kind):
    """Ghost layers in r: faces are odd about the axis face and the wall face,
    centres are even about the axis and odd about the wall."""
    if kind == "face":
        full = np.concatenate([np.zeros((1,) + a.shape[1:]), a, np.zeros((1,) + a.shape[1:])])
        left = -full[1:n + 1][::-1]
        right = -full[-n - 1:-1][::-1]
    else:
        full = a
        left = full[:n][::-1]
        right = -full[-n:][::-1]
    return np.concatenate([left, full, right]), n + (1 if kind == "face" else 0)


def _deriv_table(a, grid: GridRZ, kind: str, N: int):
    """All mixed derivatives d_r^i d_z^j a with i + j <= N on the native nodes."""
    ops = operators(grid)
    h = grid.h_r
    padded, off = _pad_r(a, N + 1, kind)
    out = {}
    cur_r = padded
    for i in range(N + 1):
        core = cur_r[off:off + a.shape[0]] if kind == "center" else cur_r[off:off + a.shape[0]]
        cz = core
        for j in range(N + 1 - i):
            out[(i, j)] = cz
            cz = ops.dz(cz)
        nxt = np.zeros_like(cur_r)
        nxt[1:-1] = (cur_r[2:] - cur_r[:-2]) / (2 * h)
        cur_r = nxt
    return out


def sobolev_seminorms(state: AxiField, N: int = 3) -> list[float]:
    """Seminorms |Xi|_{H^m}, m = 0..N, of all six physical components.

    Derivatives are centred differences in r and the grid's z derivative;
    |f|_m^2 = sum_{i+j=m} C(m, i) || d_r^i d_z^j f ||^2 with the 2 pi r measure.
    """
    if N > 4:
        raise FieldError("Sobolev order above 4 is not supported")
    from math import comb

    ops = state.ops
    g = state.grid
    comps = [(state.u_r, "face"), (state.u_theta, "face"), (state.u_z, "center"),
             (state.B_r, "face"), (state.B_theta, "face"), (state.B_z, "center")]
    semi = np.zeros(N + 1)
    for arr, kind in comps:
        w = ops.w_f if kind == "face" else ops.w_c
        tab = _deriv_table(arr, g, kind, N)
        for (i, j), d in tab.items():
            semi[i + j] += comb(i + j, i) * np.sum(w * d**2)
    return [float(np.sqrt(s)) for s in semi]


def sobolev_norm(state: AxiField, N: int = 0) -> float:
    s = sobolev_seminorms(state, N)
    return float(np.sqrt(sum(x**2 for x in s)))


def norms(state: AxiField | PairState, N: int = 3) -> dict[str, float]:
    fld = state.field if isinstance(state, PairState) else state
    semi = sobolev_seminorms(fld, N)
    out = {f"H{m}_semi": v for m, v in enumerate(semi)}
    out["L2"] = semi[0]
    out[f"H{N}"] = float(np.sqrt(sum(x**2 for x in semi)))
    return out


def energy_norm(state: AxiField) -> float:
    ops = state.ops
    Br, Bz = state.B_r, state.B_z
    f = np.sum(ops.w_f * (state.u_r**2 + state.u_theta**2 + Br**2 + state.B_theta**2))
    c = np.sum(ops.w_c * (state.u_z**2 + Bz**2))
    return float(np.sqrt(f + c))


def energy_inner(a: AxiField, b: AxiField) -> float:
    g = a.grid
    return inner(a.velocity(), b.velocity(), g) + inner(a.magnetic(), b.magnetic(), g)


# ---------------------------------------------------------------------------
# serialization


def write_snapshot(path, state: AxiField, extra: dict | None = None) -> None:
    """Flat binary: 8-byte little-endian header length, JSON header, float64 LE body."""
    header = {"grid": state.grid.descriptor(), "frame": state.frame,
              "components": list(COMPONENTS),
              "shapes": [list(getattr(state, n).shape) for n in COMPONENTS]}
    if extra:
        header["extra"] = extra
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    body = np.concatenate([getattr(state, n).ravel() for n in COMPONENTS]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(np.array([len(hb)], dtype="<u8").tobytes())
        fh.write(hb)
        fh.write(body.tobytes())


def read_snapshot(path) -> tuple[AxiField, dict]:
    with open(path, "rb") as fh:
        n = int(np.frombuffer(fh.read(8), dtype="<u8")[0])
        header = json.loads(fh.read(n).decode("utf-8"))
        body = np.frombuffer(fh.read(), dtype="<f8")
    grid = GridRZ(**header["grid"])
    return AxiField.from_vector(grid, body.copy(), frame=header["frame"]), header


def write_trajectory(path, times, states, extra: dict | None = None) -> None:
    """Same layout as a snapshot, with the states stacked and their times in the header."""
    if len(times) != len(states) or not states:
        raise FieldError("times and states must be non-empty and of equal length")
    first = states[0]
    header = {"grid": first.grid.descriptor(), "frame": first.frame, "components": list(COMPONENTS),
              "shapes": [list(getattr(first, n).shape) for n in COMPONENTS],
              "times": [float(t) for t in times], "count": len(states)}
    if extra:
        header["extra"] = extra
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(np.array([len(hb)], dtype="<u8").tobytes())
        fh.write(hb)
        for s in states:
            fh.write(s.to_vector().astype("<f8").tobytes())


def read_trajectory(path) -> tuple[np.ndarray, list, dict]:
    with open(path, "rb") as fh:
        n = int(np.frombuffer(fh.read(8), dtype="<u8")[0])
        header = json.loads(fh.read(n).decode("utf-8"))
        body = np.frombuffer(fh.read(), dtype="<f8")
    grid = GridRZ(**header["grid"])
    rows = body.reshape(header["count"], -1)
    states = [AxiField.from_vector(grid, row.copy(), frame=header["frame"]) for row in rows]
    return np.array(header["times"]), states, header


def csv_slice(state: AxiField, component: str, j: int | None = None) -> str:
    """Radial profile of one component at z index ``j`` (default: middle)."""
    g = state.grid
    j = g.n_z // 2 if j is None else j
    arr = getattr(state, component)
    r = g.r_c if component == "u_z" else g.r_f
    lines = [f"r,{component}"]
    lines += [f"{x!r},{float(v)!r}" for x, v in zip(r, arr[:, j])]
    return "\n".join(lines) + "\n"
