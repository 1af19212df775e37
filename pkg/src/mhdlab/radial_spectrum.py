"""Negative-direction counts of the radial operators L_k.

The quadratic form

    Q_k(phi) = int (phi'^2 + k^2 phi^2) / r dr + int F(r) phi^2 r dr

is discretized with linear finite elements and paired with the mass form
``int phi^2 r dr``.  Both ends carry homogeneous Dirichlet conditions.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .profiles import RadialProfile, rayleigh_potential

# 3-point Gauss-Legendre on [0, 1]
_GX = 0.5 + 0.5 * np.array([-np.sqrt(3 / 5), 0.0, np.sqrt(3 / 5)])
_GW = 0.5 * np.array([5 / 9, 8 / 9, 5 / 9])


class SpectrumError(RuntimeError):
    pass


@dataclass
class OperatorPencil:
    """Tridiagonal K (stiffness) and M (mass) stored as (diag, offdiag) pairs."""

    K_diag: np.ndarray
    K_off: np.ndarray
    M_diag: np.ndarray
    M_off: np.ndarray
    k: int
    r: np.ndarray  # interior nodes

    @property
    def n_dof(self) -> int:
        return self.K_diag.size

    @staticmethod
    def _dense(d, o):
        return np.diag(d) + np.diag(o, 1) + np.diag(o, -1)

    @property
    def K(self) -> np.ndarray:
        return self._dense(self.K_diag, self.K_off)

    @property
    def M(self) -> np.ndarray:
        return self._dense(self.M_diag, self.M_off)


@dataclass
class InertiaResult:
    k: int
    n_neg: int
    min_eigs: np.ndarray
    resolution: int
    n_neg_dense: int | None = None
    fallback: bool = False


@dataclass
class SpectrumSummary:
    per_k: list[InertiaResult]
    total: int
    k_star: int | None
    epsilon: float | None = None
    extra: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "n_neg", "lambda_min", "n_dof"])
        for res in self.per_k:
            w.writerow([res.k, res.n_neg, repr(float(res.min_eigs[0])), res.resolution])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"total": self.total, "k_star": self.k_star, "epsilon": self.epsilon,
                           "n_neg": [r.n_neg for r in self.per_k]}, indent=2, sort_keys=True)


def _element_integrals(r, weight):
    """Element matrices int w N_i N_j over each [r_e, r_{e+1}] by 3-point Gauss.

    ``weight`` maps (quadrature radii, element index) to weight values.
    Returns the (n_el, 2, 2) stack.
    """
    a, b = r[:-1], r[1:]
    h = b - a
    out = np.zeros((a.size, 2, 2))
    for x, w in zip(_GX, _GW):
        rq = a + x * h
        wq = weight(rq, x) * w * h
        n0, n1 = 1 - x, x
        out[:, 0, 0] += wq * n0 * n0
        out[:, 0, 1] += wq * n0 * n1
        out[:, 1, 1] += wq * n1 * n1
    out[:, 1, 0] = out[:, 0, 1]
    return out


def _assemble(el):
    n = el.shape[0] + 1
    d = np.zeros(n)
    d[:-1] += el[:, 0, 0]
    d[1:] += el[:, 1, 1]
    o = el[:, 0, 1].copy()
    # strip Dirichlet end nodes
    return d[1:-1], o[1:-1]


def assemble_pencil(potential, k: int, grid) -> OperatorPencil:
    """Linear-element pencil for L_k on ``grid`` with the potential given at the nodes."""
    if int(k) != k or k < 1:
        raise SpectrumError(f"axial wavenumber k must be a positive integer, got {k}")
    r = np.asarray(grid, dtype=float)
    F = np.asarray(potential, dtype=float)
    if F.shape != r.shape:
        raise SpectrumError("potential must be given on the grid nodes")
    h = np.diff(r)
    # gradient part: phi' is constant per element, int dr/r is exact
    g = np.log(r[1:] / r[:-1]) / h**2
    grad = np.zeros((h.size, 2, 2))
    grad[:, 0, 0] = grad[:, 1, 1] = g
    grad[:, 0, 1] = grad[:, 1, 0] = -g

    Fa, Fb = F[:-1], F[1:]
    # F interpolated linearly inside each element
    pot = _element_integrals(r, lambda rq, x: (Fa * (1 - x) + Fb * x) * rq)
    kk = _element_integrals(r, lambda rq, x: k**2 / rq)
    mass = _element_integrals(r, lambda rq, x: rq)

    Kd, Ko = _assemble(grad + kk + pot)
    Md, Mo = _assemble(mass)
    return OperatorPencil(K_diag=Kd, K_off=Ko, M_diag=Md, M_off=Mo, k=int(k), r=r[1:-1])


def ldl_inertia(diag: np.ndarray, off: np.ndarray) -> int:
    """Negative pivots of the LDL^T factorization of a symmetric tridiagonal matrix."""
    n = diag.size
    d = np.empty(n)
    d[0] = diag[0]
    for i in range(1, n):
        if d[i - 1] == 0.0:
            raise ZeroDivisionError(f"zero pivot at row {i - 1}")
        d[i] = diag[i] - off[i - 1] ** 2 / d[i - 1]
    if d[-1] == 0.0:
        raise ZeroDivisionError(f"zero pivot at row {n - 1}")
    return int(np.count_nonzero(d < 0))


def pencil_eigenvalues(pencil: OperatorPencil) -> np.ndarray:
    """All generalized eigenvalues K x = lambda M x, ascending (dense oracle)."""
    return sla.eigh(pencil.K, pencil.M, eigvals_only=True)


def negative_count(pencil: OperatorPencil, cross_check: bool = True) -> InertiaResult:
    evals = pencil_eigenvalues(pencil)
    n_dense = int(np.count_nonzero(evals < 0))
    fallback = False
    try:
        n_neg = ldl_inertia(pencil.K_diag, pencil.K_off)
    except ZeroDivisionError:
        n_neg, fallback = n_dense, True
    if cross_check and n_neg != n_dense:
        raise SpectrumError(
            f"k={pencil.k}: LDL^T inertia {n_neg} disagrees with dense eigensolve count {n_dense}")
    return InertiaResult(k=pencil.k, n_neg=n_neg, min_eigs=evals[:5].copy(),
                         resolution=pencil.n_dof, n_neg_dense=n_dense, fallback=fallback)


def total_negative_count(profile: RadialProfile, epsilon: float, k_cap: int = 64) -> SpectrumSummary:
    """Sum n^-(L_k) over k >= 1, stopping after two consecutive zero counts."""
    if k_cap < 2:
        raise SpectrumError("k_cap must be >= 2")
    F = rayleigh_potential(profile, epsilon)
    per_k: list[InertiaResult] = []
    k_star = None
    for k in range(1, k_cap + 1):
        res = negative_count(assemble_pencil(F, k, profile.r))
        if per_k and res.n_neg > per_k[-1].n_neg:
            raise SpectrumError(
                f"inertia increased from {per_k[-1].n_neg} at k={k - 1} to {res.n_neg} at k={k}; "
                "K(k+1) - K(k) is positive semidefinite so this signals an assembly bug")
        per_k.append(res)
        if len(per_k) >= 2 and per_k[-1].n_neg == 0 and per_k[-2].n_neg == 0:
            k_star = k - 1
            break
    total = sum(r.n_neg for r in per_k)
    return SpectrumSummary(per_k=per_k, total=total, k_star=k_star, epsilon=epsilon)
