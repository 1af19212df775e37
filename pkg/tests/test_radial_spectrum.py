import time

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from mhdlab.profiles import ProfileSpec, eval_profile, geometric_grid, rayleigh_potential
from mhdlab.radial_spectrum import (SpectrumError, assemble_pencil, ldl_inertia, negative_count,
                                    pencil_eigenvalues, total_negative_count)


@pytest.fixture(scope="module")
def grid():
    return geometric_grid(12.0, 514)


@pytest.fixture(scope="module")
def default_profile(grid):
    return eval_profile(ProfileSpec.default(), grid)


def well(r, depth=-100.0):
    return np.where((r >= 0.8) & (r <= 1.2), depth, 0.0)


def test_pencil_symmetric_and_mass_positive(grid, default_profile):
    F = rayleigh_potential(default_profile, 0.05)
    p = assemble_pencil(F, 3, grid)
    assert p.n_dof == 512
    np.testing.assert_array_equal(p.K, p.K.T)
    sla.cholesky(p.M)


@pytest.mark.parametrize("k", [1, 7])
def test_zero_and_positive_potential_positive_definite(grid, k):
    for F in (np.zeros_like(grid), np.full_like(grid, 3.0)):
        p = assemble_pencil(F, k, grid)
        assert np.min(np.linalg.eigvalsh(p.K)) > 0


def test_k_zero_rejected(grid):
    with pytest.raises(SpectrumError):
        assemble_pencil(np.zeros_like(grid), 0, grid)
    with pytest.raises(SpectrumError):
        assemble_pencil(np.zeros_like(grid), 1.5, grid)


def test_default_profile_k1_has_negative_eigenvalue(grid, default_profile):
    p = assemble_pencil(rayleigh_potential(default_profile, 0.05), 1, grid)
    assert pencil_eigenvalues(p)[0] < 0


def test_stiffness_grows_with_k(grid, default_profile):
    F = rayleigh_potential(default_profile, 0.05)
    d = assemble_pencil(F, 5, grid).K - assemble_pencil(F, 4, grid).K
    assert np.min(np.linalg.eigvalsh(d)) > -1e-9 * np.abs(d).max()


def test_nonnegative_potential_zero_count(grid):
    res = negative_count(assemble_pencil(np.abs(np.sin(grid)), 2, grid))
    assert res.n_neg == 0 and res.n_neg_dense == 0


def test_potential_well_counts(grid):
    low = negative_count(assemble_pencil(well(grid), 1, grid))
    assert low.n_neg >= 1 and low.n_neg == low.n_neg_dense
    high = negative_count(assemble_pencil(well(grid), 200, grid))
    assert high.n_neg == 0 and high.n_neg_dense == 0


def test_ldl_matches_dense_inertia_random():
    rng = np.random.default_rng(3)
    for _ in range(20):
        d, o = rng.normal(size=40), rng.normal(size=39)
        A = np.diag(d) + np.diag(o, 1) + np.diag(o, -1)
        assert ldl_inertia(d, o) == np.count_nonzero(np.linalg.eigvalsh(A) < 0)


def test_ldl_zero_pivot_falls_back():
    with pytest.raises(ZeroDivisionError):
        ldl_inertia(np.array([0.0, 1.0]), np.array([1.0]))


def test_n_neg_matches_min_eigs_when_small(grid):
    res = negative_count(assemble_pencil(well(grid, -30.0), 1, grid))
    assert res.n_neg <= 5
    assert res.n_neg == int(np.count_nonzero(res.min_eigs < 0))


def test_total_nonnegative_potential_profile():
    r = geometric_grid(12.0, 200)
    prof = eval_profile(ProfileSpec(kind="rational", parameters=(1.0, 0.0, 0.0, 1.0)), r)
    s = total_negative_count(prof, 0.05)
    assert s.total == 0 and s.k_star == 1


def test_total_default_profile(default_profile):
    t0 = time.perf_counter()
    s = total_negative_count(default_profile, 0.05)
    assert time.perf_counter() - t0 < 10
    assert s.total >= 1 and s.k_star <= 32
    assert all(r.n_neg == r.n_neg_dense for r in s.per_k)
    assert [r.n_neg for r in s.per_k] == sorted((r.n_neg for r in s.per_k), reverse=True)
    assert total_negative_count(default_profile, 10.0).total == 0


@settings(max_examples=15, deadline=None)
@given(eps1=st.floats(0.05, 0.6), eps2=st.floats(0.05, 0.6))
def test_total_count_monotone_in_epsilon(eps1, eps2):
    prof = eval_profile(ProfileSpec.default(), geometric_grid(12.0, 130))
    lo, hi = sorted((eps1, eps2))
    assert total_negative_count(prof, lo).total >= total_negative_count(prof, hi).total


def test_summary_outputs(default_profile):
    s = total_negative_count(default_profile, 0.3)
    lines = s.to_csv().splitlines()
    assert lines[0] == "k,n_neg,lambda_min,n_dof"
    assert len(lines) == len(s.per_k) + 1
    assert '"total"' in s.to_json()


def test_lowest_eigenvalue_second_order():
    # uniform nodes on [0.05, 6] with a smooth potential: self-convergence ratios
    def lam(n):
        r = np.linspace(0.05, 6.0, n + 1)
        F = -4.0 * np.exp(-(r - 1.5) ** 2)
        return pencil_eigenvalues(assemble_pencil(F, 1, r))[0]

    l1, l2, l3 = lam(128), lam(256), lam(512)
    order = np.log2(abs(l1 - l2) / abs(l2 - l3))
    assert 1.8 <= order <= 2.2
