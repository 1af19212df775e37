"""
Counting unstable magnetorotational modes with an inertia certificate.

For each axial wavenumber k the radial problem is a symmetric pencil whose negative
eigenvalues are the unstable modes.  A tridiagonal LDL^T factorization counts them
exactly without computing a spectrum; a dense eigensolver confirms the count.

Weak fields (small epsilon) destabilize a band of k; strong fields stabilize everything.

To run:
    $ python3 certificate.py
"""

from mhdlab.profiles import ProfileSpec, eval_profile, geometric_grid
from mhdlab.radial_spectrum import total_negative_count

grid = geometric_grid(12.0, 514)

for epsilon in (0.05, 0.2, 1.0, 10.0):
    spec = ProfileSpec(kind="rational", parameters=(1.0, 0.75, 0.0, 1.0), epsilon=epsilon)
    profile = eval_profile(spec, grid)
    summary = total_negative_count(profile, epsilon)
    agree = all(r.n_neg == r.n_neg_dense for r in summary.per_k)
    print(f"epsilon={epsilon:<5g} unstable modes={summary.total:3d}  k_star={summary.k_star}  "
          f"ldl==dense: {agree}")
