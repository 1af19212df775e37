"""
Two Leray-Hopf solutions from the same data and the same force.

1. Build a smooth self-similar background Xi0 and the force that keeps beta*Xi0 steady.
2. Find the leading unstable eigenpair of the linearized similarity operator; for
   large beta its rate a is real and positive.
3. Solve for the perturbation Xi_per = e^{a tau} eta + (higher order) by a
   contraction in a weighted norm, integrating from tau = -infinity.
4. Map both solutions back to physical variables.  Both vanish as t -> 0 and feel
   the same force, and their L^2 distance grows like t^{a + 1/4}.

This walk-through uses a coarse 24 x 48 box so it finishes in a few minutes; the
acceptance run uses 48 x 96.

To run:
    $ python3 construction_walkthrough.py
"""

from mhdlab.axi_fields import GridRZ
from mhdlab.nonuniqueness import construct, select_beta, similarity_background, similarity_eigenpair, verify
from mhdlab.profiles import ProfileSpec

profile = ProfileSpec(kind="rational", parameters=(2.0, 0.75, 0.0, 1.0), epsilon=0.6)
grid = GridRZ.similarity(24, 48, R=12.0, Z=12.0)
xi0 = similarity_background(profile, grid)

entries = [similarity_eigenpair(xi0, beta) for beta in (50.0, 100.0)]
for e in entries:
    print(f"beta={e.beta:g}: leading eigenvalue {e.eigenvalue.real:.4f} {e.eigenvalue.imag:+.4f}i")
chosen = select_beta(entries)
print(f"selected beta={chosen.beta:g}, a={chosen.eigenvalue.real:.4f}")

con = construct(xi0, chosen)
print("Picard contraction ratios:", [f"{r:.1e}" for r in con.fixed.ratios])

pair = con.pair()
report = verify(pair, construction=con)
sep = report.separation_fit
print(f"separation slope {sep['slope']:.4f} (expected {sep['expected']:.4f})")
print(f"agreement with direct march: {report.agreement['relative']:.1e}")
for name, ok in report.checks().items():
    print(f"  {name:20s} {'ok' if ok else 'FAILED'}")
