"""Regularity checks on a solved pentagon field.

Runs the concavity of sqrt(u), cone comparison, semiconcavity and the
convex envelope of -sqrt(u), then writes a text report.
"""

import numpy as np

from inflap import Polygon, SchemeParams, solve
from inflap import analysis as an
from inflap.envelope import convex_envelope, transform, witness_interiority

pentagon = Polygon([[0, 0], [1, 0], [1.3, 0.6], [0.5, 1.1], [-0.2, 0.5]])
h = 1 / 64
u = solve(pentagon, 1.0, SchemeParams(eps=3 * h, h=h, sweep="newton"))
tol = an.default_tolerance(u)

rep = an.RegularityReport(meta={"domain": "pentagon", "h": h})
rep.add("concavity", an.concavity_defect(u, 0.5), tol)
rep.add("quadcone", an.quad_cone_bound(u).violation, tol)
sc = an.semiconcavity_check(u, 0.5)
rep.add("semiconcavity", sc.violation, tol, M=sc.M, C=sc.C)

c = pentagon.centroid()
iy, ix = u.grid.index_of(c)
y = u.grid.point(iy, ix)
R = -float(pentagon.signed_distance(y))
cc = an.cone_comparison(u, y, np.linspace(R / 8, R, 8))
rep.add("cones", max(cc.violation, cc.endpoint_violation), tol)

tf = transform(u)
env, wit = convex_envelope(tf)
gap = float(np.max(np.abs(env.inside_values() - tf.w.inside_values())))
# the gap is of the size of the ring radius, not the solver tolerance
rep.add("envelope_gap", gap, 3 * h, interior=str(bool(np.all(witness_interiority(wit, pentagon)))))

print(rep.to_text())
