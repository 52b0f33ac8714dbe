"""How the solution leaves the boundary.

u vanishes linearly at the boundary, so w = -sqrt(u) behaves like a square
root there and its normal derivative blows up. The fitted exponent of
|w(x1 + t nu) - w(x1)| against t approaches 1/2.
"""

from inflap import Interval, Polygon, SchemeParams, solve
from inflap.analysis import boundary_blowup, boundary_decay
from inflap.envelope import transform

line = Interval(-1.0, 1.0)
for eps in (1 / 64, 1 / 128, 1 / 256):
    u = solve(line, 1.0, SchemeParams(eps=eps, sweep="newton"))
    fit = boundary_blowup(transform(u), [1.0], [-1.0])
    print(f"eps={eps:.5f}: exponent {fit.exponent:.3f}")

square = Polygon([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])
print("\nsup of the solution on the outer parallel body, along the original boundary")
for row in boundary_decay(square, [0.2, 0.1], SchemeParams(eps=3 / 32, h=1 / 32, sweep="newton")):
    print(f"eps={row.eps}: sup {row.sup:.4f} <= bound {row.bound:.4f}")
