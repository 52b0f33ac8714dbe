"""Solve -Δ∞ᴺ u = 1 on the unit disk and compare with (1 - r²)/2.

The disk solution is radial, so the scheme error can be read off along any
ray. Halving eps should roughly halve the sup error.
"""

import numpy as np

from inflap import Ball, SchemeParams, solve

disk = Ball([0.0, 0.0], 1.0)

for eps in (0.2, 0.1, 0.05):
    u = solve(disk, 1.0, SchemeParams(eps=eps, sweep="newton"))
    g = u.grid
    pts = g.coords()[g.inside_mask]
    exact = 0.5 * (1 - np.sum(pts**2, axis=1))
    err = np.max(np.abs(u.values[g.inside_mask] - exact))
    print(f"eps={eps:<5} h={g.h:.4f} u(0)={u.at([0.0, 0.0]):.5f} sup error={err:.4f}")

# profile along the positive x axis
r = np.linspace(0, 0.95, 6)
ray = np.column_stack([r, np.zeros_like(r)])
print("\n r     u(r)     (1-r^2)/2")
for ri, ui in zip(r, u.interpolate(ray)):
    print(f"{ri:.2f}  {ui:.5f}  {0.5 * (1 - ri * ri):.5f}")
