"""Regularity checks on computed (or synthetic) grid fields.

Every check returns nonnegative defect values that vanish exactly when the
corresponding inequality holds on all sampled configurations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .discretization import ScalarField, build_grid
from .envelope import TransformedField
from .geometry import ConvexDomain, outer_parallel_body
from .solver import SchemeParams, solve

__all__ = [
    "concavity_defect",
    "cone_comparison",
    "quad_cone_bound",
    "boundary_decay",
    "semiconcavity_check",
    "semiconcavity_violation",
    "singularity_estimate_check",
    "gradient_oscillation",
    "boundary_blowup",
    "paper_boundary_bound",
    "shrunk_mask",
    "subsample",
    "RegularityReport",
    "CheckResult",
    "default_tolerance",
]

# index steps (dy, dx) for midpoint triples
_DIRS_2D = ((0, 1), (1, 0), (1, 1), (1, -1))


def _shift(a: np.ndarray, dy: int, dx: int, fill):
    """``out[i, j] = a[i + dy, j + dx]`` with ``fill`` off the array."""
    out = np.full_like(a, fill)
    ny, nx = a.shape
    ys, yd = (slice(dy, ny), slice(0, ny - dy)) if dy >= 0 else (slice(0, ny + dy), slice(-dy, ny))
    xs, xd = (slice(dx, nx), slice(0, nx - dx)) if dx >= 0 else (slice(0, nx + dx), slice(-dx, nx))
    out[yd, xd] = a[ys, xs]
    return out


def default_tolerance(u: ScalarField) -> float:
    """First-order scheme tolerance ``10 h``."""
    return 10.0 * u.grid.h


def concavity_defect(u: ScalarField, exponent: float = 0.5, mask: np.ndarray | None = None) -> float:
    """Largest midpoint violation of concavity of ``u**exponent``.

    Triples are inside-node pairs along the axes and diagonals whose
    midpoint is a node.
    """
    if not 0 < exponent <= 1:
        raise ValueError("exponent must lie in (0, 1]")
    g = u.grid
    inside = g.inside_mask if mask is None else (g.inside_mask & mask)
    if np.any(u.values[inside] < 0):
        raise ValueError("concavity_defect needs u >= 0")
    v = np.where(inside, np.maximum(u.values, 0.0) ** exponent, np.nan)
    dirs = ((0, 1),) if g.dim == 1 else _DIRS_2D
    worst = 0.0
    for dy, dx in dirs:
        for k in range(1, max(g.nx, g.ny)):
            a = _shift(v, -k * dy, -k * dx, np.nan)
            b = _shift(v, k * dy, k * dx, np.nan)
            ok = inside & ~np.isnan(a) & ~np.isnan(b)
            if not ok.any():
                break
            d = 0.5 * (a[ok] + b[ok]) - v[ok]
            worst = max(worst, float(d.max()))
    return worst


class ConeComparison(NamedTuple):
    violation: float
    endpoint_violation: float
    slopes: np.ndarray


def _ring(center, r, n, dim):
    if dim == 1:
        return np.array([[center[0] - r], [center[0] + r]])
    th = 2 * np.pi * np.arange(n) / n
    return center + r * np.column_stack([np.cos(th), np.sin(th)])


def cone_comparison(u: ScalarField, y, radii: Sequence[float], n_angles: int = 128) -> ConeComparison:
    """Monotonicity of ``r -> max_{|x-y|=r} (u(y) - u(x)) / r``.

    Returns the largest decrease between consecutive radii and the
    violation of ``(u(y) - u(x))/r <= u(y)/R`` with ``R = dist(y, boundary)``.
    """
    g = u.grid
    y = np.atleast_1d(np.asarray(y, dtype=float))
    R = -g.domain.signed_distance(y) if g.domain is not None else np.inf
    radii = np.sort(np.asarray(radii, dtype=float))
    if np.any(radii <= 0) or np.any(radii > R + 1e-12):
        raise ValueError(f"radii must lie in (0, dist(y, boundary)={R}]")
    uy = float(u.interpolate(y)[0])
    slopes = np.array([np.max(uy - u.interpolate(_ring(y, r, n_angles, g.dim))) / r for r in radii])
    mono = float(np.max(np.maximum(slopes[:-1] - slopes[1:], 0.0), initial=0.0))
    endpoint = float(max(0.0, np.max(slopes) - uy / R)) if np.isfinite(R) else 0.0
    return ConeComparison(mono, endpoint, slopes)


class QuadConeResult(NamedTuple):
    violation: float
    slack: ScalarField


def quad_cone_bound(u: ScalarField, d: ConvexDomain | None = None, n_boundary: int = 256) -> QuadConeResult:
    """``u(x) <= diam/2 |x - z| - |x - z|^2 / 2`` for boundary samples ``z``.

    ``slack`` holds ``min_z bound - u`` at inside nodes (0 elsewhere).
    """
    g = u.grid
    d = d if d is not None else g.domain
    Z = d.boundary_points(n_boundary)
    D = d.diameter()
    X = g.coords().reshape(-1, len(g.origin))[g.inside_indices()]
    best = np.full(len(X), np.inf)
    for s in range(0, len(X), 4096):
        r = np.linalg.norm(X[s:s + 4096, None, :] - Z[None], axis=-1)
        best[s:s + 4096] = np.min(0.5 * D * r - 0.5 * r * r, axis=1)
    slack = best - u.values.ravel()[g.inside_indices()]
    field_vals = np.zeros(g.nx * g.ny)
    field_vals[g.inside_indices()] = slack
    return QuadConeResult(float(max(0.0, -slack.min())), ScalarField(g, field_vals))


def paper_boundary_bound(eps: float, diam: float) -> float:
    """``(eps/2)(diam + 1) - eps^2/2``."""
    return 0.5 * eps * (diam + 1.0) - 0.5 * eps * eps


class DecayRow(NamedTuple):
    eps: float
    sup: float
    bound: float


def boundary_decay(d: ConvexDomain, eps_list: Sequence[float], params: SchemeParams,
                   n_boundary: int = 256, f: float = 1.0) -> list[DecayRow]:
    """Sup over the boundary of ``d`` of the solution on each outer parallel body."""
    Y = d.boundary_points(n_boundary)
    rows = []
    for e in eps_list:
        body = outer_parallel_body(d, e)
        ue = solve(body, f, params)
        rows.append(DecayRow(float(e), float(ue.interpolate(Y).max()), paper_boundary_bound(e, d.diameter())))
    return rows


def shrunk_mask(u: ScalarField, factor: float = 0.5, d: ConvexDomain | None = None) -> np.ndarray:
    """Nodes of the domain scaled by ``factor`` about its centroid."""
    g = u.grid
    d = d if d is not None else g.domain
    if d is None:
        raise ValueError("need a domain to build the compact subset")
    K = d.scaled(factor, about=d.centroid())
    pts = g.coords().reshape(-1, len(g.origin))
    return K.contains(pts).reshape(g.shape) & g.inside_mask


def _pairs_even(idx_y, idx_x, chunk=2048):
    """All unordered pairs (i < j) with even index differences, chunked."""
    n = len(idx_y)
    for s in range(0, n, chunk):
        i = np.arange(s, min(n, s + chunk))
        for j0 in range(s, n, chunk):
            j = np.arange(j0, min(n, j0 + chunk))
            I, J = np.meshgrid(i, j, indexing="ij")
            keep = (J > I) & ((idx_y[I] - idx_y[J]) % 2 == 0) & ((idx_x[I] - idx_x[J]) % 2 == 0)
            if keep.any():
                yield I[keep], J[keep]


def _lipschitz(vals, pts, chunk=2048):
    M = 0.0
    n = len(vals)
    for s in range(0, n, chunk):
        dv = np.abs(vals[s:s + chunk, None] - vals[None, :])
        dx = np.linalg.norm(pts[s:s + chunk, None, :] - pts[None, :, :], axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dx > 0, dv / dx, 0.0)
        M = max(M, float(ratio.max(initial=0.0)))
    return M


def semiconcavity_violation(u: ScalarField, C: float, mask: np.ndarray) -> float:
    """Max over midpoint triples in ``mask`` of ``u(x)/2 + u(y)/2 - C/8 |x-y|^2 - u(mid)``, floored at 0."""
    g = u.grid
    iy, ix = np.nonzero(mask)
    vals = u.values[iy, ix]
    worst = 0.0
    for I, J in _pairs_even(iy, ix):
        my, mx = (iy[I] + iy[J]) // 2, (ix[I] + ix[J]) // 2
        if not np.all(mask[my, mx]):
            sel = mask[my, mx]
            I, J, my, mx = I[sel], J[sel], my[sel], mx[sel]
        dist2 = g.h**2 * ((iy[I] - iy[J]) ** 2 + (ix[I] - ix[J]) ** 2)
        d = 0.5 * (vals[I] + vals[J]) - C / 8.0 * dist2 - u.values[my, mx]
        if d.size:
            worst = max(worst, float(d.max()))
    return worst


class SemiconcavityResult(NamedTuple):
    M: float
    C: float
    violation: float


def semiconcavity_check(u: ScalarField, K: float = 0.5, mask: np.ndarray | None = None) -> SemiconcavityResult:
    """Lipschitz constant ``M`` of ``sqrt(u)`` on K, ``C = 2 M^2``, and the midpoint violation."""
    g = u.grid
    if mask is None:
        mask = shrunk_mask(u, K)
    if np.any(u.values[mask] < 0):
        raise ValueError("semiconcavity_check needs u >= 0")
    iy, ix = np.nonzero(mask)
    pts = g.h * np.column_stack([ix, iy]).astype(float)
    M = _lipschitz(np.sqrt(u.values[iy, ix]), pts)
    C = 2.0 * M * M
    return SemiconcavityResult(M, C, semiconcavity_violation(u, C, mask))


def singularity_estimate_check(u: ScalarField, x0, p, zeta, K: float, C: float, R: float,
                               c: float | None = None) -> float:
    """Violation of the kinked upper bound around ``x0``.

    Without ``c``: ``u(x) <= u(x0) + <p, x-x0> - K |<zeta, x-x0>| + C/2 |x-x0|^2`` on ``B_R(x0)``.
    With ``c``: ``u(x) <= u(x0) + <p, x-x0> - c <zeta, x-x0>^2 + C/2 |x-x0|^2`` on
    ``B_delta(x0)``, ``delta = min(K/c, R)``.
    """
    zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
    if abs(np.linalg.norm(zeta) - 1.0) > 1e-12:
        raise ValueError("zeta must be a unit vector")
    g = u.grid
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    X = g.coords().reshape(-1, len(g.origin))
    vals = u.values.ravel()
    radius = R if c is None else min(K / c, R)
    dx = X - x0
    r = np.linalg.norm(dx, axis=1)
    sel = (r <= radius + 1e-12) & g.inside_mask.ravel()
    dx, r = dx[sel], r[sel]
    u0 = float(u.interpolate(x0)[0])
    proj = dx @ zeta
    kink = K * np.abs(proj) if c is None else c * proj**2
    bound = u0 + dx @ p - kink + 0.5 * C * r * r
    return float(max(0.0, np.max(vals[sel] - bound, initial=0.0)))


def _nested(fields):
    for a, b in zip(fields, fields[1:]):
        if not math.isclose(a.grid.h, 2 * b.grid.h, rel_tol=1e-9):
            raise ValueError("refinements must halve h")
        if not np.allclose(a.grid.origin, b.grid.origin, atol=1e-9 * a.grid.h):
            raise ValueError("refinements must share the lattice origin")


def subsample(u: ScalarField, k: int) -> ScalarField:
    """Restriction of ``u`` to every ``k``-th node, on the coarser nested lattice."""
    g = u.grid
    if k < 1:
        raise ValueError("k must be >= 1")
    if g.domain is None:
        raise ValueError("subsampling needs the field's domain")
    vals = u.values[::k, ::k] if g.dim == 2 else u.values[:, ::k]
    cg = build_grid(g.domain, k * g.h, origin=g.origin, shape=vals.shape)
    return ScalarField(cg, vals.copy(), u.dirichlet_zero, dict(u.meta))


def gradient_oscillation(fields: Sequence[ScalarField], K: float = 0.5, lag: int | None = None) -> list[float]:
    """Max spread ``|D+ u - D- u|`` of one-sided axis quotients on K, per refinement.

    Quotients use a step of ``lag`` nodes. By default the step is the ring
    radius stored in a solved field's metadata (one node for synthetic fields),
    since the scheme does not resolve slopes below that scale.
    """
    _nested(list(fields))
    out = []
    for u in fields:
        g = u.grid
        k = lag if lag is not None else max(1, int(round(u.meta.get("eps", g.h) / g.h)))
        mask = shrunk_mask(u, K)
        v = u.values
        axes = ((0, 1),) if g.dim == 1 else ((0, 1), (1, 0))
        spread = np.zeros(g.shape)
        for dy, dx in axes:
            dy, dx = k * dy, k * dx
            ok = mask & _shift(g.inside_mask, dy, dx, False) & _shift(g.inside_mask, -dy, -dx, False)
            fwd = (_shift(v, dy, dx, 0.0) - v) / (k * g.h)
            bwd = (v - _shift(v, -dy, -dx, 0.0)) / (k * g.h)
            spread = np.where(ok, np.maximum(spread, np.abs(fwd - bwd)), spread)
        out.append(float(spread[mask].max(initial=0.0)))
    return out


class BlowupFit(NamedTuple):
    exponent: float
    t: np.ndarray
    increments: np.ndarray


def boundary_blowup(w: ScalarField | TransformedField, x1, nu, t_max: float | None = None,
                    min_levels: int = 4) -> BlowupFit:
    """Log-log slope of ``|w(x1 + t nu) - w(x1)|`` over dyadic ``t``.

    Levels run from ``t_max`` (default ``diam/8``) down to ``4h``.
    """
    if isinstance(w, TransformedField):
        w = w.w
    g = w.grid
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    nu = nu / np.linalg.norm(nu)
    if t_max is None:
        t_max = g.domain.diameter() / 8 if g.domain is not None else 32 * g.h
    ts = []
    t = t_max
    while t >= 4 * g.h - 1e-15:
        ts.append(t)
        t /= 2
    if len(ts) < min_levels:
        raise ValueError(f"only {len(ts)} dyadic levels resolvable, need {min_levels}")
    ts = np.array(ts[::-1])
    on_boundary = g.domain is not None and abs(g.domain.signed_distance(x1)) < 1e-12
    w1 = 0.0 if (on_boundary and w.dirichlet_zero) else float(w.interpolate(x1)[0])
    inc = np.abs(w.interpolate(x1 + ts[:, None] * nu) - w1)
    slope = np.polyfit(np.log(ts), np.log(inc), 1)[0]
    return BlowupFit(float(slope), ts, inc)


# ---------------------------------------------------------------------------
# reports


@dataclass
class CheckResult:
    name: str
    value: float
    tolerance: float
    passed: bool
    details: dict = field(default_factory=dict)


@dataclass
class RegularityReport:
    """Collected check outcomes; ``to_text`` gives ``key: value`` blocks."""

    checks: list[CheckResult] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, name, value, tolerance, passed=None, **details) -> CheckResult:
        ok = (value <= tolerance) if passed is None else bool(passed)
        res = CheckResult(name, float(value), float(tolerance), ok, details)
        self.checks.append(res)
        return res

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_text(self) -> str:
        out = [f"{k}: {v}" for k, v in self.meta.items()]
        if out:
            out.append("")
        for c in self.checks:
            out.append(f"[{c.name}]")
            out.append(f"value: {c.value:.17g}")
            out.append(f"tolerance: {c.tolerance:.17g}")
            out.append(f"verdict: {'pass' if c.passed else 'fail'}")
            for k, v in c.details.items():
                if isinstance(v, (list, tuple, np.ndarray)):
                    v = " ".join(f"{float(x):.17g}" for x in v)
                elif isinstance(v, float):
                    v = f"{v:.17g}"
                out.append(f"{k}: {v}")
            out.append("")
        out.append(f"overall: {'pass' if self.passed else 'fail'}")
        return "\n".join(out) + "\n"

    def plot_svg(self, path, series: dict[str, tuple[Sequence[float], Sequence[float]]]) -> None:
        """Log-log plot of defect against ``h`` for each named series."""
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 4))
        for name, (hs, vals) in series.items():
            vals = np.maximum(np.asarray(vals, dtype=float), 1e-16)
            ax.loglog(hs, vals, "o-", label=name)
        ax.set_xlabel("h")
        ax.set_ylabel("defect")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg")
        plt.close(fig)

