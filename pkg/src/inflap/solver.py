"""Fixed-point solver for -Delta_inf^N u = f with u = 0 on the boundary.

The discrete problem is the dynamic programming principle

    u(x) = 1/2 (max_ring u + min_ring u) + eps^2/2 f(x),

iterated from the zero field. Three sweep modes are available: ``jacobi``
(whole-grid updates, bit reproducible), ``gauss_seidel`` (red-black
ordering) and ``newton``, which alternates policy-frozen linear solves with
value sweeps and reaches the same fixed point far faster on fine grids.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretization import (
    Grid,
    RingStencil,
    ScalarField,
    build_grid,
    build_ring,
    ring_extrema,
)
from .geometry import ConvexDomain, Interval

__all__ = [
    "SchemeParams",
    "SourceTerm",
    "NoConvergence",
    "QuadraticProbe",
    "dpp_update",
    "dpp_operator",
    "solve",
    "residual",
    "one_dim_family",
    "normalized_inf_laplacian",
    "default_spacing",
]

logger = logging.getLogger(__name__)

SWEEPS = ("jacobi", "gauss_seidel", "newton")


class NoConvergence(RuntimeError):
    """Iteration cap reached before the stopping tolerance."""

    def __init__(self, iterations: int, residual: float, field: ScalarField | None = None):
        super().__init__(f"no convergence after {iterations} iterations (residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual
        self.field = field


@dataclass
class SchemeParams:
    """Ring radius, direction count and stopping rule of the scheme.

    ``tol=None`` means the scale-invariant default ``1e-9 * diam^2``.
    ``h=None`` picks ``eps/3`` in 2D and ``eps/2`` in 1D.
    """

    eps: float
    m: int = 16
    tol: float | None = None
    max_iter: int = 200_000
    sweep: str = "gauss_seidel"
    h: float | None = None
    allow_mixed_sign: bool = False

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")
        if self.tol is not None and not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.sweep not in SWEEPS:
            raise ValueError(f"sweep must be one of {SWEEPS}, got {self.sweep!r}")


class SourceTerm:
    """Right-hand side ``f``: a constant or a callable on (k, dim) point arrays."""

    def __init__(self, f: float | Callable | "SourceTerm" = 1.0):
        if isinstance(f, SourceTerm):
            self.constant, self.func = f.constant, f.func
        elif callable(f):
            self.constant, self.func = None, f
        else:
            c = float(f)
            if not np.isfinite(c):
                raise ValueError("source constant must be finite")
            self.constant, self.func = c, None

    def sample(self, grid: Grid) -> np.ndarray:
        """Values at every grid node, shape (ny, nx)."""
        if self.constant is not None:
            return np.full(grid.shape, self.constant)
        pts = grid.coords().reshape(-1, len(grid.origin))
        vals = np.asarray(self.func(pts if grid.dim == 2 else pts[:, 0]), dtype=float)
        vals = np.broadcast_to(vals, (pts.shape[0],)).reshape(grid.shape)
        if not np.all(np.isfinite(vals[grid.inside_mask])):
            raise ValueError("source term is not finite on the grid")
        return vals

    def __call__(self, x):
        if self.constant is not None:
            return np.full(np.shape(x)[:-1] if np.ndim(x) > 1 else np.shape(x), self.constant)[()]
        return self.func(x)

    def __repr__(self):
        return f"SourceTerm({self.constant if self.constant is not None else self.func!r})"


def default_spacing(eps: float, dim: int) -> float:
    return eps / 2 if dim == 1 else eps / 3


def dpp_update(field: ScalarField, stencil: RingStencil, f, node) -> float:
    """One dynamic-programming update at ``node``."""
    hi, lo = ring_extrema(field, stencil, node)
    row = stencil.node_row(node)
    fval = SourceTerm(f).sample(stencil.grid).ravel()[stencil.nodes[row]]
    return 0.5 * (hi + lo) + 0.5 * stencil.eps**2 * fval


def dpp_operator(values: np.ndarray, stencil: RingStencil, fvals: np.ndarray) -> np.ndarray:
    """Updated values at all inside nodes (1D array aligned with ``stencil.nodes``)."""
    s = stencil.samples(values)
    return 0.5 * (s.max(axis=1) + s.min(axis=1)) + 0.5 * stencil.eps**2 * fvals


def residual(field: ScalarField, stencil: RingStencil, f) -> ScalarField:
    """Per-node ``|dpp_update - u|``; zero off the inside nodes."""
    fvals = SourceTerm(f).sample(stencil.grid).ravel()[stencil.nodes]
    upd = dpp_operator(field.values, stencil, fvals)
    out = np.zeros(field.grid.nx * field.grid.ny)
    out[stencil.nodes] = np.abs(upd - field.values.ravel()[stencil.nodes])
    return ScalarField(field.grid, out, dirichlet_zero=True)


def _policy_matrix(stencil: RingStencil, values: np.ndarray):
    """Frozen-policy linear map: T(u) = A u + b on the current argmax/argmin."""
    s = stencil.samples(values)
    m = stencil.m
    n = len(stencil.nodes)
    rows = np.arange(n) * m
    imax = rows + s.argmax(axis=1)
    imin = rows + s.argmin(axis=1)
    M = stencil.matrix
    A = 0.5 * (M[imax] + M[imin])
    bnd = stencil.boundary.ravel()
    dat = stencil.datum.ravel()
    b = 0.5 * (np.where(bnd[imax], dat[imax], 0.0) + np.where(bnd[imin], dat[imin], 0.0))
    return A, b


def _newton_step(u: np.ndarray, stencil: RingStencil, fvals: np.ndarray):
    A, b = _policy_matrix(stencil, u)
    nodes = stencil.nodes
    A_in = A[:, nodes]
    # contributions from collar nodes are held at their current values
    rest = A @ u - A_in @ u[nodes]
    rhs = b + rest + 0.5 * stencil.eps**2 * fvals
    K = sp.identity(len(nodes), format="csc") - A_in.tocsc()
    try:
        sol = spla.spsolve(K, rhs)
    except (RuntimeError, ValueError):
        return None
    if not np.all(np.isfinite(sol)):
        return None
    out = u.copy()
    out[nodes] = sol
    return out


def _color_split(stencil: RingStencil):
    g = stencil.grid
    iy, ix = np.divmod(stencil.nodes, g.nx)
    red = (ix + iy) % 2 == 0
    return red, ~red


def solve(d: ConvexDomain, f=1.0, p: SchemeParams | None = None, *, grid: Grid | None = None,
          stencil: RingStencil | None = None, initial: ScalarField | None = None,
          callback: Callable[[int, float], None] | None = None) -> ScalarField:
    """Discrete viscosity solution of ``-Delta_inf^N u = f`` in ``d``, ``u = 0`` on the boundary.

    Iterates from zero (or ``initial``) until the sup-norm of ``T(u) - u`` over
    inside nodes is at most ``p.tol``. ``callback(iteration, residual)`` is
    invoked once per sweep.
    """
    if p is None:
        raise ValueError("scheme parameters are required")
    src = SourceTerm(f)
    if grid is None:
        h = p.h if p.h is not None else default_spacing(p.eps, d.dim)
        grid = build_grid(d, h)
    if stencil is None:
        stencil = build_ring(grid, p.eps, p.m)
    fall = src.sample(grid)
    fvals = fall.ravel()[stencil.nodes]
    if np.any(fvals < 0) and not p.allow_mixed_sign:
        raise ValueError("source term takes negative values; pass allow_mixed_sign=True")
    tol = p.tol if p.tol is not None else 1e-9 * d.diameter() ** 2
    nodes = stencil.nodes

    u = np.zeros(grid.nx * grid.ny) if initial is None else initial.values.ravel().copy()
    u[~grid.inside_mask.ravel()] = 0.0 if initial is None else u[~grid.inside_mask.ravel()]

    if p.sweep == "gauss_seidel":
        red, black = _color_split(stencil)
        sub = []
        for color in (red, black):
            rows = np.flatnonzero(color)
            sel = (rows[:, None] * stencil.m + np.arange(stencil.m)).ravel()
            sub.append((rows, sp.csr_matrix(stencil.matrix[sel]),
                        stencil.boundary[rows], stencil.datum[rows]))

    res = np.inf
    it = 0
    stalled = 0
    while it < p.max_iter:
        Tu = dpp_operator(u, stencil, fvals)
        res = float(np.max(np.abs(Tu - u[nodes]))) if len(nodes) else 0.0
        if callback is not None:
            callback(it, res)
        if res <= tol:
            break
        it += 1
        if p.sweep == "jacobi":
            u[nodes] = Tu
        elif p.sweep == "gauss_seidel":
            for rows, mat, bnd, dat in sub:
                s = (mat @ u).reshape(len(rows), stencil.m)
                s = np.where(bnd, dat, s)
                u[nodes[rows]] = 0.5 * (s.max(axis=1) + s.min(axis=1)) + 0.5 * stencil.eps**2 * fvals[rows]
        else:
            cand = _newton_step(u, stencil, fvals) if stalled == 0 else None
            if cand is not None:
                cres = float(np.max(np.abs(dpp_operator(cand, stencil, fvals) - cand[nodes])))
                if cres < 0.5 * res:
                    u = cand
                    continue
            # fall back to a short burst of value sweeps
            stalled = (stalled + 1) % 4
            u[nodes] = Tu
            for _ in range(20):
                u[nodes] = dpp_operator(u, stencil, fvals)
    else:
        Tu = dpp_operator(u, stencil, fvals)
        res = float(np.max(np.abs(Tu - u[nodes])))
        if res > tol:
            raise NoConvergence(it, res, ScalarField(grid, u, dirichlet_zero=True))
    logger.debug("solve converged in %d iterations, residual %.3e", it, res)
    return ScalarField(grid, u, dirichlet_zero=True,
                       meta={"iterations": it, "residual": res, "tol": tol, "stencil": stencil,
                             "eps": p.eps, "domain": d})


def one_dim_family(r: float, R: float = 1.0, grid: Grid | None = None, h: float | None = None) -> ScalarField:
    """Sample ``u_r``: plateau ``(R^2 - r^2)/2`` for ``|x| <= r``, parabola outside."""
    if not 0 <= r <= R:
        raise ValueError(f"r must lie in [0, R]=[0, {R}], got {r}")
    if grid is None:
        grid = build_grid(Interval(-R, R), h if h is not None else R / 64)

    def u_r(x):
        x = np.abs(np.asarray(x, dtype=float))
        return np.where(x <= r, 0.5 * (R * R - r * r), 0.5 * np.maximum(R * R - x * x, 0.0))

    return ScalarField.from_function(grid, u_r, dirichlet_zero=True)


@dataclass(frozen=True, eq=False)
class QuadraticProbe:
    """``psi(x) = value + <p, x - x0> + 1/2 <A (x - x0), x - x0>``."""

    x0: np.ndarray
    value: float
    p: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if A.shape != (len(p), len(p)) or x0.shape != p.shape:
            raise ValueError("probe shapes disagree")
        if np.max(np.abs(A - A.T), initial=0.0) > 1e-12:
            raise ValueError("probe Hessian must be symmetric")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "A", 0.5 * (A + A.T))
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "value", float(self.value))

    def __call__(self, x):
        dx = np.asarray(x, dtype=float) - self.x0
        return self.value + dx @ self.p + 0.5 * np.einsum("...i,ij,...j->...", dx, self.A, dx)


def normalized_inf_laplacian(probe: QuadraticProbe, zero_tol: float = 0.0) -> tuple[float, float]:
    """Value (as a degenerate interval) or eigenvalue range at a critical point."""
    p, A = probe.p, probe.A
    n2 = float(p @ p)
    if n2 > zero_tol**2 and n2 > 0:
        q = float(p @ A @ p) / n2
        return (q, q)
    ev = np.linalg.eigvalsh(A)
    return (float(ev[0]), float(ev[-1]))
