"""Uniform grids on convex domains, grid fields and the eps-ring stencil."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .geometry import ConvexDomain

__all__ = [
    "Grid",
    "ScalarField",
    "RingStencil",
    "UnderResolved",
    "build_grid",
    "build_ring",
    "ring_extrema",
    "write_field",
    "read_field",
    "format_field",
    "parse_field",
]


class UnderResolved(ValueError):
    """The grid does not resolve the domain."""


@dataclass(frozen=True, eq=False)
class Grid:
    """Lattice ``origin + h*(ix, iy)`` with ``nx*ny`` nodes (``ny == 1`` in 1D)."""

    h: float
    origin: np.ndarray
    nx: int
    ny: int
    inside_mask: np.ndarray
    boundary_dist: np.ndarray
    domain: ConvexDomain | None = None

    @property
    def dim(self) -> int:
        return 1 if self.ny == 1 and len(self.origin) == 1 else 2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def n_inside(self) -> int:
        return int(self.inside_mask.sum())

    def coords(self) -> np.ndarray:
        """Node coordinates, shape (ny, nx, dim)."""
        ix = np.arange(self.nx)
        if self.dim == 1:
            return (self.origin[0] + self.h * ix)[None, :, None]
        iy = np.arange(self.ny)
        X = self.origin[0] + self.h * ix[None, :]
        Y = self.origin[1] + self.h * iy[:, None]
        return np.stack(np.broadcast_arrays(X, Y), axis=-1)

    def inside_indices(self) -> np.ndarray:
        """Flat (row-major) indices of inside nodes."""
        return np.flatnonzero(self.inside_mask.ravel())

    def collar_mask(self) -> np.ndarray:
        """Outside nodes with an inside node among their 8 neighbours."""
        m = self.inside_mask
        grown = m.copy()
        pad = np.pad(m, 1)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                grown |= pad[1 + dy:1 + dy + self.ny, 1 + dx:1 + dx + self.nx]
        return grown & ~m

    def index_of(self, x) -> tuple[int, int]:
        """(iy, ix) of the node nearest to ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        k = np.rint((x - self.origin) / self.h).astype(int)
        if self.dim == 1:
            return 0, int(k[0])
        return int(k[1]), int(k[0])

    def point(self, iy: int, ix: int) -> np.ndarray:
        if self.dim == 1:
            return np.array([self.origin[0] + ix * self.h])
        return self.origin + self.h * np.array([ix, iy], dtype=float)


def build_grid(d: ConvexDomain, h: float, origin=None, shape=None) -> Grid:
    """Grid over the bounding box of ``d`` with spacing ``h``.

    ``origin``/``shape`` pin the lattice explicitly (used when re-reading
    field files); by default the lattice starts at the lower box corner.
    """
    if not h > 0:
        raise ValueError(f"grid spacing must be > 0, got {h}")
    if h > d.diameter() / 4 * (1 + 1e-12):
        raise UnderResolved(f"h={h} must not exceed diameter/4={d.diameter() / 4}")
    lo, hi = d.bounding_box()
    if origin is None:
        origin = np.asarray(lo, dtype=float)
        counts = np.ceil((hi - lo) / h - 1e-9).astype(int) + 1
    else:
        origin = np.asarray(origin, dtype=float).reshape(d.dim)
        counts = np.asarray(shape[::-1] if d.dim == 2 else shape[1:], dtype=int)
    nx = int(counts[0])
    ny = 1 if d.dim == 1 else int(counts[1])
    g0 = Grid(h, origin, nx, ny, np.zeros((ny, nx), bool), np.zeros((ny, nx)))
    pts = g0.coords().reshape(-1, d.dim)
    sd = d.signed_distance(pts).reshape(ny, nx)
    # nodes within roundoff of the boundary carry the datum
    inside = sd < -1e-12 * h
    if inside.sum() < 3**d.dim:
        raise UnderResolved(f"only {int(inside.sum())} inside nodes; refine h")
    return Grid(float(h), origin, nx, ny, inside, np.abs(sd), d)


@dataclass(eq=False)
class ScalarField:
    """Grid values of shape (ny, nx); outside nodes form the boundary collar."""

    grid: Grid
    values: np.ndarray
    dirichlet_zero: bool = False
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @classmethod
    def from_function(cls, grid: Grid, func, dirichlet_zero=False) -> "ScalarField":
        """Sample ``func`` at every node; it gets a (k,) array in 1D and (k, 2) in 2D."""
        pts = grid.coords().reshape(-1, len(grid.origin))
        vals = np.asarray(func(pts if grid.dim == 2 else pts[:, 0]), dtype=float)
        vals = np.broadcast_to(vals, (pts.shape[0],)).reshape(grid.shape).copy()
        if dirichlet_zero:
            vals[~grid.inside_mask] = 0.0
        return cls(grid, vals, dirichlet_zero)

    def inside_values(self) -> np.ndarray:
        return self.values[self.grid.inside_mask]

    def at(self, x) -> float:
        """Value at the node nearest to ``x``."""
        return float(self.values[self.grid.index_of(x)])

    def interpolate(self, pts) -> np.ndarray:
        """Multilinear interpolation at arbitrary points (clamped to the lattice)."""
        g = self.grid
        pts = np.asarray(pts, dtype=float).reshape(-1, len(g.origin))
        idx, wts = _interp_weights(g, pts)
        return (self.values.ravel()[idx] * wts).sum(axis=1)

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy(), self.dirichlet_zero, dict(self.meta))


def _interp_weights(g: Grid, pts: np.ndarray):
    """Corner flat indices and convex weights, shapes (k, 2**dim)."""
    s = (pts - g.origin) / g.h
    if g.dim == 1:
        s0 = np.clip(np.floor(s[:, 0] + 1e-12), 0, g.nx - 2).astype(int)
        t = np.clip(s[:, 0] - s0, 0.0, 1.0)
        t = np.where(np.abs(t) < 1e-12, 0.0, np.where(np.abs(1 - t) < 1e-12, 1.0, t))
        return np.stack([s0, s0 + 1], 1), np.stack([1 - t, t], 1)
    i0 = np.clip(np.floor(s[:, 0] + 1e-12), 0, g.nx - 2).astype(int)
    j0 = np.clip(np.floor(s[:, 1] + 1e-12), 0, g.ny - 2).astype(int)
    tx = np.clip(s[:, 0] - i0, 0.0, 1.0)
    ty = np.clip(s[:, 1] - j0, 0.0, 1.0)
    tx = np.where(tx < 1e-12, 0.0, np.where(tx > 1 - 1e-12, 1.0, tx))
    ty = np.where(ty < 1e-12, 0.0, np.where(ty > 1 - 1e-12, 1.0, ty))
    base = j0 * g.nx + i0
    idx = np.stack([base, base + 1, base + g.nx, base + g.nx + 1], 1)
    wts = np.stack([(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty], 1)
    return idx, wts


@dataclass(frozen=True, eq=False)
class RingStencil:
    """Samples at ``x + eps*v`` for every inside node ``x`` and direction ``v``.

    ``matrix`` maps full-grid values (flattened) to the ``n_inside*m`` ring
    samples; ``boundary`` flags the rays that leave the domain within ``eps``,
    whose sample is the boundary datum stored in ``datum`` at ``hit_points``.
    """

    grid: Grid
    eps: float
    directions: np.ndarray
    nodes: np.ndarray
    matrix: sp.csr_matrix
    boundary: np.ndarray
    hit_points: np.ndarray
    datum: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return len(self.directions)

    def samples(self, values: np.ndarray) -> np.ndarray:
        """Ring samples for all inside nodes, shape (n_inside, m)."""
        s = self.matrix @ np.asarray(values, dtype=float).ravel()
        s = s.reshape(len(self.nodes), self.m)
        return np.where(self.boundary, self.datum, s)

    def node_row(self, node) -> int:
        """Row of ``node`` (flat index or (iy, ix)) in the stencil arrays."""
        if isinstance(node, tuple):
            node = node[0] * self.grid.nx + node[1]
        row = np.searchsorted(self.nodes, node)
        if row >= len(self.nodes) or self.nodes[row] != node:
            raise ValueError(f"node {node} is not inside the domain")
        return int(row)


def ring_directions(m: int, dim: int) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    theta = 2.0 * np.pi * np.arange(m) / m
    return np.column_stack([np.cos(theta), np.sin(theta)])


def build_ring(g: Grid, eps: float, m: int = 16, boundary_datum=None) -> RingStencil:
    """Ring stencil of radius ``eps`` with ``m`` equally spaced directions.

    ``boundary_datum`` is an optional callable on boundary points; the
    default is the homogeneous datum 0.
    """
    if g.domain is None:
        raise ValueError("ring construction needs a grid built from a domain")
    if eps < 2 * g.h * (1 - 1e-12):
        raise ValueError(f"eps={eps} must be at least 2h={2 * g.h}")
    if g.dim == 1:
        m = 2
    elif m < 8 or m % 2:
        raise ValueError(f"need an even m >= 8 directions in 2D, got {m}")
    dirs = ring_directions(m, g.dim)
    nodes = g.inside_indices()
    pts = g.coords().reshape(-1, len(g.origin))[nodes]
    n = len(nodes)
    P = np.repeat(pts, m, axis=0)
    V = np.tile(dirs, (n, 1))
    t = g.domain.ray_exit(P, V)
    hit = t <= eps
    ring_pts = P + eps * V
    idx, wts = _interp_weights(g, ring_pts)
    wts[hit] = 0.0
    k = idx.shape[1]
    rows = np.repeat(np.arange(n * m), k)
    mat = sp.csr_matrix((wts.ravel(), (rows, idx.ravel())), shape=(n * m, g.nx * g.ny))
    mat.eliminate_zeros()
    hits = np.where(hit[:, None], P + t[:, None] * V, np.nan)
    datum = np.zeros(n * m)
    if boundary_datum is not None and np.any(hit):
        datum[hit] = boundary_datum(hits[hit])
    return RingStencil(g, float(eps), dirs, nodes, mat, hit.reshape(n, m),
                       hits.reshape(n, m, -1), datum.reshape(n, m))


def ring_extrema(field: ScalarField, stencil: RingStencil, node=None):
    """(max, min) of the ring samples at ``node``; all inside nodes if ``None``."""
    s = stencil.samples(field.values)
    if node is None:
        return s.max(axis=1), s.min(axis=1)
    row = s[stencil.node_row(node)]
    return float(row.max()), float(row.min())


# ---------------------------------------------------------------------------
# field files


def format_field(f: ScalarField) -> str:
    g = f.grid
    oy = g.origin[1] if g.dim == 2 else 0.0
    lines = [f"# grid nx={g.nx} ny={g.ny} h={g.h:.17g} ox={g.origin[0]:.17g} oy={oy:.17g}"]
    inside = g.inside_mask.astype(int)
    for iy in range(g.ny):
        for ix in range(g.nx):
            lines.append(f"{ix} {iy} {inside[iy, ix]} {f.values[iy, ix]:.17g}")
    return "\n".join(lines) + "\n"


def write_field(path, f: ScalarField) -> None:
    Path(path).write_text(format_field(f))


def parse_field(text: str, domain: ConvexDomain | None = None) -> ScalarField:
    lines = text.splitlines()
    head = lines[0]
    if not head.startswith("# grid"):
        raise ValueError("field file must start with '# grid'")
    meta = dict(tok.split("=") for tok in head[len("# grid"):].split())
    nx, ny = int(meta["nx"]), int(meta["ny"])
    h = float(meta["h"])
    ox, oy = float(meta["ox"]), float(meta["oy"])
    data = np.loadtxt(lines[1:], ndmin=2) if len(lines) > 1 else np.zeros((0, 4))
    if data.shape[0] != nx * ny:
        raise ValueError(f"expected {nx * ny} node lines, found {data.shape[0]}")
    ix, iy = data[:, 0].astype(int), data[:, 1].astype(int)
    inside = np.zeros((ny, nx), bool)
    vals = np.zeros((ny, nx))
    inside[iy, ix] = data[:, 2] > 0
    # np.loadtxt parses through float(), which round-trips 17 digits exactly
    vals[iy, ix] = data[:, 3]
    dim = 1 if ny == 1 and (domain is None or domain.dim == 1) else 2
    origin = np.array([ox]) if dim == 1 else np.array([ox, oy])
    if domain is not None:
        g = build_grid(domain, h, origin=origin, shape=(ny, nx))
        if not np.array_equal(g.inside_mask, inside):
            raise ValueError("field file inside mask does not match the domain")
    else:
        g = Grid(h, origin, nx, ny, inside, np.full((ny, nx), np.nan))
    return ScalarField(g, vals, dirichlet_zero=bool(np.all(vals[~inside] == 0)))


def read_field(path, domain: ConvexDomain | None = None) -> ScalarField:
    return parse_field(Path(path).read_text(), domain)
