"""Bounded convex domains in one and two dimensions.

Every domain answers the same small set of queries: membership in the open
set, signed distance to the boundary, ray exit distance, diameter, and the
interior sphere radius. Outer parallel bodies are represented exactly as a
base domain plus a rounding radius, so distances stay exact.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from pathlib import Path

import numpy as np

__all__ = [
    "ConvexDomain",
    "Interval",
    "Ball",
    "Ellipse",
    "Polygon",
    "ParallelBody",
    "outer_parallel_body",
    "load_domain",
    "dump_domain",
    "parse_domain",
]

# interior angles below pi - ANGLE_TOL count as genuine corners
ANGLE_TOL = 1e-9


def _points(x, dim):
    """Coerce ``x`` to a ``(k, dim)`` array; report whether it was a single point."""
    arr = np.asarray(x, dtype=float)
    if dim == 1:
        if arr.ndim == 0:
            return arr.reshape(1, 1), True
        if arr.ndim == 1 and arr.shape[0] == 1:
            return arr.reshape(1, 1), True
        if arr.ndim == 1:
            return arr.reshape(-1, 1), False
        return arr.reshape(-1, 1), False
    if arr.ndim == 1:
        return arr.reshape(1, dim), True
    return arr.reshape(-1, dim), False


class ConvexDomain(ABC):
    """An open, bounded, convex region of R^1 or R^2."""

    dim: int

    @abstractmethod
    def _sd(self, pts: np.ndarray) -> np.ndarray:
        """Signed distance for an array of points of shape (k, dim)."""

    @abstractmethod
    def _ray_exit(self, pts: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """Distance along unit ``dirs`` from inside ``pts`` to the boundary."""

    @abstractmethod
    def diameter(self) -> float: ...

    @abstractmethod
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]: ...

    @abstractmethod
    def centroid(self) -> np.ndarray: ...

    @abstractmethod
    def interior_sphere_radius(self) -> float: ...

    @abstractmethod
    def scaled(self, factor: float, about=None) -> "ConvexDomain":
        """Image under the dilation ``x -> about + factor*(x - about)``."""

    @abstractmethod
    def to_dict(self) -> dict: ...

    def signed_distance(self, x):
        """Negative inside, zero on the boundary, positive outside."""
        pts, single = _points(x, self.dim)
        d = self._sd(pts)
        return float(d[0]) if single else d

    def contains(self, x):
        """Membership in the open set."""
        pts, single = _points(x, self.dim)
        inside = self._sd(pts) < 0.0
        return bool(inside[0]) if single else inside

    def ray_exit(self, x, v):
        """Distance ``t >= 0`` such that ``x + t v`` lies on the boundary.

        ``x`` must lie in the closed domain and ``v`` must be a unit vector
        (arrays broadcast against each other).
        """
        pts, single = _points(x, self.dim)
        dirs, _ = _points(v, self.dim)
        pts, dirs = np.broadcast_arrays(pts, dirs)
        t = np.maximum(self._ray_exit(np.ascontiguousarray(pts), np.ascontiguousarray(dirs)), 0.0)
        return float(t[0]) if single and t.size == 1 else t

    def nearest_boundary_point(self, x):
        """Closest boundary point to each point of the closed exterior.

        Uses the gradient of the exterior distance (smooth outside a convex
        set) and one Newton correction along it.
        """
        pts, single = _points(x, self.dim)
        if np.any(self._sd(pts) < -1e-12 * max(1.0, self.diameter())):
            raise ValueError("nearest_boundary_point needs points outside or on the boundary")
        out = self._nearest(pts)
        return out[0] if single else out

    def _nearest(self, pts):
        sd = self._sd(pts)
        out = pts.copy()
        far = sd > 0
        if not far.any():
            return out
        q = pts[far]
        step = 1e-7 * max(1.0, self.diameter())
        grad = np.empty_like(q)
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = step
            grad[:, k] = (self._sd(q + e) - self._sd(q - e)) / (2 * step)
        grad /= np.linalg.norm(grad, axis=1, keepdims=True)
        b = q - sd[far][:, None] * grad
        b -= self._sd(b)[:, None] * grad
        out[far] = b
        return out

    def has_interior_sphere(self) -> tuple[bool, float]:
        r = self.interior_sphere_radius()
        return (r > 0.0, r)

    def boundary_points(self, n: int = 256) -> np.ndarray:
        """Points on the boundary, obtained by casting ``n`` rays from the centroid."""
        c = self.centroid()
        if self.dim == 1:
            lo, hi = self.bounding_box()
            return np.array([[lo[0]], [hi[0]]])
        theta = 2.0 * np.pi * np.arange(n) / n
        dirs = np.column_stack([np.cos(theta), np.sin(theta)])
        t = self.ray_exit(np.broadcast_to(c, dirs.shape), dirs)
        return c + t[:, None] * dirs


class Interval(ConvexDomain):
    """The open interval (a, b)."""

    dim = 1

    def __init__(self, a: float, b: float):
        a, b = float(a), float(b)
        if not (math.isfinite(a) and math.isfinite(b)) or not b > a:
            raise ValueError(f"interval needs finite a < b, got ({a}, {b})")
        self.a, self.b = a, b

    def _sd(self, pts):
        x = pts[:, 0]
        return np.maximum(self.a - x, x - self.b)

    def _ray_exit(self, pts, dirs):
        x, v = pts[:, 0], dirs[:, 0]
        with np.errstate(divide="ignore"):
            return np.where(v > 0, (self.b - x) / np.where(v > 0, v, 1.0),
                            (self.a - x) / np.where(v < 0, v, -1.0))

    def _nearest(self, pts):
        x = pts[:, 0]
        return np.where(np.abs(x - self.a) <= np.abs(x - self.b), self.a, self.b)[:, None]

    def diameter(self):
        return self.b - self.a

    def bounding_box(self):
        return np.array([self.a]), np.array([self.b])

    def centroid(self):
        return np.array([0.5 * (self.a + self.b)])

    def interior_sphere_radius(self):
        return 0.5 * (self.b - self.a)

    def scaled(self, factor, about=None):
        c = 0.0 if about is None else float(np.ravel(about)[0])
        return Interval(c + factor * (self.a - c), c + factor * (self.b - c))

    def to_dict(self):
        return {"shape": "interval", "endpoints": [self.a, self.b]}

    def __repr__(self):
        return f"Interval({self.a!r}, {self.b!r})"


class Ball(ConvexDomain):
    """Open disc with given center and radius."""

    dim = 2

    def __init__(self, center, radius: float):
        self.center = np.asarray(center, dtype=float).reshape(2)
        self.radius = float(radius)
        if not self.radius > 0 or not np.all(np.isfinite(self.center)) or not math.isfinite(self.radius):
            raise ValueError("ball needs a finite center and a radius > 0")

    def _sd(self, pts):
        return np.hypot(*(pts - self.center).T) - self.radius

    def _ray_exit(self, pts, dirs):
        d = pts - self.center
        b = np.einsum("ij,ij->i", d, dirs)
        c = np.einsum("ij,ij->i", d, d) - self.radius**2
        return -b + np.sqrt(np.maximum(b * b - c, 0.0))

    def _nearest(self, pts):
        d = pts - self.center
        return self.center + self.radius * d / np.linalg.norm(d, axis=1, keepdims=True)

    def diameter(self):
        return 2.0 * self.radius

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def centroid(self):
        return self.center.copy()

    def interior_sphere_radius(self):
        return self.radius

    def scaled(self, factor, about=None):
        c = np.zeros(2) if about is None else np.asarray(about, dtype=float)
        return Ball(c + factor * (self.center - c), factor * self.radius)

    def to_dict(self):
        return {"shape": "ball", "center": self.center.tolist(), "radius": self.radius}

    def __repr__(self):
        return f"Ball({self.center.tolist()}, {self.radius!r})"


def _ellipse_distance(e0, e1, y0, y1):
    """Distance from first-quadrant points (y0, y1) to the ellipse with e0 >= e1.

    Eberly's bisection on the Lagrange parameter, vectorized.
    """
    y0 = np.asarray(y0, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    dist = np.empty_like(y0)

    # y1 > 0, y0 > 0: generic case
    gen = (y1 > 0) & (y0 > 0)
    if np.any(gen):
        z0 = y0[gen] / e0
        z1 = y1[gen] / e1
        g = z0 * z0 + z1 * z1 - 1.0
        r0 = (e0 / e1) ** 2
        n0 = r0 * z0
        s0 = z1 - 1.0
        s1 = np.where(g < 0, 0.0, np.hypot(n0, z1) - 1.0)
        s = 0.5 * (s0 + s1)
        for _ in range(200):
            s = 0.5 * (s0 + s1)
            gs = (n0 / (s + r0)) ** 2 + (z1 / (s + 1.0)) ** 2 - 1.0
            s0 = np.where(gs > 0, s, s0)
            s1 = np.where(gs < 0, s, s1)
        x0 = r0 * y0[gen] / (s + r0)
        x1 = y1[gen] / (s + 1.0)
        dist[gen] = np.where(g == 0, 0.0, np.hypot(x0 - y0[gen], x1 - y1[gen]))

    axis1 = (y1 > 0) & ~(y0 > 0)
    dist[axis1] = np.abs(y1[axis1] - e1)

    axis0 = ~(y1 > 0)
    if np.any(axis0):
        yy = y0[axis0]
        numer = e0 * yy
        denom = e0 * e0 - e1 * e1
        near = numer < denom
        xde = np.where(near, numer / denom if denom > 0 else 0.0, 1.0)
        x0 = e0 * xde
        x1 = e1 * np.sqrt(np.maximum(1.0 - xde * xde, 0.0))
        dist[axis0] = np.where(near, np.hypot(x0 - yy, x1), np.abs(yy - e0))
    return dist


class Ellipse(ConvexDomain):
    """Open axis-aligned ellipse with given center and semi-axes."""

    dim = 2

    def __init__(self, center, semi_axes):
        self.center = np.asarray(center, dtype=float).reshape(2)
        self.semi_axes = np.asarray(semi_axes, dtype=float).reshape(2)
        if not np.all(self.semi_axes > 0) or not np.all(np.isfinite(self.semi_axes)):
            raise ValueError("ellipse semi-axes must be finite and > 0")

    def _sd(self, pts):
        d = np.abs(pts - self.center)
        a, b = self.semi_axes
        if a >= b:
            dist = _ellipse_distance(a, b, d[:, 0], d[:, 1])
        else:
            dist = _ellipse_distance(b, a, d[:, 1], d[:, 0])
        inside = (d[:, 0] / a) ** 2 + (d[:, 1] / b) ** 2 < 1.0
        return np.where(inside, -dist, dist)

    def _ray_exit(self, pts, dirs):
        q = (pts - self.center) / self.semi_axes
        w = dirs / self.semi_axes
        aa = np.einsum("ij,ij->i", w, w)
        bb = np.einsum("ij,ij->i", q, w)
        cc = np.einsum("ij,ij->i", q, q) - 1.0
        return (-bb + np.sqrt(np.maximum(bb * bb - aa * cc, 0.0))) / aa

    def diameter(self):
        return 2.0 * float(self.semi_axes.max())

    def bounding_box(self):
        return self.center - self.semi_axes, self.center + self.semi_axes

    def centroid(self):
        return self.center.copy()

    def interior_sphere_radius(self):
        # minimal curvature radius b^2/a; rolling ball by Blaschke's theorem
        a, b = self.semi_axes.max(), self.semi_axes.min()
        return float(b * b / a)

    def scaled(self, factor, about=None):
        c = np.zeros(2) if about is None else np.asarray(about, dtype=float)
        return Ellipse(c + factor * (self.center - c), factor * self.semi_axes)

    def to_dict(self):
        return {"shape": "ellipse", "center": self.center.tolist(),
                "semi_axes": self.semi_axes.tolist()}

    def __repr__(self):
        return f"Ellipse({self.center.tolist()}, {self.semi_axes.tolist()})"


class Polygon(ConvexDomain):
    """Open convex polygon, vertices listed counterclockwise."""

    dim = 2

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError("polygon needs at least three 2D vertices")
        if not np.all(np.isfinite(v)):
            raise ValueError("polygon vertices must be finite")
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        if np.any(cross <= 0):
            raise ValueError("polygon must be strictly convex and counterclockwise")
        area = 0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
        if not area > 0:
            raise ValueError("polygon has zero area")
        self.vertices = v
        self.area = float(area)
        lengths = np.hypot(e[:, 0], e[:, 1])
        self._edges = e
        self._lengths = lengths
        # outward normals and offsets: n . x <= c inside
        self._normals = np.column_stack([e[:, 1], -e[:, 0]]) / lengths[:, None]
        self._offsets = np.einsum("ij,ij->i", self._normals, v)

    def _sd(self, pts):
        s = pts @ self._normals.T - self._offsets  # (k, n) signed distances to edge lines
        inside = np.all(s < 0, axis=1)
        # exterior: distance to nearest edge segment
        rel = pts[:, None, :] - self.vertices[None, :, :]
        t = np.clip(np.einsum("kij,ij->ki", rel, self._edges) / self._lengths**2, 0.0, 1.0)
        closest = rel - t[..., None] * self._edges[None]
        seg = np.sqrt(np.einsum("kij,kij->ki", closest, closest)).min(axis=1)
        return np.where(inside, s.max(axis=1), seg)

    def _ray_exit(self, pts, dirs):
        nv = dirs @ self._normals.T
        gap = self._offsets[None, :] - pts @ self._normals.T
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(nv > 1e-300, gap / nv, np.inf)
        return t.min(axis=1)

    def diameter(self):
        d = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((d**2).sum(-1)).max())

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def centroid(self):
        v, w = self.vertices, np.roll(self.vertices, -1, axis=0)
        cr = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        return np.array([((v[:, 0] + w[:, 0]) * cr).sum(), ((v[:, 1] + w[:, 1]) * cr).sum()]) / (6 * self.area)

    def interior_angles(self) -> np.ndarray:
        e_in = -np.roll(self._edges, 1, axis=0)
        e_out = self._edges
        cosang = np.einsum("ij,ij->i", e_in, e_out) / (np.hypot(*e_in.T) * np.hypot(*e_out.T))
        return np.arccos(np.clip(cosang, -1.0, 1.0))

    def interior_sphere_radius(self):
        if np.any(self.interior_angles() < np.pi - ANGLE_TOL):
            return 0.0
        return math.inf  # unreachable for a strictly convex polygon

    def scaled(self, factor, about=None):
        c = np.zeros(2) if about is None else np.asarray(about, dtype=float)
        return Polygon(c + factor * (self.vertices - c))

    def to_dict(self):
        return {"shape": "polygon", "vertices": self.vertices.tolist()}

    def __repr__(self):
        return f"Polygon({self.vertices.tolist()})"


class ParallelBody(ConvexDomain):
    """``{x : dist(x, base) < eps}`` kept exactly as base plus rounding radius."""

    def __init__(self, base: ConvexDomain, eps: float):
        if not eps > 0:
            raise ValueError(f"parallel body needs eps > 0, got {eps}")
        self.base = base
        self.eps = float(eps)
        self.dim = base.dim

    def _sd(self, pts):
        return self.base._sd(pts) - self.eps

    def _ray_exit(self, pts, dirs):
        # signed distance is convex along a ray, so the outward crossing is unique
        lo = np.zeros(len(pts))
        hi = np.full(len(pts), self.diameter() + 1.0)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            outside = self._sd(pts + mid[:, None] * dirs) >= 0
            hi = np.where(outside, mid, hi)
            lo = np.where(outside, lo, mid)
        return 0.5 * (lo + hi)

    def diameter(self):
        return self.base.diameter() + 2.0 * self.eps

    def bounding_box(self):
        lo, hi = self.base.bounding_box()
        return lo - self.eps, hi + self.eps

    def centroid(self):
        return self.base.centroid()

    def interior_sphere_radius(self):
        return self.base.interior_sphere_radius() + self.eps

    def scaled(self, factor, about=None):
        return ParallelBody(self.base.scaled(factor, about), factor * self.eps)

    def to_polygon(self, arc_points: int = 16) -> Polygon:
        """Refined polygon approximation (2D polygon bases only)."""
        if not isinstance(self.base, Polygon):
            raise TypeError("to_polygon needs a polygon base")
        v = self.base.vertices
        n_prev = np.roll(self.base._normals, 1, axis=0)
        n_next = self.base._normals
        out = []
        for i in range(len(v)):
            a0 = math.atan2(n_prev[i, 1], n_prev[i, 0])
            a1 = math.atan2(n_next[i, 1], n_next[i, 0])
            if a1 < a0:
                a1 += 2 * math.pi
            for a in np.linspace(a0, a1, arc_points):
                out.append(v[i] + self.eps * np.array([math.cos(a), math.sin(a)]))
        pts = np.array(out)
        keep = np.ones(len(pts), bool)
        keep[1:] = np.hypot(*np.diff(pts, axis=0).T) > 1e-12
        return Polygon(pts[keep])

    def to_dict(self):
        d = self.base.to_dict()
        d["offset"] = self.eps + d.get("offset", 0.0)
        return d

    def __repr__(self):
        return f"ParallelBody({self.base!r}, {self.eps!r})"


def outer_parallel_body(d: ConvexDomain, eps: float) -> ConvexDomain:
    """Outer parallel body; balls and intervals stay in closed form."""
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    if isinstance(d, Ball):
        return Ball(d.center, d.radius + eps)
    if isinstance(d, Interval):
        return Interval(d.a - eps, d.b + eps)
    if isinstance(d, ParallelBody):
        return ParallelBody(d.base, d.eps + eps)
    return ParallelBody(d, eps)


# ---------------------------------------------------------------------------
# domain description files: flat ``key = value`` text


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").replace(";", " ").split()]


def parse_domain(text: str) -> ConvexDomain:
    """Build a domain from ``key = value`` lines.

    Keys: ``shape`` (polygon|ball|ellipse|interval), ``vertices`` (``x y; x y; ...``),
    ``center``, ``radius``, ``semi_axes``, ``endpoints`` and optional ``offset``.
    """
    kv = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        kv[key] = val
    shape = kv.get("shape")
    try:
        if shape == "interval":
            a, b = _floats(kv["endpoints"])
            dom = Interval(a, b)
        elif shape == "ball":
            dom = Ball(_floats(kv["center"]), float(kv["radius"]))
        elif shape == "ellipse":
            dom = Ellipse(_floats(kv["center"]), _floats(kv["semi_axes"]))
        elif shape == "polygon":
            rows = [r for r in kv["vertices"].split(";") if r.strip()]
            dom = Polygon([_floats(r) for r in rows])
        else:
            raise ValueError(f"unknown shape {shape!r}")
    except KeyError as exc:
        raise ValueError(f"domain of shape {shape!r} is missing key {exc.args[0]!r}") from None
    if "offset" in kv and float(kv["offset"]) > 0:
        dom = outer_parallel_body(dom, float(kv["offset"]))
    return dom


def load_domain(path) -> ConvexDomain:
    return parse_domain(Path(path).read_text())


def dump_domain(d: ConvexDomain) -> str:
    lines = []
    for key, val in d.to_dict().items():
        if key == "vertices":
            val = "; ".join(f"{x!r} {y!r}" for x, y in val)
        elif isinstance(val, list):
            val = " ".join(repr(float(x)) for x in val)
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"
