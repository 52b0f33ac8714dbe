"""The square-root transform, the operator F and convex envelopes of grid functions.

Under ``w = -sqrt(u)`` positive subsolutions of ``-Delta_inf^N u = 1`` turn
into restricted supersolutions of

    F(w, p, A) = -<A p, p> - (|p|^4 + |p|^2 / 2) / w = 0.

For a solution on a convex domain the transformed field is convex, so it
coincides with its convex envelope, and the envelope's Caratheodory
witnesses never touch the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .discretization import ScalarField
from .geometry import ConvexDomain
from .solver import QuadraticProbe

__all__ = [
    "NegativeInput",
    "TransformedField",
    "EnvelopeWitness",
    "transform",
    "inverse_transform",
    "evaluate_F",
    "restricted_super_probe",
    "restricted_sub_probe",
    "convex_envelope",
    "witness_interiority",
    "fit_quadratic",
    "transform_consistency",
    "format_witnesses",
    "write_witnesses",
]


class NegativeInput(ValueError):
    """The field to transform has negative values."""

    def __init__(self, nodes):
        self.nodes = [tuple(int(i) for i in n) for n in nodes]
        shown = ", ".join(map(str, self.nodes[:10]))
        more = "" if len(self.nodes) <= 10 else f" (+{len(self.nodes) - 10} more)"
        super().__init__(f"negative values at nodes (iy, ix): {shown}{more}")


@dataclass(eq=False)
class TransformedField:
    w: ScalarField
    source: ScalarField


def transform(u: ScalarField) -> TransformedField:
    """``w = -sqrt(u)`` nodewise (including the collar)."""
    bad = np.argwhere(u.values < 0)
    if len(bad):
        raise NegativeInput(bad)
    w = ScalarField(u.grid, -np.sqrt(u.values), u.dirichlet_zero)
    return TransformedField(w, u)


def inverse_transform(w: ScalarField | TransformedField) -> ScalarField:
    if isinstance(w, TransformedField):
        w = w.w
    return ScalarField(w.grid, w.values**2, w.dirichlet_zero)


def evaluate_F(w: float, p, A) -> float:
    """``-<A p, p> - (|p|^4 + |p|^2/2) / w`` for ``w < 0``."""
    if not w < 0:
        raise ValueError(f"F is defined for w < 0 only, got {w}")
    p = np.atleast_1d(np.asarray(p, dtype=float))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n2 = float(p @ p)
    return float(-(p @ A @ p) - (n2 * n2 + 0.5 * n2) / w)


def _is_critical(p, p_tol):
    return float(np.linalg.norm(p)) <= p_tol


def restricted_super_probe(w_val: float, probe: QuadraticProbe, atol: float = 0.0, p_tol: float = 0.0) -> bool:
    """Algebraic conditions for a probe touching ``w`` from below.

    ``F >= -atol`` and, at critical points, ``lambda_min(A) <= -1/(2w) + atol``.
    """
    if evaluate_F(w_val, probe.p, probe.A) < -atol:
        return False
    if _is_critical(probe.p, p_tol):
        return float(np.linalg.eigvalsh(probe.A)[0]) <= -0.5 / w_val + atol
    return True


def restricted_sub_probe(w_val: float, probe: QuadraticProbe, atol: float = 0.0, p_tol: float = 0.0) -> bool:
    """Mirror of :func:`restricted_super_probe` for probes touching from above."""
    if evaluate_F(w_val, probe.p, probe.A) > atol:
        return False
    if _is_critical(probe.p, p_tol):
        return float(np.linalg.eigvalsh(probe.A)[-1]) >= -0.5 / w_val - atol
    return True


# ---------------------------------------------------------------------------
# convex envelope


@dataclass(eq=False)
class EnvelopeWitness:
    """Caratheodory representation of the envelope at each inside node.

    ``points[n]`` holds flat grid indices of the ``k <= dim+1`` witness nodes of
    inside node ``nodes[n]`` and ``weights[n]`` the matching convex weights.
    ``positions[n]`` gives the witness coordinates; a collar node of a field
    with zero boundary data sits at its nearest boundary point.
    """

    grid: object
    nodes: np.ndarray
    points: list
    weights: list
    positions: list | None = None

    def k(self) -> np.ndarray:
        return np.array([len(p) for p in self.points])


def _cloud(w: ScalarField):
    """Inside and collar nodes with positions and values.

    For fields with zero boundary data the collar nodes stand for the
    boundary: they are moved to their nearest boundary point, where the
    datum 0 is attained.
    """
    g = w.grid
    collar = g.collar_mask().ravel()
    use = g.inside_mask.ravel() | collar
    idx = np.flatnonzero(use)
    xy = g.coords().reshape(-1, len(g.origin))[idx]
    z = w.values.ravel()[idx].copy()
    if w.dirichlet_zero and g.domain is not None:
        c = collar[idx]
        xy[c] = g.domain.nearest_boundary_point(xy[c])
        z[c] = 0.0
    return idx, xy, z


def _positions(idx, xy, points):
    return [xy[np.searchsorted(idx, p)] for p in points]


def _lower_hull_1d(x, z):
    """Indices (into sorted order) of the lower convex chain."""
    hull = []
    for i in range(len(x)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b unless it lies strictly below the chord a-i
            if (z[b] - z[a]) * (x[i] - x[a]) >= (z[i] - z[a]) * (x[b] - x[a]):
                hull.pop()
            else:
                break
        hull.append(i)
    return np.array(hull)


def _envelope_1d(w: ScalarField):
    g = w.grid
    idx, xy, z = _cloud(w)
    order = np.argsort(xy[:, 0], kind="stable")
    idx, xy, z = idx[order], xy[order], z[order]
    x = xy[:, 0]
    chain = _lower_hull_1d(x, z)
    env = np.interp(x, x[chain], z[chain])
    nodes = g.inside_indices()
    pos = np.searchsorted(idx, nodes)
    on_chain = np.zeros(len(x), bool)
    on_chain[chain] = True
    points, weights = [], []
    for p in pos:
        if on_chain[p]:
            points.append(np.array([idx[p]]))
            weights.append(np.array([1.0]))
            continue
        j = np.searchsorted(x[chain], x[p])
        a, b = chain[j - 1], chain[j]
        lam = (x[b] - x[p]) / (x[b] - x[a])
        points.append(np.array([idx[a], idx[b]]))
        weights.append(np.array([lam, 1.0 - lam]))
    out = w.values.ravel().copy()
    out[idx] = env
    return out, EnvelopeWitness(g, nodes, points, weights, _positions(idx, xy[:, None] if xy.ndim == 1 else xy, points))


def _envelope_2d(w: ScalarField):
    g = w.grid
    idx, xy, z = _cloud(w)
    nodes = g.inside_indices()
    scale = max(float(np.ptp(z)), 1e-300)
    lifted = np.column_stack([(xy - xy.mean(0)) / g.h, (z - z.mean()) / scale])
    try:
        hull = ConvexHull(lifted)
    except QhullError:
        # affinely degenerate cloud: the function is its own envelope
        pts = [np.array([n]) for n in nodes]
        return w.values.ravel().copy(), EnvelopeWitness(
            g, nodes, pts, [np.array([1.0]) for _ in nodes], _positions(idx, xy, pts))
    lower = hull.equations[:, 2] < -1e-12
    tris = hull.simplices[lower]
    is_vertex = np.zeros(len(idx), bool)
    is_vertex[np.unique(tris)] = True

    # envelope value: the maximum of the supporting affine pieces
    A = xy[tris]  # (T, 3, 2)
    Z = z[tris]
    M = np.concatenate([A, np.ones((len(tris), 3, 1))], axis=2)
    det = np.linalg.det(M)
    good = np.abs(det) > 1e-12 * g.h**2
    tris, A, Z, M = tris[good], A[good], Z[good], M[good]
    coef = np.linalg.solve(M, Z[..., None])[..., 0]  # z = a x + b y + c

    env_cloud = z.copy()
    pos = np.searchsorted(idx, nodes)
    points, weights = [None] * len(nodes), [None] * len(nodes)
    todo = []
    for n, p in enumerate(pos):
        if is_vertex[p]:
            points[n], weights[n] = np.array([idx[p]]), np.array([1.0])
        else:
            todo.append(n)
    if todo:
        tmin, tmax = A.min(axis=1), A.max(axis=1)
        tol = 1e-9 * g.h
        for n in todo:
            p = pos[n]
            x = xy[p]
            cand = np.flatnonzero(np.all((tmin - tol <= x) & (x <= tmax + tol), axis=1))
            # barycentric coordinates in each candidate triangle
            T = A[cand]
            v0, v1 = T[:, 1] - T[:, 0], T[:, 2] - T[:, 0]
            r = x - T[:, 0]
            den = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
            l1 = (r[:, 0] * v1[:, 1] - r[:, 1] * v1[:, 0]) / den
            l2 = (v0[:, 0] * r[:, 1] - v0[:, 1] * r[:, 0]) / den
            lam = np.column_stack([1 - l1 - l2, l1, l2])
            inside = np.all(lam >= -1e-10, axis=1)
            cand, lam = cand[inside], lam[inside]
            best = None
            for c, l in zip(cand, lam):
                keep = l > 1e-12
                verts = idx[tris[c][keep]]
                o = np.argsort(verts)
                key = (int(keep.sum()), tuple(verts[o]))
                if best is None or key < best[0]:
                    best = (key, verts[o], l[keep][o] / l[keep].sum())
            if best is None:  # numerically outside every facet; keep the node itself
                points[n], weights[n] = np.array([idx[p]]), np.array([1.0])
                continue
            points[n], weights[n] = best[1], best[2]
            env_cloud[p] = float(weights[n] @ z[np.searchsorted(idx, points[n])])
    out = w.values.ravel().copy()
    out[idx] = np.minimum(env_cloud, z)
    return out, EnvelopeWitness(g, nodes, points, weights, _positions(idx, xy, points))


def convex_envelope(w: ScalarField | TransformedField):
    """Largest convex minorant on inside and collar nodes, with witnesses.

    The lifted cloud ``{(x, w(x))}`` over inside and collar nodes is hulled
    from below (monotone chain in 1D, qhull in 2D); each inside node gets
    the vertices and barycentric weights of the lower facet containing it.
    """
    if isinstance(w, TransformedField):
        w = w.w
    if w.grid.dim == 1:
        vals, wit = _envelope_1d(w)
    else:
        vals, wit = _envelope_2d(w)
    return ScalarField(w.grid, vals, w.dirichlet_zero), wit


def witness_interiority(wit: EnvelopeWitness, d: ConvexDomain | None = None) -> np.ndarray:
    """Per inside node: are all witness points inside the open domain?

    A witness counts as interior when it is an inside grid node; with ``d``
    given, its signed distance must also be negative.
    """
    g = wit.grid
    inside = g.inside_mask.ravel()
    coords = g.coords().reshape(-1, len(g.origin))
    verdict = np.empty(len(wit.nodes), bool)
    for n, pts in enumerate(wit.points):
        ok = bool(np.all(inside[pts]))
        if ok and d is not None:
            ok = bool(np.all(d.signed_distance(coords[pts]) < 0))
        verdict[n] = ok
    return verdict


def format_witnesses(wit: EnvelopeWitness) -> str:
    """Sidecar text: per inside node ``ix iy k`` then ``k`` triplets ``ix iy lambda``."""
    nx = wit.grid.nx
    lines = []
    for node, pts, lam in zip(wit.nodes, wit.points, wit.weights):
        iy, ix = divmod(int(node), nx)
        trip = " ".join(f"{p % nx} {p // nx} {l:.17g}" for p, l in zip(pts, lam))
        lines.append(f"{ix} {iy} {len(pts)} {trip}")
    return "\n".join(lines) + "\n"


def write_witnesses(path, wit: EnvelopeWitness) -> None:
    Path(path).write_text(format_witnesses(wit))


# ---------------------------------------------------------------------------
# local quadratic fits


def _stride(u: ScalarField, stride: int | None) -> int:
    if stride is not None:
        if stride < 1:
            raise ValueError("stride must be >= 1")
        return int(stride)
    return max(1, int(round(u.meta.get("eps", u.grid.h) / u.grid.h)))


def fit_quadratic(w: ScalarField, node, stride: int = 1) -> QuadraticProbe:
    """Least-squares quadratic on the 3x3 (1D: 3-point) neighbourhood of ``node``.

    Neighbours sit ``stride`` nodes apart.
    """
    g = w.grid
    iy, ix = node
    s = int(stride)
    if g.dim == 1:
        offs = np.array([-s, 0, s])
        vals = w.values[0, ix + offs]
        d = offs * g.h
        V = np.column_stack([np.ones(3), d, 0.5 * d * d])
        c = np.linalg.solve(V, vals)
        return QuadraticProbe(g.point(0, ix), c[0], [c[1]], [[c[2]]])
    oy, ox = np.mgrid[-1:2, -1:2] * s
    vals = w.values[iy + oy, ix + ox].ravel()
    dx, dy = ox.ravel() * g.h, oy.ravel() * g.h
    V = np.column_stack([np.ones(9), dx, dy, 0.5 * dx * dx, dx * dy, 0.5 * dy * dy])
    c, *_ = np.linalg.lstsq(V, vals, rcond=None)
    A = np.array([[c[3], c[4]], [c[4], c[5]]])
    return QuadraticProbe(g.point(iy, ix), c[0], c[1:3], A)


def transform_consistency(u: ScalarField, min_u: float | None = None, stride: int | None = None):
    """Fit probes to ``w = -sqrt(u)`` and evaluate F at every admissible node.

    Nodes need a full inside neighbourhood and ``u >= min_u`` (default
    ``10 h^2``). The fit stencil spacing defaults to the ring radius of a
    solved field, the finest scale the scheme resolves. Returns
    ``(nodes, F_values, probes)``.
    """
    g = u.grid
    s = _stride(u, stride)
    tf = transform(u)
    thresh = 10 * g.h**2 if min_u is None else min_u
    mask = g.inside_mask.copy()
    if g.dim == 1:
        inner = np.zeros_like(mask)
        inner[0, s:-s] = g.inside_mask[0, :-2 * s] & g.inside_mask[0, 2 * s:]
        mask &= inner
    else:
        pad = np.pad(g.inside_mask, s)
        for dy in (-s, 0, s):
            for dx in (-s, 0, s):
                mask &= pad[s + dy:s + dy + g.ny, s + dx:s + dx + g.nx]
    mask &= u.values >= thresh
    nodes = [tuple(int(i) for i in n) for n in np.argwhere(mask)]
    probes = [fit_quadratic(tf.w, n, s) for n in nodes]
    Fv = np.array([evaluate_F(tf.w.values[n], pr.p, pr.A) for n, pr in zip(nodes, probes)])
    return nodes, Fv, probes
