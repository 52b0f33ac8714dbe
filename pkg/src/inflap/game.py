"""Monte Carlo eps-tug-of-war with running payoff.

A fair coin decides who moves; the winner pushes the token to the ring point
(radius ``eps``, clipped at the boundary) that maximizes (heads) or
minimizes (tails) a guide field. Each move earns ``eps^2/2 * f(x)`` and the
game ends on the boundary with payoff 0.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .discretization import ScalarField, build_grid, build_ring, ring_directions
from .geometry import ConvexDomain
from .solver import SourceTerm

__all__ = ["GameConfig", "GameResult", "NonExit", "play", "chain_value_1d", "trajectory_rng"]

# tokens closer than this to the boundary count as exited
EXIT_TOL = 1e-12
BLOCK = 256


class NonExit(UserWarning):
    """Some trajectories hit ``max_steps`` before reaching the boundary."""


@dataclass(frozen=True)
class GameConfig:
    eps: float
    trials: int = 10_000
    seed: int = 0
    max_steps: int | None = None
    m: int = 16
    strategy: str = "greedy_on_field"
    workers: int = 1
    chunk: int = 8192

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be > 0")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.strategy not in ("greedy_on_field", "radial"):
            raise ValueError(f"unknown strategy {self.strategy!r}")


@dataclass(frozen=True)
class GameResult:
    mean_payoff: float
    std_error: float
    exit_rate: float
    trials: int
    mean_steps: float

    def to_text(self) -> str:
        return (f"mean: {self.mean_payoff:.17g}\n"
                f"std_error: {self.std_error:.17g}\n"
                f"exit_rate: {self.exit_rate:.17g}\n"
                f"trials: {self.trials}\n"
                f"mean_steps: {self.mean_steps:.17g}\n")


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for trajectory ``index``; depends on nothing else."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, index])))


def _radial_guide(d: ConvexDomain):
    c = d.centroid()
    return lambda pts: -np.sum((pts - c) ** 2, axis=-1)


def _draws(gens, idx, k, buf):
    if k == 0:
        for i in idx:
            buf[i] = gens[i].random((BLOCK, 2))
    return buf[idx, k]


def _play_lattice(stencil, fnode, samples, cfg, max_steps, start_row, first, count):
    """Greedy game on the guide lattice; ring points are rounded to a bilinear
    corner with probability equal to its interpolation weight."""
    m = stencil.m
    mat = stencil.matrix
    counts = np.diff(mat.indptr)
    width = max(int(counts.max()), 1)
    corner = np.full((mat.shape[0], width), -1, dtype=np.int64)
    w = np.zeros((mat.shape[0], width))
    for j in range(width):
        has = counts > j
        at = mat.indptr[:-1][has] + j
        corner[has, j] = mat.indices[at]
        w[has, j] = mat.data[at]
    tot = w.sum(axis=1, keepdims=True)
    cumw = np.cumsum(w / np.where(tot > 0, tot, 1.0), axis=1)
    row_of = np.full(stencil.grid.nx * stencil.grid.ny, -1, dtype=np.int64)
    row_of[stencil.nodes] = np.arange(len(stencil.nodes))

    row = np.full(count, start_row, dtype=np.int64)
    payoff = np.zeros(count)
    steps = np.zeros(count, dtype=np.int64)
    alive = np.ones(count, bool)
    gens = [trajectory_rng(cfg.seed, first + i) for i in range(count)]
    buf = np.empty((count, BLOCK, 2))
    step = 0
    while step < max_steps and alive.any():
        idx = np.flatnonzero(alive)
        r = row[idx]
        u = _draws(gens, idx, step % BLOCK, buf)
        payoff[idx] += 0.5 * cfg.eps**2 * fnode[r]
        s = samples[r]
        choice = np.where(u[:, 0] < 0.5, s.argmax(axis=1), s.argmin(axis=1))
        flat = r * m + choice
        exits = stencil.boundary.ravel()[flat]
        j = (u[:, 1:2] >= cumw[flat]).sum(axis=1)
        nxt = corner[flat, np.minimum(j, width - 1)]
        nrow = np.where(exits | (nxt < 0), -1, row_of[np.maximum(nxt, 0)])
        done = nrow < 0
        row[idx] = np.where(done, 0, nrow)
        steps[idx] += 1
        alive[idx[done]] = False
        step += 1
    return payoff, ~alive, steps


def _play_continuum(d, start, src, cfg, guide_eval, dirs, max_steps, first, count):
    dim = d.dim
    pos = np.tile(start, (count, 1))
    payoff = np.zeros(count)
    steps = np.zeros(count, dtype=np.int64)
    alive = np.ones(count, bool)
    gens = [trajectory_rng(cfg.seed, first + i) for i in range(count)]
    buf = np.empty((count, BLOCK, 2))
    m = len(dirs)
    step = 0
    while step < max_steps and alive.any():
        idx = np.flatnonzero(alive)
        u = _draws(gens, idx, step % BLOCK, buf)
        x = pos[idx]
        payoff[idx] += 0.5 * cfg.eps**2 * np.asarray(src(x if dim == 2 else x[:, 0]), dtype=float)
        P = np.repeat(x, m, axis=0)
        V = np.tile(dirs, (len(idx), 1))
        t = np.minimum(d.ray_exit(P, V), cfg.eps)
        cand = P + t[:, None] * V
        gv = guide_eval(cand).reshape(len(idx), m)
        exits = (t < cfg.eps).reshape(len(idx), m)
        # boundary candidates carry the datum 0
        gv = np.where(exits, 0.0, gv)
        choice = np.where(u[:, 0] < 0.5, gv.argmax(axis=1), gv.argmin(axis=1))
        rows = np.arange(len(idx)) * m + choice
        pos[idx] = cand[rows]
        steps[idx] += 1
        done = exits.ravel()[rows] | (-d.signed_distance(cand[rows]) <= EXIT_TOL)
        alive[idx[done]] = False
        step += 1
    return payoff, ~alive, steps


def play(d: ConvexDomain, start, f, cfg: GameConfig, guide: ScalarField | None = None) -> GameResult:
    """Average payoff of ``cfg.trials`` independent games started at ``start``.

    With ``greedy_on_field`` the token lives on the guide grid (``start`` must
    be a node) and follows exactly the transition law of the scheme, so the
    payoff mean estimates the discrete solution at ``start``.
    """
    start = np.atleast_1d(np.asarray(start, dtype=float)).reshape(d.dim)
    src = SourceTerm(f)
    if -d.signed_distance(start) <= EXIT_TOL:
        return GameResult(0.0, 0.0, 1.0, cfg.trials, 0.0)
    max_steps = cfg.max_steps or int(np.ceil(50 * (d.diameter() / cfg.eps) ** 2))
    bounds = [(s, min(cfg.chunk, cfg.trials - s)) for s in range(0, cfg.trials, cfg.chunk)]
    if cfg.strategy == "greedy_on_field":
        if guide is None:
            raise ValueError("greedy_on_field needs a guide field")
        g = guide.grid
        if g.domain is None:
            g = build_grid(d, g.h, origin=g.origin, shape=g.shape)
            guide = ScalarField(g, guide.values, guide.dirichlet_zero)
        stencil = build_ring(g, cfg.eps, cfg.m)
        iy, ix = g.index_of(start)
        if not np.allclose(g.point(iy, ix), start, atol=1e-9 * g.h):
            raise ValueError("start must be a node of the guide grid")
        if not g.inside_mask[iy, ix]:
            return GameResult(0.0, 0.0, 1.0, cfg.trials, 0.0)
        fnode = src.sample(g).ravel()[stencil.nodes]
        samples = stencil.samples(guide.values)
        args = (stencil, fnode, samples, cfg, max_steps, stencil.node_row((iy, ix)))
        runner = _play_lattice
    else:
        dirs = ring_directions(cfg.m, d.dim)
        args = (d, start, src, cfg, _radial_guide(d), dirs, max_steps)
        runner = _play_continuum
    if cfg.workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            parts = list(ex.map(lambda b: runner(*args, *b), bounds))
    else:
        parts = [runner(*args, *b) for b in bounds]
    payoff = np.concatenate([p[0] for p in parts])
    exited = np.concatenate([p[1] for p in parts])
    steps = np.concatenate([p[2] for p in parts])
    n = cfg.trials
    std = float(payoff.std(ddof=1)) if n > 1 else 0.0
    res = GameResult(float(payoff.mean()), float(std / np.sqrt(n)), float(exited.mean()), n, float(steps.mean()))
    if res.exit_rate < 1.0:
        warnings.warn(f"{n - int(exited.sum())} of {n} trajectories truncated at {max_steps} steps",
                      NonExit, stacklevel=2)
    return res


def chain_value_1d(R: float, eps: float, f: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Exact value of the +-eps walk on (-R, R) by a direct tridiagonal solve.

    Returns lattice points ``x_k = -R + k*eps`` (interior only) and values.
    """
    ratio = R / eps
    n_half = int(round(ratio))
    if abs(ratio - n_half) > 1e-9 * max(1.0, ratio) or n_half < 1:
        raise ValueError(f"R/eps must be a positive integer, got {ratio}")
    if n_half > 10_000:
        raise ValueError("R/eps must not exceed 1e4")
    n = 2 * n_half - 1
    x = -R + eps * np.arange(1, n + 1)
    # u_k - (u_{k-1} + u_{k+1})/2 = eps^2 f / 2
    ab = np.zeros((3, n))
    ab[0, 1:] = -0.5
    ab[1, :] = 1.0
    ab[2, :-1] = -0.5
    rhs = np.full(n, 0.5 * eps**2 * float(f))
    return x, scipy.linalg.solve_banded((1, 1), ab, rhs)
