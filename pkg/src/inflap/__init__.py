"""Solver and regularity checks for the inhomogeneous normalized infinity Laplacian."""

from .geometry import Ball, ConvexDomain, Ellipse, Interval, ParallelBody, Polygon, outer_parallel_body
from .discretization import Grid, RingStencil, ScalarField, build_grid, build_ring, ring_extrema
from .solver import (
    NoConvergence,
    QuadraticProbe,
    SchemeParams,
    SourceTerm,
    dpp_update,
    normalized_inf_laplacian,
    one_dim_family,
    residual,
    solve,
)

__version__ = "0.1.0"
