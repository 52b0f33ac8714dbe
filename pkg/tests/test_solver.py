import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inflap.discretization import ScalarField, build_grid, build_ring
from inflap.analysis import concavity_defect
from inflap.geometry import Ball, Ellipse, Interval
from inflap.solver import (
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

from .conftest import CENTERED_SQUARE, PENTAGON, UNIT_BALL, UNIT_INTERVAL, newton


def exact_1d(x):
    return 0.5 * (1 - x**2)


def test_dpp_update_examples():
    g = build_grid(UNIT_INTERVAL, 0.05)
    ring = build_ring(g, 0.1)
    zero = ScalarField(g, np.zeros(g.shape))
    assert dpp_update(zero, ring, 1.0, g.index_of([0.0])) == pytest.approx(0.005)
    q = ScalarField.from_function(g, exact_1d)
    for x in (-0.5, 0.0, 0.3):
        node = g.index_of([x])
        assert dpp_update(q, ring, 1.0, node) == pytest.approx(q.values[node], abs=1e-15)
    hi, lo = max(q.values[g.index_of([0.2])], q.values[g.index_of([0.0])]), \
        min(q.values[g.index_of([0.2])], q.values[g.index_of([0.0])])
    assert dpp_update(q, ring, 0.0, g.index_of([0.1])) == pytest.approx(0.5 * (hi + lo))


def test_residual_examples():
    g = build_grid(UNIT_INTERVAL, 1 / 64)
    ring = build_ring(g, 1 / 16)
    q = ScalarField.from_function(g, exact_1d, dirichlet_zero=True)
    # ring fully interior away from the boundary
    far = np.abs(g.coords()[..., 0]) < 1 - 1 / 16
    assert np.max(residual(q, ring, 1.0).values[far]) < 1e-15
    ur = one_dim_family(0.5, grid=g)
    assert residual(ur, ring, 1.0).values[g.index_of([0.0])] == pytest.approx(ring.eps**2 / 2)


def test_one_dim_family_examples():
    u0 = one_dim_family(0.0)
    assert u0.at([0.0]) == pytest.approx(0.5)
    assert np.allclose(one_dim_family(1.0).values, 0.0)
    u = one_dim_family(0.5, h=1 / 64)
    assert u.at([0.0]) == pytest.approx(0.375)
    assert u.at([0.5]) == pytest.approx(0.375)
    assert u.at([0.75]) == pytest.approx(0.21875)
    with pytest.raises(ValueError):
        one_dim_family(1.5)


def test_plateau_family_is_not_a_dpp_solution():
    # u_r with r > 0 solves the gradient-squared problem but not this one
    g = build_grid(UNIT_INTERVAL, 1 / 64)
    ring = build_ring(g, 1 / 16)
    for r in (0.25, 0.5, 0.75):
        res = residual(one_dim_family(r, grid=g), ring, 1.0)
        assert res.values.max() >= ring.eps**2 / 2 - 1e-15


def test_solve_1d(u_interval):
    assert abs(u_interval.at([0.0]) - 0.5) <= 0.02
    x = u_interval.grid.coords()[..., 0]
    err = np.abs(u_interval.values - exact_1d(x))[u_interval.grid.inside_mask]
    assert err.max() <= 0.02
    assert u_interval.meta["residual"] <= u_interval.meta["tol"]


def test_solve_ball(u_ball):
    assert abs(u_ball.at([0.0, 0.0]) - 0.5) <= 0.05


def test_solve_zero_source():
    for d in (UNIT_INTERVAL, PENTAGON):
        u = solve(d, 0.0, SchemeParams(eps=0.1))
        assert np.all(u.values == 0.0)
        assert u.meta["iterations"] == 0


def test_sweeps_agree():
    d = Ball([0, 0], 1.0)
    fields = [solve(d, 1.0, SchemeParams(eps=0.2, sweep=s)) for s in ("jacobi", "gauss_seidel", "newton")]
    tol = 1e-9 * 4
    for f in fields[1:]:
        # all are within tol of the same fixed point up to the contraction factor
        assert np.max(np.abs(f.values - fields[0].values)) < 1e3 * tol


def test_jacobi_is_deterministic():
    a = solve(PENTAGON, 1.0, SchemeParams(eps=0.15, sweep="jacobi"))
    b = solve(PENTAGON, 1.0, SchemeParams(eps=0.15, sweep="jacobi"))
    assert np.array_equal(a.values, b.values)


def test_no_convergence():
    with pytest.raises(NoConvergence) as info:
        solve(UNIT_BALL, 1.0, SchemeParams(eps=0.1, max_iter=3, sweep="jacobi"))
    assert info.value.iterations == 3
    assert info.value.residual > 0


def test_scheme_param_validation():
    with pytest.raises(ValueError):
        SchemeParams(eps=0)
    with pytest.raises(ValueError):
        SchemeParams(eps=0.1, tol=-1)
    with pytest.raises(ValueError):
        SchemeParams(eps=0.1, sweep="sor")
    with pytest.raises(ValueError):
        solve(UNIT_BALL, -1.0, SchemeParams(eps=0.2))


def test_iterates_nondecreasing():
    hist = []
    g = build_grid(PENTAGON, 0.05)
    ring = build_ring(g, 0.15)
    prev = np.zeros(g.nx * g.ny)
    for k in (1, 2, 5, 10, 40):
        try:
            solve(PENTAGON, 1.0, SchemeParams(eps=0.15, max_iter=k, sweep="jacobi"), grid=g, stencil=ring)
        except NoConvergence as exc:
            cur = exc.field.values.ravel()
            assert np.all(cur >= prev - 1e-15)
            prev = cur
            hist.append(k)
    assert hist


def test_positivity(u_square):
    assert np.all(u_square.inside_values() > 0)


def test_comparison_f1_f2():
    p = newton(3 / 32, 1 / 32)
    u1 = solve(CENTERED_SQUARE, 1.0, p)
    u2 = solve(CENTERED_SQUARE, 2.0, p)
    assert np.all(u1.values <= u2.values)
    # linearity in f for constant sources
    assert np.allclose(u2.values, 2 * u1.values, atol=1e-8)


def test_callable_source_and_mixed_sign():
    f = SourceTerm(lambda x: 1.0 + 0.5 * x[:, 0])
    u = solve(PENTAGON, f, newton(0.15))
    assert np.all(u.inside_values() > 0)
    with pytest.raises(ValueError):
        solve(PENTAGON, lambda x: x[:, 0] - 0.5, SchemeParams(eps=0.15))
    solve(PENTAGON, lambda x: x[:, 0] - 0.2, SchemeParams(eps=0.15, sweep="jacobi", allow_mixed_sign=True))


def test_scaling_covariance():
    # generic position, so no lattice node sits on the boundary in either scale
    d = Ellipse([0.013, 0.021], [1.0, 0.6])
    s = 2.0
    u = solve(d, 1.0, newton(0.15, 0.05))
    us = solve(d.scaled(s, about=[0, 0]), 1.0, newton(s * 0.15, s * 0.05))
    assert np.array_equal(u.grid.inside_mask, us.grid.inside_mask)
    assert np.allclose(us.values, s**2 * u.values, atol=1e-8)
    assert concavity_defect(us, 0.5) == pytest.approx(s * concavity_defect(u, 0.5), rel=1e-6)


def test_normalized_inf_laplacian_examples():
    assert normalized_inf_laplacian(QuadraticProbe([0, 0], 0, [1, 0], -np.eye(2))) == (-1, -1)
    assert normalized_inf_laplacian(QuadraticProbe([0, 0], 0, [0, 0], np.diag([-1.0, 2.0]))) == (-1, 2)
    with pytest.raises(ValueError):
        QuadraticProbe([0, 0], 0, [0, 0], [[0, 1], [0, 0]])


@settings(max_examples=50, deadline=None)
@given(x=st.tuples(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9)).filter(lambda t: np.hypot(*t) > 1e-3))
def test_radial_solution_has_unit_operator(x):
    x = np.array(x)
    probe = QuadraticProbe(x, 0.5 * (1 - x @ x), -x, -np.eye(2))
    lo, hi = normalized_inf_laplacian(probe)
    assert lo == pytest.approx(-1) and hi == pytest.approx(-1)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-1, 1), p=st.tuples(st.floats(-1, 1), st.floats(-1, 1)), c=st.floats(0.1, 3))
def test_quadratics_are_exact_fixed_points(a, p, c):
    g = build_grid(Ball([0, 0], 1.0), 0.05)
    ring = build_ring(g, 0.15)
    q = ScalarField.from_function(g, lambda x: a + x @ np.array(p) - 0.5 * c * np.sum(x * x, axis=1))
    res = residual(q, ring, c).values.ravel()[ring.nodes]
    interior = ~ring.boundary.any(axis=1)
    # bilinear interpolation of -c|x|^2/2 errs by at most c h^2/4 per sample
    assert np.max(res[interior]) <= c * g.h**2 / 4 + 1e-12


def test_quadratics_exact_on_lattice_ring():
    # with lattice-aligned ring points (1D, eps a multiple of h) there is no interpolation error
    g = build_grid(UNIT_INTERVAL, 1 / 64)
    ring = build_ring(g, 3 / 64)
    q = ScalarField.from_function(g, lambda x: 0.1 + 0.3 * x - 0.5 * 2.0 * x**2)
    res = residual(q, ring, 2.0).values.ravel()[ring.nodes]
    assert np.max(res[~ring.boundary.any(axis=1)]) < 1e-15


def test_convergence_rate_1d():
    errs = []
    for eps in (1 / 8, 1 / 16, 1 / 32):
        u = solve(Interval(-1, 1), 1.0, newton(eps))
        x = u.grid.coords()[..., 0]
        errs.append(np.max(np.abs(u.values - exact_1d(x))[u.grid.inside_mask]))
    assert errs[0] / errs[1] >= 1.5 and errs[1] / errs[2] >= 1.5
