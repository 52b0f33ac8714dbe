import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inflap.analysis import (
    RegularityReport,
    boundary_blowup,
    boundary_decay,
    concavity_defect,
    cone_comparison,
    gradient_oscillation,
    paper_boundary_bound,
    quad_cone_bound,
    semiconcavity_check,
    semiconcavity_violation,
    shrunk_mask,
    singularity_estimate_check,
    subsample,
)
from inflap.discretization import ScalarField, build_grid
from inflap.envelope import transform
from inflap.geometry import Ball, Interval, Polygon
from inflap.solver import solve

from .conftest import CENTERED_SQUARE, UNIT_BALL, UNIT_INTERVAL, newton

BIG_SQUARE = Polygon([[-1, -1], [1, -1], [1, 1], [-1, 1]])


def radial(x):
    return 0.5 * np.maximum(1 - np.sum(x * x, axis=-1), 0.0)


def sample(d, h, func, dz=False):
    return ScalarField.from_function(build_grid(d, h), func, dirichlet_zero=dz)


def test_concavity_examples(u_ball):
    assert concavity_defect(u_ball, 0.5) <= 10 * u_ball.grid.h
    assert concavity_defect(sample(BIG_SQUARE, 1 / 16, lambda x: np.sum(x * x, axis=1)), 1.0) > 0
    aff = sample(BIG_SQUARE, 1 / 16, lambda x: 3 + x[:, 0] - 0.5 * x[:, 1])
    assert concavity_defect(aff, 1.0) <= 1e-14
    assert concavity_defect(sample(UNIT_BALL, 1 / 16, radial, True), 0.5) <= 1e-14


def test_concavity_rejects_bad_input():
    neg = sample(BIG_SQUARE, 1 / 8, lambda x: x[:, 0])
    with pytest.raises(ValueError):
        concavity_defect(neg, 0.5)
    with pytest.raises(ValueError):
        concavity_defect(sample(BIG_SQUARE, 1 / 8, lambda x: 1 + 0 * x[:, 0]), 1.5)


def test_concavity_detects_single_dent():
    u = sample(BIG_SQUARE, 1 / 16, lambda x: 1 + 0 * x[:, 0])
    iy, ix = u.grid.index_of([0.0, 0.0])
    u.values[iy, ix] = 0.9
    assert concavity_defect(u, 1.0) == pytest.approx(0.1)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), q=st.floats(0.1, 1.0))
def test_defects_nonnegative(seed, q):
    g = build_grid(BIG_SQUARE, 1 / 8)
    u = ScalarField(g, np.random.default_rng(seed).uniform(0, 1, g.shape))
    assert concavity_defect(u, q) >= 0
    mask = shrunk_mask(u, 0.5)
    assert semiconcavity_violation(u, 1.0, mask) >= 0


def test_cone_comparison_examples():
    u = sample(UNIT_BALL, 1 / 64, radial, True)
    radii = np.linspace(0.1, 1.0, 10)
    cc = cone_comparison(u, [0.0, 0.0], radii)
    assert cc.violation == 0.0
    assert np.allclose(cc.slopes, radii / 2, atol=1e-3)
    # endpoint r = R: slope u(0)/R, tight
    assert cc.slopes[-1] == pytest.approx(0.5, abs=1e-3)
    assert cc.endpoint_violation <= 1e-3
    const = sample(UNIT_BALL, 1 / 16, lambda x: 0.3 + 0 * x[:, 0])
    assert cone_comparison(const, [0, 0], [0.2, 0.5]).violation <= 1e-14
    with pytest.raises(ValueError):
        cone_comparison(u, [0.5, 0.0], [0.6])


def test_cone_comparison_detects_decrease():
    # a plateau beyond r = 0.3 makes the slope drop
    u = sample(UNIT_BALL, 1 / 64, lambda x: 1 - np.minimum(np.linalg.norm(x, axis=1), 0.3))
    cc = cone_comparison(u, [0, 0], [0.2, 0.3, 0.6])
    assert cc.violation == pytest.approx(1 - 0.5, abs=5e-3)


def test_quad_cone_examples(u_interval):
    q = quad_cone_bound(u_interval)
    assert q.slack.at([0.0]) == pytest.approx(0.5 - u_interval.at([0.0]))
    u_exact = sample(UNIT_INTERVAL, 1 / 64, lambda x: 0.5 * (1 - x**2), True)
    q_exact = quad_cone_bound(u_exact)
    assert q_exact.violation == 0.0 and q_exact.slack.at([0.0]) == pytest.approx(0.0, abs=1e-15)
    ub = sample(UNIT_BALL, 1 / 32, radial, True)
    assert quad_cone_bound(ub, n_boundary=512).slack.at([0, 0]) == pytest.approx(0.0, abs=1e-12)
    zero = ScalarField(ub.grid, np.zeros(ub.grid.shape))
    assert quad_cone_bound(zero).violation == 0.0


def test_boundary_decay_examples():
    rows = boundary_decay(CENTERED_SQUARE, [0.1], newton(3 / 64, 1 / 64), n_boundary=64)
    assert rows[0].bound == pytest.approx(0.05 * (math.sqrt(2) + 1) - 0.005)
    assert rows[0].sup <= rows[0].bound
    eps = 0.1
    ball_rows = boundary_decay(UNIT_BALL, [eps], newton(0.05), n_boundary=64)
    assert ball_rows[0].sup == pytest.approx(eps + eps**2 / 2, abs=0.05)
    assert paper_boundary_bound(0.2, 2.0) == pytest.approx(0.28)


def test_semiconcavity_exact_ball():
    u = sample(UNIT_BALL, 1 / 64, radial, True)
    res = semiconcavity_check(u, 0.5)
    expect = 0.5 / (2 * math.sqrt(3 / 8))
    # lattice difference quotients approach the sup of |grad sqrt(u)| from below
    assert 0.95 * expect <= res.M <= expect * (1 + 1e-9)
    assert res.C == pytest.approx(2 * res.M**2)
    assert res.violation == 0.0


def test_semiconcavity_concave_field_with_zero_constant():
    u = sample(UNIT_INTERVAL, 1 / 64, lambda x: 0.5 * (1 - x**2), True)
    assert semiconcavity_violation(u, 0.0, shrunk_mask(u, 0.5)) == 0.0


def test_semiconcavity_solved_field(u_square):
    res = semiconcavity_check(u_square, 0.5)
    assert res.violation <= 10 * u_square.grid.h
    assert res.C == pytest.approx(2 * res.M**2)


def test_kink_fails_below_grid_threshold():
    # midpoint defect of |x1| across the kink at half-width r is r - C r^2/2;
    # on a grid r >= h, so every C < 2/h is violated and C = 2/h is not
    h = 1 / 32
    u = sample(BIG_SQUARE, h, lambda x: np.abs(x[:, 0]))
    mask = shrunk_mask(u, 0.5)
    for C in (0.0, 1.0, 10.0, 1.9 / h):
        v = semiconcavity_violation(u, C, mask)
        assert v >= h - C * h * h / 2 - 1e-15 and v > 0
    assert semiconcavity_violation(u, 4.0, mask) == pytest.approx(1 / 8)
    assert semiconcavity_violation(u, 2.0 / h, mask) <= 1e-15


def test_singularity_examples():
    u = sample(BIG_SQUARE, 1 / 32, lambda x: -np.abs(x[:, 0]))
    assert singularity_estimate_check(u, [0, 0], [0, 0], [1, 0], 1.0, 0.0, 0.5) == 0.0
    assert singularity_estimate_check(u, [0, 0], [0.5, 0], [1, 0], 0.5, 0.0, 0.5) == 0.0
    # second form with a quadratic kink on B_delta
    assert singularity_estimate_check(u, [0, 0], [0, 0], [1, 0], 1.0, 0.0, 0.5, c=2.0) == 0.0
    with pytest.raises(ValueError):
        singularity_estimate_check(u, [0, 0], [0, 0], [1, 1], 1.0, 0.0, 0.5)


def test_singularity_smooth_control():
    # near a differentiable point the kinked bound must fail for every K > 0
    d = Ball([0, 0], 0.25)
    u = sample(d, 1 / 256, lambda x: 0.5 - 0.5 * np.sum(x * x, axis=1))
    for K in (0.01, 0.1, 1.0):
        assert singularity_estimate_check(u, [0, 0], [0, 0], [1, 0], K, 0.0, 0.2) > 0


def test_gradient_oscillation_examples():
    fields = [sample(BIG_SQUARE, h, lambda x: np.abs(x[:, 0])) for h in (1 / 8, 1 / 16, 1 / 32)]
    assert gradient_oscillation(fields) == pytest.approx([2, 2, 2])
    aff = [sample(BIG_SQUARE, h, lambda x: 1 + x[:, 0] + 2 * x[:, 1]) for h in (1 / 8, 1 / 16, 1 / 32)]
    assert max(gradient_oscillation(aff)) < 1e-12
    smooth = [sample(UNIT_BALL, h, radial, True) for h in (1 / 16, 1 / 32, 1 / 64)]
    seq = gradient_oscillation(smooth)
    assert seq[0] / seq[1] >= 1.5 and seq[1] / seq[2] >= 1.5
    with pytest.raises(ValueError):
        gradient_oscillation([fields[0], fields[2]])
    shifted = ScalarField.from_function(build_grid(BIG_SQUARE, 1 / 16, origin=[-1 + 1 / 64, -1], shape=(33, 33)),
                                        lambda x: x[:, 0])
    with pytest.raises(ValueError):
        gradient_oscillation([fields[0], shifted])


def test_subsample_nested():
    u = sample(BIG_SQUARE, 1 / 32, lambda x: np.abs(x[:, 0]))
    c = subsample(u, 2)
    assert c.grid.h == pytest.approx(1 / 16)
    assert np.array_equal(c.values, u.values[::2, ::2])
    assert gradient_oscillation([c, u]) == pytest.approx([2, 2])


def test_blowup_examples():
    w = transform(sample(UNIT_INTERVAL, 1 / 512, lambda x: 0.5 * (1 - x**2), True))
    fit = boundary_blowup(w, [1.0], [-1.0])
    assert abs(fit.exponent - 0.5) <= 0.1
    wb = transform(sample(UNIT_BALL, 1 / 128, radial, True))
    assert abs(boundary_blowup(wb, [1.0, 0.0], [-1.0, 0.0]).exponent - 0.5) <= 0.1
    aff = ScalarField.from_function(build_grid(UNIT_INTERVAL, 1 / 512), lambda x: x - 1)
    assert boundary_blowup(aff, [1.0], [-1.0]).exponent == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValueError):
        boundary_blowup(sample(UNIT_INTERVAL, 1 / 8, lambda x: 0 * x), [1.0], [-1.0])


def test_refinement_monotonicity():
    seq_c, seq_q = [], []
    for eps in (3 / 16, 3 / 32, 3 / 64):
        u = solve(UNIT_BALL, 1.0, newton(eps))
        seq_c.append(concavity_defect(u, 0.5))
        seq_q.append(quad_cone_bound(u).violation)
    for seq in (seq_c, seq_q):
        assert all(b <= 1.2 * a for a, b in zip(seq, seq[1:]))


def test_report_text_and_svg(tmp_path):
    rep = RegularityReport(meta={"domain": "ball"})
    rep.add("concavity", 0.01, 0.1, sequence=[0.02, 0.01], h=[0.1, 0.05])
    rep.add("gradient", 2.0, 2.0, passed=False)
    text = rep.to_text()
    assert "[concavity]\nvalue: 0.01\n" in text
    assert "verdict: fail" in text and text.endswith("overall: fail\n")
    assert not rep.passed and rep["concavity"].passed
    svg = tmp_path / "p.svg"
    rep.plot_svg(svg, {"concavity": ([0.1, 0.05], [0.02, 0.01])})
    assert svg.read_text().lstrip().startswith("<?xml")


def test_interval_semiconcavity_and_blowup_on_solved(u_interval):
    assert semiconcavity_check(u_interval, 0.5).violation <= 10 * u_interval.grid.h
    u = solve(Interval(-1, 1), 1.0, newton(1 / 256))
    assert abs(boundary_blowup(transform(u), [1.0], [-1.0]).exponent - 0.5) <= 0.1


def test_gradient_oscillation_solved_ball_shrink_factor():
    # stated example: spreads on solved ball fields shrink by >= 1.5 per refinement
    fields = [solve(UNIT_BALL, 1.0, newton(0.1 / 2**k)) for k in range(3)]
    seq = gradient_oscillation(fields)
    assert all(b < a for a, b in zip(seq, seq[1:]))
    assert all(a / b >= 1.5 for a, b in zip(seq, seq[1:])), seq
