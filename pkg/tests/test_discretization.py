import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inflap.discretization import (
    ScalarField,
    UnderResolved,
    build_grid,
    build_ring,
    format_field,
    parse_field,
    read_field,
    ring_extrema,
    write_field,
)
from inflap.geometry import Interval

from .conftest import PENTAGON, UNIT_BALL, UNIT_INTERVAL, UNIT_SQUARE


def quad1d(x):
    return 0.5 * (1 - x**2)


def test_interval_grid_nodes():
    g = build_grid(UNIT_INTERVAL, 0.25)
    xs = g.coords()[g.inside_mask][:, 0]
    assert g.n_inside == 7
    assert np.allclose(xs, np.arange(-0.75, 0.76, 0.25))


def test_ball_grid_mask():
    g = build_grid(UNIT_BALL, 0.5)
    r = np.linalg.norm(g.coords(), axis=-1)
    assert np.array_equal(g.inside_mask, r < 1 - 1e-12)
    assert np.all(g.boundary_dist[g.inside_mask] > 0)


def test_under_resolved():
    with pytest.raises(UnderResolved):
        build_grid(UNIT_SQUARE, 1.0)
    with pytest.raises(ValueError):
        build_grid(UNIT_SQUARE, -0.1)


def test_grid_helpers():
    g = build_grid(PENTAGON, 0.05)
    iy, ix = g.index_of([0.5, 0.5])
    assert np.allclose(g.point(iy, ix), [0.5, 0.5])
    flat = g.inside_indices()
    assert len(flat) == g.n_inside
    collar = g.collar_mask()
    assert not np.any(collar & g.inside_mask)
    # every collar node touches an inside node
    pad = np.pad(g.inside_mask, 1)
    touch = np.zeros_like(collar)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            touch |= pad[1 + dy:1 + dy + g.ny, 1 + dx:1 + dx + g.nx]
    assert np.all(touch[collar])


def test_grid_connected():
    from scipy.ndimage import label

    for d, h in [(PENTAGON, 1 / 32), (UNIT_BALL, 0.05)]:
        g = build_grid(d, h)
        _, n = label(g.inside_mask)
        assert n == 1


def test_ring_exact_samples_1d():
    g = build_grid(UNIT_INTERVAL, 0.125)
    st_ = build_ring(g, 0.25)
    f = ScalarField.from_function(g, quad1d)
    row = st_.node_row(g.index_of([0.0]))
    samples = st_.samples(f.values)[row]
    assert np.allclose(sorted(samples), [0.5 * (1 - 0.0625)] * 2)
    assert st_.matrix[2 * row].nnz == 1 and st_.matrix[2 * row].data[0] == pytest.approx(1.0)


def test_ring_clipped_at_boundary():
    g = build_grid(UNIT_INTERVAL, 0.1)
    st_ = build_ring(g, 0.25)
    row = st_.node_row(g.index_of([0.9]))
    right = int(np.argmax(st_.directions[:, 0]))
    assert st_.boundary[row, right]
    assert st_.hit_points[row, right, 0] == pytest.approx(1.0)
    assert not st_.boundary[row, 1 - right]


def test_ring_2d_center_all_interior():
    g = build_grid(UNIT_BALL, 0.05)
    st_ = build_ring(g, 0.15, 16)
    row = st_.node_row(g.index_of([0.0, 0.0]))
    assert st_.m == 16 and not st_.boundary[row].any()
    # directions are closed under negation
    assert np.allclose(np.sort(st_.directions, axis=0), np.sort(-st_.directions, axis=0))


def test_ring_hits_on_boundary():
    for d in (PENTAGON, UNIT_BALL):
        g = build_grid(d, 1 / 32)
        st_ = build_ring(g, 3 / 32)
        hits = st_.hit_points[st_.boundary]
        assert np.max(np.abs(d.signed_distance(hits))) <= 1e-9 * g.h


def test_ring_preconditions():
    g = build_grid(UNIT_BALL, 0.05)
    with pytest.raises(ValueError):
        build_ring(g, 0.05)
    with pytest.raises(ValueError):
        build_ring(g, 0.15, m=6)
    with pytest.raises(ValueError):
        build_ring(g, 0.15, m=9)


def test_ring_extrema_examples():
    g = build_grid(UNIT_INTERVAL, 0.125)
    st_ = build_ring(g, 0.25)
    f = ScalarField.from_function(g, quad1d)
    assert ring_extrema(f, st_, g.index_of([0.0])) == pytest.approx((0.46875, 0.46875))
    assert ring_extrema(f, st_, g.index_of([0.5])) == pytest.approx((0.46875, 0.21875))
    c = ScalarField(g, np.full(g.shape, 3.0))
    assert ring_extrema(c, st_, g.index_of([0.0])) == (3.0, 3.0)


def test_ring_interpolation_is_convex():
    g = build_grid(PENTAGON, 1 / 32)
    st_ = build_ring(g, 3 / 32)
    assert st_.matrix.data.min() >= 0
    sums = np.asarray(st_.matrix.sum(axis=1)).ravel()
    inner = ~st_.boundary.ravel()
    assert np.allclose(sums[inner], 1.0)
    assert np.allclose(sums[~inner], 0.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_ring_extrema_monotone_and_negation(seed):
    rng = np.random.default_rng(seed)
    g = build_grid(PENTAGON, 1 / 16)
    st_ = build_ring(g, 3 / 16)
    a = rng.normal(size=g.shape)
    b = a + np.abs(rng.normal(size=g.shape))
    fa, fb = ScalarField(g, a), ScalarField(g, b)
    hia, loa = ring_extrema(fa, st_)
    hib, lob = ring_extrema(fb, st_)
    assert np.all(hia <= hib + 1e-12) and np.all(loa <= lob + 1e-12)
    hin, lon = ring_extrema(ScalarField(g, -a), st_)
    assert np.allclose(hin, -loa) and np.allclose(lon, -hia)


def test_interpolate_matches_affine():
    g = build_grid(PENTAGON, 1 / 16)
    f = ScalarField.from_function(g, lambda x: 2 * x[..., 0] - 3 * x[..., 1] + 1)
    pts = np.random.default_rng(1).uniform([0, 0], [1, 1], size=(200, 2))
    assert np.allclose(f.interpolate(pts), 2 * pts[:, 0] - 3 * pts[:, 1] + 1)


def test_field_file_round_trip(tmp_path):
    g = build_grid(PENTAGON, 1 / 16)
    rng = np.random.default_rng(7)
    f = ScalarField(g, rng.normal(size=g.shape) / 3)
    path = tmp_path / "f.txt"
    write_field(path, f)
    back = read_field(path, PENTAGON)
    assert np.array_equal(back.values, f.values)
    assert np.array_equal(back.grid.inside_mask, g.inside_mask)
    assert format_field(back) == path.read_text()
    head = path.read_text().splitlines()[0]
    assert head.startswith(f"# grid nx={g.nx} ny={g.ny} h=")


def test_field_file_1d_layout():
    g = build_grid(Interval(-1, 1), 0.25)
    text = format_field(ScalarField.from_function(g, quad1d))
    lines = text.splitlines()
    assert "ny=1" in lines[0]
    assert lines[1] == "0 0 0 0"
    assert lines[5] == "4 0 1 0.5"
    assert np.array_equal(parse_field(text).values, ScalarField.from_function(g, quad1d).values)


def test_field_file_mask_mismatch():
    g = build_grid(PENTAGON, 1 / 16)
    text = format_field(ScalarField(g, np.zeros(g.shape)))
    with pytest.raises(ValueError):
        parse_field(text, UNIT_BALL)


def test_scalar_field_rejects_nonfinite():
    g = build_grid(PENTAGON, 1 / 16)
    v = np.zeros(g.shape)
    v[3, 3] = np.nan
    with pytest.raises(ValueError):
        ScalarField(g, v)


def test_node_on_slanted_edge_is_boundary():
    g = build_grid(PENTAGON, 1 / 64)
    pts = g.coords()[g.inside_mask]
    assert np.all(PENTAGON.signed_distance(pts) < 0)
