import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gradvi.domain import (ConvexPolygon, Disk, GridError, Interval, Rectangle, ScalarField,
                           boundary_distance, build_grid, build_obstacles, gauge_distance_map,
                           shape_from_dict)
from gradvi.gauge import Box, CrossPolytope, EuclideanBall, PNormBall, Polytope

SQUARE = Rectangle((0.0, 0.0), (1.0, 1.0))
METRICS = {
    "ball": EuclideanBall(1.0, 2),
    "pball3": PNormBall(3.0, 1.0, 2),
    "box": Box((1.0, 0.5)),
    "cross": CrossPolytope(1.0, 2),
    "skew_hexagon": Polytope.symmetric([[1.0, 0.0], [0.3, 1.0], [-0.6, 1.0]], [1.0, 0.8, 1.3]),
}
SHAPES = {
    "square": SQUARE,
    "disk": Disk((0.5, 0.5), 0.5),
    "triangle": ConvexPolygon(((0.0, 0.0), (1.0, 0.1), (0.3, 0.9))),
}


def test_interval_grid_counts():
    g = build_grid(Interval(-1.0, 1.0), 0.5)
    assert g.dims == (5,)
    assert g.n_interior == 3
    assert g.boundary.sum() == 2


def test_square_grid_counts():
    g = build_grid(SQUARE, 0.25)
    assert g.dims == (5, 5)
    assert g.n_interior == 9
    assert np.array_equal(np.argwhere(g.interior).min(axis=0), [1, 1])


def test_disk_interior_count_matches_oracle(frozen):
    d = frozen["disk_interior_count"]
    g = build_grid(Disk(tuple(d["center"]), d["radius"]), d["h"])
    assert g.n_interior == d["count"]


def test_disk_arms_are_fractional():
    g = build_grid(Disk((0.0, 0.0), 1.0), 0.3)
    arms = g.arms[g.interior]
    assert arms.min() > 0 and arms.max() == 1.0 and (arms < 1).any()


def test_too_coarse_grid_rejected():
    with pytest.raises(GridError):
        build_grid(SQUARE, 2.0)
    with pytest.raises(GridError):
        build_grid(SQUARE, 0.0)


def test_invalid_shapes():
    with pytest.raises(GridError):
        Interval(1.0, 0.0)
    with pytest.raises(GridError):
        Disk((0.0, 0.0), -1.0)
    with pytest.raises(GridError):
        ConvexPolygon(((0, 0), (0, 1), (1, 0)))  # clockwise


def test_distance_examples():
    ball = EuclideanBall(1.0, 2)
    assert boundary_distance(SQUARE, [[0.5, 0.5]], ball)[0] == pytest.approx(0.5, abs=1e-12)
    assert boundary_distance(SQUARE, [[0.5, 0.5]], Box((1.0, 1.0)))[0] == pytest.approx(0.5, abs=1e-12)
    assert boundary_distance(SQUARE, [[0.2, 0.6]], ball)[0] == pytest.approx(0.2, abs=1e-12)
    assert boundary_distance(Interval(-1.0, 1.0), [[0.0]], Box((1.0,)))[0] == pytest.approx(1.0)
    assert boundary_distance(Disk((0.0, 0.0), 1.0), [[0.3, 0.4]], ball)[0] == pytest.approx(0.5, abs=1e-10)


def test_distance_map_is_zero_on_boundary_and_nan_outside():
    g = build_grid(Disk((0.5, 0.5), 0.5), 1 / 16)
    d = gauge_distance_map(g, METRICS["pball3"])
    assert np.all(d.values[g.boundary] == 0.0)
    assert np.all(np.isnan(d.values[~g.active]))
    assert np.all(d.values[g.interior] > 0)


def test_pentagon_distance_against_lattice_dijkstra(frozen):
    d = frozen["pentagon_dijkstra"]
    poly = ConvexPolygon(tuple(map(tuple, d["vertices"])))
    got = boundary_distance(poly, np.array(d["points"]), PNormBall(d["p"], 1.0, 2))
    err = np.abs(got - np.array(d["distance"]))
    assert err.max() <= 3 * d["h"]
    # the lattice path can only overestimate the straight-line distance
    assert np.all(got <= np.array(d["distance"]) + 1e-12)


@pytest.mark.parametrize("metric", sorted(METRICS))
@pytest.mark.parametrize("shape", sorted(SHAPES))
def test_distance_is_one_lipschitz_in_the_metric_gauge(shape, metric):
    s, m = SHAPES[shape], METRICS[metric]
    g = build_grid(s, 1 / 32)
    d = gauge_distance_map(g, m)
    x = g.coordinates()[g.active]
    v = d.values[g.active]
    rng = np.random.default_rng(0)
    i, j = rng.integers(0, len(x), (2, 4000))
    assert np.all(np.abs(v[i] - v[j]) <= m.gauge(x[i] - x[j]) * (1 + 1e-9) + 1e-12)


@pytest.mark.parametrize("shape", sorted(SHAPES))
def test_isotropic_distance_matches_euclidean(shape):
    s = SHAPES[shape]
    g = build_grid(s, 1 / 32)
    pts = g.coordinates()[g.interior]
    d = boundary_distance(s, pts, EuclideanBall(1.0, 2))
    assert np.allclose(d, -s.signed_distance(pts), atol=1e-9)


@given(scale=st.floats(0.25, 4.0))
def test_distance_scales_inversely_with_metric_radius(scale):
    pts = np.array([[0.3, 0.4], [0.6, 0.7], [0.5, 0.1]])
    base = boundary_distance(SQUARE, pts, PNormBall(3.0, 1.0, 2))
    scaled = boundary_distance(SQUARE, pts, PNormBall(3.0, scale, 2))
    assert np.allclose(scaled, base / scale, rtol=1e-9)


def test_shape_round_trip():
    for s in SHAPES.values():
        assert shape_from_dict(s.to_dict()).to_dict() == s.to_dict()
    assert shape_from_dict(Interval(-1.0, 1.0).to_dict()) == Interval(-1.0, 1.0)


def test_build_obstacles_example():
    g = build_grid(Interval(-1.0, 1.0), 0.5)
    d = gauge_distance_map(g, Box((1.0,)))
    lo, hi = build_obstacles(d, c=2.0, k=3.0)
    assert np.allclose(hi.values, [2.0, 3.5, 5.0, 3.5, 2.0])
    assert np.allclose(lo.values, [2.0, 0.5, -1.0, 0.5, 2.0])


def test_build_obstacles_k_zero_collapses():
    g = build_grid(SQUARE, 0.25)
    lo, hi = build_obstacles(gauge_distance_map(g, EuclideanBall(1.0, 2)), c=1.5, k=0.0)
    assert np.array_equal(lo.values[g.active], hi.values[g.active])


def test_build_obstacles_rejects_bad_input():
    g = build_grid(SQUARE, 0.25)
    d = gauge_distance_map(g, EuclideanBall(1.0, 2))
    with pytest.raises(ValueError):
        build_obstacles(d, 0.0, -1.0)
    neg = ScalarField(g, np.where(g.active, -1.0, np.nan))
    with pytest.raises(ValueError):
        build_obstacles(neg, 0.0, 1.0)
