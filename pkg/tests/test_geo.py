"""Geometry primitives against independent oracles and hand values."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chargerank import geo
from tests.conftest import random_convex_polygon

UNIT_SQUARE = [(0, 0), (1, 0), (1, 1), (0, 1)]


def _pip_oracle(xs, ys, ring):
    """Crossing-number point-in-ring, written independently of geo.py."""
    inside = np.zeros(xs.shape[0], dtype=bool)
    n = ring.shape[0]
    for i in range(n):
        x1, y1 = ring[i - 1]
        x2, y2 = ring[i]
        if y1 == y2:
            continue
        crosses = (y1 > ys) != (y2 > ys)
        with np.errstate(invalid="ignore"):
            xi = x1 + (ys - y1) / (y2 - y1) * (x2 - x1)
        inside ^= crosses & (xs < xi)
    return inside


def mc_intersection_area(a: np.ndarray, b: np.ndarray, n_samples: int,
                         rng) -> float:
    """Monte-Carlo intersection area: uniform samples over a's bbox."""
    x0, y0 = a.min(axis=0)
    x1, y1 = a.max(axis=0)
    xs = rng.uniform(x0, x1, n_samples)
    ys = rng.uniform(y0, y1, n_samples)
    hits = _pip_oracle(xs, ys, a) & _pip_oracle(xs, ys, b)
    return (x1 - x0) * (y1 - y0) * hits.mean()


class TestPoints:
    def test_finite_required(self):
        with pytest.raises(geo.GeometryError):
            geo.PointXY(float("nan"), 0.0)

    def test_distance(self):
        assert geo.PointXY(0, 0).distance_to(geo.PointXY(3, 4)) == 5.0


class TestPolygonValidation:
    def test_orientation_normalized(self):
        p = geo.Polygon(list(reversed(UNIT_SQUARE)))
        assert geo.ring_signed_area(p.exterior) > 0

    def test_too_few_vertices(self):
        with pytest.raises(geo.GeometryError):
            geo.Polygon([(0, 0), (1, 0)])

    def test_self_intersecting_rejected(self):
        bowtie = [(0, 0), (1, 1), (1, 0), (0, 1)]
        with pytest.raises(geo.GeometryError):
            geo.Polygon(bowtie)

    def test_degenerate_zero_area(self):
        with pytest.raises(geo.GeometryError):
            geo.Polygon([(0, 0), (1, 0), (2, 0)])


class TestArea:
    def test_unit_square(self):
        assert geo.polygon_area(geo.Polygon(UNIT_SQUARE)) == 1.0

    def test_square_with_hole(self):
        hole = [(0.25, 0.25), (0.75, 0.25), (0.75, 0.75), (0.25, 0.75)]
        assert geo.polygon_area(geo.Polygon(UNIT_SQUARE, [hole])) == pytest.approx(0.75)

    def test_random_triangles_match_cross_product(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            tri = rng.normal(size=(3, 2)) * 10
            cross = 0.5 * abs(
                (tri[1, 0] - tri[0, 0]) * (tri[2, 1] - tri[0, 1])
                - (tri[1, 1] - tri[0, 1]) * (tri[2, 0] - tri[0, 0]))
            if cross < 1e-9:
                continue
            assert geo.polygon_area(geo.Polygon(tri)) == pytest.approx(cross, rel=1e-12)


class TestBuffer:
    def test_area_correction_exact(self):
        # area-preserving radius scaling pins the polygon area to pi r^2
        buf = geo.make_buffer(geo.PointXY(0, 0), geo.BufferSpec(350, 64))
        assert geo.polygon_area(buf) == pytest.approx(384845.10006475, rel=1e-9)

    @pytest.mark.parametrize("n_segments", [16, 24, 64, 128])
    @pytest.mark.parametrize("radius", [100.0, 350.0, 500.0])
    def test_area_within_tenth_percent(self, n_segments, radius):
        buf = geo.make_buffer(geo.PointXY(10.0, -5.0), geo.BufferSpec(radius, n_segments))
        assert geo.polygon_area(buf) == pytest.approx(math.pi * radius**2, rel=1e-3)

    def test_default_radius_350(self):
        assert geo.BufferSpec().radius == 350.0

    def test_nested_buffers_containment(self):
        c = geo.PointXY(3.0, 4.0)
        small = geo.make_buffer(c, geo.BufferSpec(100, 32))
        big = geo.make_buffer(c, geo.BufferSpec(500, 32))
        inter = geo.intersection_area(small, big)
        assert inter == pytest.approx(geo.polygon_area(small), rel=1e-9)

    def test_invalid_spec(self):
        with pytest.raises(geo.GeometryError):
            geo.BufferSpec(-1.0)
        with pytest.raises(geo.GeometryError):
            geo.BufferSpec(100.0, 8)


class TestIntersectionArea:
    def test_axis_aligned_overlap(self):
        a = geo.Polygon(UNIT_SQUARE)
        b = geo.Polygon([(0.5, 0), (1.5, 0), (1.5, 1), (0.5, 1)])
        assert geo.intersection_area(a, b) == pytest.approx(0.5)

    def test_disjoint(self):
        a = geo.Polygon(UNIT_SQUARE)
        b = geo.Polygon([(5, 5), (6, 5), (6, 6), (5, 6)])
        assert geo.intersection_area(a, b) == 0.0

    def test_symmetry_exact(self):
        rng = np.random.default_rng(21)
        for _ in range(50):
            a = geo.Polygon(random_convex_polygon(rng, 9))
            b = geo.Polygon(random_convex_polygon(rng, 7,
                                                  center=rng.normal(scale=0.5, size=2)))
            assert geo.intersection_area(a, b) == geo.intersection_area(b, a)

    def test_self_intersection_is_area(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            poly = geo.Polygon(random_convex_polygon(rng, 10))
            assert geo.intersection_area(poly, poly) == pytest.approx(
                geo.polygon_area(poly), rel=1e-9)

    def test_nested_equals_inner(self):
        outer = geo.Polygon([(-2, -2), (2, -2), (2, 2), (-2, 2)])
        inner = geo.Polygon([(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)])
        assert geo.intersection_area(outer, inner) == pytest.approx(1.0, rel=1e-12)

    def test_monte_carlo_oracle_convex_pairs(self):
        rng = np.random.default_rng(99)
        checked = 0
        while checked < 30:
            a_ring = random_convex_polygon(rng, 10)
            b_ring = random_convex_polygon(rng, 8, center=rng.normal(scale=0.6, size=2))
            a = geo.Polygon(a_ring)
            b = geo.Polygon(b_ring)
            exact = geo.intersection_area(a, b)
            if exact < 0.25 * geo.polygon_area(a):
                continue  # keep the MC noise level well under tolerance
            mc = mc_intersection_area(a.exterior, b.exterior, 200_000, rng)
            assert exact == pytest.approx(mc, rel=0.02)
            checked += 1

    def test_nonconvex_star_against_square_mc(self):
        rng = np.random.default_rng(8)
        angles = np.linspace(0.0, 2 * np.pi, 14, endpoint=False)
        radii = np.where(np.arange(14) % 2 == 0, 1.4, 0.5)
        star_ring = np.column_stack((radii * np.cos(angles), radii * np.sin(angles)))
        star = geo.Polygon(star_ring)
        square = geo.Polygon([(-0.4, -0.9), (1.6, -0.9), (1.6, 1.1), (-0.4, 1.1)])
        exact = geo.intersection_area(star, square)
        mc = mc_intersection_area(star.exterior, square.exterior, 400_000, rng)
        assert exact == pytest.approx(mc, rel=0.02)
        # both non-convex: star against a shifted copy of itself
        star2 = geo.Polygon(star_ring + np.array([0.5, 0.2]))
        exact2 = geo.intersection_area(star, star2)
        mc2 = mc_intersection_area(star.exterior, star2.exterior, 400_000, rng)
        assert exact2 == pytest.approx(mc2, rel=0.03)

    def test_hole_excluded(self):
        hole = [(0.25, 0.25), (0.75, 0.25), (0.75, 0.75), (0.25, 0.75)]
        holed = geo.Polygon(UNIT_SQUARE, [hole])
        probe = geo.Polygon([(0.3, 0.3), (0.7, 0.3), (0.7, 0.7), (0.3, 0.7)])
        assert geo.intersection_area(holed, probe) == pytest.approx(0.0, abs=1e-12)
        assert geo.intersection_area(holed, holed) == pytest.approx(0.75, rel=1e-9)


class TestPolylineClipping:
    def test_horizontal_cross(self):
        line = geo.Polyline(np.array([(-1.0, 0.5), (1.0, 0.5)]))
        assert geo.polyline_length_within(line, geo.Polygon(UNIT_SQUARE)) == pytest.approx(1.0)

    def test_fully_inside(self):
        line = geo.Polyline(np.array([(0.2, 0.2), (0.8, 0.8)]))
        assert geo.polyline_length_within(line, geo.Polygon(UNIT_SQUARE)) == pytest.approx(
            line.length())

    def test_diagonal_of_unit_square(self):
        line = geo.Polyline(np.array([(-1.0, -1.0), (2.0, 2.0)]))
        assert geo.polyline_length_within(line, geo.Polygon(UNIT_SQUARE)) == pytest.approx(
            math.sqrt(2.0), rel=1e-12)

    def test_disjoint_zero(self):
        line = geo.Polyline(np.array([(5.0, 5.0), (6.0, 6.0)]))
        assert geo.polyline_length_within(line, geo.Polygon(UNIT_SQUARE)) == 0.0

    def test_hole_gap(self):
        hole = [(0.4, 0.4), (0.6, 0.4), (0.6, 0.6), (0.4, 0.6)]
        holed = geo.Polygon(UNIT_SQUARE, [hole])
        line = geo.Polyline(np.array([(-1.0, 0.5), (2.0, 0.5)]))
        assert geo.polyline_length_within(line, holed) == pytest.approx(0.8, rel=1e-9)

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_never_exceeds_total_length(self, seed):
        rng = np.random.default_rng(seed)
        verts = rng.normal(size=(4, 2)) * 2
        try:
            line = geo.Polyline(verts)
        except geo.GeometryError:
            return
        region = geo.Polygon(random_convex_polygon(rng, 8))
        clipped = geo.polyline_length_within(line, region)
        assert 0.0 <= clipped <= line.length() + 1e-9


class TestNearestDistance:
    def test_three_four_five(self):
        assert geo.nearest_distance(geo.PointXY(0, 0), [geo.PointXY(3, 4)]) == 5.0

    def test_on_target(self):
        pts = [geo.PointXY(1, 1), geo.PointXY(5, 5)]
        assert geo.nearest_distance(geo.PointXY(1, 1), pts) == 0.0

    def test_perpendicular_foot(self):
        seg = geo.Polyline(np.array([(-1.0, 0.0), (1.0, 0.0)]))
        assert geo.nearest_distance(geo.PointXY(0, 1), [seg]) == pytest.approx(1.0)

    def test_beyond_endpoint(self):
        seg = geo.Polyline(np.array([(0.0, 0.0), (1.0, 0.0)]))
        assert geo.nearest_distance(geo.PointXY(4, 4), [seg]) == pytest.approx(5.0)

    def test_empty_targets(self):
        with pytest.raises(geo.GeometryError):
            geo.nearest_distance(geo.PointXY(0, 0), [])


class TestProjection:
    def test_origin(self):
        p = geo.project_lonlat(0.0, 0.0, 0.0)
        assert (p.x, p.y) == (0.0, 0.0)

    def test_one_degree_latitude(self):
        p = geo.project_lonlat(0.0, 1.0, 52.0)
        assert p.y == pytest.approx(111194.926644559, rel=1e-12)

    def test_one_degree_longitude_at_52(self):
        p = geo.project_lonlat(1.0, 0.0, 52.0)
        assert p.x == pytest.approx(68458.4325867174, rel=1e-12)

    def test_latitude_bound(self):
        with pytest.raises(geo.GeometryError):
            geo.project_lonlat(0.0, 90.0, 52.0)

    def test_round_trip(self):
        proj = geo.Projection(ref_lat=52.0)
        pt = proj.to_xy(5.1, 52.3)
        lon, lat = proj.to_lonlat(pt.x, pt.y)
        assert lon == pytest.approx(5.1, abs=1e-12)
        assert lat == pytest.approx(52.3, abs=1e-12)


@given(st.integers(0, 100_000))
@settings(max_examples=40, deadline=None)
def test_intersection_bounded_by_min_area(seed):
    rng = np.random.default_rng(seed)
    a = geo.Polygon(random_convex_polygon(rng, 8))
    b = geo.Polygon(random_convex_polygon(rng, 8, center=rng.normal(scale=1.0, size=2)))
    inter = geo.intersection_area(a, b)
    assert 0.0 <= inter <= min(geo.polygon_area(a), geo.polygon_area(b)) + 1e-12
