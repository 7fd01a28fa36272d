"""Planar geometry primitives for buffer-based predictor extraction.

All coordinates are projected planar meters. Polygons are simple rings
(no self-intersections); exteriors are stored counter-clockwise and holes
clockwise. Circle buffers are regular polygons with an area-preserving
radius correction, so extensive attribute estimates are unbiased in
buffer area.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from chargerank._kernels import convex_clip_area

EARTH_RADIUS_M = 6_371_000.0

BUFFER_RADII_M = (100.0, 150.0, 200.0, 250.0, 300.0, 350.0, 400.0, 450.0, 500.0)
DEFAULT_BUFFER_RADIUS_M = 350.0


class GeometryError(ValueError):
    """Raised for degenerate or invalid geometric input."""


@dataclass(frozen=True)
class PointXY:
    """A point in projected planar meters."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"non-finite coordinates ({self.x}, {self.y})")

    def distance_to(self, other: "PointXY") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


def _as_ring(vertices) -> np.ndarray:
    ring = np.asarray(vertices, dtype=np.float64)
    if ring.ndim != 2 or ring.shape[1] != 2:
        raise GeometryError("ring must be an (n, 2) coordinate array")
    if not np.isfinite(ring).all():
        raise GeometryError("ring has non-finite coordinates")
    # drop an explicit closing vertex
    if ring.shape[0] >= 2 and np.array_equal(ring[0], ring[-1]):
        ring = ring[:-1]
    if ring.shape[0] < 3:
        raise GeometryError("ring needs at least 3 distinct vertices")
    return np.ascontiguousarray(ring)


def ring_signed_area(ring: np.ndarray) -> float:
    """Shoelace signed area; positive for counter-clockwise rings."""
    x = ring[:, 0]
    y = ring[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_properly_intersect(a0, a1, b0, b1) -> bool:
    d1x, d1y = a1[0] - a0[0], a1[1] - a0[1]
    d2x, d2y = b1[0] - b0[0], b1[1] - b0[1]
    denom = d1x * d2y - d1y * d2x
    if denom == 0.0:
        return False
    t = ((b0[0] - a0[0]) * d2y - (b0[1] - a0[1]) * d2x) / denom
    u = ((b0[0] - a0[0]) * d1y - (b0[1] - a0[1]) * d1x) / denom
    return 0.0 < t < 1.0 and 0.0 < u < 1.0


def _ring_self_intersects(ring: np.ndarray) -> bool:
    n = ring.shape[0]
    for i in range(n):
        a0 = ring[i]
        a1 = ring[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_properly_intersect(a0, a1, ring[j], ring[(j + 1) % n]):
                return True
    return False


def _ring_is_convex(ring: np.ndarray) -> bool:
    n = ring.shape[0]
    for i in range(n):
        ax, ay = ring[i]
        bx, by = ring[(i + 1) % n]
        cx, cy = ring[(i + 2) % n]
        if (bx - ax) * (cy - ay) - (by - ay) * (cx - ax) < 0.0:
            return False
    return True


class Polygon:
    """A simple polygon with optional holes, in projected meters.

    The exterior is normalized counter-clockwise and holes clockwise;
    self-intersecting rings are rejected. Instances are immutable.
    """

    __slots__ = ("exterior", "holes", "_area", "_bbox", "_convex")

    def __init__(self, exterior, holes=(), validate: bool = True):
        ext = _as_ring(exterior)
        if ring_signed_area(ext) < 0.0:
            ext = np.ascontiguousarray(ext[::-1])
        hole_rings = []
        for h in holes:
            ring = _as_ring(h)
            if ring_signed_area(ring) > 0.0:
                ring = np.ascontiguousarray(ring[::-1])
            hole_rings.append(ring)
        if validate:
            if ring_signed_area(ext) <= 0.0:
                raise GeometryError("degenerate exterior ring (zero area)")
            if _ring_self_intersects(ext):
                raise GeometryError("self-intersecting exterior ring")
            for ring in hole_rings:
                if _ring_self_intersects(ring):
                    raise GeometryError("self-intersecting hole ring")
        self.exterior = ext
        self.holes = tuple(hole_rings)
        self._area = ring_signed_area(ext) + sum(ring_signed_area(h) for h in hole_rings)
        xs = ext[:, 0]
        ys = ext[:, 1]
        self._bbox = (float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max()))
        self._convex = not hole_rings and _ring_is_convex(ext)

    @property
    def bbox(self) -> tuple:
        """(minx, miny, maxx, maxy)"""
        return self._bbox

    @property
    def is_convex(self) -> bool:
        return self._convex

    def __repr__(self):
        return f"Polygon({self.exterior.shape[0]} vertices, {len(self.holes)} holes)"


@dataclass
class Polyline:
    """An open chain of vertices in projected meters."""

    vertices: np.ndarray = field()

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 2:
            raise GeometryError("polyline needs at least 2 (x, y) vertices")
        if not np.isfinite(v).all():
            raise GeometryError("polyline has non-finite coordinates")
        self.vertices = np.ascontiguousarray(v)
        if self.length() <= 0.0:
            raise GeometryError("polyline has zero length")

    def length(self) -> float:
        d = np.diff(self.vertices, axis=0)
        return float(np.sum(np.hypot(d[:, 0], d[:, 1])))

    @property
    def bbox(self) -> tuple:
        v = self.vertices
        return (float(v[:, 0].min()), float(v[:, 1].min()),
                float(v[:, 0].max()), float(v[:, 1].max()))


@dataclass(frozen=True)
class BufferSpec:
    """Circular neighborhood: radius in meters and polygon resolution."""

    radius: float = DEFAULT_BUFFER_RADIUS_M
    n_segments: int = 64

    def __post_init__(self):
        if self.radius <= 0.0:
            raise GeometryError("buffer radius must be positive")
        if self.n_segments < 16:
            raise GeometryError("buffer polygon needs at least 16 segments")


def make_buffer(center: PointXY, spec: BufferSpec) -> Polygon:
    """Regular n-gon approximating the circle of ``spec.radius``.

    The circumradius is inflated by sqrt(2*pi / (n*sin(2*pi/n))) so the
    polygon area equals pi*r^2 exactly (up to rounding).
    """
    n = spec.n_segments
    r = spec.radius * math.sqrt(2.0 * math.pi / (n * math.sin(2.0 * math.pi / n)))
    angles = 2.0 * math.pi * np.arange(n) / n
    ring = np.column_stack((center.x + r * np.cos(angles), center.y + r * np.sin(angles)))
    return Polygon(ring, validate=False)


def polygon_area(poly: Polygon) -> float:
    """Exterior area minus holes, in square meters."""
    area = poly._area
    if area <= 0.0:
        raise GeometryError("polygon has non-positive area")
    return area


def _bbox_disjoint(a: tuple, b: tuple) -> bool:
    return a[2] < b[0] or b[2] < a[0] or a[3] < b[1] or b[3] < a[1]


def _triangulate_ring(ring: np.ndarray) -> list:
    """Ear-clipping triangulation of a simple CCW ring."""
    idx = list(range(ring.shape[0]))
    triangles = []
    guard = 0
    while len(idx) > 3 and guard < 10 * ring.shape[0] ** 2:
        guard += 1
        n = len(idx)
        clipped = False
        for k in range(n):
            i0, i1, i2 = idx[(k - 1) % n], idx[k], idx[(k + 1) % n]
            ax, ay = ring[i0]
            bx, by = ring[i1]
            cx, cy = ring[i2]
            cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
            if cross <= 0.0:
                continue  # reflex or degenerate corner
            # no other vertex may sit inside the candidate ear
            ear_ok = True
            for m in idx:
                if m in (i0, i1, i2):
                    continue
                px, py = ring[m]
                d0 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
                d1 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
                d2 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
                if d0 >= 0.0 and d1 >= 0.0 and d2 >= 0.0:
                    ear_ok = False
                    break
            if ear_ok:
                triangles.append(np.array([ring[i0], ring[i1], ring[i2]]))
                del idx[k]
                clipped = True
                break
        if not clipped:
            break  # numerically stuck; fall through with remaining fan
    if len(idx) == 3:
        triangles.append(np.array([ring[idx[0]], ring[idx[1]], ring[idx[2]]]))
    elif len(idx) > 3:
        # fallback fan for pathological rings
        for k in range(1, len(idx) - 1):
            triangles.append(np.array([ring[idx[0]], ring[idx[k]], ring[idx[k + 1]]]))
    return triangles


def _ring_intersection_area(r1: np.ndarray, r1_convex: bool,
                            r2: np.ndarray, r2_convex: bool) -> float:
    if r2_convex:
        return convex_clip_area(r1, r2)
    if r1_convex:
        return convex_clip_area(r2, r1)
    total = 0.0
    for tri in _triangulate_ring(r2):
        total += convex_clip_area(r1, np.ascontiguousarray(tri))
    return total


def _rings_with_convexity(poly: Polygon):
    yield poly.exterior, poly._convex or _ring_is_convex(poly.exterior), 1.0
    for h in poly.holes:
        # holes are stored clockwise; flip for clipping
        ring = np.ascontiguousarray(h[::-1])
        yield ring, _ring_is_convex(ring), -1.0


def intersection_area(a: Polygon, b: Polygon) -> float:
    """Area of the intersection of two polygons, >= 0 and symmetric.

    Holes are handled by inclusion-exclusion over ring pairs, which is
    exact because holes lie inside their exteriors.
    """
    if _bbox_disjoint(a.bbox, b.bbox):
        return 0.0
    if a._area <= 0.0 or b._area <= 0.0:
        return 0.0
    # canonical operand order makes the computation literally symmetric
    ka = (a.exterior.shape[0], a.exterior.tobytes())
    kb = (b.exterior.shape[0], b.exterior.tobytes())
    if kb < ka:
        a, b = b, a
    total = 0.0
    for ring_a, conv_a, sign_a in _rings_with_convexity(a):
        for ring_b, conv_b, sign_b in _rings_with_convexity(b):
            area = _ring_intersection_area(ring_a, conv_a, ring_b, conv_b)
            total += sign_a * sign_b * area
    if total < 0.0:
        total = 0.0
    cap = min(a._area, b._area)
    return total if total <= cap else cap


def point_in_polygon(pt, poly: Polygon) -> bool:
    """Even-odd crossing test, holes excluded."""
    x, y = pt
    if not _point_in_ring(x, y, poly.exterior):
        return False
    for h in poly.holes:
        if _point_in_ring(x, y, h):
            return False
    return True


def _point_in_ring(x: float, y: float, ring: np.ndarray) -> bool:
    inside = False
    n = ring.shape[0]
    x1, y1 = ring[n - 1]
    for i in range(n):
        x2, y2 = ring[i]
        if (y1 > y) != (y2 > y):
            xi = x1 + (y - y1) / (y2 - y1) * (x2 - x1)
            if x < xi:
                inside = not inside
        x1, y1 = x2, y2
    return inside


def points_in_ring(xs: np.ndarray, ys: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Vectorized even-odd test of many points against one ring."""
    inside = np.zeros(xs.shape[0], dtype=bool)
    n = ring.shape[0]
    x1, y1 = ring[n - 1]
    for i in range(n):
        x2, y2 = ring[i]
        if y1 != y2:
            crosses = (y1 > ys) != (y2 > ys)
            if crosses.any():
                xi = x1 + (ys[crosses] - y1) / (y2 - y1) * (x2 - x1)
                flip = np.zeros_like(inside)
                flip[crosses] = xs[crosses] < xi
                inside ^= flip
        x1, y1 = x2, y2
    return inside


def _segment_ring_params(p0, p1, ring: np.ndarray) -> list:
    """Parameters t in (0, 1) where segment p0->p1 crosses ring edges."""
    ts = []
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    n = ring.shape[0]
    q0 = ring[n - 1]
    for i in range(n):
        q1 = ring[i]
        ex, ey = q1[0] - q0[0], q1[1] - q0[1]
        denom = dx * ey - dy * ex
        if denom != 0.0:
            t = ((q0[0] - p0[0]) * ey - (q0[1] - p0[1]) * ex) / denom
            u = ((q0[0] - p0[0]) * dy - (q0[1] - p0[1]) * dx) / denom
            if 0.0 < t < 1.0 and 0.0 <= u <= 1.0:
                ts.append(t)
        q0 = q1
    return ts


def polyline_length_within(line: Polyline, region: Polygon) -> float:
    """Total clipped length of the line inside the region (holes excluded)."""
    if _bbox_disjoint(line.bbox, region.bbox):
        return 0.0
    total = 0.0
    verts = line.vertices
    for s in range(verts.shape[0] - 1):
        p0 = verts[s]
        p1 = verts[s + 1]
        seg_len = math.hypot(p1[0] - p0[0], p1[1] - p0[1])
        if seg_len == 0.0:
            continue
        ts = [0.0, 1.0]
        ts += _segment_ring_params(p0, p1, region.exterior)
        for h in region.holes:
            ts += _segment_ring_params(p0, p1, h)
        ts = sorted(set(ts))
        for t0, t1 in zip(ts[:-1], ts[1:]):
            tm = 0.5 * (t0 + t1)
            mid = (p0[0] + tm * (p1[0] - p0[0]), p0[1] + tm * (p1[1] - p0[1]))
            if point_in_polygon(mid, region):
                total += (t1 - t0) * seg_len
    return total


def _point_segment_distance(px, py, ax, ay, bx, by) -> float:
    dx, dy = bx - ax, by - ay
    d2 = dx * dx + dy * dy
    if d2 == 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / d2
    t = min(1.0, max(0.0, t))
    return math.hypot(px - ax - t * dx, py - ay - t * dy)


def nearest_distance(origin: PointXY, targets) -> float:
    """Distance to the closest point or polyline in ``targets``.

    Point targets may be PointXY instances or an (n, 2) array.
    """
    targets = list(targets) if not isinstance(targets, np.ndarray) else targets
    if isinstance(targets, np.ndarray):
        if targets.size == 0:
            raise GeometryError("empty target set")
        d = np.hypot(targets[:, 0] - origin.x, targets[:, 1] - origin.y)
        return float(d.min())
    if not targets:
        raise GeometryError("empty target set")
    if isinstance(targets[0], Polyline):
        best = math.inf
        for line in targets:
            v = line.vertices
            for s in range(v.shape[0] - 1):
                dist = _point_segment_distance(
                    origin.x, origin.y, v[s, 0], v[s, 1], v[s + 1, 0], v[s + 1, 1]
                )
                if dist < best:
                    best = dist
        return best
    pts = np.array([(t.x, t.y) for t in targets])
    d = np.hypot(pts[:, 0] - origin.x, pts[:, 1] - origin.y)
    return float(d.min())


@dataclass(frozen=True)
class Projection:
    """Equirectangular lon/lat -> planar meters, fixed by a reference latitude."""

    ref_lat: float

    def to_xy(self, lon: float, lat: float) -> PointXY:
        return project_lonlat(lon, lat, self.ref_lat)

    def to_lonlat(self, x: float, y: float) -> tuple:
        lon = math.degrees(x / (EARTH_RADIUS_M * math.cos(math.radians(self.ref_lat))))
        lat = math.degrees(y / EARTH_RADIUS_M)
        return lon, lat


def project_lonlat(lon: float, lat: float, ref_lat: float) -> PointXY:
    """Equirectangular projection: x = R*lon*cos(ref_lat), y = R*lat."""
    if not abs(lat) < 90.0:
        raise GeometryError(f"latitude {lat} out of range")
    x = EARTH_RADIUS_M * math.radians(lon) * math.cos(math.radians(ref_lat))
    y = EARTH_RADIUS_M * math.radians(lat)
    return PointXY(x, y)
