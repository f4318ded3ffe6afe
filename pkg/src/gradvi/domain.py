"""Lattice grids over convex domains and anisotropic boundary distances.

A grid is the rectangular lattice spanned by the shape's bounding box.
Nodes strictly inside the shape are *interior*; lattice points on the
boundary, and outside lattice points that are axis neighbours of an
interior node, are *boundary* nodes.  An outside boundary node stands for
the point where the axis ray from its interior neighbour leaves the shape;
the fractional length of that ray is stored per interior node as an *arm*.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gauge import ConvexBody, GeometryError

__all__ = [
    "Interval",
    "Rectangle",
    "Disk",
    "ConvexPolygon",
    "shape_from_dict",
    "GridDomain",
    "ScalarField",
    "VectorField",
    "build_grid",
    "boundary_distance",
    "gauge_distance_map",
    "build_obstacles",
    "EXTERIOR",
    "BOUNDARY",
    "INTERIOR",
]

EXTERIOR, BOUNDARY, INTERIOR = 0, 1, 2

# inside points closer than this (relative to h) are treated as boundary
_SNAP = 1e-6
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_GOLDEN_MAX_ITERS = 200
_GOLDEN_RTOL = 1e-12
_DISK_STARTS = 64


class GridError(ValueError):
    pass


# --------------------------------------------------------------------- shapes

@dataclass(frozen=True)
class Interval:
    a: float = -1.0
    b: float = 1.0
    dimension = 1

    def __post_init__(self):
        if not self.b > self.a:
            raise GridError("interval needs a < b")

    def bbox(self):
        return np.array([self.a]), np.array([self.b])

    def signed_distance(self, x):
        x = x[..., 0]
        return np.maximum(self.a - x, x - self.b)

    def ray_exit(self, x, d):
        x = x[..., 0]
        return (self.b - x) if d[0] > 0 else (x - self.a)

    def segments(self):
        return []

    def points(self):
        return np.array([[self.a], [self.b]])

    @property
    def diameter(self):
        return self.b - self.a

    @property
    def feature_size(self):
        return self.b - self.a

    def to_dict(self):
        return {"kind": "interval", "a": self.a, "b": self.b}


class _HalfspaceShape:
    """Convex shape given by outward unit normals ``n_j`` and offsets ``n_j.x <= b_j``."""

    dimension = 2

    def _halfspaces(self):
        v = self.vertices()
        e = np.roll(v, -1, axis=0) - v
        nrm = np.column_stack([e[:, 1], -e[:, 0]])
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
        return nrm, np.sum(nrm * v, axis=1)

    def bbox(self):
        v = self.vertices()
        return v.min(axis=0), v.max(axis=0)

    def signed_distance(self, x):
        # exact inside; only the sign matters outside
        nrm, b = self._halfspaces()
        return np.max(x @ nrm.T - b, axis=-1)

    def ray_exit(self, x, d):
        nrm, b = self._halfspaces()
        nd = nrm @ d
        t = np.full(x.shape[:-1], np.inf)
        for j in np.flatnonzero(nd > 1e-15):
            t = np.minimum(t, (b[j] - x @ nrm[j]) / nd[j])
        return t

    def segments(self):
        v = self.vertices()
        return [(v[i], v[(i + 1) % len(v)]) for i in range(len(v))]

    @property
    def diameter(self):
        v = self.vertices()
        return float(np.max(np.linalg.norm(v[:, None] - v[None], axis=-1)))

    @property
    def feature_size(self):
        nrm, b = self._halfspaces()
        v = self.vertices()
        return float(min(np.max(b[j] - v @ nrm[j]) for j in range(len(b))))


@dataclass(frozen=True)
class Rectangle(_HalfspaceShape):
    corner: tuple = (0.0, 0.0)
    widths: tuple = (1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "corner", tuple(float(c) for c in self.corner))
        object.__setattr__(self, "widths", tuple(float(w) for w in self.widths))
        if len(self.corner) != 2 or len(self.widths) != 2 or min(self.widths) <= 0:
            raise GridError("rectangle needs a 2-D corner and positive widths")

    def vertices(self):
        x0, y0 = self.corner
        w, h = self.widths
        return np.array([[x0, y0], [x0 + w, y0], [x0 + w, y0 + h], [x0, y0 + h]])

    def bbox(self):
        c = np.array(self.corner)
        return c, c + np.array(self.widths)

    def signed_distance(self, x):
        lo, hi = self.bbox()
        return np.max(np.maximum(lo - x, x - hi), axis=-1)

    def to_dict(self):
        return {"kind": "rectangle", "corner": list(self.corner), "widths": list(self.widths)}


@dataclass(frozen=True, eq=False)
class ConvexPolygon(_HalfspaceShape):
    vertex_list: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.vertex_list, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise GridError("polygon needs at least three 2-D vertices")
        e = np.roll(v, -1, axis=0) - v
        f = np.roll(e, -1, axis=0)
        cross = e[:, 0] * f[:, 1] - e[:, 1] * f[:, 0]
        if np.any(cross <= 1e-14 * np.max(np.abs(v)) ** 2):
            raise GridError("polygon must be strictly convex and counterclockwise")
        object.__setattr__(self, "vertex_list", tuple(map(tuple, v)))

    def vertices(self):
        return np.array(self.vertex_list)

    def to_dict(self):
        return {"kind": "polygon", "vertices": [list(p) for p in self.vertex_list]}


@dataclass(frozen=True)
class Disk:
    center: tuple = (0.0, 0.0)
    radius: float = 1.0
    dimension = 2

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0 or len(self.center) != 2:
            raise GridError("disk needs a 2-D center and positive radius")

    def bbox(self):
        c = np.array(self.center)
        return c - self.radius, c + self.radius

    def signed_distance(self, x):
        return np.linalg.norm(x - np.array(self.center), axis=-1) - self.radius

    def ray_exit(self, x, d):
        y = x - np.array(self.center)
        yd = y @ d
        return -yd + np.sqrt(np.maximum(yd * yd - np.sum(y * y, axis=-1) + self.radius**2, 0.0))

    def segments(self):
        return []

    @property
    def diameter(self):
        return 2.0 * self.radius

    @property
    def feature_size(self):
        return 2.0 * self.radius

    def to_dict(self):
        return {"kind": "disk", "center": list(self.center), "radius": self.radius}


def shape_from_dict(d: dict):
    kind = d["kind"]
    if kind == "interval":
        return Interval(float(d["a"]), float(d["b"]))
    if kind == "rectangle":
        return Rectangle(tuple(d["corner"]), tuple(d["widths"]))
    if kind == "disk":
        return Disk(tuple(d["center"]), float(d["radius"]))
    if kind == "polygon":
        return ConvexPolygon(tuple(map(tuple, d["vertices"])))
    raise GridError(f"unknown domain kind {kind!r}")


# ----------------------------------------------------------------------- grid

@dataclass(eq=False)
class GridDomain:
    """Lattice ``origin + h * index`` with a node classification.

    ``kind`` and ``arms`` are indexed ``[i]`` in 1-D and ``[i, j]`` (x, y) in
    2-D.  ``arms[..., 2*d]`` / ``arms[..., 2*d+1]`` hold the fraction of ``h``
    from an interior node to the next boundary point in the ``-e_d`` /
    ``+e_d`` direction (1 unless the lattice neighbour lies outside).
    """

    shape: object
    h: float
    origin: np.ndarray
    kind: np.ndarray
    arms: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dimension(self) -> int:
        return self.kind.ndim

    @property
    def dims(self) -> tuple:
        return self.kind.shape

    @property
    def cell_volume(self) -> float:
        return self.h**self.dimension

    def coordinates(self) -> np.ndarray:
        axes = [self.origin[d] + self.h * np.arange(self.dims[d]) for d in range(self.dimension)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    @property
    def interior(self) -> np.ndarray:
        return self.kind == INTERIOR

    @property
    def boundary(self) -> np.ndarray:
        return self.kind == BOUNDARY

    @property
    def active(self) -> np.ndarray:
        return self.kind != EXTERIOR

    @property
    def n_interior(self) -> int:
        return int(np.count_nonzero(self.interior))

    def __repr__(self):
        return (f"GridDomain(shape={self.shape!r}, h={self.h!r}, dims={self.dims}, "
                f"interior={self.n_interior})")


def build_grid(shape, h: float) -> GridDomain:
    """Classify the bounding-box lattice of ``shape`` at spacing ``h``."""
    h = float(h)
    if not h > 0:
        raise GridError("spacing must be positive")
    lo, hi = shape.bbox()
    counts = [int(math.ceil((hi[d] - lo[d]) / h - 1e-9)) + 1 for d in range(shape.dimension)]
    axes = [lo[d] + h * np.arange(counts[d]) for d in range(shape.dimension)]
    x = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    sd = shape.signed_distance(x)
    tol = _SNAP * h
    inside = sd < -tol
    outside = sd > tol
    if not inside.any():
        raise GridError(f"spacing h={h} is too coarse: no interior node")

    kind = np.where(inside, INTERIOR, np.where(outside, EXTERIOR, BOUNDARY)).astype(np.int8)
    n = shape.dimension
    arms = np.ones(kind.shape + (2 * n,))
    for d in range(n):
        for side, step in enumerate((-1, 1)):
            nb_inside = np.roll(inside, -step, axis=d)
            nb_outside = np.roll(outside, -step, axis=d)
            # np.roll wraps around; lattice edges never hold interior nodes
            edge = [slice(None)] * n
            edge[d] = -1 if step == 1 else 0
            nb_outside[tuple(edge)] = True
            nb_inside[tuple(edge)] = False
            # outside lattice neighbours of interior nodes become boundary nodes
            src = np.roll(inside, step, axis=d)
            src_edge = [slice(None)] * n
            src_edge[d] = 0 if step == 1 else -1
            src[tuple(src_edge)] = False
            kind[src & outside] = BOUNDARY

            cut = inside & nb_outside
            if cut.any():
                e = np.zeros(n)
                e[d] = step
                t = shape.ray_exit(x[cut], e) / h
                arms[cut, 2 * d + side] = np.clip(t, _SNAP, 1.0)
    return GridDomain(shape, h, np.asarray(lo, dtype=float), kind, arms)


# ---------------------------------------------------------------------- fields

@dataclass(eq=False)
class ScalarField:
    """Node values on a grid; exterior nodes hold NaN."""

    grid: GridDomain
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.dims:
            raise GridError(f"field shape {self.values.shape} does not match grid {self.grid.dims}")

    @property
    def interior_values(self) -> np.ndarray:
        return self.values[self.grid.interior]

    def copy(self):
        return ScalarField(self.grid, self.values.copy())

    @classmethod
    def constant(cls, grid, c):
        return cls(grid, np.where(grid.active, float(c), np.nan))


@dataclass(eq=False)
class VectorField:
    """N-component node values; ``values`` has shape ``grid.dims + (N,)``."""

    grid: GridDomain
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[:-1] != self.grid.dims:
            raise GridError("vector field shape does not match grid")

    @property
    def components(self) -> int:
        return self.values.shape[-1]


# -------------------------------------------------------------------- distance

def _golden_min(f, lo, hi, scale):
    """Vectorised golden-section minimisation of unimodal ``f`` on ``[lo, hi]``."""
    a, b = lo.copy(), hi.copy()
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(_GOLDEN_MAX_ITERS):
        if np.all(b - a <= _GOLDEN_RTOL * scale):
            break
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new = np.where(left, b - _GOLDEN * (b - a), a + _GOLDEN * (b - a))
        fnew = f(new)
        c, d, fc, fd = (np.where(left, new, d), np.where(left, c, new),
                        np.where(left, fnew, fd), np.where(left, fc, fnew))
    return np.minimum.reduce([fc, fd, f(a), f(b)])


def boundary_distance(shape, points, metric: ConvexBody) -> np.ndarray:
    """``min_{y on the boundary} gauge(x - y)`` for points inside ``shape``.

    ``metric`` is the body whose gauge measures length.
    """
    x = np.asarray(points, dtype=float).reshape(-1, shape.dimension)
    if metric.dimension != shape.dimension:
        raise GeometryError("metric body and domain dimensions differ")
    if x.shape[0] == 0:
        return np.zeros(0)
    if isinstance(shape, Interval):
        return np.minimum(metric.gauge(x - shape.a), metric.gauge(x - shape.b))
    if isinstance(shape, Disk):
        c = np.array(shape.center)
        R = shape.radius

        def f_of(theta, xx):
            y = c + R * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
            return metric.gauge(xx - y)

        th = 2 * np.pi * np.arange(_DISK_STARTS) / _DISK_STARTS
        vals = f_of(th[None, :], x[:, None, :])
        # refine around every sampled local minimum, keep the best
        is_min = (vals <= np.roll(vals, 1, axis=1)) & (vals <= np.roll(vals, -1, axis=1))
        best = np.full(x.shape[0], np.inf)
        step = 2 * np.pi / _DISK_STARTS
        rows, cols = np.nonzero(is_min)
        for start in range(0, len(rows), 200_000):
            r, k = rows[start:start + 200_000], cols[start:start + 200_000]
            xr = x[r]
            v = _golden_min(lambda t: f_of(t, xr), th[k] - step, th[k] + step, 2 * step)
            np.minimum.at(best, r, v)
        return best
    best = np.full(x.shape[0], np.inf)
    for p0, p1 in shape.segments():
        seg = p1 - p0
        f = lambda s: metric.gauge(x - p0 - s[:, None] * seg)
        zero, one = np.zeros(len(x)), np.ones(len(x))
        best = np.minimum(best, _golden_min(f, zero, one, 1.0))
    return best


def gauge_distance_map(grid: GridDomain, metric: ConvexBody) -> ScalarField:
    """Anisotropic distance to the boundary at every node (0 on boundary nodes).

    The extremal obstacles of the gradient-constrained problem with body K
    use ``metric = polar(K)``.
    """
    if metric.dimension != grid.dimension:
        raise GeometryError("metric body and grid dimensions differ")
    out = np.where(grid.active, 0.0, np.nan)
    pts = grid.coordinates()[grid.interior]
    out[grid.interior] = boundary_distance(grid.shape, pts, metric)
    return ScalarField(grid, out)


def build_obstacles(dist: ScalarField, c: float, k: float):
    """Lower and upper obstacles ``c -/+ k * dist``."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    if np.any(dist.values[dist.grid.active] < 0):
        raise ValueError("distance must be nonnegative")
    lower = c - k * dist.values
    upper = c + k * dist.values
    b = dist.grid.boundary
    lower[b] = c
    upper[b] = c
    return ScalarField(dist.grid, lower), ScalarField(dist.grid, upper)
