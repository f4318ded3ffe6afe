"""Gauges, polar bodies and related inequalities for balanced convex bodies.

Every body here is balanced (``K = -K``), compact, and has the origin in its
interior, so its gauge is a norm.  All gauges and polars are closed form;
general convex bodies enter as polytopes given by pairs of halfspaces.

Gauges accept arrays of shape ``(..., n)`` and reduce over the last axis.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "ConvexBody",
    "EuclideanBall",
    "PNormBall",
    "Box",
    "CrossPolytope",
    "Polytope",
    "gauge_eval",
    "polar",
    "support",
    "duality_gap",
    "operator_norm_2K",
    "second_difference_gauge",
    "pnorm_B_constant",
    "unit_directions",
    "body_from_dict",
]

_OPNORM_SAMPLES = 4096
_OPNORM_SEED = 20120601


class GeometryError(ValueError):
    """Raised on dimension mismatches and violated preconditions."""


def _check_dim(x, n):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (n,):
        raise GeometryError(f"expected points with {n} components, got shape {x.shape}")
    return x


class ConvexBody:
    """Base class.  Subclasses implement ``_gauge`` and ``_polar``."""

    dimension: int

    def gauge(self, x):
        return self._gauge(_check_dim(x, self.dimension))

    def polar(self) -> "ConvexBody":
        return self._polar()

    @cached_property
    def polar_body(self) -> "ConvexBody":
        return self._polar()

    def support(self, y):
        """Support function ``max_{k in K} y.k``, i.e. the polar gauge."""
        return self.polar_body.gauge(y)

    def to_dict(self) -> dict:
        raise NotImplementedError

    def _gauge(self, x):
        raise NotImplementedError

    def _polar(self):
        raise NotImplementedError


@dataclass(frozen=True)
class EuclideanBall(ConvexBody):
    radius: float = 1.0
    dimension: int = 2

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError("radius must be positive")
        if self.dimension < 1:
            raise GeometryError("dimension must be positive")

    def _gauge(self, x):
        return np.sqrt(np.sum(x * x, axis=-1)) / self.radius

    def _polar(self):
        return EuclideanBall(1.0 / self.radius, self.dimension)

    def to_dict(self):
        return {"family": "ball", "radius": self.radius, "dimension": self.dimension}


@dataclass(frozen=True)
class PNormBall(ConvexBody):
    """``{x : |x|_p <= radius}`` for ``1 <= p <= inf``."""

    p: float = 2.0
    radius: float = 1.0
    dimension: int = 2

    def __post_init__(self):
        if not self.p >= 1:
            raise GeometryError("p must be >= 1")
        if not self.radius > 0:
            raise GeometryError("radius must be positive")
        if self.dimension < 1:
            raise GeometryError("dimension must be positive")

    @property
    def conjugate_exponent(self) -> float:
        if self.p == 1:
            return math.inf
        if math.isinf(self.p):
            return 1.0
        return self.p / (self.p - 1.0)

    def _gauge(self, x):
        a = np.abs(x)
        if math.isinf(self.p):
            return np.max(a, axis=-1) / self.radius
        if self.p == 1:
            return np.sum(a, axis=-1) / self.radius
        if self.p == 2:
            return np.sqrt(np.sum(a * a, axis=-1)) / self.radius
        # scale by the max entry to keep a**p in range
        m = np.max(a, axis=-1, keepdims=True)
        safe = np.where(m > 0, m, 1.0)
        s = np.sum((a / safe) ** self.p, axis=-1) ** (1.0 / self.p)
        return m[..., 0] * s / self.radius

    def _polar(self):
        return PNormBall(self.conjugate_exponent, 1.0 / self.radius, self.dimension)

    def to_dict(self):
        p = "inf" if math.isinf(self.p) else self.p
        return {"family": "pball", "p": p, "radius": self.radius, "dimension": self.dimension}


@dataclass(frozen=True)
class Box(ConvexBody):
    half_widths: tuple = (1.0, 1.0)

    def __post_init__(self):
        hw = tuple(float(w) for w in self.half_widths)
        if not hw or min(hw) <= 0:
            raise GeometryError("half-widths must be positive")
        object.__setattr__(self, "half_widths", hw)

    @property
    def dimension(self):
        return len(self.half_widths)

    def _gauge(self, x):
        return np.max(np.abs(x) / np.asarray(self.half_widths), axis=-1)

    def _polar(self):
        # {y : sum w_i |y_i| <= 1}, one halfspace per sign pattern
        w = np.asarray(self.half_widths)
        signs = np.array(list(itertools.product((1.0, -1.0), repeat=self.dimension)))
        a = signs * w
        norms = np.linalg.norm(a, axis=1)
        return Polytope(a / norms[:, None], 1.0 / norms)

    def to_dict(self):
        return {"family": "box", "half_widths": list(self.half_widths)}


@dataclass(frozen=True)
class CrossPolytope(ConvexBody):
    """``{x : |x|_1 <= scale}``."""

    scale: float = 1.0
    dimension: int = 2

    def __post_init__(self):
        if not self.scale > 0:
            raise GeometryError("scale must be positive")

    def _gauge(self, x):
        return np.sum(np.abs(x), axis=-1) / self.scale

    def _polar(self):
        return Box((1.0 / self.scale,) * self.dimension)

    def to_dict(self):
        return {"family": "cross", "scale": self.scale, "dimension": self.dimension}


@dataclass(frozen=True, eq=False)
class Polytope(ConvexBody):
    """Intersection of halfspaces ``a_j . x <= b_j`` with unit ``a_j``, ``b_j > 0``.

    Halfspaces must come in pairs ``(a, b)``, ``(-a, b)``; use
    :meth:`symmetric` to build one from half of the pairs.
    """

    normals: np.ndarray = field(default_factory=lambda: np.eye(2))
    offsets: np.ndarray = field(default_factory=lambda: np.ones(2))

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.normals, dtype=float))
        b = np.asarray(self.offsets, dtype=float).reshape(-1)
        if a.shape[0] != b.shape[0]:
            raise GeometryError("need one offset per normal")
        if np.any(b <= 0):
            raise GeometryError("offsets must be positive (origin in the interior)")
        norms = np.linalg.norm(a, axis=1)
        if np.any(norms == 0):
            raise GeometryError("zero normal")
        a = a / norms[:, None]
        b = b / norms
        for aj, bj in zip(a, b):
            match = np.all(np.abs(a + aj) < 1e-9, axis=1) & (np.abs(b - bj) < 1e-9 * max(1.0, bj))
            if not match.any():
                raise GeometryError("polytope halfspaces must come in +/- pairs (balanced body)")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "normals", a)
        object.__setattr__(self, "offsets", b)
        if self.vertices().shape[0] == 0:
            raise GeometryError("polytope is unbounded")

    @classmethod
    def symmetric(cls, normals, offsets):
        a = np.atleast_2d(np.asarray(normals, dtype=float))
        b = np.asarray(offsets, dtype=float).reshape(-1)
        return cls(np.vstack([a, -a]), np.concatenate([b, b]))

    @classmethod
    def regular(cls, sides: int, inradius: float = 1.0, rotation: float = 0.0):
        """Regular 2-D polygon with an even number of sides."""
        if sides % 2 or sides < 4:
            raise GeometryError("a balanced regular polygon needs an even number (>= 4) of sides")
        t = rotation + 2 * np.pi * np.arange(sides) / sides
        return cls(np.column_stack([np.cos(t), np.sin(t)]), np.full(sides, float(inradius)))

    @property
    def dimension(self):
        return self.normals.shape[1]

    def _gauge(self, x):
        return np.maximum(np.max((x @ self.normals.T) / self.offsets, axis=-1), 0.0)

    def vertices(self) -> np.ndarray:
        """Vertices by brute force over n-subsets of the halfspaces."""
        n = self.normals.shape[1]
        out = []
        for idx in itertools.combinations(range(len(self.offsets)), n):
            A = self.normals[list(idx)]
            if abs(np.linalg.det(A)) < 1e-12:
                continue
            v = np.linalg.solve(A, self.offsets[list(idx)])
            if np.all(self.normals @ v <= self.offsets + 1e-10):
                if not any(np.linalg.norm(v - w) < 1e-9 for w in out):
                    out.append(v)
        verts = np.array(out).reshape(-1, n)
        if n == 2 and len(verts):
            verts = verts[np.argsort(np.arctan2(verts[:, 1], verts[:, 0]))]
        return verts

    def _polar(self):
        v = self.vertices()
        r = np.linalg.norm(v, axis=1)
        return Polytope(v / r[:, None], 1.0 / r)

    def to_dict(self):
        return {"family": "polytope", "normals": self.normals.tolist(), "offsets": self.offsets.tolist()}


def body_from_dict(d: dict, dimension: int | None = None) -> ConvexBody:
    """Inverse of ``ConvexBody.to_dict``; ``dimension`` fills in a missing one."""
    d = dict(d)
    fam = d.pop("family")
    dim = d.pop("dimension", dimension)
    if fam == "ball":
        return EuclideanBall(float(d.pop("radius", 1.0)), int(dim or 2))
    if fam == "pball":
        p = d.pop("p")
        p = math.inf if p in ("inf", math.inf) else float(p)
        return PNormBall(p, float(d.pop("radius", 1.0)), int(dim or 2))
    if fam == "box":
        hw = d.pop("half_widths")
        if np.isscalar(hw):
            hw = (float(hw),) * int(dim or 2)
        return Box(tuple(hw))
    if fam == "cross":
        return CrossPolytope(float(d.pop("scale", 1.0)), int(dim or 2))
    if fam == "polytope":
        if d.pop("symmetric", False):
            return Polytope.symmetric(d.pop("normals"), d.pop("offsets"))
        return Polytope(np.asarray(d.pop("normals")), np.asarray(d.pop("offsets")))
    raise GeometryError(f"unknown body family {fam!r}")


def gauge_eval(body: ConvexBody, x):
    """``inf{t > 0 : x in t K}``."""
    return body.gauge(x)


def polar(body: ConvexBody) -> ConvexBody:
    """Polar body ``{y : y.k <= 1 for all k in K}``."""
    return body.polar()


def support(body: ConvexBody, y):
    return body.support(y)


def duality_gap(body: ConvexBody, x, y):
    """``gauge_K(x) * gauge_polar(y) - x.y``; nonnegative up to roundoff."""
    x = _check_dim(x, body.dimension)
    y = _check_dim(y, body.dimension)
    return body.gauge(x) * body.polar_body.gauge(y) - np.sum(x * y, axis=-1)


def unit_directions(n: int, count: int = _OPNORM_SAMPLES, seed: int = _OPNORM_SEED) -> np.ndarray:
    """Deterministic quasi-uniform unit vectors in R^n."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        t = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.column_stack([np.cos(t), np.sin(t)])
    if n == 3:
        i = np.arange(count) + 0.5
        phi = np.arccos(1 - 2 * i / count)
        theta = np.pi * (1 + 5**0.5) * i
        return np.column_stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)])
    z = np.random.default_rng(seed).standard_normal((count, n))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def operator_norm_2K(A, body: ConvexBody):
    """``sup_z |A z| / gauge_K(z)`` for an N x n matrix (or a stack of them).

    Exact for balls, boxes, cross-polytopes and polytopes (vertex
    enumeration).  Other p-balls use the maximum over a fixed sample of
    4096 directions, which never exceeds the true value.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != body.dimension:
        raise GeometryError(f"matrix must have {body.dimension} columns, got shape {A.shape}")
    n = body.dimension
    if isinstance(body, EuclideanBall) or (isinstance(body, PNormBall) and body.p == 2):
        return body.radius * np.linalg.norm(A, ord=2, axis=(-2, -1))
    if isinstance(body, PNormBall) and (body.p == 1 or math.isinf(body.p)):
        body = CrossPolytope(body.radius, n) if body.p == 1 else Box((body.radius,) * n)
    if isinstance(body, Box):
        signs = np.array(list(itertools.product((1.0, -1.0), repeat=n)))
        pts = signs * np.asarray(body.half_widths)
    elif isinstance(body, CrossPolytope):
        pts = body.scale * np.eye(n)
    elif isinstance(body, Polytope):
        pts = body.vertices()
    else:
        z = unit_directions(n)
        pts = z / body.gauge(z)[:, None]
    # |A p| over the extreme points / samples; chunk to bound memory
    flat = A.reshape(-1, A.shape[-2], n)
    out = np.empty(flat.shape[0])
    step = max(1, 2_000_000 // (pts.shape[0] * A.shape[-2]))
    for s in range(0, flat.shape[0], step):
        img = np.einsum("kNn,mn->kmN", flat[s : s + step], pts)
        out[s : s + step] = np.sqrt(np.max(np.sum(img * img, axis=-1), axis=-1))
    return out.reshape(A.shape[:-2])


def second_difference_gauge(body: ConvexBody, x, z, h: float) -> float:
    """Centered second difference of ``body``'s gauge at ``x`` along ``z``.

    Requires ``gauge(z) == 1`` (to 1e-10) and ``0 < h < gauge(x)``.  In the
    regularity setting ``body`` is the polar of the constraint body.
    """
    x = _check_dim(x, body.dimension)
    z = _check_dim(z, body.dimension)
    gx = body.gauge(x)
    if np.any(np.abs(body.gauge(z) - 1.0) > 1e-10):
        raise GeometryError("direction must have unit gauge")
    h = np.asarray(h, dtype=float)
    if np.any(h <= 0) or np.any(h >= gx):
        raise GeometryError("need 0 < h < gauge(x)")
    hz = h[..., None] * z
    return (body.gauge(x + hz) + body.gauge(x - hz) - 2 * gx) / (h * h)


def pnorm_B_constant(p: float) -> float:
    if p < 2:
        raise GeometryError("the second-difference constant is only available for p >= 2")
    return 2.0 * (p - 1.0)
