"""Empirical interior second-derivative bounds.

For a solution ``u`` with boundary distance ``d`` (measured in the gauge of
the polar body) the diagnostic ratio is

    r(x) = max_z |u(x + hz) + u(x - hz) - 2u(x)| / h^2
           / (|eta| + k A^2 B / d(x) + A^2 |c| / d(x)^2)

where ``A`` bounds the polar gauge by the Euclidean norm and ``B`` bounds
its second differences.  Boundedness of ``max r`` under grid refinement is
the observable signature of bounded second derivatives.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .domain import INTERIOR, GridDomain, ScalarField
from .gauge import (Box, ConvexBody, CrossPolytope, EuclideanBall, PNormBall, Polytope,
                    pnorm_B_constant, second_difference_gauge, unit_directions)

__all__ = [
    "BoundParams",
    "RegularityReport",
    "estimate_A",
    "estimate_B",
    "estimate_B_raw",
    "bound_params",
    "second_difference_field",
    "bound_profile",
    "refinement_table",
]

A_SAMPLES = 4096
B_SAMPLES = 10_000
# nodes with d > INTERIOR_FRACTION * diameter form the fixed comparison region
INTERIOR_FRACTION = 0.1


@dataclass(frozen=True)
class BoundParams:
    A: float
    B: float
    k: float
    c: float
    eta: float
    n: int

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError("A must be positive")
        if not self.B >= 1:
            raise ValueError("B must be at least 1")

    def to_dict(self):
        return {"A": self.A, "B": self.B, "k": self.k, "c": self.c, "eta": self.eta, "n": self.n}


@dataclass
class RegularityReport:
    ratio: ScalarField = field(repr=False)
    second_difference: ScalarField = field(repr=False)
    max_ratio: float
    max_ratio_interior: float
    max_second_difference_interior: float
    n_nodes: int
    n_interior: int
    h: float

    def to_dict(self):
        return {
            "h": self.h,
            "max_ratio": self.max_ratio,
            "max_ratio_interior": self.max_ratio_interior,
            "max_second_difference_interior": self.max_second_difference_interior,
            "n_nodes": self.n_nodes,
            "n_interior": self.n_interior,
        }


def estimate_A(metric: ConvexBody, samples: int = A_SAMPLES) -> float:
    """Smallest ``A`` with ``gauge(x) <= A |x|`` for ``metric``'s gauge.

    Closed forms for the standard families; the maximum over ``samples``
    quasi-uniform unit vectors otherwise.
    """
    n = metric.dimension
    if isinstance(metric, EuclideanBall):
        return 1.0 / metric.radius
    if isinstance(metric, PNormBall):
        if math.isinf(metric.p):
            return 1.0 / metric.radius
        return n ** max(0.0, 1.0 / metric.p - 0.5) / metric.radius
    if isinstance(metric, Box):
        return 1.0 / float(np.min(metric.half_widths))
    if isinstance(metric, CrossPolytope):
        return math.sqrt(n) / metric.scale
    if isinstance(metric, Polytope):
        return float(np.max(np.linalg.norm(metric.normals, axis=1) / metric.offsets))
    return float(np.max(metric.gauge(unit_directions(n, samples))))


def estimate_B_raw(metric: ConvexBody, samples: int = B_SAMPLES, seed: int = 0) -> float:
    """Largest ``(gauge(x) - h) * second difference`` over random admissible
    triples, floored at 1.

    By homogeneity the points are drawn on the unit gauge sphere; steps are
    uniform in ``(0, 1)`` and directions are normalized to unit gauge.
    """
    if samples < 1000:
        raise ValueError("need at least 1000 samples")
    rng = np.random.default_rng(seed)
    n = metric.dimension
    x = rng.standard_normal((samples, n))
    x /= metric.gauge(x)[:, None]
    z = rng.standard_normal((samples, n))
    z /= metric.gauge(z)[:, None]
    h = rng.uniform(0.0, 1.0, samples)
    h = np.clip(h, 1e-6, 1.0 - 1e-6)
    d2 = second_difference_gauge(metric, x, z, h)
    return float(max(1.0, np.max(d2 * (metric.gauge(x) - h))))


def estimate_B(metric: ConvexBody, samples: int = B_SAMPLES, seed: int = 0) -> float:
    """:func:`estimate_B_raw`, capped by ``2(p - 1)`` for p-norm gauges with
    ``p >= 2`` where that constant is a proven bound."""
    b = estimate_B_raw(metric, samples, seed)
    p = None
    if isinstance(metric, EuclideanBall):
        p = 2.0
    elif isinstance(metric, PNormBall) and not math.isinf(metric.p):
        p = metric.p
    if p is not None and p >= 2:
        b = min(b, pnorm_B_constant(p))
    return b


def bound_params(body: ConvexBody, k: float, c: float, eta: float, seed: int = 0) -> BoundParams:
    """Constants for the constraint body ``body`` (the metric is its polar)."""
    metric = body.polar_body
    return BoundParams(estimate_A(metric), estimate_B(metric, seed=seed), float(k), float(c),
                       float(np.linalg.norm(np.atleast_1d(eta))), body.dimension)


def _stencil_directions(n: int, directions: int) -> list[tuple[int, ...]]:
    if n == 1:
        return [(1,)]
    if n != 2:
        raise ValueError("second differences are implemented for 1-D and 2-D grids")
    if directions < 4:
        raise ValueError("need at least 4 directions")
    steps = [(1, 0), (0, 1), (1, 1), (1, -1)]
    if directions >= 8:
        steps += [(2, 1), (1, 2), (2, -1), (1, -2)]
    return steps


def second_difference_field(u: ScalarField, directions: int = 4) -> ScalarField:
    """Largest absolute second difference over lattice directions.

    Along the lattice step ``s`` the difference is divided by ``|s|^2 h^2``
    so that it approximates the unit-direction second derivative.  Nodes
    whose needed neighbours are not all interior get NaN.
    """
    g = u.grid
    vals = u.values
    inside = g.kind == INTERIOR
    out = np.full(g.dims, -np.inf)
    ok_any = np.zeros(g.dims, bool)
    for s in _stencil_directions(g.dimension, directions):
        s = np.asarray(s)
        center = [slice(None)] * g.dimension
        plus = [slice(None)] * g.dimension
        minus = [slice(None)] * g.dimension
        valid = True
        for d, sd in enumerate(s):
            a = abs(int(sd))
            if 2 * a >= g.dims[d]:
                valid = False
                break
            center[d] = slice(a, g.dims[d] - a)
            plus[d] = slice(a + sd, g.dims[d] - a + sd)
            minus[d] = slice(a - sd, g.dims[d] - a - sd)
        if not valid:
            continue
        c, p, m = tuple(center), tuple(plus), tuple(minus)
        ok = inside[c] & inside[p] & inside[m]
        d2 = np.abs(vals[p] + vals[m] - 2 * vals[c]) / (float(s @ s) * g.h**2)
        sub = out[c]
        sub[ok] = np.maximum(sub[ok], d2[ok])
        out[c] = sub
        okc = ok_any[c]
        okc |= ok
        ok_any[c] = okc
    return ScalarField(g, np.where(ok_any, out, np.nan))


def bound_profile(u: ScalarField, dist: ScalarField, params: BoundParams,
                  directions: int = 4) -> RegularityReport:
    """Ratio of measured second differences to the interior bound's shape.

    The ratio is defined where ``d > 2 A h``; the interior maxima use the
    fixed region ``d > 0.1 * diameter`` so that they are comparable across
    grids.
    """
    g = u.grid
    sd = second_difference_field(u, directions)
    d = dist.values
    with np.errstate(divide="ignore", invalid="ignore"):
        rhs = params.eta + params.k * params.A**2 * params.B / d + params.A**2 * abs(params.c) / d**2
        ratio = sd.values / rhs
    keep = np.isfinite(ratio) & (d > 2 * params.A * g.h)
    ratio = np.where(keep, ratio, np.nan)
    region = keep & (d > INTERIOR_FRACTION * g.shape.diameter)
    return RegularityReport(
        ratio=ScalarField(g, ratio),
        second_difference=sd,
        max_ratio=float(np.max(ratio[keep], initial=0.0)),
        max_ratio_interior=float(np.max(ratio[region], initial=0.0)),
        max_second_difference_interior=float(np.max(sd.values[region], initial=0.0)),
        n_nodes=int(keep.sum()),
        n_interior=int(region.sum()),
        h=g.h,
    )


def refinement_table(solve, h_list, params: BoundParams, directions: int = 4) -> list[dict]:
    """Run ``solve(h) -> (u, dist)`` for each ``h`` and tabulate the report.

    Each row also carries ``h**-2`` and the relative change of the interior
    maximum ratio with respect to the previous row.
    """
    rows = []
    prev = None
    for h in h_list:
        u, dist = solve(h)
        rep = bound_profile(u, dist, params, directions).to_dict()
        rep["inv_h2"] = 1.0 / h**2
        m = rep["max_ratio_interior"]
        rep["relative_change"] = None if prev is None else abs(m - prev) / prev
        prev = m
        rows.append(rep)
    return rows
