"""Independent reference computations used to freeze expected test values.

Nothing here imports the package; each oracle is a deliberately different
(and usually slower) route to the quantity under test.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra


def torsion_1d(x, eta):
    """Elastic-plastic torsion on (-1, 1) with unit gradient bound.

    Elastic core ``|x| < 1/eta`` solves ``-u'' = eta`` and matches ``1 - |x|``
    with slope -1 at ``x* = 1/eta`` (when ``eta > 1``); otherwise the
    unconstrained parabola is feasible.
    """
    x = np.abs(np.asarray(x, dtype=float))
    if eta <= 1:
        return eta * (1 - x**2) / 2
    xs = 1.0 / eta
    core = 1 - xs + eta * (xs**2 - x**2) / 2
    return np.where(x < xs, core, 1 - x)


def pnorm(x, p):
    x = np.abs(np.asarray(x, dtype=float))
    return np.sum(x**p, axis=-1) ** (1.0 / p)


def regular_polygon(sides, circumradius, center=(0.0, 0.0), rotation=0.0):
    t = rotation + 2 * np.pi * np.arange(sides) / sides
    return np.column_stack([center[0] + circumradius * np.cos(t), center[1] + circumradius * np.sin(t)])


def _inside_polygon(pts, verts):
    # counterclockwise vertices: inside iff left of every edge
    ok = np.ones(len(pts), bool)
    for a, b in zip(verts, np.roll(verts, -1, axis=0)):
        e = b - a
        cross = e[0] * (pts[:, 1] - a[1]) - e[1] * (pts[:, 0] - a[0])
        ok &= cross > 0
    return ok


def _segment_exit(p, q, verts):
    """Fraction t in (0, 1] where segment p -> q leaves the polygon."""
    t_exit = 1.0
    for a, b in zip(verts, np.roll(verts, -1, axis=0)):
        e = b - a
        f_p = e[0] * (p[1] - a[1]) - e[1] * (p[0] - a[0])
        f_q = e[0] * (q[1] - a[1]) - e[1] * (q[0] - a[0])
        if f_q < 0 <= f_p:
            t_exit = min(t_exit, f_p / (f_p - f_q))
    return t_exit


def dijkstra_polygon_distance(verts, h, gauge):
    """Boundary distance by shortest paths on the 8-connected lattice.

    Lattice nodes strictly inside the polygon are linked to their 8
    neighbours with weight ``gauge(step)``; a step that leaves the polygon
    becomes a link to a common boundary sink weighted by the gauge of the
    portion inside.  Returns ``(points, distances)``.
    """
    lo = verts.min(axis=0)
    hi = verts.max(axis=0)
    nx = int(math.ceil((hi[0] - lo[0]) / h - 1e-9)) + 1
    ny = int(math.ceil((hi[1] - lo[1]) / h - 1e-9)) + 1
    X, Y = np.meshgrid(lo[0] + h * np.arange(nx), lo[1] + h * np.arange(ny), indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    inside = _inside_polygon(pts, verts)
    idx = -np.ones(len(pts), int)
    idx[inside] = np.arange(inside.sum())
    m = int(inside.sum())
    sink = m
    rows, cols, w = [], [], []
    steps = [(1, 0), (0, 1), (1, 1), (1, -1), (-1, 0), (0, -1), (-1, -1), (-1, 1)]
    for flat in np.flatnonzero(inside):
        i, j = divmod(flat, ny)
        p = pts[flat]
        for di, dj in steps:
            s = np.array([di * h, dj * h])
            ii, jj = i + di, j + dj
            nb = ii * ny + jj if 0 <= ii < nx and 0 <= jj < ny else -1
            if nb >= 0 and inside[nb]:
                rows.append(idx[flat])
                cols.append(idx[nb])
                w.append(gauge(s))
            else:
                t = _segment_exit(p, p + s, verts)
                rows.append(idx[flat])
                cols.append(sink)
                w.append(gauge(t * s))
    G = coo_matrix((w, (rows, cols)), shape=(m + 1, m + 1)).tocsr()
    # shortest path from each node to the sink: run from the sink on the transpose
    dist = dijkstra(G.T.tocsr(), directed=True, indices=sink)[:m]
    return pts[inside], dist


def zoom_projection(y, inside, lo, hi, levels=40, n=41):
    """Nearest feasible point to ``y`` by repeated lattice search.

    Scans an ``n x n`` lattice over the box ``[lo, hi]``, keeps the nearest
    feasible node, then halves the box around it.  Halving (rather than a
    faster shrink) keeps the optimum inside the box near sharp vertices.
    """
    y = np.asarray(y, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    best = None
    for _ in range(levels):
        gx, gy = np.meshgrid(np.linspace(lo[0], hi[0], n), np.linspace(lo[1], hi[1], n), indexing="ij")
        cand = np.column_stack([gx.ravel(), gy.ravel()])
        cand = cand[inside(cand)]
        if len(cand) == 0:
            break
        best = cand[np.argmin(np.sum((cand - y) ** 2, axis=1))]
        half = (hi - lo) / 4
        lo, hi = best - half, best + half
    return best


def brute_force_max_gauge(gauge, count=1_000_000):
    t = 2 * np.pi * (np.arange(count) + 0.5) / count
    z = np.column_stack([np.cos(t), np.sin(t)])
    return float(np.max(gauge(z)))


def disk_interior_count(center, radius, h, snap):
    lo = np.asarray(center) - radius
    n = int(math.ceil(2 * radius / h - 1e-9)) + 1
    count = 0
    for i in range(n):
        for j in range(n):
            x = lo[0] + i * h
            y = lo[1] + j * h
            if math.hypot(x - center[0], y - center[1]) < radius - snap:
                count += 1
    return count
