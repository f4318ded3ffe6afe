"""Gradient-constrained minimization by ADMM.

Minimizes

    1/2 sum_e w_e (D_e v)^2 + h^n sum_i g(v_i)

subject to ``gamma_K(grad v) <= k`` on every cell, with ``v = c`` on the
boundary.  The splitting variable ``w`` lives on edges and is projected cell
by cell; the quadratic penalty uses the uniform weight ``h^n`` so that each
cell projection is an ordinary Euclidean one.  A cell missing some of its
edges (at the boundary) constrains only the components it has: component
``d`` is clipped to ``[-k s_d, k s_d]`` with ``s_d`` the support of ``K`` in
direction ``e_d``, which is the exact shadow of ``kK`` on that axis.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discrete import Stencil, dirichlet_energy, stencil
from .domain import GridDomain, ScalarField
from .gauge import ConvexBody
from .obstacle import Linear, PluggableConvex, SolveStats, _compiled
from .projections import project_onto

__all__ = [
    "GradientField",
    "GradientProblem",
    "discrete_gradient",
    "discrete_divergence",
    "project_gradient",
    "cell_gauge",
    "feasibility_profile",
    "admm_solve",
    "gradient_energy",
    "lipschitz_excess",
    "field_inner",
    "prox_operator",
]

log = logging.getLogger(__name__)


@dataclass(eq=False)
class GradientField:
    """Per-edge values of a discrete gradient.

    ``edge_values`` has one entry per stencil edge (shape ``(n_edges,)`` or
    ``(n_edges, N)``); :meth:`cells` arranges them per cell.
    """

    grid: GridDomain
    edge_values: np.ndarray

    def cells(self) -> np.ndarray:
        return stencil(self.grid).cell_vectors(self.edge_values)

    def inner(self, other: "GradientField") -> float:
        """Weighted inner product ``sum_e w_e p_e q_e``."""
        w = stencil(self.grid).edge_weight
        prod = self.edge_values * other.edge_values
        if prod.ndim > 1:
            prod = prod.sum(axis=1)
        return float(np.dot(w, prod))


@dataclass(eq=False)
class GradientProblem:
    grid: GridDomain
    body: ConvexBody
    k: float
    c: float = 0.0
    zero_order: object = field(default_factory=Linear)


def discrete_gradient(v: ScalarField) -> GradientField:
    """Forward differences of a field, using its stored boundary values."""
    st = stencil(v.grid)
    flat = v.values.reshape(-1)
    return GradientField(v.grid, (flat[st.edge_q] - flat[st.edge_p]) / st.edge_len)


def discrete_divergence(w: GradientField) -> ScalarField:
    """Negative adjoint of :func:`discrete_gradient` on fields vanishing at
    the boundary.

    With ``<u, v> = h^n sum_interior u v`` and the weighted edge product of
    :meth:`GradientField.inner`, ``<grad u, w> = -<u, div w>``.  Boundary
    nodes get 0.
    """
    st = stencil(w.grid)
    div = -(st.G.T @ (st.edge_weight * w.edge_values)) / w.grid.cell_volume
    return ScalarField(w.grid, st.scatter(div, 0.0))


def field_inner(u: ScalarField, v: ScalarField) -> float:
    g = u.grid
    return float(g.cell_volume * np.sum(u.values[g.interior] * v.values[g.interior]))


def _axis_support(body: ConvexBody) -> np.ndarray:
    return np.array([float(body.support(e)) for e in np.eye(body.dimension)])


def project_gradient(cells: np.ndarray, body: ConvexBody, k: float) -> np.ndarray:
    """Project per-cell gradient vectors onto ``kK``.

    ``cells`` has shape ``(m, n)`` with NaN marking absent components.  Full
    rows are projected onto ``kK``; partial rows have each present component
    clipped to ``k`` times the support of ``K`` along that axis.
    """
    cells = np.asarray(cells, dtype=float)
    out = cells.copy()
    full = ~np.isnan(cells).any(axis=1)
    if full.any():
        out[full] = project_onto(cells[full], body, k)
    part = ~full
    if part.any():
        lim = k * _axis_support(body)
        out[part] = np.clip(cells[part], -lim, lim)
    return out


def cell_gauge(cells: np.ndarray, body: ConvexBody) -> np.ndarray:
    """``gamma_K`` of each full cell vector; for partial cells the largest
    ``|p_d| / s_d`` over present components (the gauge of the axis shadow)."""
    cells = np.asarray(cells, dtype=float)
    out = np.zeros(cells.shape[0])
    full = ~np.isnan(cells).any(axis=1)
    if full.any():
        out[full] = body.gauge(cells[full])
    part = ~full
    if part.any():
        r = np.abs(cells[part]) / _axis_support(body)
        out[part] = np.nanmax(np.where(np.isnan(r), -np.inf, r), axis=1)
    return out


def feasibility_profile(v: ScalarField, body: ConvexBody, k: float, bins: int = 20) -> dict:
    """Distribution of ``gamma_K(grad v) / k`` over cells."""
    ratio = cell_gauge(discrete_gradient(v).cells(), body) / k
    hi = max(1.0, float(ratio.max())) if ratio.size else 1.0
    counts, edges = np.histogram(ratio, bins=bins, range=(0.0, hi))
    return {
        "max_ratio": float(ratio.max()) if ratio.size else 0.0,
        "n_cells": int(ratio.size),
        "n_saturated": int(np.sum(ratio >= 1.0 - 1e-6)),
        "histogram": counts.tolist(),
        "bin_edges": edges.tolist(),
    }


def lipschitz_excess(v: ScalarField, metric: ConvexBody, k: float) -> float:
    """Largest ``|v(y) - v(x)| - k * gauge(y - x)`` over lattice edges.

    Cut edges compare against the boundary point at distance ``theta * h``.
    """
    st = stencil(v.grid)
    flat = v.values.reshape(-1)
    axis_gauge = np.array([float(metric.gauge(e)) for e in np.eye(v.grid.dimension)])
    jump = np.abs(flat[st.edge_q] - flat[st.edge_p])
    return float(np.max(jump - k * st.edge_len * axis_gauge[st.edge_dir], initial=-np.inf))


def gradient_energy(v: ScalarField, c: float, zero_order) -> float:
    st = stencil(v.grid)
    vi = st.gather(v.values)
    return dirichlet_energy(st, vi, c) + v.grid.cell_volume * float(np.sum(zero_order.value(vi)))


def _prox_scalar(q, rho, dg):
    # solve rho (z - q) + g'(z) = 0; the root lies between q and
    # q - g'(q) / rho because g' is nondecreasing
    d0 = dg(q)
    a = min(q, q - d0 / rho)
    b = max(q, q - d0 / rho)
    z = 0.5 * (a + b)
    for _ in range(100):
        F = rho * (z - q) + dg(z)
        if F < 0.0:
            a = z
        else:
            b = z
        eps = 1e-7 * (1.0 + abs(z))
        dF = rho + (dg(z + eps) - dg(z - eps)) / (2.0 * eps)
        zn = z - F / dF
        if not (a < zn < b):
            zn = 0.5 * (a + b)
        if abs(zn - z) <= 1e-15 * (1.0 + abs(z)) or b - a <= 1e-15 * (1.0 + abs(z)):
            return zn
        z = zn
    return z


def _make_prox(jit):
    scalar = jit(_prox_scalar)

    def prox(q, rho, dg, out):
        for i in range(q.size):
            out[i] = scalar(q[i], rho, dg)

    return jit(prox)


_PROX = {}


def prox_operator(zero_order: PluggableConvex, rho: float):
    """Pointwise ``argmin_z g(z) + rho/2 (z - q)^2`` as a function of ``q``."""
    dg = _compiled(zero_order.derivative_fn)
    compiled = dg is not None
    if not compiled:
        dg = zero_order.derivative_fn
    if compiled not in _PROX:
        _PROX[compiled] = _make_prox(numba.njit if compiled else (lambda fn: fn))
    kernel = _PROX[compiled]

    def prox(q):
        out = np.empty_like(q)
        kernel(q, float(rho), dg, out)
        return out

    return prox


def _cg(A, b, x0, rtol=1e-12, maxiter=10000):
    x, info = spla.cg(A, b, x0=x0, rtol=rtol, maxiter=maxiter)
    if info != 0:
        log.warning("conjugate gradient stopped without reaching rtol (info=%d)", info)
    return x


def admm_solve(problem, rho: float = 10.0, tol: float = 1e-8, max_iters: int = 50_000,
               linear_solver: str = "direct", u0: ScalarField | None = None,
               time_limit: float | None = None):
    """Solve the gradient-constrained problem by scaled ADMM.

    Parameters
    ----------
    problem : GradientProblem
        Anything with a ``gradient_problem()`` method is converted first.
    rho : float
        Penalty parameter.
    tol : float
        Stop once both ``max|grad v - w|`` and ``rho * max|w - w_prev|`` are
        at most ``tol``.
    max_iters : int
    linear_solver : {"direct", "cg"}
        ``"direct"`` factors the (fixed) linear system once; ``"cg"`` runs
        warm-started conjugate gradients to relative residual 1e-12.

    Returns
    -------
    (ScalarField, SolveStats)
        ``stats.history`` holds ``(primal, dual)`` residuals per iteration.
    """
    if hasattr(problem, "gradient_problem"):
        problem = problem.gradient_problem()
    grid, body, k, c, g = problem.grid, problem.body, problem.k, problem.c, problem.zero_order
    st: Stencil = stencil(grid)
    vol = grid.cell_volume
    G = st.G
    Gt = G.T.tocsr()
    A = st.stiffness()
    M = st.gram()
    convex = isinstance(g, PluggableConvex)
    m = st.n_unknowns
    prox = prox_operator(g, rho) if convex else None
    lhs = (A + rho * M).tocsc()
    if convex:
        lhs = (lhs + rho * vol * sp.identity(m, format="csc")).tocsc()
    if linear_solver == "direct":
        solve = spla.splu(lhs).solve
    elif linear_solver == "cg":
        solve = None
    else:
        raise ValueError(f"unknown linear_solver {linear_solver!r}")

    base = st.boundary_load(c)
    if not convex:
        base = base + vol * g.eta
    gb = st.Gb * c
    if u0 is not None:
        v = st.gather(u0.values).astype(float)
    else:
        v = np.full(m, float(c))
    w = project_gradient(st.cell_vectors(G @ v + gb), body, k)
    edge_of_cell = st.cell_edges
    present = edge_of_cell < st.n_edges

    def to_edges(cells):
        out = np.empty(st.n_edges)
        out[edge_of_cell[present]] = cells[present]
        return out

    w = to_edges(w)
    lam = np.zeros(st.n_edges)
    z = v.copy()
    mu = np.zeros(m)
    hist = []
    t0 = time.perf_counter()
    converged = False
    it = 0
    r_p = r_d = np.inf
    for it in range(1, max_iters + 1):
        rhs = base + rho * vol * (Gt @ (w - lam - gb))
        if convex:
            rhs = rhs + rho * vol * (z - mu)
        v = solve(rhs) if solve is not None else _cg(lhs, rhs, v)
        gv = G @ v + gb
        w_prev = w
        w = to_edges(project_gradient(st.cell_vectors(gv + lam), body, k))
        lam = lam + gv - w
        r_p = float(np.max(np.abs(gv - w), initial=0.0))
        r_d = rho * float(np.max(np.abs(w - w_prev), initial=0.0))
        if convex:
            z_prev = z
            z = prox(v + mu)
            mu = mu + v - z
            r_p = max(r_p, float(np.max(np.abs(v - z), initial=0.0)))
            r_d = max(r_d, rho * float(np.max(np.abs(z - z_prev), initial=0.0)))
        hist.append((r_p, r_d))
        if max(r_p, r_d) <= tol:
            converged = True
            break
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            break
    u = ScalarField(grid, st.scatter(v, c))
    energy = gradient_energy(u, c, g)
    msg = "converged" if converged else f"stopped after {it} iterations"
    stats = SolveStats(converged, it, max(r_p, r_d), energy, msg, np.array(hist))
    log.info("admm: %s, residual %.3e, %.2fs", msg, stats.residual, time.perf_counter() - t0)
    return u, stats
