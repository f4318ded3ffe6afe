"""Vector-valued problems with an operator-norm constraint on the Jacobian.

The vector energy is

    I_h(v) = sum_e w_e |D_e v|^2 - h^n sum_i eta . v_i

over fields vanishing on the boundary, constrained by ``||Dv||_{2,K} <= 1``
per cell.  Its minimizer is ``u * eta`` where the scalar ``u`` minimizes
``J_h(u) = sum_e w_e (D_e u)^2 - h^n sum_i u_i`` between the obstacles
``-/+ d_K / |eta|``; :func:`reduce_to_scalar` sets that problem up.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .discrete import stencil
from .domain import GridDomain, ScalarField, VectorField
from .gauge import ConvexBody, EuclideanBall, operator_norm_2K
from .obstacle import SolveStats

__all__ = [
    "VectorProblem",
    "reduce_to_scalar",
    "assemble_vector",
    "vector_energy",
    "scalar_energy_j1",
    "k1_feasibility",
    "invariance_check",
    "random_orthogonal_fixing",
    "direct_vector_solve",
    "collinearity_angles",
]

log = logging.getLogger(__name__)

ORTHO_TOL = 1e-12


class VectorError(ValueError):
    pass


@dataclass(eq=False)
class VectorProblem:
    grid: GridDomain
    body: ConvexBody
    eta: np.ndarray

    def __post_init__(self):
        self.eta = np.asarray(self.eta, dtype=float).ravel()
        if not np.linalg.norm(self.eta) > 0:
            raise VectorError("eta must be nonzero")
        if self.body.dimension != self.grid.dimension:
            raise VectorError("body and grid dimensions differ")


def reduce_to_scalar(vp: VectorProblem, spec=None):
    """Scalar double-obstacle problem whose minimizer times ``eta`` solves ``vp``.

    The returned spec carries ``polar(K)`` as its body so that its obstacles
    ``-/+ d / |eta|`` measure distance in the gauge of ``K``.  Its zero-order
    coefficient is 1/2: the scalar solver minimizes half the Dirichlet
    energy, and halving the load keeps the minimizer of ``J_h``.
    """
    from .problem import ProblemSpec

    eta_norm = float(np.linalg.norm(vp.eta))
    if not eta_norm > 0:
        raise VectorError("eta must be nonzero")
    kw = {}
    if spec is not None:
        kw = {"solver": spec.solver, "seed": spec.seed}
    red = ProblemSpec(vp.grid.shape, vp.body.polar_body, formulation="obstacle", c=0.0,
                      k=1.0 / eta_norm, eta=0.5, h=vp.grid.h, **kw)
    red._cache["grid"] = vp.grid
    return red


def assemble_vector(u: ScalarField, eta) -> VectorField:
    eta = np.asarray(eta, dtype=float)
    return VectorField(u.grid, u.values[..., None] * eta)


def _edge_jacobian(v: VectorField) -> np.ndarray:
    st = stencil(v.grid)
    flat = v.values.reshape(-1, v.values.shape[-1])
    return (flat[st.edge_q] - flat[st.edge_p]) / st.edge_len[:, None]


def vector_energy(v: VectorField, eta) -> float:
    """``I_h`` using the stored (zero) boundary values."""
    st = stencil(v.grid)
    g = _edge_jacobian(v)
    inner = v.values[v.grid.interior] @ np.asarray(eta, dtype=float)
    return float(np.dot(st.edge_weight, np.sum(g * g, axis=1)) - v.grid.cell_volume * inner.sum())


def scalar_energy_j1(u: ScalarField) -> float:
    """``J_h(u) = sum_e w_e (D_e u)^2 - h^n sum_i u_i``."""
    st = stencil(u.grid)
    flat = u.values.reshape(-1)
    g = (flat[st.edge_q] - flat[st.edge_p]) / st.edge_len
    return float(np.dot(st.edge_weight, g * g) - u.grid.cell_volume * u.values[u.grid.interior].sum())


def _cell_jacobians(v: VectorField) -> np.ndarray:
    """``(n_cells, N, n)`` Jacobians, NaN columns where a cell lacks an edge."""
    st = stencil(v.grid)
    cells = st.cell_vectors(_edge_jacobian(v))  # (n_cells, n, N)
    return np.swapaxes(cells, 1, 2)


def k1_feasibility(v: VectorField, body: ConvexBody) -> dict:
    """Largest ``||J||_{2,K}`` over cells.

    A cell missing a direction is measured on the present columns only:
    ``|J e_d| / gamma_K(e_d)`` for each present ``d``.
    """
    J = _cell_jacobians(v)
    full = ~np.isnan(J).any(axis=(1, 2))
    norms = np.zeros(J.shape[0])
    if full.any():
        norms[full] = operator_norm_2K(J[full], body)
    part = ~full
    if part.any():
        n = body.dimension
        g_axis = np.array([float(body.gauge(e)) for e in np.eye(n)])
        cols = np.linalg.norm(J[part], axis=1) / g_axis  # (m, n), NaN if absent
        norms[part] = np.nanmax(np.where(np.isnan(cols), -np.inf, cols), axis=1)
    return {"max": float(norms.max()) if norms.size else 0.0, "n_cells": int(norms.size)}


def _check_orthogonal(T, eta):
    T = np.asarray(T, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if T.shape != (eta.size, eta.size):
        raise VectorError("T must be N x N")
    if np.linalg.norm(T.T @ T - np.eye(eta.size)) > ORTHO_TOL:
        raise VectorError("T is not orthogonal")
    if np.linalg.norm(T @ eta - eta) > ORTHO_TOL:
        raise VectorError("T does not fix eta")
    return T


def invariance_check(v: VectorField, eta, T) -> float:
    """``|I_h(T v) - I_h(v)|`` for an orthogonal ``T`` with ``T eta = eta``."""
    T = _check_orthogonal(T, eta)
    Tv = VectorField(v.grid, v.values @ T.T)
    return abs(vector_energy(Tv, eta) - vector_energy(v, eta))


def random_orthogonal_fixing(eta, rng: np.random.Generator) -> np.ndarray:
    """Random orthogonal matrix with ``T eta = eta``: a random orthogonal map
    on the complement of ``eta`` and the identity along it."""
    eta = np.asarray(eta, dtype=float)
    N = eta.size
    Q, _ = np.linalg.qr(np.column_stack([eta, rng.standard_normal((N, N - 1))]))
    Q[:, 0] = eta / np.linalg.norm(eta)
    inner = np.eye(N)
    if N > 1:
        R, upper = np.linalg.qr(rng.standard_normal((N - 1, N - 1)))
        inner[1:, 1:] = R * np.sign(np.diag(upper))
    return Q @ inner @ Q.T


def collinearity_angles(v: VectorField, eta, threshold: float = 0.01) -> np.ndarray:
    """Angle between ``v(x)`` and ``eta`` at nodes with ``|v| >= threshold * max|v|``."""
    vals = v.values[v.grid.interior]
    mag = np.linalg.norm(vals, axis=1)
    keep = mag >= threshold * mag.max() if mag.size and mag.max() > 0 else np.zeros(mag.size, bool)
    e = np.asarray(eta, dtype=float) / np.linalg.norm(eta)
    # sign-agnostic: u may be negative
    cos = np.clip(np.abs(vals[keep] @ e) / mag[keep], 0.0, 1.0)
    sin = np.linalg.norm(vals[keep] - np.outer(vals[keep] @ e, e), axis=1) / mag[keep]
    return np.arctan2(sin, cos)


def _clip_singular(J: np.ndarray, smax: float) -> np.ndarray:
    """Project each ``(N, n)`` matrix onto ``{sigma_max <= smax}``."""
    U, s, Vt = np.linalg.svd(J, full_matrices=False)
    return (U * np.minimum(s, smax)[:, None, :]) @ Vt


def direct_vector_solve(vp: VectorProblem, tol: float = 1e-8, max_iters: int = 50_000,
                        rho: float = 10.0, time_limit: float | None = None):
    """Minimize ``I_h`` over ``||Dv||_{2,K} <= 1`` directly (Euclidean balls only).

    Same splitting as :func:`gradvi.gradient.admm_solve`, run on all
    components with one factorization; the per-cell projection clips singular
    values of the Jacobian at ``1 / r``.  Columns of cells at the boundary
    that lack an edge are left out of the projection.
    """
    if not isinstance(vp.body, EuclideanBall):
        raise VectorError("direct vector solve supports Euclidean balls only")
    smax = 1.0 / vp.body.radius
    grid = vp.grid
    st = stencil(grid)
    vol = grid.cell_volume
    G = st.G
    Gt = G.T.tocsr()
    lu = spla.splu((st.stiffness() + rho * st.gram()).tocsc())
    N = vp.eta.size
    m = st.n_unknowns
    # I_h is twice the 1/2-convention energy with load eta / 2
    base = np.tile(0.5 * vol * vp.eta, (m, 1))
    ce = st.cell_edges
    present = ce < st.n_edges
    full = present.all(axis=1)

    def project(E):
        cells = np.swapaxes(st.cell_vectors(E), 1, 2)  # (cells, N, n)
        out = cells.copy()
        if full.any():
            out[full] = _clip_singular(cells[full], smax)
        part = ~full
        if part.any():
            c = cells[part]
            nrm = np.linalg.norm(c, axis=1, keepdims=True)
            scale = np.where(nrm > smax, smax / np.where(nrm > 0, nrm, 1.0), 1.0)
            out[part] = np.where(np.isnan(c), np.nan, c * scale)
        res = np.empty((st.n_edges, N))
        cols = np.swapaxes(out, 1, 2)  # (cells, n, N)
        res[ce[present]] = cols[present]
        return res

    v = np.zeros((m, N))
    w = np.zeros((st.n_edges, N))
    lam = np.zeros_like(w)
    hist = []
    t0 = time.perf_counter()
    converged = False
    r_p = r_d = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        v = lu.solve(base + rho * vol * (Gt @ (w - lam)))
        gv = G @ v
        w_prev = w
        w = project(gv + lam)
        lam = lam + gv - w
        r_p = float(np.max(np.abs(gv - w), initial=0.0))
        r_d = rho * float(np.max(np.abs(w - w_prev), initial=0.0))
        hist.append((r_p, r_d))
        if max(r_p, r_d) <= tol:
            converged = True
            break
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            break
    field = VectorField(grid, st.scatter(v, np.zeros(N)))
    msg = "converged" if converged else f"stopped after {it} iterations"
    stats = SolveStats(converged, it, max(r_p, r_d), vector_energy(field, vp.eta), msg, np.array(hist))
    log.info("direct vector solve: %s, %.2fs", msg, time.perf_counter() - t0)
    return field, stats
