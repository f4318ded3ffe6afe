"""Double-obstacle problems solved by projected SOR.

The discrete energy is

    E(v) = 1/2 sum_e w_e (D_e v)^2 + h^n sum_i g(v_i)

over interior values with ``lower <= v <= upper`` and ``v = c`` on the
boundary (see :mod:`gradvi.discrete` for the edge weights).  ``g`` is either
``-eta * v`` or a user-supplied convex function.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np

from .discrete import dirichlet_energy, stencil
from .domain import GridDomain, ScalarField

__all__ = [
    "Linear",
    "PluggableConvex",
    "ObstacleProblem",
    "SolveStats",
    "ActiveSets",
    "psor_solve",
    "active_sets",
    "kkt_residuals",
    "discrete_energy",
    "minus_laplacian",
]

log = logging.getLogger(__name__)


class ObstacleError(ValueError):
    pass


@dataclass(frozen=True)
class Linear:
    """Zero-order term ``g(v) = -eta * v``."""

    eta: float = 0.0

    def value(self, v):
        return -self.eta * np.asarray(v, dtype=float)

    def derivative(self, v):
        return np.full(np.shape(v), -self.eta, dtype=float)

    def to_dict(self):
        return {"kind": "linear"}


@dataclass(frozen=True, eq=False)
class PluggableConvex:
    """Convex zero-order term given by its value and derivative.

    Both callables must work on scalars; if they are compilable by numba the
    solvers run compiled, otherwise they fall back to interpreted loops.
    """

    value_fn: Callable[[float], float]
    derivative_fn: Callable[[float], float]
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def value(self, v):
        return np.vectorize(self.value_fn, otypes=[float])(v)

    def derivative(self, v):
        return np.vectorize(self.derivative_fn, otypes=[float])(v)

    def check_convexity(self, lo: float, hi: float, samples: int = 1000) -> None:
        t = np.linspace(lo, hi, samples)
        d = self.derivative(t)
        if np.any(np.diff(d) < -1e-12 * (1.0 + np.abs(d[1:]))):
            raise ObstacleError(f"derivative of {self.name!r} is not nondecreasing on [{lo}, {hi}]")

    def to_dict(self):
        return {"kind": self.name, **self.params}


@dataclass(eq=False)
class ObstacleProblem:
    grid: GridDomain
    lower: ScalarField
    upper: ScalarField
    c: float = 0.0
    zero_order: object = field(default_factory=Linear)

    def __post_init__(self):
        g = self.grid
        lo, hi = self.lower.values, self.upper.values
        if np.any(lo[g.active] > hi[g.active]):
            raise ObstacleError("lower obstacle exceeds upper obstacle")
        if np.any(lo[g.boundary] != self.c) or np.any(hi[g.boundary] != self.c):
            raise ObstacleError("obstacles must equal the boundary value on boundary nodes")
        if isinstance(self.zero_order, PluggableConvex):
            self.zero_order.check_convexity(float(np.min(lo[g.active])), float(np.max(hi[g.active])))


@dataclass
class SolveStats:
    converged: bool
    iterations: int
    residual: float
    energy: float
    message: str = ""
    history: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self):
        return {"converged": self.converged, "iterations": self.iterations,
                "residual": self.residual, "energy": self.energy, "message": self.message}


@dataclass(eq=False)
class ActiveSets:
    lower: np.ndarray
    upper: np.ndarray
    elastic: np.ndarray


# ------------------------------------------------------------------- kernels

@numba.njit(cache=True)
def _quad_energy(indptr, indices, data, f, u):
    e = 0.0
    for i in range(u.size):
        au = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            au += data[p] * u[indices[p]]
        e += 0.5 * u[i] * au - f[i] * u[i]
    return e


@numba.njit(cache=True)
def _psor_linear(indptr, indices, data, diag, f, lo, hi, u, omega, tol, max_sweeps, start, record):
    m = u.size
    hist = np.empty(max_sweeps if record else 0)
    res = np.inf
    done = 0
    for s in range(max_sweeps):
        res = 0.0
        forward = (start + s) % 2 == 0
        for kk in range(m):
            i = kk if forward else m - 1 - kk
            acc = f[i]
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if j != i:
                    acc -= data[p] * u[j]
            gs = acc / diag[i]
            t = min(max(gs, lo[i]), hi[i])
            r = abs(t - u[i])
            if r > res:
                res = r
            u[i] = min(max(u[i] + omega * (gs - u[i]), lo[i]), hi[i])
        done = s + 1
        if record:
            hist[s] = _quad_energy(indptr, indices, data, f, u)
        if res <= tol:
            break
    return done, res, hist[:done]


def _nodal_solve(d, acc, a, b, t, vol, dg):
    """Clipped root of ``d*t - acc + vol*g'(t)`` (increasing in t) on ``[a, b]``."""
    if d * a - acc + vol * dg(a) >= 0.0:
        return a
    if d * b - acc + vol * dg(b) <= 0.0:
        return b
    t = min(max(t, a), b)
    for _ in range(30):
        F = d * t - acc + vol * dg(t)
        if F > 0.0:
            b = t
        else:
            a = t
        if abs(F) <= 1e-15 * (d * abs(t) + abs(acc) + 1e-300) or b - a <= 1e-16 * (1.0 + abs(t)):
            break
        dt = 1e-7 * (1.0 + abs(t))
        tn = t - F / (d + vol * (dg(t + dt) - dg(t)) / dt)
        # bisection fallback keeps the iterate bracketed
        t = tn if a < tn < b else 0.5 * (a + b)
    return t


def _make_convex_kernels(jit):
    nodal = jit(_nodal_solve)
    quad = _quad_energy if jit is numba.njit else _quad_energy.py_func

    def sweep(indptr, indices, data, diag, f, lo, hi, u, omega, tol, max_sweeps, start,
              record, vol, g, dg):
        m = u.size
        hist = np.empty(max_sweeps if record else 0)
        res = np.inf
        done = 0
        for s in range(max_sweeps):
            res = 0.0
            forward = (start + s) % 2 == 0
            for kk in range(m):
                i = kk if forward else m - 1 - kk
                acc = f[i]
                for p in range(indptr[i], indptr[i + 1]):
                    j = indices[p]
                    if j != i:
                        acc -= data[p] * u[j]
                t = nodal(diag[i], acc, lo[i], hi[i], u[i], vol, dg)
                r = abs(t - u[i])
                if r > res:
                    res = r
                # over-relax only when it does not raise the nodal energy
                trial = min(max(u[i] + omega * (t - u[i]), lo[i]), hi[i])
                q_old = 0.5 * diag[i] * u[i] * u[i] - acc * u[i] + vol * g(u[i])
                q_new = 0.5 * diag[i] * trial * trial - acc * trial + vol * g(trial)
                u[i] = trial if q_new <= q_old else t
            done = s + 1
            if record:
                e = quad(indptr, indices, data, f, u)
                for i in range(m):
                    e += vol * g(u[i])
                hist[s] = e
            if res <= tol:
                break
        return done, res, hist[:done]

    def targets(indptr, indices, data, diag, f, lo, hi, u, vol, dg):
        out = np.empty_like(u)
        for i in range(u.size):
            acc = f[i]
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if j != i:
                    acc -= data[p] * u[j]
            out[i] = nodal(diag[i], acc, lo[i], hi[i], u[i], vol, dg)
        return out

    return jit(sweep), jit(targets)


_KERNELS = {}


def _convex_kernels(compiled: bool):
    if compiled not in _KERNELS:
        _KERNELS[compiled] = _make_convex_kernels(numba.njit if compiled else (lambda fn: fn))
    return _KERNELS[compiled]


def _compiled(fn):
    try:
        jf = numba.njit(fn)
        jf(0.0)
        return jf
    except Exception:  # noqa: BLE001 - any compilation failure means "run interpreted"
        return None


# --------------------------------------------------------------------- solver

def _split_csr(A):
    A = A.tocsr()
    A.sort_indices()
    return (A.indptr.astype(np.int64), A.indices.astype(np.int64), A.data.copy(),
            A.diagonal().copy())


def minus_laplacian(u: ScalarField, c: float) -> np.ndarray:
    """``-Delta_h u`` at interior nodes (cut-cell weights), in unknown order."""
    st = stencil(u.grid)
    A = st.stiffness()
    v = st.gather(u.values)
    return (A @ v - st.boundary_load(c)) / u.grid.cell_volume


def discrete_energy(u: ScalarField, c: float, zero_order) -> float:
    st = stencil(u.grid)
    v = st.gather(u.values)
    return dirichlet_energy(st, v, c) + u.grid.cell_volume * float(np.sum(zero_order.value(v)))


def psor_solve(problem: ObstacleProblem, omega: float = 1.8, tol: float = 1e-10,
               max_sweeps: int = 2_000_000, record_energy: bool = False, u0=None):
    """Projected SOR with alternating lexicographic / reverse sweeps.

    Converged means that at every interior node the clipped Gauss-Seidel
    value differs from the iterate by at most ``tol``.  On failure the last
    iterate is returned with ``stats.converged = False``.
    """
    if not 0 < omega < 2:
        raise ValueError("omega must lie in (0, 2)")
    grid = problem.grid
    st = stencil(grid)
    A = st.stiffness()
    indptr, indices, data, diag = _split_csr(A)
    vol = grid.cell_volume
    lo = st.gather(problem.lower.values).copy()
    hi = st.gather(problem.upper.values).copy()
    f = st.boundary_load(problem.c)
    zo = problem.zero_order
    if u0 is None:
        u = np.clip(np.full(st.n_unknowns, float(problem.c)), lo, hi)
    else:
        u = np.clip(st.gather(u0.values).astype(float), lo, hi)

    if isinstance(zo, Linear):
        f = f + vol * zo.eta

        def sweep(u, n, start):
            return _psor_linear(indptr, indices, data, diag, f, lo, hi, u, omega, tol, n, start,
                                record_energy)

        def jacobi_residual(u):
            gs = (f - (A @ u - diag * u)) / diag
            return float(np.max(np.abs(np.clip(gs, lo, hi) - u), initial=0.0))
    else:
        g, dg = _compiled(zo.value_fn), _compiled(zo.derivative_fn)
        if g is None or dg is None:
            log.info("zero-order term %s is not numba-compilable; sweeping interpreted", zo.name)
            g, dg = zo.value_fn, zo.derivative_fn
            kern, targets = _convex_kernels(False)
        else:
            kern, targets = _convex_kernels(True)

        def sweep(u, n, start):
            return kern(indptr, indices, data, diag, f, lo, hi, u, omega, tol, n, start,
                        record_energy, vol, g, dg)

        def jacobi_residual(u):
            t = targets(indptr, indices, data, diag, f, lo, hi, u, vol, dg)
            return float(np.max(np.abs(t - u), initial=0.0))

    done, hist = 0, []
    res = np.inf
    while done < max_sweeps:
        n, _, hseg = sweep(u, max_sweeps - done, done)
        done += n
        hist.append(hseg)
        res = jacobi_residual(u)
        if res <= tol:
            break
    converged = res <= tol
    sol = ScalarField(grid, st.scatter(u, problem.c))
    msg = "converged" if converged else f"no convergence after {done} sweeps"
    if not converged:
        log.warning("psor: %s (residual %.3e)", msg, res)
    stats = SolveStats(converged, done, res, discrete_energy(sol, problem.c, zo), msg,
                       np.concatenate(hist) if record_energy else None)
    return sol, stats


def active_sets(u: ScalarField, problem: ObstacleProblem, tol_act: float = 1e-9) -> ActiveSets:
    """Contact with the lower obstacle wins ties (nodes where the obstacles meet)."""
    inside = problem.grid.interior
    v = u.values
    lower = inside & (v <= problem.lower.values + tol_act)
    upper = inside & ~lower & (v >= problem.upper.values - tol_act)
    return ActiveSets(lower, upper, inside & ~lower & ~upper)


def kkt_residuals(u: ScalarField, problem: ObstacleProblem, sets: ActiveSets) -> dict:
    """Complementarity residuals of ``R(u) = -Delta_h u + g'(u)``.

    ``R = 0`` on the elastic set, ``R >= 0`` where the lower obstacle is
    active and ``R <= 0`` where the upper one is.
    """
    st = stencil(u.grid)
    R = minus_laplacian(u, problem.c) + problem.zero_order.derivative(st.gather(u.values))
    Rf = st.scatter(R, np.nan)

    def pick(mask, fn, empty):
        vals = Rf[mask]
        return float(fn(vals)) if vals.size else empty

    return {
        "elastic_max_abs": pick(sets.elastic, lambda r: np.max(np.abs(r)), 0.0),
        "lower_min": pick(sets.lower, np.min, math.inf),
        "upper_max": pick(sets.upper, np.max, -math.inf),
        "n_lower": int(np.count_nonzero(sets.lower)),
        "n_upper": int(np.count_nonzero(sets.upper)),
        "n_elastic": int(np.count_nonzero(sets.elastic)),
    }
