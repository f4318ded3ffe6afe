"""Euclidean projections onto scaled convex bodies, batched over rows."""
from __future__ import annotations

import math

import numba
import numpy as np

from .gauge import Box, ConvexBody, CrossPolytope, EuclideanBall, PNormBall, Polytope

__all__ = ["project_onto", "project_ball", "project_box", "project_l1", "project_pnorm", "dykstra"]

DYKSTRA_MAX_CYCLES = 500
DYKSTRA_TOL = 1e-11


class ProjectionError(RuntimeError):
    pass


def project_ball(y, r):
    y = np.asarray(y, dtype=float)
    nrm = np.linalg.norm(y, axis=-1, keepdims=True)
    scale = np.where(nrm > r, r / np.where(nrm > 0, nrm, 1.0), 1.0)
    return y * scale


def project_box(y, w):
    w = np.asarray(w, dtype=float)
    return np.clip(y, -w, w)


def project_l1(y, s):
    """Projection onto ``{|x|_1 <= s}`` by the sort-and-threshold rule."""
    y = np.asarray(y, dtype=float)
    flat = y.reshape(-1, y.shape[-1])
    out = flat.copy()
    a = np.abs(flat)
    out_mask = a.sum(axis=1) > s
    if out_mask.any():
        b = a[out_mask]
        u = -np.sort(-b, axis=1)
        css = np.cumsum(u, axis=1) - s
        j = np.arange(1, b.shape[1] + 1)
        rho = np.sum(u - css / j > 0, axis=1)
        theta = css[np.arange(len(b)), rho - 1] / rho
        out[out_mask] = np.sign(flat[out_mask]) * np.maximum(b - theta[:, None], 0.0)
    return out.reshape(y.shape)


@numba.njit(cache=True)
def _pnorm_row(a, q, out):
    # project the nonnegative vector a (|a|_q > 1) onto the unit q-ball;
    # x_i = t_i with t_i + lam * t_i^(q-1) = a_i and sum t_i^q = 1
    n = a.size
    t = np.empty(n)

    def solve_t(lam):
        for i in range(n):
            ai = a[i]
            if ai == 0.0:
                t[i] = 0.0
                continue
            lo, hi = 0.0, ai
            x = ai
            for _ in range(200):
                hx = x + lam * x ** (q - 1.0) - ai
                if hx > 0.0:
                    hi = x
                else:
                    lo = x
                if abs(hx) <= 1e-16 * ai or hi - lo <= 1e-16 * ai:
                    break
                d = 1.0 + lam * (q - 1.0) * x ** (q - 2.0) if x > 0.0 else math.inf
                xn = x - hx / d
                x = xn if lo < xn < hi else 0.5 * (lo + hi)
            t[i] = x

    def F(lam):
        solve_t(lam)
        s = 0.0
        for i in range(n):
            s += t[i] ** q
        return s - 1.0

    lo, hi = 0.0, 1.0
    while F(hi) > 0.0:
        lo = hi
        hi *= 2.0
    lam = 0.5 * (lo + hi)
    for _ in range(200):
        f = F(lam)
        if f > 0.0:
            lo = lam
        else:
            hi = lam
        if abs(f) <= 1e-15 or hi - lo <= 1e-16 * hi:
            break
        dF = 0.0
        for i in range(n):
            if t[i] > 0.0:
                dt = -(t[i] ** (q - 1.0)) / (1.0 + lam * (q - 1.0) * t[i] ** (q - 2.0))
                dF += q * t[i] ** (q - 1.0) * dt
        ln = lam - f / dF if dF < 0.0 else -1.0
        lam = ln if lo < ln < hi else 0.5 * (lo + hi)
    solve_t(lam)
    for i in range(n):
        out[i] = t[i]


@numba.njit(cache=True)
def _pnorm_rows(A, q, out):
    for r in range(A.shape[0]):
        _pnorm_row(A[r], q, out[r])


def project_pnorm(y, q, r):
    """Projection onto ``{|x|_q <= r}`` for ``1 <= q <= inf``."""
    if q == 2:
        return project_ball(y, r)
    if q == 1:
        return project_l1(y, r)
    if math.isinf(q):
        return project_box(y, r)
    y = np.asarray(y, dtype=float)
    flat = y.reshape(-1, y.shape[-1])
    out = flat.copy()
    gauge = PNormBall(q, r, flat.shape[1]).gauge(flat)
    mask = gauge > 1.0
    if mask.any():
        a = np.ascontiguousarray(np.abs(flat[mask]) / r)
        t = np.empty_like(a)
        _pnorm_rows(a, float(q), t)
        out[mask] = np.sign(flat[mask]) * t * r
    return out.reshape(y.shape)


def dykstra(y, normals, offsets, max_cycles=DYKSTRA_MAX_CYCLES, tol=DYKSTRA_TOL):
    """Dykstra's alternating projections onto the slabs ``|a_j . x| <= b_j``.

    ``normals`` holds one unit normal per +/- pair.  Returns
    ``(x, converged)``; converged means a cycle moved no point by more than
    ``tol`` and every slab is violated by at most ``tol``.
    """
    y = np.asarray(y, dtype=float)
    x = y.reshape(-1, y.shape[-1]).copy()
    A = np.asarray(normals, dtype=float)
    b = np.asarray(offsets, dtype=float)
    inc = np.zeros((len(b),) + x.shape)
    converged = False
    for _ in range(max_cycles):
        start = x.copy()
        for j in range(len(b)):
            z = x + inc[j]
            s = z @ A[j]
            x = z - np.outer(s - np.clip(s, -b[j], b[j]), A[j])
            inc[j] = z - x
        moved = np.max(np.abs(x - start), initial=0.0)
        viol = np.max(np.abs(x @ A.T) - b, initial=-np.inf)
        if moved <= tol and viol <= tol:
            converged = True
            break
    return x.reshape(y.shape), converged


def _slab_pairs(P: Polytope):
    keep = []
    for j, a in enumerate(P.normals):
        if not any(np.allclose(a, -P.normals[i]) and np.isclose(P.offsets[j], P.offsets[i]) for i in keep):
            keep.append(j)
    return P.normals[keep], P.offsets[keep]


def project_onto(y, body: ConvexBody, k: float = 1.0, return_status: bool = False):
    """Euclidean projection of each row of ``y`` onto ``k * body``."""
    y = np.asarray(y, dtype=float)
    ok = True
    if k == 0:
        out = np.zeros_like(y)
    elif body.dimension == 1:
        half = k / float(body.gauge(np.array([1.0])))
        out = np.clip(y, -half, half)
    elif isinstance(body, EuclideanBall):
        out = project_ball(y, k * body.radius)
    elif isinstance(body, PNormBall):
        out = project_pnorm(y, body.p, k * body.radius)
    elif isinstance(body, Box):
        out = project_box(y, k * np.asarray(body.half_widths))
    elif isinstance(body, CrossPolytope):
        out = project_l1(y, k * body.scale)
    elif isinstance(body, Polytope):
        a, b = _slab_pairs(body)
        out, ok = dykstra(y, a, k * b)
    else:
        raise ProjectionError(f"no projection for {type(body).__name__}")
    return (out, ok) if return_status else out
