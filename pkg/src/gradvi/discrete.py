"""Edge-based finite differences shared by both scalar solvers.

Every lattice edge with at least one interior endpoint carries a forward
difference ``(v_q - v_p) / l`` where ``l`` is ``h`` or, for an edge cut by
the boundary, the arm length ``theta * h``.  The edge weight ``theta * h**n``
makes

    E(v) = 1/2 sum_e w_e (D_e v)^2

a consistent Dirichlet energy; its Hessian is the symmetric cut-cell
Laplacian in which a boundary at distance ``theta * h`` contributes
``1 / (theta h^2)`` to the diagonal.  A *cell* groups the (up to n) edges
leaving one anchor node in the positive axis directions; the gradient
constraint is imposed cell by cell.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .domain import EXTERIOR, INTERIOR, GridDomain

__all__ = ["Stencil", "stencil", "dirichlet_energy"]


@dataclass(eq=False)
class Stencil:
    grid: GridDomain
    index: np.ndarray        # lattice-shaped, interior number or -1
    flat_interior: np.ndarray  # flat lattice index of each unknown
    edge_p: np.ndarray       # flat lattice index of the edge tail
    edge_q: np.ndarray       # flat lattice index of the edge head (tail + e_d)
    edge_dir: np.ndarray
    edge_len: np.ndarray
    edge_weight: np.ndarray
    G: sp.csr_matrix         # (n_edges, n_unknowns) difference operator on unknowns
    Gb: np.ndarray           # (n_edges,) coefficient of the boundary value c
    cell_anchor: np.ndarray  # flat lattice index per cell
    cell_edges: np.ndarray   # (n_cells, n) edge number, n_edges where absent

    @property
    def n_unknowns(self) -> int:
        return self.flat_interior.size

    @property
    def n_edges(self) -> int:
        return self.edge_p.size

    @property
    def n_cells(self) -> int:
        return self.cell_anchor.size

    def edge_differences(self, v_int: np.ndarray, c: float) -> np.ndarray:
        """Forward differences of the field with interior values ``v_int``
        (shape ``(m,)`` or ``(m, N)``) and boundary value ``c``."""
        g = self.G @ v_int
        if np.ndim(c) == 0:
            return g + self.Gb * c
        return g + np.outer(self.Gb, c)

    def cell_vectors(self, edge_values: np.ndarray) -> np.ndarray:
        """Arrange per-edge values as ``(n_cells, n, ...)``, NaN where a
        cell has no edge in that direction."""
        ev = np.asarray(edge_values)
        ext = np.concatenate([ev, np.full((1,) + ev.shape[1:], np.nan)])
        return ext[self.cell_edges]

    def stiffness(self) -> sp.csr_matrix:
        """``G^T W G``: Hessian of the Dirichlet energy in the unknowns."""
        key = "stiffness"
        if key not in self.grid._cache:
            W = sp.diags(self.edge_weight)
            self.grid._cache[key] = (self.G.T @ W @ self.G).tocsr()
        return self.grid._cache[key]

    def gram(self) -> sp.csr_matrix:
        """``G^T G * h**n``: the unweighted counterpart used by splitting."""
        key = "gram"
        if key not in self.grid._cache:
            self.grid._cache[key] = (self.G.T @ self.G * self.grid.cell_volume).tocsr()
        return self.grid._cache[key]

    def boundary_load(self, c: float) -> np.ndarray:
        """``-G^T W Gb c``: linear term contributed by the boundary value."""
        return -(self.G.T @ (self.edge_weight * self.Gb)) * c

    def scatter(self, v_int: np.ndarray, c, fill_exterior=np.nan) -> np.ndarray:
        """Lattice array from interior values, ``c`` on boundary nodes."""
        g = self.grid
        tail = np.shape(v_int)[1:]
        out = np.full(g.dims + tail, fill_exterior, dtype=float)
        out[g.boundary] = c
        out.reshape((-1,) + tail)[self.flat_interior] = v_int
        return out

    def gather(self, values: np.ndarray) -> np.ndarray:
        tail = values.shape[self.grid.dimension:]
        return values.reshape((-1,) + tail)[self.flat_interior]


def stencil(grid: GridDomain) -> Stencil:
    """Build (and cache on the grid) the edge/cell structure."""
    if "stencil" in grid._cache:
        return grid._cache["stencil"]
    n = grid.dimension
    dims = grid.dims
    kind = grid.kind
    interior = kind == INTERIOR
    index = np.full(dims, -1, dtype=np.int64)
    flat_interior = np.flatnonzero(interior.ravel())
    index.ravel()[flat_interior] = np.arange(flat_interior.size)
    strides = np.array([int(np.prod(dims[d + 1:])) for d in range(n)])
    arms = grid.arms.reshape(-1, 2 * n)
    kflat = kind.ravel()

    ps, qs, ds, ls = [], [], [], []
    for d in range(n):
        sl_p = [slice(None)] * n
        sl_p[d] = slice(0, dims[d] - 1)
        p_lat = np.ravel_multi_index(np.nonzero(np.ones(dims, bool)[tuple(sl_p)]), dims)
        q_lat = p_lat + strides[d]
        keep = (kflat[p_lat] == INTERIOR) | (kflat[q_lat] == INTERIOR)
        p_lat, q_lat = p_lat[keep], q_lat[keep]
        # a cut edge is as long as the interior endpoint's arm toward it
        theta = np.ones(p_lat.size)
        p_int = kflat[p_lat] == INTERIOR
        q_int = kflat[q_lat] == INTERIOR
        theta = np.where(p_int & ~q_int, arms[p_lat, 2 * d + 1], theta)
        theta = np.where(q_int & ~p_int, arms[q_lat, 2 * d], theta)
        ps.append(p_lat)
        qs.append(q_lat)
        ds.append(np.full(p_lat.size, d))
        ls.append(theta * grid.h)
    edge_p = np.concatenate(ps)
    edge_q = np.concatenate(qs)
    edge_dir = np.concatenate(ds)
    edge_len = np.concatenate(ls)
    edge_weight = edge_len * grid.h ** (n - 1)
    assert np.all(kflat[edge_p] != EXTERIOR) and np.all(kflat[edge_q] != EXTERIOR)

    ne = edge_p.size
    ip = index.ravel()[edge_p]
    iq = index.ravel()[edge_q]
    inv = 1.0 / edge_len
    rows = np.concatenate([np.flatnonzero(iq >= 0), np.flatnonzero(ip >= 0)])
    cols = np.concatenate([iq[iq >= 0], ip[ip >= 0]])
    vals = np.concatenate([inv[iq >= 0], -inv[ip >= 0]])
    G = sp.csr_matrix((vals, (rows, cols)), shape=(ne, flat_interior.size))
    Gb = np.where(iq < 0, inv, 0.0) - np.where(ip < 0, inv, 0.0)

    anchors, inverse = np.unique(edge_p, return_inverse=True)
    cell_edges = np.full((anchors.size, n), ne, dtype=np.int64)  # ne -> NaN slot
    cell_edges[inverse, edge_dir] = np.arange(ne)

    st = Stencil(grid, index, flat_interior, edge_p, edge_q, edge_dir, edge_len,
                 edge_weight, G, Gb, anchors, cell_edges)
    grid._cache["stencil"] = st
    return st


def dirichlet_energy(st: Stencil, v_int: np.ndarray, c) -> float:
    """``1/2 sum_e w_e |D_e v|^2`` (componentwise sum for vector fields)."""
    g = st.edge_differences(v_int, c)
    if g.ndim == 1:
        return 0.5 * float(np.dot(st.edge_weight, g * g))
    return 0.5 * float(np.dot(st.edge_weight, np.sum(g * g, axis=1)))

