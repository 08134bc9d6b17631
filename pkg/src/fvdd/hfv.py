"""Hybrid finite volume (HFV) machinery.

Unknowns are cell values plus one value per edge (trace unknowns). The
discrete gradient is piecewise constant on the pyramidal submesh: in the
triangle of base ``sigma`` and apex ``x_K`` it equals a consistent cell
part ``G_K`` plus a stabilisation ``S_{K,sigma}`` scaled by ``eta``.

Fields are flat float arrays of length ``n_cells + n_edges`` (cells
first, then edges).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sps

from .mesh import PrimalMesh


class NotStarShaped(Exception):
    """Raised when a cell is not star-shaped w.r.t. its center."""


class SingularCellBlock(Exception):
    """Raised when static condensation meets a non-invertible cell block."""


class HybridMesh:
    """Pyramidal submesh data and per-cell local operators.

    For each cell K with edges ``sigma_1..sigma_k`` the local unknown
    vector is ``[u_K, u_sigma_1, .., u_sigma_k]``. ``local_gradients[K]``
    has shape (k, 2, k+1): row i maps local unknowns to the constant
    gradient on pyramid ``P_{K, sigma_i}``. ``local_stiffness[K]`` is the
    (k+1, k+1) Gram matrix of the gradient over the cell.
    """

    def __init__(self, primal: PrimalMesh, eta: float = 1.5):
        if eta <= 0:
            raise ValueError("stabilisation parameter eta must be positive")
        self.primal = primal
        self.eta = float(eta)
        self.n_cells = primal.n_cells
        self.n_edges = primal.n_edges
        self.n_unknowns = self.n_cells + self.n_edges

        self.pyramid_measures: list[np.ndarray] = []
        self.distances: list[np.ndarray] = []
        self.local_gradients: list[np.ndarray] = []
        self.local_stiffness: list[np.ndarray] = []
        self.local_indices: list[np.ndarray] = []

        for k in range(self.n_cells):
            edges = primal.cell_edges[k]
            ne = len(edges)
            xk = primal.centers[k]
            mk = primal.cell_areas[k]
            normals = np.array([primal.normal(k, e) for e in edges])
            lengths = primal.edge_lengths[edges]
            mids = primal.edge_midpoints[edges]

            d = np.einsum("ij,ij->i", normals, mids - xk)
            if np.any(d <= 0.0):
                raise NotStarShaped(
                    f"cell {k} is not star-shaped with respect to its center"
                )
            q = 0.5 * lengths * d

            # consistent part: G_K column for u_sigma_j is m_sigma_j/m_K n_j
            gk = np.zeros((2, ne + 1))
            gk[:, 1:] = (lengths[None, :] * normals.T) / mk
            grads = np.empty((ne, 2, ne + 1))
            for i in range(ne):
                stab = np.zeros(ne + 1)
                stab[0] = -1.0
                stab[1 + i] = 1.0
                stab -= (mids[i] - xk) @ gk
                grads[i] = gk + (self.eta / d[i]) * np.outer(normals[i], stab)

            self.pyramid_measures.append(q)
            self.distances.append(d)
            self.local_gradients.append(grads)
            self.local_stiffness.append(
                np.einsum("i,iej,iel->jl", q, grads, grads)
            )
            self.local_indices.append(
                np.concatenate([[k], self.n_cells + edges])
            )

        self.dirichlet_mask = np.zeros(self.n_unknowns, dtype=bool)
        for e in primal.boundary_edges:
            if primal.edge_tags[e] >= 0:
                self.dirichlet_mask[self.n_cells + e] = True
        self.free_mask = ~self.dirichlet_mask
        self.free_indices = np.nonzero(self.free_mask)[0]

        pts = np.empty((self.n_unknowns, 2))
        pts[: self.n_cells] = primal.centers
        pts[self.n_cells:] = primal.edge_midpoints
        pts.setflags(write=False)
        self.unknown_points = pts

        # only cells carry mass; edge unknowns are massless
        self.mass = np.zeros(self.n_unknowns)
        self.mass[: self.n_cells] = primal.cell_areas

    def check_field(self, u: np.ndarray) -> None:
        u = np.asarray(u)
        if u.shape != (self.n_unknowns,):
            raise ValueError(
                f"field has shape {u.shape}, expected ({self.n_unknowns},)"
            )
        if not np.all(np.isfinite(u)):
            raise ValueError("field contains non-finite values")

    def interpolate(self, f) -> np.ndarray:
        """Evaluate ``f(x, y)`` at cell centers and edge barycentres."""
        return np.array([f(x, y) for x, y in self.unknown_points])


def build_hybrid(primal: PrimalMesh, eta: float = 1.5) -> HybridMesh:
    """Construct the pyramidal submesh; raises NotStarShaped when needed."""
    return HybridMesh(primal, eta=eta)


def gradient(mesh: HybridMesh, v: np.ndarray) -> list[np.ndarray]:
    """Per-pyramid gradients, one (k, 2) block per cell."""
    out = []
    for k in range(mesh.n_cells):
        loc = v[mesh.local_indices[k]]
        out.append(mesh.local_gradients[k] @ loc)
    return out


def bilinear_a(mesh: HybridMesh, u: np.ndarray, v: np.ndarray) -> float:
    """Integral over the domain of grad u . grad v."""
    total = 0.0
    for k in range(mesh.n_cells):
        idx = mesh.local_indices[k]
        total += u[idx] @ mesh.local_stiffness[k] @ v[idx]
    return float(total)


def reconstruct(mesh: HybridMesh, u: np.ndarray, cell: int) -> float:
    """Cell reconstruction: mean over edges of (u_K + u_sigma) / 2."""
    edges = mesh.primal.cell_edges[cell]
    return float(0.5 * (u[cell] + u[mesh.n_cells + edges].mean()))


def cell_reconstructions(mesh: HybridMesh, u: np.ndarray) -> np.ndarray:
    """Vector of :func:`reconstruct` over all cells."""
    return np.array([reconstruct(mesh, u, k) for k in range(mesh.n_cells)])


def trilinear(mesh: HybridMesh, u: np.ndarray, w: np.ndarray, v: np.ndarray) -> float:
    """Sum over cells of r_K(u) * int_K grad w . grad v."""
    total = 0.0
    for k in range(mesh.n_cells):
        idx = mesh.local_indices[k]
        total += reconstruct(mesh, u, k) * (w[idx] @ mesh.local_stiffness[k] @ v[idx])
    return float(total)


def cell_inner(mesh: HybridMesh, u: np.ndarray, v: np.ndarray) -> float:
    """Mass-weighted product over cells; edge unknowns carry no mass."""
    nc = mesh.n_cells
    return float(np.dot(mesh.primal.cell_areas * u[:nc], v[:nc]))


def project_dirichlet(mesh: HybridMesh, g) -> np.ndarray:
    """Values g(edge barycentre) at Dirichlet edges, zero elsewhere."""
    out = np.zeros(mesh.n_unknowns)
    for i in np.nonzero(mesh.dirichlet_mask)[0]:
        x, y = mesh.unknown_points[i]
        out[i] = g(x, y)
    return out


def stiffness_matrix(mesh: HybridMesh) -> sps.csr_matrix:
    """Global sparse Gram matrix A with u^T A v = bilinear_a(u, v)."""
    rows, cols, vals = [], [], []
    for k in range(mesh.n_cells):
        idx = mesh.local_indices[k]
        loc = mesh.local_stiffness[k]
        rows.append(np.repeat(idx, len(idx)))
        cols.append(np.tile(idx, len(idx)))
        vals.append(loc.ravel())
    n = mesh.n_unknowns
    return sps.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()


@dataclass
class CondensedSystem:
    """Edge-only Schur system plus the recipe recovering cell unknowns."""

    matrix: sps.csr_matrix
    rhs: np.ndarray
    recover: Callable[[np.ndarray], np.ndarray]


def condense(matrix: sps.spmatrix, rhs: np.ndarray,
             cell_blocks: list[np.ndarray], edge_dofs: np.ndarray) -> CondensedSystem:
    """Eliminate per-cell unknown groups by static condensation.

    ``cell_blocks`` lists the dof-index groups whose mutual coupling is
    block-diagonal (each group couples only to itself and to edge dofs);
    ``edge_dofs`` are the remaining dofs. The returned ``recover`` maps the
    edge solution back to the full-length solution vector.
    """
    A = sps.csr_matrix(matrix)
    n = A.shape[0]
    cell_dofs = np.concatenate(cell_blocks) if cell_blocks else np.array([], dtype=int)
    if len(cell_dofs) + len(edge_dofs) != n or \
            len(np.union1d(cell_dofs, edge_dofs)) != n:
        raise ValueError("cell and edge dofs must partition the system")

    A_cc = A[np.ix_(cell_dofs, cell_dofs)]
    A_ce = A[np.ix_(cell_dofs, edge_dofs)]
    A_ec = A[np.ix_(edge_dofs, cell_dofs)]
    A_ee = A[np.ix_(edge_dofs, edge_dofs)]
    b_c = rhs[cell_dofs]
    b_e = rhs[edge_dofs]

    # invert the diagonal blocks; positions are relative to cell_dofs order
    inv_blocks = []
    offset = 0
    offdiag = A_cc.copy().tolil()
    for block in cell_blocks:
        m = len(block)
        sl = slice(offset, offset + m)
        dense = A_cc[sl, sl].toarray()
        try:
            inv_blocks.append(np.linalg.inv(dense))
        except np.linalg.LinAlgError:
            raise SingularCellBlock(
                f"cell block at offset {offset} is singular"
            ) from None
        offdiag[sl, sl] = 0.0
        offset += m
    if offdiag.count_nonzero() != 0:
        raise ValueError("cell-cell coupling is not block-diagonal")
    A_cc_inv = sps.block_diag(inv_blocks, format="csr") if inv_blocks \
        else sps.csr_matrix((0, 0))

    schur = (A_ee - A_ec @ A_cc_inv @ A_ce).tocsr()
    rhs_s = b_e - A_ec @ (A_cc_inv @ b_c)

    def recover(x_edge: np.ndarray) -> np.ndarray:
        x = np.empty(n)
        x[edge_dofs] = x_edge
        x[cell_dofs] = A_cc_inv @ (b_c - A_ce @ x_edge)
        return x

    return CondensedSystem(schur, rhs_s, recover)
