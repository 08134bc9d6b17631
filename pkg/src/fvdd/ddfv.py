"""Discrete duality finite volume (DDFV) machinery.

Unknowns live on primal cells, boundary edges (degenerate primal cells),
and dual cells around every vertex. Gradients are constant per diamond:
the quadrilateral whose diagonals are a primal edge and the segment
joining the two adjacent cell centers (a triangle on the boundary, where
the degenerate cell center is the edge midpoint).

Fields are plain float arrays of length ``DdfvMesh.n_unknowns`` in the
fixed global ordering: interior cells, boundary cells, interior duals,
boundary duals.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sps

from .mesh import PrimalMesh, _polygon_centroid, _polygon_signed_area

_AREA_TOL = 1e-14


class DegenerateDiamond(Exception):
    """Raised when a diamond has zero area (collinear edge and centers)."""


class DdfvMesh:
    """DDFV discretisation derived from a primal mesh.

    Exposes, per diamond ``d`` (one per primal edge):

    - ``diamond_idx[d] = (iK, iL, iK*, iL*)`` global unknown indices,
    - ``diamond_areas[d]``,
    - ``avec[d] = m_sigma / (2 m_D) * n_sigma_K`` (factor of ``u_L - u_K``),
    - ``bvec[d] = m_sigma* / (2 m_D) * n_sigma*_K*`` (factor of
      ``u_L* - u_K*``),

    so that ``grad_d u = avec[d] (u_L - u_K) + bvec[d] (u_L* - u_K*)``.
    """

    def __init__(self, primal: PrimalMesh):
        self.primal = primal
        nc = primal.n_cells
        bedges = primal.boundary_edges
        nb = len(bedges)

        bvs = set(primal.boundary_vertices().tolist())
        interior_verts = [v for v in range(primal.n_vertices) if v not in bvs]
        boundary_verts = [v for v in range(primal.n_vertices) if v in bvs]
        self.interior_vertices = np.array(interior_verts, dtype=int)
        self.boundary_vertices = np.array(boundary_verts, dtype=int)

        self.n_cells = nc
        self.n_bcells = nb
        self.n_iduals = len(interior_verts)
        self.n_bduals = len(boundary_verts)
        self.n_unknowns = nc + nb + primal.n_vertices

        self.bcell_edge = np.asarray(bedges, dtype=int)
        self._bcell_of_edge = {int(e): nc + i for i, e in enumerate(bedges)}
        self.vert_index = np.empty(primal.n_vertices, dtype=int)
        for i, v in enumerate(interior_verts):
            self.vert_index[v] = nc + nb + i
        for i, v in enumerate(boundary_verts):
            self.vert_index[v] = nc + nb + self.n_iduals + i

        self._build_dual_cells()
        self._build_diamonds()
        self._build_masses()
        self._build_dirichlet_sets()
        self._build_point_sets()

    # -- construction ------------------------------------------------------

    def _build_dual_cells(self):
        primal = self.primal
        vertex_cells = [[] for _ in range(primal.n_vertices)]
        for k, cell in enumerate(primal.cells):
            for v in cell:
                vertex_cells[int(v)].append(k)
        vertex_bedges = [[] for _ in range(primal.n_vertices)]
        for e in primal.boundary_edges:
            a, b = primal.edges[e]
            vertex_bedges[int(a)].append(int(e))
            vertex_bedges[int(b)].append(int(e))

        self.dual_polygons: list[np.ndarray] = [None] * primal.n_vertices
        self.dual_measures = np.empty(primal.n_vertices)
        self.dual_barycentres = np.empty((primal.n_vertices, 2))
        onboundary = set(self.boundary_vertices.tolist())
        for v in range(primal.n_vertices):
            xv = primal.vertices[v]
            pts = [primal.centers[k] for k in vertex_cells[v]]
            if v in onboundary:
                pts += [primal.edge_midpoints[e] for e in vertex_bedges[v]]
            pts = np.array(pts)
            ang = np.arctan2(pts[:, 1] - xv[1], pts[:, 0] - xv[0])
            order = np.argsort(ang)
            if v in onboundary:
                # start the listing just after the exterior angular gap
                sorted_ang = ang[order]
                gaps = np.diff(np.concatenate([sorted_ang, [sorted_ang[0] + 2 * np.pi]]))
                order = np.roll(order, -(int(np.argmax(gaps)) + 1))
                poly = np.vstack([xv, pts[order]])
            else:
                poly = pts[order]
            area = _polygon_signed_area(poly)
            if area < 0:
                poly = poly[::-1]
                area = -area
            self.dual_polygons[v] = poly
            self.dual_measures[v] = area
            self.dual_barycentres[v] = _polygon_centroid(poly)

    def _build_diamonds(self):
        primal = self.primal
        ne = primal.n_edges
        nc = self.n_cells
        self.n_diamonds = ne
        self.diamond_idx = np.empty((ne, 4), dtype=int)
        self.diamond_areas = np.empty(ne)
        self.sigma_vec = np.empty((ne, 2))       # x_L* - x_K*
        self.sigma_star_vec = np.empty((ne, 2))  # x_L - x_K
        self.diamond_centers = np.empty((ne, 2))

        owner = primal.edge_cells[:, 0]
        neigh = primal.edge_cells[:, 1]
        xk = primal.centers[owner]
        xl = np.where(
            (neigh >= 0)[:, None],
            primal.centers[np.maximum(neigh, 0)],
            primal.edge_midpoints,
        )
        xks = primal.vertices[primal.edges[:, 0]]
        xls = primal.vertices[primal.edges[:, 1]]

        self.diamond_idx[:, 0] = owner
        self.diamond_idx[:, 1] = np.where(
            neigh >= 0,
            neigh,
            [self._bcell_of_edge.get(e, -1) for e in range(ne)],
        )
        self.diamond_idx[:, 2] = self.vert_index[primal.edges[:, 0]]
        self.diamond_idx[:, 3] = self.vert_index[primal.edges[:, 1]]

        self.sigma_vec[:] = xls - xks
        self.sigma_star_vec[:] = xl - xk
        cross = (self.sigma_vec[:, 0] * self.sigma_star_vec[:, 1]
                 - self.sigma_vec[:, 1] * self.sigma_star_vec[:, 0])
        self.diamond_areas[:] = 0.5 * np.abs(cross)
        if np.any(self.diamond_areas <= _AREA_TOL):
            bad = int(np.argmin(self.diamond_areas))
            raise DegenerateDiamond(
                f"diamond of edge {bad} has zero area (collinear geometry)"
            )
        self.diamond_centers[:] = 0.25 * (xk + xl + xks + xls)

        n_sigma = primal.edge_normals  # unit, out of the owner cell K
        star_len = np.hypot(self.sigma_star_vec[:, 0], self.sigma_star_vec[:, 1])
        perp = np.column_stack([-self.sigma_star_vec[:, 1], self.sigma_star_vec[:, 0]])
        perp /= star_len[:, None]
        sign = np.sign(np.einsum("ij,ij->i", perp, self.sigma_vec))
        n_sigma_star = perp * sign[:, None]

        self.edge_lengths = primal.edge_lengths
        self.sigma_star_lengths = star_len
        self.n_sigma = n_sigma
        self.n_sigma_star = n_sigma_star
        scale = 1.0 / (2.0 * self.diamond_areas)
        self.avec = (primal.edge_lengths * scale)[:, None] * n_sigma
        self.bvec = (star_len * scale)[:, None] * n_sigma_star

    def _build_masses(self):
        self.mass = np.zeros(self.n_unknowns)
        self.mass[: self.n_cells] = 0.5 * self.primal.cell_areas
        self.mass[self.vert_index] = 0.5 * self.dual_measures

    def _build_dirichlet_sets(self):
        primal = self.primal
        self.dirichlet_mask = np.zeros(self.n_unknowns, dtype=bool)
        for i, e in enumerate(self.bcell_edge):
            if primal.edge_tags[e] >= 0:
                self.dirichlet_mask[self.n_cells + i] = True
        for e in primal.boundary_edges:
            if primal.edge_tags[e] >= 0:
                for v in primal.edges[e]:
                    self.dirichlet_mask[self.vert_index[int(v)]] = True
        self.free_mask = ~self.dirichlet_mask
        self.free_indices = np.nonzero(self.free_mask)[0]

    def _build_point_sets(self):
        pts = np.empty((self.n_unknowns, 2))
        pts[: self.n_cells] = self.primal.centers
        pts[self.n_cells: self.n_cells + self.n_bcells] = \
            self.primal.edge_midpoints[self.bcell_edge]
        pts[self.vert_index] = self.primal.vertices
        self.unknown_points = pts
        qpts = pts.copy()
        qpts[self.vert_index] = self.dual_barycentres
        self.quadrature_points = qpts
        pts.setflags(write=False)
        qpts.setflags(write=False)

    # -- helpers -----------------------------------------------------------

    def check_field(self, u: np.ndarray) -> None:
        u = np.asarray(u)
        if u.shape != (self.n_unknowns,):
            raise ValueError(
                f"field has shape {u.shape}, expected ({self.n_unknowns},)"
            )
        if not np.all(np.isfinite(u)):
            raise ValueError("field contains non-finite values")

    def interpolate(self, f, at: str = "unknowns") -> np.ndarray:
        """Evaluate ``f(x, y)`` at unknown positions or data-quadrature
        points (dual cells use their polygon barycentre)."""
        pts = self.unknown_points if at == "unknowns" else self.quadrature_points
        return np.array([f(x, y) for x, y in pts])


def build_ddfv(primal: PrimalMesh) -> DdfvMesh:
    """Construct the dual/diamond structure of a valid primal mesh."""
    return DdfvMesh(primal)


def gradient(mesh: DdfvMesh, u: np.ndarray) -> np.ndarray:
    """Per-diamond constant gradient, shape (n_diamonds, 2)."""
    idx = mesh.diamond_idx
    du_primal = u[idx[:, 1]] - u[idx[:, 0]]
    du_dual = u[idx[:, 3]] - u[idx[:, 2]]
    return mesh.avec * du_primal[:, None] + mesh.bvec * du_dual[:, None]


def reconstruct(mesh: DdfvMesh, u: np.ndarray) -> np.ndarray:
    """Arithmetic mean of the four unknowns incident to each diamond."""
    return u[mesh.diamond_idx].mean(axis=1)


def inner(mesh: DdfvMesh, u: np.ndarray, v: np.ndarray) -> float:
    """Discrete L2 product: half primal (interior cells), half dual."""
    return float(np.dot(mesh.mass * u, v))


def diamond_inner(mesh: DdfvMesh, xi: np.ndarray, phi: np.ndarray) -> float:
    """Weighted dot product of two diamond vector fields."""
    return float(np.dot(mesh.diamond_areas, np.einsum("ij,ij->i", xi, phi)))


def trilinear(mesh: DdfvMesh, u: np.ndarray, w: np.ndarray, v: np.ndarray) -> float:
    """Sum over diamonds of m_D * mean(u) * grad(w) . grad(v)."""
    gw = gradient(mesh, w)
    gv = gradient(mesh, v)
    return float(np.dot(mesh.diamond_areas * reconstruct(mesh, u),
                        np.einsum("ij,ij->i", gw, gv)))


def project_dirichlet(mesh: DdfvMesh, g) -> np.ndarray:
    """Point values of ``g`` at Dirichlet unknowns, zero elsewhere.

    Dirichlet boundary cells evaluate at the edge midpoint, Dirichlet
    dual cells at the vertex (which lies in the closure of the Dirichlet
    boundary).
    """
    out = np.zeros(mesh.n_unknowns)
    for i in np.nonzero(mesh.dirichlet_mask)[0]:
        x, y = mesh.unknown_points[i]
        out[i] = g(x, y)
    return out


def _signed_basis_vectors(mesh: DdfvMesh) -> np.ndarray:
    """(n_diamonds, 4, 2) array V with grad_d(e_j) = V[d, pos(j)] for the
    four incident unknowns in diamond order (K, L, K*, L*)."""
    return np.stack([-mesh.avec, mesh.avec, -mesh.bvec, mesh.bvec], axis=1)


def stiffness_matrix(mesh: DdfvMesh) -> sps.csr_matrix:
    """Gram matrix S of the gradient product: u^T S v = (grad u, grad v)_D."""
    V = _signed_basis_vectors(mesh)
    dots = np.einsum("dre,dce->drc", V, V)
    vals = mesh.diamond_areas[:, None, None] * dots
    rows = np.broadcast_to(mesh.diamond_idx[:, :, None], dots.shape)
    cols = np.broadcast_to(mesh.diamond_idx[:, None, :], dots.shape)
    n = mesh.n_unknowns
    return sps.coo_matrix(
        (vals.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)
    ).tocsr()
