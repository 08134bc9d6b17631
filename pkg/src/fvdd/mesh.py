"""Polygonal meshes of the unit square with boundary tagging.

A :class:`PrimalMesh` stores vertices, counter-clockwise cell polygons,
cell centers and the full edge connectivity (lengths, midpoints, outward
normals). Boundary edges carry a tag: Neumann or a Dirichlet segment id.
Meshes are immutable after construction; all mutating operations return a
new mesh.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Edge tag codes. Dirichlet segments use their nonnegative segment id.
INTERIOR = -2
NEUMANN = -1

_GEOM_TOL = 1e-12


class MeshFormatError(Exception):
    """Raised when a mesh file cannot be parsed; carries the line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DistortionTooLarge(Exception):
    """Raised when a vertex perturbation produces an invalid cell."""


class EdgeStraddlesSegments(Exception):
    """Raised when a boundary edge crosses a boundary-tag change."""


def _polygon_signed_area(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _polygon_centroid(points: np.ndarray) -> np.ndarray:
    x, y = points[:, 0], points[:, 1]
    cross = x * np.roll(y, -1) - np.roll(x, -1) * y
    area = 0.5 * cross.sum()
    if abs(area) < _GEOM_TOL:
        return points.mean(axis=0)
    cx = ((x + np.roll(x, -1)) * cross).sum() / (6.0 * area)
    cy = ((y + np.roll(y, -1)) * cross).sum() / (6.0 * area)
    return np.array([cx, cy])


def _segments_intersect(p1, p2, q1, q2) -> bool:
    """Proper intersection test for two open segments."""

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


class PrimalMesh:
    """2D polygonal mesh with precomputed edge geometry.

    Parameters
    ----------
    vertices : (nv, 2) array
    cells : sequence of vertex-index sequences, counter-clockwise
    centers : (nc, 2) array, optional
        Cell centers x_K; defaults to the polygon barycentres.
    edge_tags : dict, optional
        Maps a sorted vertex pair ``(a, b)`` of a boundary edge to a tag
        (NEUMANN or a Dirichlet segment id >= 0). Untagged boundary edges
        default to NEUMANN.
    """

    def __init__(self, vertices, cells, centers=None, edge_tags=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError("vertices must be an (nv, 2) array")
        self.cells = [np.asarray(c, dtype=int) for c in cells]
        if not self.cells:
            raise ValueError("mesh has no cells")

        nc = len(self.cells)
        self.cell_areas = np.empty(nc)
        self.centers = np.empty((nc, 2))
        for k, cell in enumerate(self.cells):
            pts = self.vertices[cell]
            self.cell_areas[k] = _polygon_signed_area(pts)
            self.centers[k] = _polygon_centroid(pts)
        if centers is not None:
            self.centers = np.ascontiguousarray(centers, dtype=float)
            if self.centers.shape != (nc, 2):
                raise ValueError("centers must be an (nc, 2) array")

        self._build_edges()
        self._apply_tags(edge_tags or {})
        for arr in (self.vertices, self.centers, self.cell_areas, self.edges,
                    self.edge_cells, self.edge_lengths, self.edge_midpoints,
                    self.edge_normals, self.edge_tags):
            arr.setflags(write=False)

    def _build_edges(self):
        edge_index: dict[tuple[int, int], int] = {}
        edges = []
        edge_cells = []
        self.cell_edges = []
        for k, cell in enumerate(self.cells):
            ids = []
            for i in range(len(cell)):
                a, b = int(cell[i]), int(cell[(i + 1) % len(cell)])
                key = (a, b) if a < b else (b, a)
                e = edge_index.get(key)
                if e is None:
                    e = len(edges)
                    edge_index[key] = e
                    edges.append((a, b))
                    edge_cells.append([k, -1])
                else:
                    if edge_cells[e][1] != -1:
                        raise ValueError(f"edge {key} shared by more than two cells")
                    edge_cells[e][1] = k
                ids.append(e)
            self.cell_edges.append(np.array(ids, dtype=int))

        self.edges = np.array(edges, dtype=int).reshape(-1, 2)
        self.edge_cells = np.array(edge_cells, dtype=int).reshape(-1, 2)
        tangents = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        self.edge_lengths = np.hypot(tangents[:, 0], tangents[:, 1])
        self.edge_midpoints = 0.5 * (self.vertices[self.edges[:, 0]]
                                     + self.vertices[self.edges[:, 1]])
        # Outward normal w.r.t. the owner cell (edge registered in its CCW
        # traversal, so the right-hand perpendicular points out of the owner).
        normals = np.column_stack([tangents[:, 1], -tangents[:, 0]])
        with np.errstate(invalid="ignore"):
            normals /= self.edge_lengths[:, None]
        self.edge_normals = normals

    def _apply_tags(self, tags: dict):
        self.edge_tags = np.full(len(self.edges), INTERIOR, dtype=int)
        boundary = self.edge_cells[:, 1] == -1
        self.edge_tags[boundary] = NEUMANN
        for (a, b), tag in tags.items():
            key = (a, b) if a < b else (b, a)
            matches = np.nonzero(
                ((self.edges[:, 0] == key[0]) & (self.edges[:, 1] == key[1]))
                | ((self.edges[:, 0] == key[1]) & (self.edges[:, 1] == key[0]))
            )[0]
            if len(matches) != 1 or not boundary[matches[0]]:
                raise ValueError(f"tagged edge {key} is not a boundary edge")
            self.edge_tags[matches[0]] = tag

    # -- basic queries ----------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.nonzero(self.edge_cells[:, 1] == -1)[0]

    @property
    def interior_edges(self) -> np.ndarray:
        return np.nonzero(self.edge_cells[:, 1] != -1)[0]

    def normal(self, cell: int, edge: int) -> np.ndarray:
        """Unit normal to ``edge`` pointing out of ``cell``."""
        if self.edge_cells[edge, 0] == cell:
            return self.edge_normals[edge]
        if self.edge_cells[edge, 1] == cell:
            return -self.edge_normals[edge]
        raise ValueError(f"edge {edge} is not an edge of cell {cell}")

    def boundary_vertices(self) -> np.ndarray:
        """Indices of vertices lying on the domain boundary."""
        be = self.boundary_edges
        return np.unique(self.edges[be].ravel())

    def __eq__(self, other) -> bool:
        if not isinstance(other, PrimalMesh):
            return NotImplemented
        return (
            np.array_equal(self.vertices, other.vertices)
            and len(self.cells) == len(other.cells)
            and all(np.array_equal(a, b) for a, b in zip(self.cells, other.cells))
            and np.array_equal(self.centers, other.centers)
            and np.array_equal(self.edge_tags, other.edge_tags)
        )


@dataclass(frozen=True)
class BoundarySegment:
    """Straight boundary piece with a tag (NEUMANN or Dirichlet id >= 0)."""

    start: tuple[float, float]
    end: tuple[float, float]
    tag: int

    def contains(self, point, tol: float = 1e-10) -> bool:
        p = np.asarray(point, dtype=float)
        a = np.asarray(self.start, dtype=float)
        b = np.asarray(self.end, dtype=float)
        ab = b - a
        length2 = float(ab @ ab)
        if length2 == 0.0:
            return bool(np.hypot(*(p - a)) <= tol)
        t = float((p - a) @ ab) / length2
        if t < -tol or t > 1.0 + tol:
            return False
        closest = a + np.clip(t, 0.0, 1.0) * ab
        return bool(np.hypot(*(p - closest)) <= tol)

    def distance(self, point) -> float:
        p = np.asarray(point, dtype=float)
        a = np.asarray(self.start, dtype=float)
        b = np.asarray(self.end, dtype=float)
        ab = b - a
        length2 = float(ab @ ab)
        t = 0.0 if length2 == 0.0 else np.clip(float((p - a) @ ab) / length2, 0.0, 1.0)
        return float(np.hypot(*(p - (a + t * ab))))


@dataclass(frozen=True)
class BoundaryGeometry:
    """Partition of the unit-square boundary into tagged segments."""

    segments: tuple[BoundarySegment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        total = sum(
            np.hypot(s.end[0] - s.start[0], s.end[1] - s.start[1])
            for s in self.segments
        )
        if abs(total - 4.0) > 1e-9:
            raise ValueError("segments must cover the unit-square boundary exactly")
        dirichlet = sum(
            np.hypot(s.end[0] - s.start[0], s.end[1] - s.start[1])
            for s in self.segments
            if s.tag >= 0
        )
        if dirichlet <= 0.0:
            raise ValueError("Dirichlet part must have positive length")

    def dirichlet_segments(self) -> list[BoundarySegment]:
        return [s for s in self.segments if s.tag >= 0]


@dataclass
class MeshReport:
    """Outcome of :func:`validate`; empty ``violations`` means a valid mesh."""

    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def build_cartesian(nx: int, ny: int) -> PrimalMesh:
    """Uniform nx-by-ny rectangle grid on the unit square."""
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be >= 1")
    xs = np.linspace(0.0, 1.0, nx + 1)
    ys = np.linspace(0.0, 1.0, ny + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return i * (ny + 1) + j

    cells = []
    for i in range(nx):
        for j in range(ny):
            cells.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])
    return PrimalMesh(vertices, cells)


def build_triangular(n: int) -> PrimalMesh:
    """Conforming triangulation: n-by-n grid, each square split along the
    bottom-left/top-right diagonal."""
    if n < 1:
        raise ValueError("n must be >= 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(xs, xs, indexing="ij")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return i * (n + 1) + j

    cells = []
    for i in range(n):
        for j in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v11, v01 = vid(i + 1, j + 1), vid(i, j + 1)
            cells.append([v00, v10, v11])
            cells.append([v00, v11, v01])
    return PrimalMesh(vertices, cells)


def distort_quads(mesh: PrimalMesh, amplitude: float, seed: int) -> PrimalMesh:
    """Displace interior vertices of a quad mesh by a seeded perturbation.

    Each interior vertex moves by ``amplitude * l_min * u`` with ``u``
    uniform in [-1, 1]^2 and ``l_min`` the shortest incident edge of the
    input mesh. Boundary vertices stay fixed, so the covered domain is
    unchanged. Deterministic in (mesh, amplitude, seed).
    """
    if not 0.0 <= amplitude < 0.45:
        raise ValueError("amplitude must lie in [0, 0.45)")
    if any(len(c) != 4 for c in mesh.cells):
        raise ValueError("distort_quads expects a quadrilateral mesh")

    lmin = np.full(mesh.n_vertices, np.inf)
    for e, (a, b) in enumerate(mesh.edges):
        lmin[a] = min(lmin[a], mesh.edge_lengths[e])
        lmin[b] = min(lmin[b], mesh.edge_lengths[e])

    rng = np.random.default_rng(seed)
    shifts = rng.uniform(-1.0, 1.0, size=(mesh.n_vertices, 2))
    shifts[mesh.boundary_vertices()] = 0.0
    vertices = mesh.vertices + amplitude * lmin[:, None] * shifts

    tags = _boundary_tag_map(mesh)
    out = PrimalMesh(vertices, mesh.cells, edge_tags=tags)
    report = validate(out)
    if not report.ok:
        raise DistortionTooLarge(
            f"amplitude {amplitude} breaks mesh validity: {report.violations[0]}"
        )
    return out


def _boundary_tag_map(mesh: PrimalMesh) -> dict:
    tags = {}
    for e in mesh.boundary_edges:
        a, b = mesh.edges[e]
        tags[(int(min(a, b)), int(max(a, b)))] = int(mesh.edge_tags[e])
    return tags


def tag_boundary(mesh: PrimalMesh, geo: BoundaryGeometry) -> PrimalMesh:
    """Assign boundary tags from ``geo``; every boundary edge must lie
    wholly inside one segment."""
    tags = {}
    for e in mesh.boundary_edges:
        a, b = mesh.edges[e]
        pa, pb = mesh.vertices[a], mesh.vertices[b]
        hit = None
        for seg in geo.segments:
            if seg.contains(pa) and seg.contains(pb):
                hit = seg
                break
        if hit is None:
            raise EdgeStraddlesSegments(
                f"boundary edge {pa.tolist()} -> {pb.tolist()} crosses a tag "
                "change; refine the mesh so edges align with the segments"
            )
        tags[(int(min(a, b)), int(max(a, b)))] = hit.tag
    return PrimalMesh(mesh.vertices, mesh.cells, centers=mesh.centers, edge_tags=tags)


def validate(mesh: PrimalMesh) -> MeshReport:
    """Check all mesh invariants; returns a report instead of raising."""
    report = MeshReport()
    nv = mesh.n_vertices
    for k, cell in enumerate(mesh.cells):
        if len(cell) < 3:
            report.violations.append(f"cell {k}: fewer than 3 vertices")
            continue
        if np.any(cell < 0) or np.any(cell >= nv):
            report.violations.append(f"cell {k}: vertex index out of range")
            continue
        if len(np.unique(cell)) != len(cell):
            report.violations.append(f"cell {k}: duplicate vertex")
            continue
        pts = mesh.vertices[cell]
        if mesh.cell_areas[k] <= _GEOM_TOL:
            report.violations.append(
                f"cell {k}: nonpositive area {mesh.cell_areas[k]:.3e} "
                "(clockwise or degenerate)"
            )
            continue
        m = len(cell)
        for i in range(m):
            for j in range(i + 1, m):
                if j == i + 1 or (i == 0 and j == m - 1):
                    continue  # adjacent edges share a vertex
                if _segments_intersect(pts[i], pts[(i + 1) % m],
                                       pts[j], pts[(j + 1) % m]):
                    report.violations.append(f"cell {k}: self-intersecting polygon")
                    break
            else:
                continue
            break

        center = mesh.centers[k]
        closure = np.zeros(2)
        for e in mesh.cell_edges[k]:
            n = mesh.normal(k, e)
            closure += mesh.edge_lengths[e] * n
            if float(n @ (mesh.edge_midpoints[e] - center)) <= 0.0:
                report.violations.append(
                    f"cell {k}: normal of edge {e} not outward from the center"
                )
        if np.hypot(*closure) > 1e-12 * max(1.0, mesh.edge_lengths[mesh.cell_edges[k]].sum()):
            report.violations.append(f"cell {k}: edge normals do not close up")

        rel = pts - center
        cross = rel[:, 0] * np.roll(rel[:, 1], -1) - rel[:, 1] * np.roll(rel[:, 0], -1)
        if np.any(cross <= _GEOM_TOL):
            report.violations.append(
                f"cell {k}: not star-shaped with respect to its center"
            )
    return report


def save_mesh(mesh: PrimalMesh, path) -> None:
    """Write the versioned plain-text format (see the package README)."""
    lines = ["fvdd-mesh 1"]
    nbe = len(mesh.boundary_edges)
    lines.append(f"{mesh.n_vertices} {mesh.n_cells} {nbe}")
    for x, y in mesh.vertices:
        lines.append(f"{x:.17g} {y:.17g}")
    for cell, (cx, cy) in zip(mesh.cells, mesh.centers):
        verts = " ".join(str(int(v)) for v in cell)
        lines.append(f"{len(cell)} {verts} {cx:.17g} {cy:.17g}")
    for e in mesh.boundary_edges:
        a, b = mesh.edges[e]
        tag = mesh.edge_tags[e]
        name = "N" if tag == NEUMANN else f"D{tag}"
        lines.append(f"{a} {b} {name}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mesh(path) -> PrimalMesh:
    """Read a mesh written by :func:`save_mesh`; raises
    :class:`MeshFormatError` with the offending line number."""
    with open(path) as fh:
        raw = fh.readlines()
    rows = []  # (line_number, tokens)
    for i, line in enumerate(raw, start=1):
        body = line.split("#", 1)[0].strip()
        if body:
            rows.append((i, body.split()))

    def take():
        if not rows:
            raise MeshFormatError(len(raw), "unexpected end of file")
        return rows.pop(0)

    ln, tok = take()
    if tok != ["fvdd-mesh", "1"]:
        raise MeshFormatError(ln, "expected header 'fvdd-mesh 1'")
    ln, tok = take()
    try:
        nv, nc, nbe = (int(t) for t in tok)
    except ValueError:
        raise MeshFormatError(ln, "expected '<nv> <nc> <nbe>'") from None
    if nv < 3:
        raise MeshFormatError(ln, f"vertex count {nv} too small")
    if nc < 1:
        raise MeshFormatError(ln, "empty cell list")

    vertices = np.empty((nv, 2))
    for i in range(nv):
        ln, tok = take()
        try:
            vertices[i] = [float(tok[0]), float(tok[1])]
        except (ValueError, IndexError):
            raise MeshFormatError(ln, "expected 'x y'") from None

    cells = []
    centers = np.empty((nc, 2))
    for i in range(nc):
        ln, tok = take()
        try:
            k = int(tok[0])
            ids = [int(t) for t in tok[1:1 + k]]
        except (ValueError, IndexError):
            raise MeshFormatError(ln, "expected 'k v1 ... vk [cx cy]'") from None
        if len(ids) != k:
            raise MeshFormatError(ln, f"cell lists {len(ids)} vertices, declared {k}")
        if len(set(ids)) != k:
            raise MeshFormatError(ln, "duplicate vertex index in cell")
        if any(v < 0 or v >= nv for v in ids):
            raise MeshFormatError(ln, "vertex index out of range")
        rest = tok[1 + k:]
        if rest:
            if len(rest) != 2:
                raise MeshFormatError(ln, "trailing tokens are not 'cx cy'")
            try:
                centers[i] = [float(rest[0]), float(rest[1])]
            except ValueError:
                raise MeshFormatError(ln, "bad center coordinates") from None
        else:
            centers[i] = _polygon_centroid(vertices[ids])
        cells.append(ids)

    tags = {}
    for _ in range(nbe):
        ln, tok = take()
        if len(tok) != 3:
            raise MeshFormatError(ln, "expected 'v1 v2 tag'")
        try:
            a, b = int(tok[0]), int(tok[1])
        except ValueError:
            raise MeshFormatError(ln, "bad vertex index") from None
        name = tok[2]
        if name == "N":
            tag = NEUMANN
        elif name.startswith("D") and name[1:].isdigit():
            tag = int(name[1:])
        else:
            raise MeshFormatError(ln, f"unknown boundary tag '{name}'")
        tags[(min(a, b), max(a, b))] = tag
    if rows:
        raise MeshFormatError(rows[0][0], "trailing content after boundary edges")

    try:
        return PrimalMesh(vertices, cells, centers=centers, edge_tags=tags)
    except ValueError as exc:
        raise MeshFormatError(len(raw), str(exc)) from None
