import numpy as np
import pytest

from fvdd import mesh
from fvdd.mesh import (BoundaryGeometry, BoundarySegment, DistortionTooLarge,
                       EdgeStraddlesSegments, MeshFormatError, NEUMANN,
                       PrimalMesh)

from oracle_helpers import shoelace


class TestCartesian:
    def test_single_cell(self):
        m = mesh.build_cartesian(1, 1)
        assert m.n_cells == 1
        assert m.cell_areas[0] == pytest.approx(1.0, abs=1e-15)
        assert len(m.boundary_edges) == 4

    def test_partition_of_unity(self):
        m = mesh.build_cartesian(4, 4)
        assert m.n_cells == 16
        assert np.allclose(m.cell_areas, 1.0 / 16)
        assert m.cell_areas.sum() == pytest.approx(1.0, abs=1e-12)

    def test_interior_edge_count_3x2(self):
        # hand enumeration: 2 vertical columns x 2 rows + 3 columns x 1 row
        m = mesh.build_cartesian(3, 2)
        assert len(m.interior_edges) == 7

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            mesh.build_cartesian(0, 3)


class TestTriangular:
    def test_diagonal_split(self):
        m = mesh.build_triangular(1)
        assert m.n_cells == 2
        assert np.allclose(m.cell_areas, 0.5)

    @pytest.mark.parametrize("n", [1, 2, 5])
    def test_partition(self, n):
        m = mesh.build_triangular(n)
        assert m.n_cells == 2 * n * n
        assert m.cell_areas.sum() == pytest.approx(1.0, abs=1e-12)

    def test_edge_counts_n2(self):
        # hand enumeration via Euler: 9 vertices, 9 faces -> 16 edges
        m = mesh.build_triangular(2)
        assert m.n_edges == 16
        assert len(m.boundary_edges) == 8
        assert len(m.interior_edges) == 8


class TestGeometry:
    @pytest.mark.parametrize("make", [
        lambda: mesh.build_cartesian(4, 3),
        lambda: mesh.build_triangular(4),
        lambda: mesh.distort_quads(mesh.build_cartesian(6, 6), 0.25, 3),
    ])
    def test_normal_closure_and_outwardness(self, make):
        m = make()
        for k in range(m.n_cells):
            closure = np.zeros(2)
            for e in m.cell_edges[k]:
                n = m.normal(k, e)
                closure += m.edge_lengths[e] * n
                assert n @ (m.edge_midpoints[e] - m.centers[k]) > 0
            assert np.hypot(*closure) < 1e-12

    def test_areas_match_shoelace_oracle(self, distorted_quads):
        m = distorted_quads
        for k, cell in enumerate(m.cells):
            assert m.cell_areas[k] == pytest.approx(
                shoelace(m.vertices[cell]), abs=1e-14)

    def test_centers_are_barycentres(self):
        m = mesh.build_cartesian(3, 3)
        expected = np.array([np.mean(m.vertices[c], axis=0) for c in m.cells])
        assert np.allclose(m.centers, expected, atol=1e-14)


class TestDistortion:
    def test_zero_amplitude_is_identity(self):
        base = mesh.build_cartesian(4, 4)
        out = mesh.distort_quads(base, 0.0, 11)
        assert np.array_equal(out.vertices, base.vertices)

    def test_deterministic(self):
        base = mesh.build_cartesian(4, 4)
        a = mesh.distort_quads(base, 0.3, 42)
        b = mesh.distort_quads(base, 0.3, 42)
        assert np.array_equal(a.vertices, b.vertices)
        assert a == b

    def test_seed_changes_output(self):
        base = mesh.build_cartesian(4, 4)
        a = mesh.distort_quads(base, 0.3, 1)
        b = mesh.distort_quads(base, 0.3, 2)
        assert not np.array_equal(a.vertices, b.vertices)

    def test_area_conserved(self):
        out = mesh.distort_quads(mesh.build_cartesian(4, 4), 0.3, 42)
        assert out.cell_areas.sum() == pytest.approx(1.0, abs=1e-12)

    def test_boundary_fixed(self):
        base = mesh.build_cartesian(5, 5)
        out = mesh.distort_quads(base, 0.3, 9)
        bv = base.boundary_vertices()
        assert np.array_equal(out.vertices[bv], base.vertices[bv])

    def test_amplitude_out_of_range(self):
        with pytest.raises(ValueError):
            mesh.distort_quads(mesh.build_cartesian(4, 4), 0.45, 1)

    def test_too_large_raises(self):
        # fragile quad mesh: the interior vertex starts close to a corner,
        # so a large draw (seed 1) pushes a cell out of star-shapedness
        verts = [(0, 0), (0.5, 0), (1, 0), (0, 0.5), (0.2, 0.2), (1, 0.5),
                 (0, 1), (0.5, 1), (1, 1)]
        cells = [[0, 1, 4, 3], [1, 2, 5, 4], [3, 4, 7, 6], [4, 5, 8, 7]]
        fragile = PrimalMesh(verts, cells)
        assert mesh.validate(fragile).ok
        with pytest.raises(DistortionTooLarge):
            mesh.distort_quads(fragile, 0.44, 1)

    def test_requires_quads(self):
        with pytest.raises(ValueError):
            mesh.distort_quads(mesh.build_triangular(3), 0.1, 0)


class TestTagging:
    def test_pn_geometry(self, pn_geometry):
        m = mesh.tag_boundary(mesh.build_cartesian(4, 4), pn_geometry)
        for e in m.boundary_edges:
            mid = m.edge_midpoints[e]
            if abs(mid[1]) < 1e-12:
                assert m.edge_tags[e] == 0  # bottom contact
            elif abs(mid[1] - 1.0) < 1e-12 and mid[0] < 0.25:
                assert m.edge_tags[e] == 1  # top-left contact
            else:
                assert m.edge_tags[e] == NEUMANN
        # edge (0.5,1)-(0.75,1) sits beyond the contact end at x=0.25
        e = [e for e in m.boundary_edges
             if abs(m.edge_midpoints[e][1] - 1) < 1e-12
             and abs(m.edge_midpoints[e][0] - 0.625) < 1e-12]
        assert m.edge_tags[e[0]] == NEUMANN

    def test_straddling_edge_rejected(self, pn_geometry):
        # 5x5 grid puts a top edge across the tag change at x = 0.25
        with pytest.raises(EdgeStraddlesSegments):
            mesh.tag_boundary(mesh.build_cartesian(5, 5), pn_geometry)

    def test_geometry_must_cover_boundary(self):
        with pytest.raises(ValueError):
            BoundaryGeometry((
                BoundarySegment((0, 0), (1, 0), 0),
                BoundarySegment((1, 0), (1, 1), NEUMANN),
            ))

    def test_dirichlet_part_required(self):
        with pytest.raises(ValueError):
            BoundaryGeometry((
                BoundarySegment((0, 0), (1, 0), NEUMANN),
                BoundarySegment((1, 0), (1, 1), NEUMANN),
                BoundarySegment((1, 1), (0, 1), NEUMANN),
                BoundarySegment((0, 1), (0, 0), NEUMANN),
            ))


class TestValidate:
    def test_valid_meshes(self, distorted_quads):
        assert mesh.validate(mesh.build_cartesian(3, 3)).ok
        assert mesh.validate(mesh.build_triangular(3)).ok
        assert mesh.validate(distorted_quads).ok

    def test_clockwise_cell_flagged(self):
        verts = [(0, 0), (1, 0), (1, 1), (0, 1)]
        report = mesh.validate(PrimalMesh(verts, [[0, 3, 2, 1]]))
        assert any("area" in v for v in report.violations)

    def test_chevron_not_star_shaped(self):
        # concave quad whose barycentre sits outside the kernel
        verts = [(0.0, 0.0), (1.0, 1.5), (2.0, 0.0), (1.0, 2.0)]
        m = PrimalMesh(verts, [[0, 1, 2, 3]])
        assert m.cell_areas[0] == pytest.approx(0.5, abs=1e-14)
        report = mesh.validate(m)
        assert any("star-shaped" in v for v in report.violations)

    def test_duplicate_vertex_flagged(self):
        verts = [(0, 0), (1, 0), (1, 1), (0, 1)]
        report = mesh.validate(PrimalMesh(verts, [[0, 1, 1, 2]]))
        assert any("duplicate" in v for v in report.violations)


class TestRoundTrip:
    def test_save_load_identity(self, tmp_path, pn_geometry):
        m = mesh.tag_boundary(
            mesh.distort_quads(mesh.build_cartesian(4, 4), 0.3, 42),
            pn_geometry)
        path = tmp_path / "m.msh"
        mesh.save_mesh(m, path)
        loaded = mesh.load_mesh(path)
        assert loaded == m
        assert np.array_equal(loaded.edge_tags, m.edge_tags)

    def test_comments_and_blank_lines(self, tmp_path):
        m = mesh.build_cartesian(2, 2)
        path = tmp_path / "m.msh"
        mesh.save_mesh(m, path)
        text = "# generated\n\n" + path.read_text()
        path.write_text(text)
        assert mesh.load_mesh(path) == m

    def test_centers_optional_in_file(self, tmp_path):
        path = tmp_path / "m.msh"
        path.write_text(
            "fvdd-mesh 1\n4 1 4\n0 0\n1 0\n1 1\n0 1\n"
            "4 0 1 2 3\n0 1 N\n1 2 N\n2 3 N\n3 0 N\n")
        m = mesh.load_mesh(path)
        assert np.allclose(m.centers[0], (0.5, 0.5), atol=1e-15)

    def test_duplicate_vertex_in_cell_rejected(self, tmp_path):
        path = tmp_path / "bad.msh"
        path.write_text(
            "fvdd-mesh 1\n4 1 4\n0 0\n1 0\n1 1\n0 1\n"
            "4 0 1 1 2\n0 1 N\n1 2 N\n2 3 N\n3 0 N\n")
        with pytest.raises(MeshFormatError) as err:
            mesh.load_mesh(path)
        assert err.value.line == 7

    def test_empty_cell_list_rejected(self, tmp_path):
        path = tmp_path / "bad.msh"
        path.write_text("fvdd-mesh 1\n3 0 0\n0 0\n1 0\n0 1\n")
        with pytest.raises(MeshFormatError):
            mesh.load_mesh(path)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.msh"
        path.write_text("not-a-mesh\n")
        with pytest.raises(MeshFormatError) as err:
            mesh.load_mesh(path)
        assert err.value.line == 1

    def test_unknown_tag_rejected(self, tmp_path):
        m = mesh.build_cartesian(1, 1)
        path = tmp_path / "m.msh"
        mesh.save_mesh(m, path)
        path.write_text(path.read_text().replace(" N", " Q", 1))
        with pytest.raises(MeshFormatError):
            mesh.load_mesh(path)


def test_meshes_are_immutable():
    m = mesh.build_cartesian(2, 2)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 5.0
