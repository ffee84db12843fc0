import numpy as np
import pytest
from pydantic import ValidationError

from src.discretization.mesh import (
    BIOT,
    STOKES,
    FaceTag,
    GridSpec,
    build_mesh,
    check_grid,
    lateral_pairs,
    resolve_master,
)
from src.errors import MeshSpecError


class TestGridSpec:
    def test_defaults(self):
        spec = GridSpec()
        assert spec.dim == 2
        assert spec.h == pytest.approx(1.0 / spec.n)

    @pytest.mark.parametrize("dim", [1, 4])
    def test_rejects_dimension(self, dim):
        with pytest.raises(ValidationError, match="dim must be 2 or 3"):
            GridSpec(dim=dim, n=1)

    def test_rejects_zero_cells(self):
        with pytest.raises(ValidationError, match="n must be >= 1"):
            GridSpec(dim=2, n=0)

    @pytest.mark.parametrize("fields", [{"dim": 4, "n": 1}, {"dim": 2, "n": 0}])
    def test_validation_error_carries_mesh_spec_error(self, fields):
        with pytest.raises(ValidationError) as info:
            GridSpec(**fields)
        cause = info.value.errors()[0]["ctx"]["error"]
        assert isinstance(cause, MeshSpecError)

    def test_check_grid(self):
        check_grid(3, 1)
        with pytest.raises(MeshSpecError, match="got 1"):
            check_grid(dim=1)

    def test_build_mesh_rechecks_unvalidated_spec(self):
        with pytest.raises(MeshSpecError):
            build_mesh(GridSpec.model_construct(dim=2, n=0))


class TestBuildMesh:
    def test_counts_3d_single_cell(self):
        mesh = build_mesh(GridSpec(dim=3, n=1))
        assert mesh.n_cells == 2
        assert len(mesh.faces_with_tag(FaceTag.GAMMA_I)) == 1
        assert len(mesh.faces_with_tag(FaceTag.GAMMA_B)) == 1
        assert len(mesh.faces_with_tag(FaceTag.GAMMA_F)) == 1
        assert len(mesh.faces_with_tag(FaceTag.LATERAL)) == 8

    def test_counts_2d(self):
        mesh = build_mesh(GridSpec(dim=2, n=2))
        assert np.count_nonzero(mesh.cell_domain == BIOT) == 4
        assert np.count_nonzero(mesh.cell_domain == STOKES) == 4
        assert len(mesh.faces_with_tag(FaceTag.GAMMA_I)) == 2

    @pytest.mark.parametrize("dim,n", [(2, 1), (2, 3), (3, 2)])
    def test_cell_total_and_coordinates(self, dim, n):
        mesh = build_mesh(GridSpec(dim=dim, n=n))
        assert mesh.n_cells == 2 * n ** dim
        scaled = mesh.vertices * n
        np.testing.assert_allclose(scaled, np.round(scaled), atol=1e-12)
        assert mesh.vertices[:, -1].min() == pytest.approx(-1.0)
        assert mesh.vertices[:, -1].max() == pytest.approx(1.0)

    def test_volumes_and_interface_area(self):
        for dim, n in [(2, 3), (3, 2)]:
            mesh = build_mesh(GridSpec(dim=dim, n=n))
            total = sum(mesh.cell_volume(c) for c in range(mesh.n_cells))
            assert total == pytest.approx(2.0, abs=1e-14)
            area = sum(mesh.face_area(f) for f in mesh.faces_with_tag(FaceTag.GAMMA_I))
            assert area == pytest.approx(1.0, abs=1e-14)

    def test_interface_normal_convention(self):
        mesh = build_mesh(GridSpec(dim=3, n=2))
        for face in mesh.faces_with_tag(FaceTag.GAMMA_I):
            assert face.normal == (0.0, 0.0, 1.0)
            assert face.origin[-1] == pytest.approx(0.0)

    def test_every_boundary_face_has_one_tag_on_its_plane(self):
        mesh = build_mesh(GridSpec(dim=2, n=2))
        heights = {FaceTag.GAMMA_B: 1.0, FaceTag.GAMMA_F: -1.0, FaceTag.GAMMA_I: 0.0}
        for face in mesh.faces:
            if face.tag in heights:
                z = mesh.vertices[list(face.vertices), -1]
                np.testing.assert_allclose(z, heights[face.tag], atol=1e-12)
            else:
                x = mesh.vertices[list(face.vertices), face.axis]
                assert np.all(np.isclose(x, 0.0)) or np.all(np.isclose(x, 1.0))

    def test_lateral_partner_is_fixed_point_free_involution(self):
        mesh = build_mesh(GridSpec(dim=3, n=4))
        assert len(mesh.faces_with_tag(FaceTag.GAMMA_I)) == 16
        lateral = [f.index for f in mesh.faces_with_tag(FaceTag.LATERAL)]
        partner = mesh.lateral_partner
        for idx in lateral:
            assert partner[idx] != idx
            assert partner[partner[idx]] == idx
            a, b = mesh.faces[idx], mesh.faces[partner[idx]]
            shift = np.asarray(b.origin) - np.asarray(a.origin)
            expected = np.zeros(3)
            expected[a.axis] = 1.0 if a.normal[a.axis] < 0 else -1.0
            np.testing.assert_allclose(shift, expected, atol=1e-12)


class TestLateralPairs:
    def test_2d_single_cell(self):
        mesh = build_mesh(GridSpec(dim=2, n=1))
        pairs = lateral_pairs(mesh)
        assert len(pairs) == 3
        for slave, master in pairs:
            xs, xm = mesh.vertices[slave], mesh.vertices[master]
            assert xs[0] == pytest.approx(1.0)
            assert xm[0] == pytest.approx(0.0)
            assert xs[1] == pytest.approx(xm[1])
        assert sorted(mesh.vertices[m, 1] for _, m in pairs) == [-1.0, 0.0, 1.0]

    def test_3d_columns_collapse_to_one_master(self):
        mesh = build_mesh(GridSpec(dim=3, n=1))
        pairs = lateral_pairs(mesh)
        masters = {resolve_master(pairs, v) for v in range(len(mesh.vertices))}
        lateral = {tuple(mesh.vertices[m, :2]) for m in masters}
        assert lateral == {(0.0, 0.0)}
        assert len(masters) == 3

    def test_3d_master_classes(self):
        mesh = build_mesh(GridSpec(dim=3, n=2))
        pairs = lateral_pairs(mesh)
        masters = {resolve_master(pairs, v) for v in range(len(mesh.vertices))}
        classes = {tuple(mesh.vertices[m, :2]) for m in masters}
        assert len(classes) == 4

    def test_resolution_is_idempotent(self):
        mesh = build_mesh(GridSpec(dim=3, n=2))
        pairs = lateral_pairs(mesh)
        for slave, _ in pairs:
            master = resolve_master(pairs, slave)
            assert resolve_master(pairs, master) == master


class TestQuadrature:
    def test_cell_weights_sum_to_volume(self):
        mesh = build_mesh(GridSpec(dim=2, n=3))
        _, weights = mesh.cell_quadrature(0)
        assert weights.sum() == pytest.approx((1.0 / 3) ** 2)

    def test_cell_rule_integrates_biquadratic_exactly(self):
        mesh = build_mesh(GridSpec(dim=2, n=2))
        cell = 5
        points, weights = mesh.cell_quadrature(cell)
        x0, z0 = mesh.cell_origin[cell]
        h = mesh.h
        exact = ((x0 + h) ** 3 - x0 ** 3) / 3 * ((z0 + h) ** 3 - z0 ** 3) / 3
        assert np.sum(weights * points[:, 0] ** 2 * points[:, 1] ** 2) == pytest.approx(exact, rel=1e-13)

    def test_interface_face_weights_3d(self):
        mesh = build_mesh(GridSpec(dim=3, n=2))
        face = mesh.faces_with_tag(FaceTag.GAMMA_I)[0]
        points, weights = mesh.face_quadrature(face)
        assert weights.sum() == pytest.approx(0.25)
        np.testing.assert_allclose(points[:, -1], 0.0, atol=1e-14)
