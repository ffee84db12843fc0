import numpy as np
import pytest

from src.discretization.mesh import BIOT, STOKES, FaceTag, GridSpec, build_mesh
from src.discretization.spaces import (
    SpaceSpec,
    build_dofmap,
    build_field_dofmaps,
    eval_field,
    eval_gradient,
    interpolate,
    space_spec,
)
from src.errors import BCViolation, OutOfDomain, SpaceSpecError


def _mesh(dim, n):
    return build_mesh(GridSpec(dim=dim, n=n))


class TestSpaceSpec:
    def test_taylor_hood_pairings(self):
        for dim in (2, 3):
            assert space_spec("v", dim).degree == space_spec("pf", dim).degree + 1
            assert space_spec("u", dim).degree == space_spec("p", dim).degree + 1

    def test_components_and_boundary_tags(self):
        assert space_spec("u", 3).components == 3
        assert space_spec("p", 3).components == 1
        assert space_spec("w", 2).dirichlet == frozenset({FaceTag.GAMMA_B})
        assert space_spec("v", 2).dirichlet == frozenset({FaceTag.GAMMA_F})
        assert space_spec("pf", 2).dirichlet == frozenset()

    def test_unknown_field(self):
        with pytest.raises(SpaceSpecError):
            space_spec("q", 2)


class TestBuildDofmap:
    def test_pressure_3d_single_cell_has_one_free_dof(self):
        dofmap = build_dofmap(_mesh(3, 1), space_spec("p", 3))
        assert dofmap.n_nodes == 8
        assert dofmap.n_free == 1

    def test_stokes_pressure_2d_single_cell(self):
        # four vertices of the Stokes box, two periodic classes, no Dirichlet condition
        dofmap = build_dofmap(_mesh(2, 1), space_spec("pf", 2))
        assert dofmap.n_nodes == 4
        assert dofmap.n_slaves == 2
        assert dofmap.n_free == 2

    def test_all_faces_dirichlet_leaves_nothing_free(self):
        spec = SpaceSpec("p", 1, 1, BIOT, frozenset({FaceTag.GAMMA_B, FaceTag.GAMMA_I, FaceTag.LATERAL}))
        assert build_dofmap(_mesh(2, 1), spec).n_free == 0

    def test_rejects_degree(self):
        spec = SpaceSpec("p", 3, 1, BIOT, frozenset())
        with pytest.raises(SpaceSpecError, match="degree must be 1 or 2"):
            build_dofmap(_mesh(2, 1), spec)

    @pytest.mark.parametrize("field", ["u", "p", "v", "pf"])
    @pytest.mark.parametrize("dim,n", [(2, 2), (3, 1)])
    def test_free_count_identity(self, field, dim, n):
        dofmap = build_dofmap(_mesh(dim, n), space_spec(field, dim))
        assert dofmap.n_free == dofmap.n_dofs - dofmap.n_slaves - dofmap.n_pinned

    def test_dirichlet_wins_over_periodicity(self):
        dofmap = build_dofmap(_mesh(2, 2), space_spec("u", 2))
        np.testing.assert_array_equal(dofmap.pinned, dofmap.pinned[dofmap.master])
        top = dofmap.boundary_nodes(FaceTag.GAMMA_B)
        assert np.all(dofmap.pinned[top])
        assert np.all(dofmap.free_index[top] == -1)

    def test_interface_nodes_are_unconstrained(self):
        dofmaps = build_field_dofmaps(_mesh(2, 2))
        for dofmap in (dofmaps.u, dofmaps.p, dofmaps.v, dofmaps.pf):
            nodes = dofmap.boundary_nodes(FaceTag.GAMMA_I)
            assert not np.any(dofmap.pinned[nodes])

    def test_sizes_in_monolithic_order(self):
        dofmaps = build_field_dofmaps(_mesh(2, 1))
        sizes = dofmaps.sizes()
        assert sizes[0] == sizes[1] == dofmaps.u.n_free
        assert sizes[2:] == (dofmaps.p.n_free, dofmaps.v.n_free, dofmaps.pf.n_free)

    def test_prolongation_restriction(self, rng):
        dofmap = build_dofmap(_mesh(2, 2), space_spec("v", 2))
        free = rng.standard_normal(dofmap.n_free)
        full = dofmap.expand(free)
        np.testing.assert_array_equal(dofmap.restrict(full), free)
        np.testing.assert_array_equal(dofmap.expand(dofmap.restrict(full)), full)
        assert dofmap.prolongation.shape == (dofmap.n_dofs, dofmap.n_free)


class TestInterpolate:
    def test_zero_field(self):
        dofmap = build_dofmap(_mesh(2, 2), space_spec("u", 2))
        coefs = interpolate(lambda x: np.zeros((x.shape[0], 2)), dofmap)
        np.testing.assert_array_equal(coefs, 0.0)

    def test_linear_pressure(self):
        dofmap = build_dofmap(_mesh(2, 2), space_spec("p", 2))
        coefs = interpolate(lambda x: 1.0 - x[:, -1], dofmap)
        np.testing.assert_allclose(coefs, 1.0 - dofmap.coords[:, -1], atol=1e-15)
        np.testing.assert_array_equal(coefs[dofmap.boundary_nodes(FaceTag.GAMMA_B)], 0.0)

    def test_periodic_slaves_copy_masters(self):
        dofmap = build_dofmap(_mesh(2, 3), space_spec("p", 2))
        coefs = interpolate(lambda x: np.sin(2 * np.pi * x[:, 0]) * (1.0 - x[:, -1]), dofmap)
        np.testing.assert_array_equal(coefs, coefs[dofmap.master])

    def test_bc_violation(self):
        dofmap = build_dofmap(_mesh(2, 1), space_spec("p", 2))
        with pytest.raises(BCViolation) as info:
            interpolate(lambda x: np.ones(x.shape[0]), dofmap)
        assert info.value.max_violation == pytest.approx(1.0)

    def test_component_mismatch(self):
        dofmap = build_dofmap(_mesh(2, 1), space_spec("v", 2))
        with pytest.raises(SpaceSpecError):
            interpolate(lambda x: np.zeros(x.shape[0]), dofmap)


class TestEvalField:
    def test_polynomial_reproduction(self, rng):
        spec = SpaceSpec("q", 2, 1, STOKES, frozenset(), periodic=False)
        dofmap = build_dofmap(_mesh(2, 2), spec)
        coefs = interpolate(lambda x: x[:, 0] ** 2 * x[:, 1] ** 2 + x[:, 1], dofmap)
        points = np.column_stack([rng.uniform(0, 1, 20), rng.uniform(-1, 0, 20)])
        values = eval_field(coefs, dofmap, points)
        np.testing.assert_allclose(values, points[:, 0] ** 2 * points[:, 1] ** 2 + points[:, 1], atol=1e-13)
        grads = eval_gradient(coefs, dofmap, points)
        np.testing.assert_allclose(grads[:, 0, 0], 2 * points[:, 0] * points[:, 1] ** 2, atol=1e-12)

    def test_zero_coefficients(self):
        dofmap = build_dofmap(_mesh(2, 2), space_spec("u", 2))
        value = eval_field(np.zeros(dofmap.n_dofs), dofmap, np.array([0.3, 0.4]))
        np.testing.assert_array_equal(value, [0.0, 0.0])

    def test_nodal_duality(self, rng):
        dofmap = build_dofmap(_mesh(2, 2), space_spec("pf", 2))
        coefs = rng.standard_normal(dofmap.n_dofs)
        np.testing.assert_allclose(eval_field(coefs, dofmap, dofmap.coords), coefs, atol=1e-13)

    def test_periodic_consistency(self):
        dofmap = build_dofmap(_mesh(2, 2), space_spec("u", 2))
        coefs = interpolate(
            lambda x: np.column_stack([np.cos(2 * np.pi * x[:, 0]) * (1 - x[:, 1])] * 2), dofmap
        )
        for node in np.nonzero(dofmap.master != np.arange(dofmap.n_nodes))[0]:
            master = dofmap.master[node]
            np.testing.assert_allclose(
                eval_field(coefs, dofmap, dofmap.coords[node]),
                eval_field(coefs, dofmap, dofmap.coords[master]),
                atol=1e-14,
            )

    def test_dirichlet_consistency(self):
        dofmaps = build_field_dofmaps(_mesh(2, 2))
        u = interpolate(lambda x: np.column_stack([1 - x[:, 1], 2 * (1 - x[:, 1])]), dofmaps.u)
        v = interpolate(lambda x: np.column_stack([(1 + x[:, 1]), (1 + x[:, 1]) ** 2]), dofmaps.v)
        for node in dofmaps.u.boundary_nodes(FaceTag.GAMMA_B):
            np.testing.assert_allclose(eval_field(u, dofmaps.u, dofmaps.u.coords[node]), 0.0, atol=1e-15)
        for node in dofmaps.v.boundary_nodes(FaceTag.GAMMA_F):
            np.testing.assert_allclose(eval_field(v, dofmaps.v, dofmaps.v.coords[node]), 0.0, atol=1e-15)

    def test_out_of_domain(self):
        dofmap = build_dofmap(_mesh(2, 1), space_spec("p", 2))
        with pytest.raises(OutOfDomain):
            eval_field(np.zeros(dofmap.n_dofs), dofmap, np.array([0.5, -0.5]))
