from dataclasses import replace

import numpy as np
import pytest

from src.analysis.operator_lab import (
    ADJOINT,
    FORWARD,
    adjoint_pairing_defect,
    apply_adjoint_generator,
    assemble_pencil,
    build_adjoint_system,
    build_divfree_basis,
    build_generator,
    check_dissipativity,
    expand_reduced,
    propagate_exact,
    reduce_state,
    reduced_theta_step,
    semigroup_order,
    solve_resolvent,
    transpose_defect,
    with_adjoint,
)
from src.discretization.forms import MaterialParams
from src.discretization.mesh import GridSpec
from src.discretization.spaces import interpolate
from src.dynamics.state import SchemeConfig
from src.dynamics.timestepper import step
from src.errors import DegenerateStorage, DenseCapExceeded, DissipativityViolation
from src.scenarios.cases import prepare, stock_case


@pytest.fixture
def prepared(coupled_params):
    return prepare(stock_case(GridSpec(dim=2, n=1), coupled_params, SchemeConfig(theta=1.0, dt=0.05, steps=4)))


@pytest.fixture
def bundle(prepared):
    return with_adjoint(build_generator(prepared.system))


class TestBasis:
    def test_orthonormal_kernel(self, prepared):
        basis = build_divfree_basis(prepared.system)
        Z = basis.Z
        np.testing.assert_allclose(Z.T @ Z, np.eye(basis.dimension), atol=1e-12)
        assert np.max(np.abs(prepared.system["stokes_div"] @ Z)) < 1e-12
        assert basis.dimension + basis.constraint_rank == prepared.dofmaps.v.n_free

    def test_dense_cap(self, prepared):
        with pytest.raises(DenseCapExceeded):
            build_divfree_basis(prepared.system, dense_cap=1)


class TestGenerator:
    def test_degenerate_storage(self, make_system, coupled_params):
        _, _, system = make_system(2, 1, coupled_params.model_copy(update={"c0": 0.0}))
        with pytest.raises(DegenerateStorage):
            build_generator(system)
        with pytest.raises(DegenerateStorage):
            build_adjoint_system(system)

    def test_gram_matrix_positive_definite(self, bundle):
        np.testing.assert_allclose(bundle.M_X, bundle.M_X.T, atol=1e-14)
        assert np.min(np.linalg.eigvalsh(bundle.M_X)) > 0

    def test_sizes(self, bundle):
        assert sum(bundle.sizes) == bundle.size == bundle.J.shape[0]
        y = np.arange(bundle.size, dtype=float)
        parts = bundle.split(y)
        assert [len(parts[name]) for name in ("u", "w", "p", "v")] == list(bundle.sizes)

    def test_adjoint_is_transpose(self, bundle):
        assert transpose_defect(bundle) <= 1e-12

    def test_conventions(self, bundle):
        assert ADJOINT.flipped() == FORWARD
        np.testing.assert_array_equal(assemble_pencil(bundle.system, bundle.basis, FORWARD), bundle.J)

    def test_adjoint_generator_in_energy_inner_product(self, bundle, rng):
        y, z = rng.standard_normal((2, bundle.size))
        lhs = bundle.inner(bundle.generator @ y, z)
        rhs = bundle.inner(y, apply_adjoint_generator(bundle, z))
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)


class TestDissipativity:
    def test_random_states(self, bundle):
        summary = check_dissipativity(bundle, samples=100, seed=3)
        assert summary["samples"] == 100
        assert summary["max_sign_excess"] <= 1e-10

    def test_explicit_vectors(self, bundle):
        zero = np.zeros((1, bundle.size))
        assert check_dissipativity(bundle, vectors=zero)["max_identity_defect"] == 0.0

    def test_violation_reported(self, bundle):
        flipped = replace(bundle, J=-bundle.J)
        with pytest.raises(DissipativityViolation) as info:
            check_dissipativity(flipped, samples=5, seed=0)
        assert len(info.value.offending) == 5


class TestResolvent:
    def test_round_trip(self, bundle, rng):
        y_star = rng.standard_normal(bundle.size)
        y = solve_resolvent(bundle, y_star)
        recovered = np.linalg.solve(bundle.M_X, bundle.J.T @ y)
        np.testing.assert_allclose(recovered, y_star, rtol=1e-9, atol=1e-9)

    def test_zero_data(self, bundle):
        np.testing.assert_array_equal(solve_resolvent(bundle, np.zeros(bundle.size)), 0.0)


class TestReducedDynamics:
    def test_reduce_expand(self, bundle, prepared):
        y = reduce_state(prepared.initial, bundle)
        back = expand_reduced(y, bundle)
        np.testing.assert_allclose(back.u, prepared.initial.u, atol=1e-13)
        np.testing.assert_allclose(back.v, prepared.initial.v, atol=1e-12)
        assert not np.any(back.pf)

    def test_backward_euler_matches_full_step(self, bundle, prepared):
        scheme = prepared.config.scheme
        full = step(prepared.initial, prepared.system, scheme)
        y0 = reduce_state(prepared.initial, bundle)
        reduced = reduced_theta_step(bundle, y0, scheme.dt, 1.0, 1)[-1]
        y1 = reduce_state(full, bundle)
        assert np.max(np.abs(reduced - y1)) <= 1e-9 * np.max(np.abs(y1))

    def test_exponential_at_zero(self, bundle, rng):
        y0 = rng.standard_normal(bundle.size)
        np.testing.assert_allclose(propagate_exact(bundle, y0, 0.0), y0)

    def test_energy_decays_under_semigroup(self, bundle, prepared):
        y0 = reduce_state(prepared.initial, bundle)
        assert bundle.norm(propagate_exact(bundle, y0, 0.2)) <= bundle.norm(y0) * (1 + 1e-12)

    def test_crank_nicolson_second_order(self, bundle, prepared):
        y0 = reduce_state(prepared.initial, bundle)
        result = semigroup_order(bundle, y0, 0.5)
        assert result["orders"][-1] >= 1.8

    @pytest.mark.parametrize("theta", [0.5, 1.0])
    def test_adjoint_pairing(self, bundle, prepared, rng, theta):
        y0 = reduce_state(prepared.initial, bundle)
        trajectory = reduced_theta_step(bundle, y0, 0.05, theta, 4)
        tests = rng.standard_normal((bundle.size, 3))
        assert adjoint_pairing_defect(bundle, trajectory, tests, 0.05, theta) <= 1e-9


PARAMETER_SETS = [
    MaterialParams(),
    MaterialParams(alpha=0.2, beta=0.5, k=2.0, c0=0.5),
    MaterialParams(alpha=0.9, beta=3.0, k=0.1, c0=2.0),
    MaterialParams(alpha=0.05, beta=1.0, k=1.0, c0=1e-2),
    MaterialParams(alpha=1.0, beta=0.1, k=10.0, c0=1.0),
    MaterialParams(rho_b=1.3, rho_f=0.8, lam=0.7, mu=1.1, alpha=0.6, c0=0.9, k=0.4, nu=0.9, beta=1.7),
]
GRIDS = [(2, 1), (2, 2), pytest.param(3, 1, marks=pytest.mark.slow)]


class TestParameterSweep:
    @pytest.fixture(params=range(len(PARAMETER_SETS)), ids=lambda i: f"set{i}")
    def material(self, request):
        return PARAMETER_SETS[request.param]

    @pytest.mark.parametrize("dim,n", GRIDS)
    def test_transpose_dissipativity_resolvent(self, make_system, material, dim, n):
        _, _, system = make_system(dim, n, material)
        bundle = with_adjoint(build_generator(system))
        assert transpose_defect(bundle) <= 1e-12

        summary = check_dissipativity(bundle, samples=100, seed=dim * 10 + n)
        assert summary["max_sign_excess"] <= 1e-10
        assert summary["max_identity_defect"] <= 1e-10

        rng = np.random.default_rng(n)
        for y_star in rng.standard_normal((20, bundle.size)):
            y = solve_resolvent(bundle, y_star)
            residual = np.linalg.norm(bundle.J.T @ y - bundle.M_X @ y_star) / np.linalg.norm(bundle.M_X @ y_star)
            assert residual <= 1e-10


class TestPencilStructure:
    def test_pressure_only_state_dissipates_darcy_energy(self, bundle, prepared):
        dofmaps = prepared.dofmaps
        p = dofmaps.p.restrict(interpolate(lambda x: 1.0 - x[:, -1], dofmaps.p))
        nu_, _, _, nv = bundle.sizes
        y = np.concatenate([np.zeros(2 * nu_), p, np.zeros(nv)])
        k = bundle.system.params.k
        # p = 1 - z on the unit Biot box: k |grad p|^2 = k
        assert -(y @ bundle.J @ y) == pytest.approx(k, rel=1e-12)

    def test_pressure_only_random_state(self, bundle, rng):
        nu_, _, np_, nv = bundle.sizes
        p = rng.standard_normal(np_)
        y = np.concatenate([np.zeros(2 * nu_), p, np.zeros(nv)])
        darcy = p @ (bundle.system["darcy"] @ p)
        assert -(y @ bundle.J @ y) == pytest.approx(darcy, rel=1e-12)

    def test_no_coupling_constants_leave_only_interface_terms(self, make_system):
        material = MaterialParams.model_construct(alpha=0.0, beta=0.0, c0=1.0)
        _, _, system = make_system(2, 2, material)
        bundle = with_adjoint(build_generator(system))
        for J in (bundle.J, bundle.J_adjoint):
            for row, col in (("w", "v"), ("v", "w"), ("u", "p"), ("u", "v"), ("p", "u"), ("v", "u")):
                assert not np.any(bundle.block(J, row, col)), (row, col)
        # elasticity meets the pressure only through the interface traces
        np.testing.assert_array_equal(bundle.block(bundle.J, "w", "p"), system["iface_p_u"].toarray())
        np.testing.assert_array_equal(bundle.block(bundle.J, "p", "w"), -system["iface_flux_u"].toarray())
        assert transpose_defect(bundle) <= 1e-12


class TestSemigroupConsistency:
    def test_crank_nicolson_order_with_unit_storage(self, coupled_params):
        case = stock_case(GridSpec(dim=2, n=1), coupled_params.model_copy(update={"c0": 1.0}), SchemeConfig(theta=0.5))
        prepared = prepare(case)
        bundle = build_generator(prepared.system)
        y0 = reduce_state(prepared.initial, bundle)
        result = semigroup_order(bundle, y0, 0.5)
        assert all(order >= 1.8 for order in result["orders"])
