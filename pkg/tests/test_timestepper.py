import numpy as np
import pytest

from src.analysis.diagnostics import l2_errors
from src.discretization.forms import MaterialParams
from src.discretization.mesh import GridSpec
from src.dynamics.state import SchemeConfig, StateVector
from src.dynamics.timestepper import StepOperator, project_divergence_free, run, step
from src.errors import InitialDataError
from src.scenarios.cases import manufactured_case, polynomial_solution, prepare, stock_case, zero_case
from src.utils.solve_tracker import get_tracker

GRID = GridSpec(dim=2, n=2)


def _prepared(params, scheme, factory=stock_case):
    return prepare(factory(GRID, params, scheme))


class TestSchemeConfig:
    def test_rejects_theta(self):
        with pytest.raises(ValueError):
            SchemeConfig(theta=0.7)

    def test_pressure_weight(self):
        scheme = SchemeConfig(theta=0.5)
        assert scheme.pressure_theta(1.0) == 0.5
        assert scheme.pressure_theta(0.0) == 1.0
        assert SchemeConfig(dt=0.1, steps=5).final_time == pytest.approx(0.5)


class TestStateVector:
    def test_free_round_trip(self, dofmaps_2d, rng):
        x = rng.standard_normal(sum(dofmaps_2d.sizes()))
        state = StateVector.from_free(x, dofmaps_2d, 0.3)
        np.testing.assert_allclose(state.to_free(dofmaps_2d), x)
        assert state.t == 0.3

    def test_validate_shapes(self, dofmaps_2d):
        state = StateVector.zeros(dofmaps_2d)
        state.p = np.zeros(3)
        with pytest.raises(InitialDataError, match="block p"):
            state.validate(dofmaps_2d)


class TestEnergyIdentity:
    @pytest.mark.parametrize("c0", [1.0, 0.0])
    def test_crank_nicolson_balance(self, coupled_params, crank_nicolson, c0):
        prepared = _prepared(coupled_params.model_copy(update={"c0": c0}), crank_nicolson)
        trajectory = run(prepared.system, crank_nicolson, prepared.initial)
        e0 = trajectory.reports[0].total_energy
        assert e0 > 0
        residuals = np.abs([r.balance_residual for r in trajectory.reports])
        assert np.max(residuals) <= 1e-8 * e0

    def test_crank_nicolson_balance_with_sources(self, coupled_params, crank_nicolson):
        prepared = _prepared(coupled_params, crank_nicolson, manufactured_case)
        trajectory = run(prepared.system, crank_nicolson, prepared.initial, prepared.config.sources)
        assert any(work != 0.0 for work in trajectory.source_work)
        e0 = trajectory.reports[0].total_energy
        residuals = np.abs([r.balance_residual for r in trajectory.reports])
        assert np.max(residuals) <= 1e-8 * e0

    @pytest.mark.parametrize("c0", [1.0, 0.0])
    def test_backward_euler_dissipates(self, coupled_params, backward_euler, c0):
        prepared = _prepared(coupled_params.model_copy(update={"c0": c0}), backward_euler)
        trajectory = run(prepared.system, backward_euler, prepared.initial)
        reports = trajectory.reports
        e0 = reports[0].total_energy
        for previous, current in zip(reports[:-1], reports[1:]):
            assert current.total_energy <= previous.total_energy * (1 + 1e-10)
            assert current.total_energy + current.total_dissipation <= e0 * (1 + 1e-10)
            assert current.d_darcy >= 0 and current.d_visc >= 0 and current.d_slip >= 0


@pytest.mark.slow
class TestEnergyAtScale:
    """Energy identity and inequality on the acceptance grids, 50 steps each."""

    STEPS = 50

    @staticmethod
    def _reports(dim, n, c0, theta):
        params = MaterialParams(rho_b=1.3, rho_f=0.8, lam=0.7, mu=1.1, alpha=0.6, c0=c0, k=0.4, nu=0.9, beta=1.7)
        scheme = SchemeConfig(theta=theta, dt=1.0 / n, steps=TestEnergyAtScale.STEPS)
        prepared = prepare(stock_case(GridSpec(dim=dim, n=n), params, scheme))
        reports = run(prepared.system, scheme, prepared.initial).reports
        assert len(reports) == TestEnergyAtScale.STEPS + 1
        return reports

    @pytest.mark.parametrize("dim,n", [(2, 8), (3, 2)])
    @pytest.mark.parametrize("c0", [1.0, 0.0])
    def test_crank_nicolson_identity(self, dim, n, c0):
        reports = self._reports(dim, n, c0, 0.5)
        e0 = reports[0].total_energy
        assert e0 > 0
        assert max(abs(r.balance_residual) for r in reports) <= 1e-8 * e0

    @pytest.mark.parametrize("dim,n", [(2, 8), (3, 2)])
    @pytest.mark.parametrize("c0", [1.0, 0.0])
    def test_backward_euler_inequality(self, dim, n, c0):
        reports = self._reports(dim, n, c0, 1.0)
        e0 = reports[0].total_energy
        for previous, current in zip(reports[:-1], reports[1:]):
            assert current.total_energy <= previous.total_energy * (1 + 1e-10)
            assert current.total_energy + current.total_dissipation <= e0 * (1 + 1e-10)


class TestRun:
    def test_trajectory_layout(self, params, crank_nicolson):
        prepared = _prepared(params, crank_nicolson)
        trajectory = run(prepared.system, crank_nicolson, prepared.initial)
        assert len(trajectory) == crank_nicolson.steps + 1
        assert len(trajectory.reports) == len(trajectory)
        assert trajectory.final.t == pytest.approx(crank_nicolson.final_time)
        assert get_tracker().get_factorization_count("step") == 1
        assert get_tracker().get_solve_count("step") == crank_nicolson.steps

    def test_zero_steps(self, params):
        scheme = SchemeConfig(steps=0)
        prepared = _prepared(params, scheme)
        trajectory = run(prepared.system, scheme, prepared.initial)
        assert len(trajectory) == 1
        assert trajectory.reports[0].balance_residual == 0.0

    def test_zero_data_stays_zero(self, params, crank_nicolson):
        prepared = _prepared(params, crank_nicolson, zero_case)
        trajectory = run(prepared.system, crank_nicolson, prepared.initial)
        assert max(state.max_abs() for state in trajectory.states) == 0.0

    def test_step_matches_run(self, params, backward_euler):
        prepared = _prepared(params, backward_euler)
        trajectory = run(prepared.system, backward_euler, prepared.initial)
        single = step(prepared.initial, prepared.system, backward_euler)
        for a, b in zip(single.blocks(), trajectory.states[1].blocks()):
            np.testing.assert_allclose(a, b, atol=1e-13)

    def test_velocity_stays_divergence_free(self, params, crank_nicolson):
        prepared = _prepared(params, crank_nicolson)
        trajectory = run(prepared.system, crank_nicolson, prepared.initial)
        B = prepared.system["stokes_div"]
        vmap = prepared.dofmaps.v
        for state in trajectory.states:
            assert np.max(np.abs(B @ vmap.restrict(state.v))) < 1e-11

    def test_permuted_factorization(self, coupled_params, crank_nicolson, rng):
        prepared = _prepared(coupled_params, crank_nicolson)
        plain = StepOperator(prepared.system, crank_nicolson)
        permuted = StepOperator(prepared.system, crank_nicolson, permutation=rng.permutation(plain.size))
        a = run(prepared.system, crank_nicolson, prepared.initial, operator=plain)
        b = run(prepared.system, crank_nicolson, prepared.initial, operator=permuted)
        assert max((x - y).max_abs() for x, y in zip(a.states, b.states)) <= 1e-10

    def test_rejects_bad_permutation(self, params, crank_nicolson):
        prepared = _prepared(params, crank_nicolson)
        with pytest.raises(ValueError, match="permutation"):
            StepOperator(prepared.system, crank_nicolson, permutation=np.zeros(3, dtype=int))

    def test_polynomial_solution_reproduced(self, crank_nicolson):
        params = MaterialParams()
        case = manufactured_case(GRID, params, crank_nicolson, polynomial_solution(2))
        prepared = prepare(case)
        trajectory = run(prepared.system, crank_nicolson, prepared.initial, case.sources)
        errors = l2_errors(trajectory.final, prepared.dofmaps, case.exact.field_functions())
        assert max(errors.values()) < 1e-8


class TestProjection:
    def test_idempotent(self, params, crank_nicolson):
        prepared = _prepared(params, crank_nicolson)
        again, defect = project_divergence_free(prepared.initial.v, prepared.system)
        assert defect < 1e-10
        np.testing.assert_allclose(again, prepared.initial.v, atol=1e-10)

    def test_removes_divergence(self, make_system, rng):
        _, dofmaps, system = make_system(2, 2)
        raw = dofmaps.v.expand(rng.standard_normal(dofmaps.v.n_free))
        projected, defect = project_divergence_free(raw, system)
        assert defect > 0
        assert np.max(np.abs(system["stokes_div"] @ dofmaps.v.restrict(projected))) < 1e-11
