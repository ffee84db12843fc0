import numpy as np
import pytest

from src.analysis.diagnostics import (
    ENERGY_COLUMNS,
    EnergyReport,
    energy,
    integrate_squared_error,
    interface_residuals,
    l2_errors,
    x_norm,
)
from src.discretization.mesh import GridSpec
from src.discretization.spaces import interpolate
from src.dynamics.state import SchemeConfig, StateVector
from src.dynamics.timestepper import run
from src.scenarios.cases import interface_exact_state, manufactured_case, prepare
from src.scenarios.fields import at_time


def _interpolated(exact, dofmaps, t=0.0):
    fns = exact.field_functions()
    return StateVector(
        **{name: interpolate(at_time(fns[name], t), getattr(dofmaps, name)) for name in ("u", "w", "p", "v", "pf")},
        t=t,
    )


@pytest.fixture
def coupled_system(make_system, coupled_params):
    return make_system(2, 2, coupled_params)


class TestEnergyReport:
    def test_row_order_and_totals(self):
        report = EnergyReport(3, 0.3, 1.0, 2.0, 3.0, 4.0, 0.5, 0.25, 0.125, 1e-15)
        assert report.as_row() == (3, 0.3, 1.0, 2.0, 3.0, 4.0, 0.5, 0.25, 0.125, 1e-15)
        assert len(ENERGY_COLUMNS) == len(report.as_row())
        assert report.total_energy == 10.0
        assert report.total_dissipation == 0.875

    def test_zero_state(self, coupled_system):
        _, dofmaps, system = coupled_system
        state = StateVector.zeros(dofmaps)
        assert energy(state, system).total_energy == 0.0
        assert x_norm(state, system) == 0.0

    def test_elastic_energy_closed_form(self, coupled_system, coupled_params):
        _, dofmaps, system = coupled_system
        exact = interface_exact_state(2, coupled_params)
        report = energy(_interpolated(exact, dofmaps), system)
        c = (1 - coupled_params.alpha) / (2 * coupled_params.mu + coupled_params.lam)
        assert report.e_el == pytest.approx(0.5 * (2 * coupled_params.mu + coupled_params.lam) * c ** 2, rel=1e-12)
        assert report.e_kin_b == 0.0
        assert report.e_sto == pytest.approx(0.5 * coupled_params.c0 / 3, rel=1e-12)
        assert report.e_kin_f == pytest.approx(0.5 * coupled_params.rho_f * coupled_params.k ** 2 / 3, rel=1e-12)


class TestInterfaceResiduals:
    @pytest.mark.parametrize("dim", [2, pytest.param(3, marks=pytest.mark.slow)])
    def test_exact_interface_state(self, make_system, coupled_params, dim):
        _, dofmaps, system = make_system(dim, 2 if dim == 2 else 1, coupled_params)
        state = _interpolated(interface_exact_state(dim, coupled_params, amplitude=0.7), dofmaps)
        report = interface_residuals(state, system)
        assert set(report.aggregate) == {"R1", "R2", "R3", "R4"}
        assert report.max_aggregate() < 1e-12
        assert report.per_face["R1"].shape == (len(dofmaps.u.interface_cells),)

    def test_detects_normal_flux_mismatch(self, coupled_system, coupled_params):
        _, dofmaps, system = coupled_system
        state = _interpolated(interface_exact_state(2, coupled_params), dofmaps)
        state.w = interpolate(lambda x: np.column_stack([0 * x[:, 1], 1 - x[:, 1]]), dofmaps.w)
        report = interface_residuals(state, system)
        assert report.aggregate["R1"] == pytest.approx(1.0, rel=1e-12)
        assert report.aggregate["R4"] < 1e-12

    def test_prescribed_targets(self, coupled_system):
        _, dofmaps, system = coupled_system
        state = StateVector.zeros(dofmaps)
        report = interface_residuals(state, system, {"R4": lambda x, t: np.full(x.shape[0], 2.0)})
        assert report.aggregate["R4"] == pytest.approx(2.0, rel=1e-12)
        assert report.aggregate["R1"] == 0.0

    def test_discrete_residuals_shrink_under_refinement(self, params):
        aggregates = []
        for level in (4, 8):
            h = 1.0 / level
            scheme = SchemeConfig(theta=0.5, dt=h * h, steps=int(round(0.25 / (h * h))))
            case = manufactured_case(GridSpec(dim=2, n=level), params, scheme)
            prepared = prepare(case)
            final = run(prepared.system, scheme, prepared.initial, case.sources).final
            assert final.t == pytest.approx(0.25)
            report = interface_residuals(final, prepared.system, case.sources.interface_targets())
            aggregates.append(report.aggregate)
        coarse, fine = aggregates
        for name in ("R1", "R2", "R3", "R4"):
            assert fine[name] < coarse[name], name


class TestErrorNorms:
    def test_integrate_constant(self, dofmaps_2d):
        ones = np.ones(dofmaps_2d.pf.n_dofs)
        assert integrate_squared_error(ones, dofmaps_2d.pf) == pytest.approx(1.0, rel=1e-14)
        assert integrate_squared_error(ones, dofmaps_2d.pf, lambda x: np.ones(x.shape[0])) == pytest.approx(0.0, abs=1e-28)

    def test_l2_errors_of_interpolant(self, dofmaps_2d, coupled_params):
        exact = interface_exact_state(2, coupled_params)
        state = _interpolated(exact, dofmaps_2d)
        errors = l2_errors(state, dofmaps_2d, exact.field_functions())
        assert set(errors) == {"u", "w", "p", "v", "pf"}
        assert max(errors.values()) < 1e-13

    def test_l2_errors_of_zero_state(self, dofmaps_2d):
        errors = l2_errors(StateVector.zeros(dofmaps_2d), dofmaps_2d, {"p": lambda x, t: 1.0 - x[:, -1]})
        assert list(errors) == ["p"]
        assert errors["p"] == pytest.approx(np.sqrt(1.0 / 3.0), rel=1e-12)
