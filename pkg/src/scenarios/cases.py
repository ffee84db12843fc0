"""Reproducible scenarios: stock initial-value runs, manufactured solutions and zero data."""

import logging
from dataclasses import dataclass, replace
from typing import Dict, Optional

import numpy as np
from numpy.polynomial import Polynomial

from src.analysis.diagnostics import InterfaceTraces, interface_residual_values
from src.discretization.forms import BlockSystem, MaterialParams, Sources, assemble_system
from src.discretization.mesh import GridSpec, MeshTopology, build_mesh
from src.discretization.spaces import FieldDofMaps, build_field_dofmaps, interpolate
from src.dynamics.state import SchemeConfig, StateVector
from src.dynamics.timestepper import project_divergence_free
from src.errors import InitialDataError
from src.scenarios.fields import (
    ONE,
    Field,
    Trig,
    Vector,
    as_jacobian_fn,
    as_scalar_fn,
    as_vector_fn,
    at_time,
    curl_potential_velocity,
    div_sym_gradient,
    divergence,
    gradient,
    laplacian,
    lateral_wave,
    vdt,
    vzero,
)

logger = logging.getLogger(__name__)

D0_TOLERANCE = 1e-10


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form (u, p, v, pf); w = u_t."""

    u: Vector
    p: Field
    v: Vector
    pf: Field

    @property
    def dim(self) -> int:
        return self.p.dim

    @property
    def w(self) -> Vector:
        return vdt(self.u)

    def field_functions(self) -> Dict[str, object]:
        return {
            "u": as_vector_fn(self.u),
            "w": as_vector_fn(self.w),
            "p": as_scalar_fn(self.p),
            "v": as_vector_fn(self.v),
            "pf": as_scalar_fn(self.pf),
        }

    def fluid_content(self, params: MaterialParams) -> Field:
        return params.c0 * self.p + params.alpha * divergence(self.u)

    def body_sources(self, params: MaterialParams) -> Dict[str, object]:
        """F_b, S and F_f obtained by substituting the fields into the strong equations."""
        u_tt = vdt(vdt(self.u))
        elastic = div_sym_gradient(self.u, params.mu, params.lam)
        grad_p = gradient(self.p)
        F_b = tuple(
            params.rho_b * a - e + params.alpha * g for a, e, g in zip(u_tt, elastic, grad_p)
        )
        S = params.c0 * self.p.dt() + params.alpha * divergence(self.w) - params.k * laplacian(self.p)
        viscous = div_sym_gradient(self.v, params.nu, 0.0)
        grad_pf = gradient(self.pf)
        F_f = tuple(
            params.rho_f * a.dt() - e + g for a, e, g in zip(self.v, viscous, grad_pf)
        )
        return {"F_b": F_b, "S": S, "F_f": F_f}

    def traces(self, points: np.ndarray, t: float) -> InterfaceTraces:
        fns = self.field_functions()
        return InterfaceTraces(
            p=fns["p"](points, t),
            grad_p=as_vector_fn(gradient(self.p))(points, t),
            u=fns["u"](points, t),
            grad_u=as_jacobian_fn(self.u)(points, t),
            w=fns["w"](points, t),
            v=fns["v"](points, t),
            grad_v=as_jacobian_fn(self.v)(points, t),
            pf=fns["pf"](points, t),
        )

    def sources(self, params: MaterialParams, interface: bool = True) -> Sources:
        """Body sources, plus G1..G4 = interface residuals of the exact fields when `interface`."""
        body = self.body_sources(params)
        G = {}
        if interface:
            def residual(name):
                return lambda x, t: interface_residual_values(self.traces(x, t), params)[name]

            G = {"G1": residual("R1"), "G2": residual("R2"), "G3": residual("R3"), "G4": residual("R4")}
        return Sources(
            F_b=as_vector_fn(body["F_b"]),
            S=as_scalar_fn(body["S"]),
            F_f=as_vector_fn(body["F_f"]),
            **G,
        )


@dataclass(frozen=True)
class InitialData:
    """
    Closed-form initial data evaluated at t = 0.

    p0 is required when c0 > 0; when c0 = 0 the fluid content d0 must equal
    alpha div u0 and p0 is ignored.
    """

    u0: Vector
    u1: Vector
    v0: Vector
    p0: Optional[Field] = None
    d0: Optional[Field] = None


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to run one experiment."""

    grid: GridSpec
    params: MaterialParams
    scheme: SchemeConfig
    initial: InitialData
    sources: Sources = Sources()
    exact: Optional[ExactSolution] = None
    kind: str = "stock"
    t0: float = 0.0

    def with_params(self, **changes) -> "ScenarioConfig":
        return replace(self, params=self.params.model_copy(update=changes))

    def with_scheme(self, **changes) -> "ScenarioConfig":
        return replace(self, scheme=self.scheme.model_copy(update=changes))

    def with_grid(self, n: int) -> "ScenarioConfig":
        return replace(self, grid=GridSpec(dim=self.grid.dim, n=n))


@dataclass
class PreparedCase:
    """Assembled system and discrete initial state of a scenario."""

    config: ScenarioConfig
    mesh: MeshTopology
    dofmaps: FieldDofMaps
    system: BlockSystem
    initial: StateVector
    projection_defect: float


def _check_fluid_content(initial: InitialData, params: MaterialParams, dofmaps: FieldDofMaps) -> None:
    if params.c0 > 0:
        if initial.p0 is None:
            raise InitialDataError("p0 is required when c0 > 0")
        return
    if initial.d0 is None:
        return
    nodes = dofmaps.p.coords
    expected = params.alpha * divergence(initial.u0)(nodes, 0.0)
    mismatch = float(np.max(np.abs(initial.d0(nodes, 0.0) - expected), initial=0.0))
    if mismatch > D0_TOLERANCE:
        raise InitialDataError(
            f"with c0 = 0 the fluid content d0 must equal alpha div u0 (mismatch {mismatch:.3e})"
        )


def prepare(config: ScenarioConfig) -> PreparedCase:
    """Build mesh, spaces and blocks, then interpolate (and project) the initial data."""
    mesh = build_mesh(config.grid)
    dofmaps = build_field_dofmaps(mesh)
    system = assemble_system(config.params, mesh, dofmaps)
    init = config.initial
    _check_fluid_content(init, config.params, dofmaps)

    u = interpolate(at_time(as_vector_fn(init.u0), config.t0), dofmaps.u)
    w = interpolate(at_time(as_vector_fn(init.u1), config.t0), dofmaps.w)
    v_raw = interpolate(at_time(as_vector_fn(init.v0), config.t0), dofmaps.v)
    if config.params.c0 > 0:
        p = interpolate(at_time(as_scalar_fn(init.p0), config.t0), dofmaps.p)
    else:
        p = np.zeros(dofmaps.p.n_dofs)
    v, defect = project_divergence_free(v_raw, system)
    if defect > 0:
        logger.info("initial velocity projected onto divergence-free fields, defect %.3e", defect)
    pf = np.zeros(dofmaps.pf.n_dofs)
    if config.exact is not None:
        pf = interpolate(at_time(as_scalar_fn(config.exact.pf), config.t0), dofmaps.pf)
    initial = StateVector(u=u, w=w, p=p, v=v, pf=pf, t=config.t0)
    return PreparedCase(config, mesh, dofmaps, system, initial, defect)


# ----------------------------------------------------------------------
# Stock fields
# ----------------------------------------------------------------------
def _biot_profile() -> Polynomial:
    """(1 - z)(1 + z), vanishing on GammaB (z = 1)."""
    return Polynomial([1.0, -1.0]) * Polynomial([1.0, 1.0])


def _stokes_potential_profile() -> Polynomial:
    """(1 + z)^2 (1 - z / 2): potentials whose velocity vanishes on GammaF."""
    return Polynomial([1.0, 1.0]) ** 2 * Polynomial([1.0, -0.5])


def stock_case(
    grid: GridSpec,
    params: MaterialParams,
    scheme: SchemeConfig,
    amplitude: float = 1.0,
) -> ScenarioConfig:
    """
    Smooth unforced initial-value problem.

    u0, u1 vanish on GammaB, v0 on GammaF; v0 is divergence-free in the
    continuum and projected discretely. d0 = alpha div u0, so p0 = 0 is
    consistent for every c0.
    """
    dim = grid.dim
    zprof = _biot_profile()
    u0 = tuple(
        Field.product(amplitude * (1.0 + 0.5 * i), lateral_wave(dim, (1, 1), (0.3 * i, 0.1)) + [zprof])
        for i in range(dim)
    )
    u1 = tuple(
        Field.product(0.5 * amplitude, lateral_wave(dim, (1, 2), (0.7, 0.2 * i)) + [Polynomial([1.0, -1.0])])
        for i in range(dim)
    )
    psi = [
        Field.product(amplitude * (1.0 - 0.25 * a), lateral_wave(dim, (1, 1), (0.4 + a, 0.0)) + [_stokes_potential_profile()])
        for a in range(dim - 1)
    ]
    v0 = curl_potential_velocity(psi)
    d0 = params.alpha * divergence(u0)
    p0 = Field.zero(dim)
    return ScenarioConfig(grid, params, scheme, InitialData(u0, u1, v0, p0, d0), kind="stock")


def zero_case(grid: GridSpec, params: MaterialParams, scheme: SchemeConfig) -> ScenarioConfig:
    dim = grid.dim
    zero = Field.zero(dim)
    return ScenarioConfig(
        grid, params, scheme,
        InitialData(vzero(dim), vzero(dim), vzero(dim), zero, zero),
        kind="zero",
    )


def manufactured_solution(dim: int, amplitude: float = 1.0) -> ExactSolution:
    """
    Trigonometric in the lateral directions (period 1), polynomial in x_d,
    cos(t) in time. u and p carry the factor (1 - x_d), v is built from
    potentials carrying (1 + x_d)^2, so every essential condition holds
    exactly and div v = 0.
    """
    cos_t = Trig(1.0)
    vanish_top = Polynomial([1.0, -1.0])
    u = tuple(
        Field.product(
            amplitude * (0.5 + 0.25 * i),
            lateral_wave(dim, (1, 1), (0.2 + 0.5 * i, 0.3)) + [vanish_top * Polynomial([1.0, 0.5 * (i + 1)])],
            cos_t,
        )
        for i in range(dim)
    )
    p = Field.product(
        amplitude, lateral_wave(dim, (1, 1), (0.6, 0.1)) + [vanish_top * Polynomial([1.0, 1.0])], cos_t
    )
    psi = [
        Field.product(
            0.5 * amplitude,
            lateral_wave(dim, (1, 1), (0.1 + 0.3 * a, 0.5)) + [_stokes_potential_profile()],
            cos_t,
        )
        for a in range(dim - 1)
    ]
    v = curl_potential_velocity(psi)
    pf = Field.product(amplitude, lateral_wave(dim, (1, 1), (0.9, 0.4)) + [Polynomial([0.5, 1.0])], cos_t)
    return ExactSolution(u, p, v, pf)


def polynomial_solution(dim: int) -> ExactSolution:
    """
    Time-constant, laterally constant solution inside the discrete spaces:
    u quadratic and v quadratic in x_d, p and pf linear.
    """
    flat = [ONE] * (dim - 1)
    vanish_top = Polynomial([1.0, -1.0])
    u = tuple(Field.product(1.0 + 0.5 * i, flat + [vanish_top * Polynomial([0.5, 0.25 * (i + 1)])]) for i in range(dim))
    p = Field.product(0.8, flat + [vanish_top])
    psi = [
        Field.product(0.3 + 0.1 * a, flat + [Polynomial([1.0, 1.0]) ** 2 * Polynomial([1.0, 0.5])])
        for a in range(dim - 1)
    ]
    v = curl_potential_velocity(psi)
    pf = Field.product(1.0, flat + [Polynomial([0.4, 0.7])])
    return ExactSolution(u, p, v, pf)


def manufactured_case(
    grid: GridSpec,
    params: MaterialParams,
    scheme: SchemeConfig,
    exact: Optional[ExactSolution] = None,
) -> ScenarioConfig:
    """
    Scenario whose exact solution is known: body sources from the strong
    equations and interface sources G1..G4 absorbing the interface mismatch.
    """
    exact = exact or manufactured_solution(grid.dim)
    initial = InitialData(
        u0=exact.u,
        u1=exact.w,
        v0=exact.v,
        p0=exact.p,
        d0=exact.fluid_content(params),
    )
    return ScenarioConfig(
        grid, params, scheme, initial,
        sources=exact.sources(params),
        exact=exact,
        kind="manufactured",
    )


def interface_exact_state(dim: int, params: MaterialParams, amplitude: float = 1.0) -> ExactSolution:
    """
    Time-independent fields meeting all four interface conditions exactly:
    u = c (1 - z) e_d, w = 0, p = a (1 - z), v = k a (1 + z) e_d, pf = a + 2 nu k a,
    with c = a (1 - alpha) / (2 mu + lambda).
    """
    a = amplitude
    c = a * (1.0 - params.alpha) / (2.0 * params.mu + params.lam)
    flat = [ONE] * (dim - 1)
    zero = Field.zero(dim)
    u = tuple(zero for _ in range(dim - 1)) + (Field.product(c, flat + [Polynomial([1.0, -1.0])]),)
    p = Field.product(a, flat + [Polynomial([1.0, -1.0])])
    v = tuple(zero for _ in range(dim - 1)) + (Field.product(params.k * a, flat + [Polynomial([1.0, 1.0])]),)
    pf = Field.product(a + 2.0 * params.nu * params.k * a, flat + [ONE])
    return ExactSolution(u, p, v, pf)


def build_case(
    kind: str,
    grid: GridSpec,
    params: MaterialParams,
    scheme: SchemeConfig,
    amplitude: float = 1.0,
) -> ScenarioConfig:
    """Scenario factory keyed by `scenario.kind`."""
    if kind == "stock":
        return stock_case(grid, params, scheme, amplitude)
    if kind == "zero":
        return zero_case(grid, params, scheme)
    if kind == "manufactured":
        return manufactured_case(grid, params, scheme, manufactured_solution(grid.dim, amplitude))
    if kind == "polynomial":
        return replace(manufactured_case(grid, params, scheme, polynomial_solution(grid.dim)), kind="polynomial")
    raise ValueError(f"unknown scenario kind {kind!r}")
