"""Energies, dissipation, energy balance, interface residuals and error norms."""

import logging
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from src.discretization.elements import GAUSS_POINTS_PER_DIRECTION, gauss_rule
from src.discretization.forms import BlockSystem, MaterialParams
from src.discretization.spaces import DofMap, FieldDofMaps, interface_quadrature_points, interface_reference_points
from src.dynamics.state import FIELD_ORDER, SchemeConfig, StateVector, Trajectory

logger = logging.getLogger(__name__)

ENERGY_COLUMNS = (
    "step", "t", "e_kin_b", "e_el", "e_sto", "e_kin_f",
    "d_darcy", "d_visc", "d_slip", "balance_residual",
)


@dataclass(frozen=True)
class EnergyReport:
    step: int
    t: float
    e_kin_b: float
    e_el: float
    e_sto: float
    e_kin_f: float
    d_darcy: float = 0.0
    d_visc: float = 0.0
    d_slip: float = 0.0
    balance_residual: float = 0.0

    @property
    def total_energy(self) -> float:
        return self.e_kin_b + self.e_el + self.e_sto + self.e_kin_f

    @property
    def total_dissipation(self) -> float:
        return self.d_darcy + self.d_visc + self.d_slip

    def as_row(self) -> Tuple:
        values = asdict(self)
        return tuple(values[name] for name in ENERGY_COLUMNS)


def _free_blocks(state: StateVector, dofmaps: FieldDofMaps) -> Dict[str, np.ndarray]:
    maps = {"u": dofmaps.u, "w": dofmaps.w, "p": dofmaps.p, "v": dofmaps.v, "pf": dofmaps.pf}
    return {name: maps[name].restrict(getattr(state, name)) for name in FIELD_ORDER}


def _quadratic(matrix, x: np.ndarray, y: Optional[np.ndarray] = None) -> float:
    y = x if y is None else y
    return float(x @ (matrix @ y))


def energy(state: StateVector, system: BlockSystem, step: int = 0) -> EnergyReport:
    """Instantaneous energy components from the assembled Gram matrices."""
    f = _free_blocks(state, system.dofmaps)
    return EnergyReport(
        step=step,
        t=state.t,
        e_kin_b=0.5 * _quadratic(system["inertia_b"], f["w"]),
        e_el=0.5 * _quadratic(system["elastic"], f["u"]),
        e_sto=0.5 * _quadratic(system["storage"], f["p"]),
        e_kin_f=0.5 * _quadratic(system["inertia_f"], f["v"]),
    )


def dissipation_forms(system: BlockSystem, p: np.ndarray, w: np.ndarray, v: np.ndarray) -> Dict[str, float]:
    """k|grad p|^2, 2 nu |D v|^2 and beta |(v - w) . tau|^2 on GammaI, for free vectors."""
    slip = (
        _quadratic(system["slip_ww"], w)
        + _quadratic(system["slip_wv"], w, v)
        + _quadratic(system["slip_vw"], v, w)
        + _quadratic(system["slip_vv"], v)
    )
    return {
        "darcy": _quadratic(system["darcy"], p),
        "visc": _quadratic(system["viscous"], v),
        "slip": slip,
    }


def dissipation_increment(
    state_n: StateVector, state_np1: StateVector, scheme: SchemeConfig, system: BlockSystem
) -> Dict[str, float]:
    """
    dt times the dissipation forms of the theta-averaged state.

    The Darcy term uses the pressure weight theta_p of the scheme.
    """
    a = _free_blocks(state_n, system.dofmaps)
    b = _free_blocks(state_np1, system.dofmaps)
    th = scheme.theta
    thp = scheme.pressure_theta(system.params.c0)
    p = thp * b["p"] + (1 - thp) * a["p"]
    w = th * b["w"] + (1 - th) * a["w"]
    v = th * b["v"] + (1 - th) * a["v"]
    forms = dissipation_forms(system, p, w, v)
    return {name: scheme.dt * value for name, value in forms.items()}


def energy_reports(trajectory: Trajectory, system: BlockSystem) -> List[EnergyReport]:
    """Energy reports with cumulative dissipation and balance residual for every state."""
    states = trajectory.states
    if not states:
        return []
    reports = [energy(states[0], system, 0)]
    e0 = reports[0].total_energy
    cumulative = {"darcy": 0.0, "visc": 0.0, "slip": 0.0}
    work = 0.0
    for n in range(1, len(states)):
        increments = dissipation_increment(states[n - 1], states[n], trajectory.scheme, system)
        for name, value in increments.items():
            cumulative[name] += value
        if n - 1 < len(trajectory.source_work):
            work += trajectory.source_work[n - 1]
        current = energy(states[n], system, n)
        residual = current.total_energy + sum(cumulative.values()) - e0 - work
        reports.append(EnergyReport(
            step=n,
            t=current.t,
            e_kin_b=current.e_kin_b,
            e_el=current.e_el,
            e_sto=current.e_sto,
            e_kin_f=current.e_kin_f,
            d_darcy=cumulative["darcy"],
            d_visc=cumulative["visc"],
            d_slip=cumulative["slip"],
            balance_residual=residual,
        ))
    return reports


def balance_series(trajectory: Trajectory, system: BlockSystem) -> np.ndarray:
    """e(t_n) + d(t_n) - e(0) - source work, one entry per state."""
    reports = trajectory.reports or energy_reports(trajectory, system)
    return np.array([r.balance_residual for r in reports])


def x_norm(state: StateVector, system: BlockSystem) -> float:
    """Energy norm sqrt(2 e) of a state (pf does not enter)."""
    return float(np.sqrt(max(2.0 * energy(state, system).total_energy, 0.0)))


# ----------------------------------------------------------------------
# Interface residuals
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class InterfaceTraces:
    """Traces on GammaI points: Biot side p, grad p, w, grad u; Stokes side v, grad v, pf."""

    p: np.ndarray
    grad_p: np.ndarray
    u: np.ndarray
    grad_u: np.ndarray
    w: np.ndarray
    v: np.ndarray
    grad_v: np.ndarray
    pf: np.ndarray


def interface_residual_values(traces: InterfaceTraces, params: MaterialParams) -> Dict[str, np.ndarray]:
    """
    Pointwise interface residuals with n_f = e_d and tangents e_1 .. e_{d-1}:

    R1 = k grad p . e_d + (v - w) . e_d
    R2 = beta (v - w) . tau + tau . sigma_f e_d
    R3 = sigma_f e_d - sigma_b e_d
    R4 = p + e_d . sigma_f e_d

    sigma_b = sigma_E(u) - alpha p I and sigma_f = 2 nu D(v) - pf I.
    R1 and R4 have shape (npts,), R2 (npts, d - 1), R3 (npts, d).
    """
    dim = traces.v.shape[-1]
    eye = np.eye(dim)
    strain_u = 0.5 * (traces.grad_u + np.swapaxes(traces.grad_u, -1, -2))
    strain_v = 0.5 * (traces.grad_v + np.swapaxes(traces.grad_v, -1, -2))
    div_u = np.trace(traces.grad_u, axis1=-2, axis2=-1)
    sigma_b = (
        2 * params.mu * strain_u
        + (params.lam * div_u - params.alpha * traces.p)[..., None, None] * eye
    )
    sigma_f = 2 * params.nu * strain_v - traces.pf[..., None, None] * eye
    traction_b = sigma_b[..., :, -1]
    traction_f = sigma_f[..., :, -1]
    slip = traces.v - traces.w
    return {
        "R1": params.k * traces.grad_p[..., -1] + slip[..., -1],
        "R2": params.beta * slip[..., :-1] + traction_f[..., :-1],
        "R3": traction_f - traction_b,
        "R4": traces.p + traction_f[..., -1],
    }


@dataclass(frozen=True)
class InterfaceResidualReport:
    """Face-wise L2 norms (nfaces,) of R1..R4 and their aggregates over GammaI."""

    per_face: Dict[str, np.ndarray]
    aggregate: Dict[str, float]

    def max_aggregate(self) -> float:
        return max(self.aggregate.values())


def _evaluate_on_interface(coefs: np.ndarray, dofmap: DofMap) -> Tuple[np.ndarray, np.ndarray]:
    ref = interface_reference_points(dofmap)
    nfaces, nq = len(dofmap.interface_cells), ref.shape[0]
    cells = np.repeat(dofmap.interface_cells, nq)
    local = np.tile(ref, (nfaces, 1))
    values, grads = dofmap.evaluate_in_cells(coefs, cells, local)
    return values.reshape(nfaces, nq, -1), grads.reshape(nfaces, nq, dofmap.components, dofmap.dim)


def interface_traces(state: StateVector, dofmaps: FieldDofMaps) -> InterfaceTraces:
    """Discrete one-sided traces at the GammaI quadrature points, shaped (nfaces, nq, ...)."""
    p, grad_p = _evaluate_on_interface(state.p, dofmaps.p)
    u, grad_u = _evaluate_on_interface(state.u, dofmaps.u)
    w, _ = _evaluate_on_interface(state.w, dofmaps.w)
    v, grad_v = _evaluate_on_interface(state.v, dofmaps.v)
    pf, _ = _evaluate_on_interface(state.pf, dofmaps.pf)
    return InterfaceTraces(
        p=p[..., 0], grad_p=grad_p[..., 0, :], u=u, grad_u=grad_u, w=w,
        v=v, grad_v=grad_v, pf=pf[..., 0],
    )


def interface_residuals(
    state: StateVector,
    system: BlockSystem,
    prescribed: Optional[Mapping[str, Callable[[np.ndarray, float], np.ndarray]]] = None,
) -> InterfaceResidualReport:
    """
    L2(GammaI) norms of the four interface residuals of a discrete state.

    Args:
        state: discrete state
        system: provides the DOF maps and parameters
        prescribed: optional interface sources G1..G4 (keyed "R1".."R4") that
            the residuals are measured against, as in sourced manufactured runs

    Returns:
        Per-face norms and aggregate norms over the whole interface.
    """
    dofmaps = system.dofmaps
    residuals = interface_residual_values(interface_traces(state, dofmaps), system.params)
    points, weights = interface_quadrature_points(dofmaps.u)
    nfaces, nq, dim = points.shape
    per_face = {}
    aggregate = {}
    for name, values in residuals.items():
        values = values.reshape(nfaces, nq, -1)
        if prescribed is not None and name in prescribed:
            target = np.asarray(prescribed[name](points.reshape(-1, dim), state.t), dtype=float)
            values = values - target.reshape(nfaces, nq, -1)
        squares = np.einsum("fqc,q->f", values ** 2, weights)
        per_face[name] = np.sqrt(squares)
        aggregate[name] = float(np.sqrt(squares.sum()))
    return InterfaceResidualReport(per_face, aggregate)


# ----------------------------------------------------------------------
# Error norms
# ----------------------------------------------------------------------
def integrate_squared_error(
    coefs: np.ndarray,
    dofmap: DofMap,
    exact: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    npts: int = GAUSS_POINTS_PER_DIRECTION,
) -> float:
    """
    Integral over the field's box of |u_h - exact|^2 with an npts Gauss rule per
    direction (|u_h|^2 when `exact` is None).
    """
    ref_points, ref_weights = gauss_rule(dofmap.dim, npts)
    ncells = dofmap.cell_nodes.shape[0]
    nq = ref_points.shape[0]
    cells = np.repeat(np.arange(ncells), nq)
    local = np.tile(ref_points, (ncells, 1))
    values, _ = dofmap.evaluate_in_cells(coefs, cells, local)
    if exact is not None:
        points = dofmap.cell_origin[cells] + dofmap.h * local
        values = values - np.asarray(exact(points), dtype=float).reshape(values.shape)
    weights = np.tile(ref_weights, ncells) * dofmap.h ** dofmap.dim
    return float(np.einsum("pc,p->", values ** 2, weights))


def l2_errors(
    state: StateVector,
    dofmaps: FieldDofMaps,
    exact: Mapping[str, Callable[[np.ndarray, float], np.ndarray]],
    t: Optional[float] = None,
) -> Dict[str, float]:
    """Per-field L2 errors against closed-form fields evaluated at time t (default state.t)."""
    t = state.t if t is None else t
    maps = {"u": dofmaps.u, "w": dofmaps.w, "p": dofmaps.p, "v": dofmaps.v, "pf": dofmaps.pf}
    errors = {}
    for name in FIELD_ORDER:
        if name not in exact:
            continue
        fn = exact[name]
        errors[name] = float(np.sqrt(integrate_squared_error(
            getattr(state, name), maps[name], lambda x, fn=fn: fn(x, t)
        )))
    return errors
