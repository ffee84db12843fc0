"""
Monolithic theta-scheme for the coupled Biot-Stokes system.

Unknowns are ordered (u, w, p, v, pf) and test rows (kinematic, momentum,
content, fluid, constraint). Pressure-related terms use the weight
theta_p = theta, or 1 when c0 = 0; the Stokes pressure is always implicit.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from src.analysis.diagnostics import energy_reports
from src.discretization.forms import BlockSystem, LoadVectors, Sources, assemble_load
from src.dynamics.saddle import SaddleFactorization, solve_saddle
from src.dynamics.state import SchemeConfig, StateVector, Trajectory
from src.middleware.check_guard import timed

logger = logging.getLogger(__name__)


class StepOperator:
    """
    Factorized step matrix of one (system, scheme) pair.

    An optional symmetric permutation reorders rows and columns before the
    factorization; solutions are mapped back so callers never see it.
    """

    def __init__(
        self,
        system: BlockSystem,
        scheme: SchemeConfig,
        permutation: Optional[np.ndarray] = None,
        label: str = "step",
    ):
        self.system = system
        self.scheme = scheme
        self.theta = scheme.theta
        self.theta_p = scheme.pressure_theta(system.params.c0)
        self.lhs, self.explicit = self._build_matrices()
        self.permutation = None if permutation is None else np.asarray(permutation)
        matrix = self.lhs
        if self.permutation is not None:
            if sorted(self.permutation.tolist()) != list(range(self.lhs.shape[0])):
                raise ValueError("permutation must reorder every unknown exactly once")
            matrix = self.lhs[self.permutation][:, self.permutation]
        self._factorization = SaddleFactorization(matrix, label)

    @property
    def size(self) -> int:
        return self.lhs.shape[0]

    def _build_matrices(self) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
        s = self.system
        dt, th, thp = self.scheme.dt, self.theta, self.theta_p
        A = s["elastic"]
        Mb = s["inertia_b"]
        pg = s["pressure_grad"] - s["iface_p_u"]
        content_u = s["content_div"] + s["iface_flux_u"]
        fluid_v = s["viscous"] + s["slip_vv"]
        nu_, np_, nv, npf = s.field_size("u"), s.field_size("p"), s.field_size("v"), s.field_size("pf")

        def zero(rows: int, cols: int) -> sp.csr_matrix:
            return sp.csr_matrix((rows, cols))

        lhs = sp.bmat([
            [A / dt, -th * A, zero(nu_, np_), zero(nu_, nv), zero(nu_, npf)],
            [th * A, Mb / dt + th * s["slip_ww"], thp * pg, th * s["slip_wv"], zero(nu_, npf)],
            [content_u / dt, zero(np_, nu_), s["storage"] / dt + thp * s["darcy"], th * s["iface_flux_v"], zero(np_, npf)],
            [zero(nv, nu_), th * s["slip_vw"], thp * s["iface_p_v"], s["inertia_f"] / dt + th * fluid_v, s["stokes_grad"]],
            [zero(npf, nu_), zero(npf, nu_), zero(npf, np_), -s["stokes_div"], zero(npf, npf)],
        ], format="csr")
        explicit = sp.bmat([
            [A / dt, (1 - th) * A, zero(nu_, np_), zero(nu_, nv), zero(nu_, npf)],
            [-(1 - th) * A, Mb / dt - (1 - th) * s["slip_ww"], -(1 - thp) * pg, -(1 - th) * s["slip_wv"], zero(nu_, npf)],
            [content_u / dt, zero(np_, nu_), s["storage"] / dt - (1 - thp) * s["darcy"], -(1 - th) * s["iface_flux_v"], zero(np_, npf)],
            [zero(nv, nu_), -(1 - th) * s["slip_vw"], -(1 - thp) * s["iface_p_v"], s["inertia_f"] / dt - (1 - th) * fluid_v, zero(nv, npf)],
            [zero(npf, nu_), zero(npf, nu_), zero(npf, np_), zero(npf, nv), zero(npf, npf)],
        ], format="csr")
        return lhs, explicit

    def weighted_loads(self, loads_n: LoadVectors, loads_np1: LoadVectors) -> LoadVectors:
        """theta-averaged loads; the content row uses theta_p."""
        th, thp = self.theta, self.theta_p
        return LoadVectors(
            th * loads_np1.momentum + (1 - th) * loads_n.momentum,
            thp * loads_np1.content + (1 - thp) * loads_n.content,
            th * loads_np1.fluid + (1 - th) * loads_n.fluid,
        )

    def rhs(self, x_n: np.ndarray, loads: LoadVectors) -> np.ndarray:
        nu_ = self.system.field_size("u")
        npf = self.system.field_size("pf")
        source = np.concatenate([np.zeros(nu_), loads.momentum, loads.content, loads.fluid, np.zeros(npf)])
        return self.explicit @ x_n + source

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.permutation is None:
            return self._factorization.solve(rhs, self.scheme.tol)
        y = self._factorization.solve(rhs[self.permutation], self.scheme.tol)
        x = np.empty_like(y)
        x[self.permutation] = y
        return x

    def advance(self, x_n: np.ndarray, loads: LoadVectors) -> np.ndarray:
        """One step on monolithic free vectors with already theta-averaged loads."""
        return self.solve(self.rhs(x_n, loads))

    def source_work(self, x_n: np.ndarray, x_np1: np.ndarray, loads: LoadVectors) -> float:
        """dt * (F^theta . w^theta + S^theta_p . p^theta_p + F_f^theta . v^theta)."""
        nu_, _, np_, nv, _ = self.system.sizes()
        th, thp = self.theta, self.theta_p
        w0, w1 = nu_, 2 * nu_
        p1 = w1 + np_
        v1 = p1 + nv
        avg = th * x_np1 + (1 - th) * x_n
        avg_p = thp * x_np1 + (1 - thp) * x_n
        work = loads.momentum @ avg[w0:w1] + loads.content @ avg_p[w1:p1] + loads.fluid @ avg[p1:v1]
        return float(self.scheme.dt * work)


def step(
    state: StateVector,
    system: BlockSystem,
    scheme: SchemeConfig,
    sources: Optional[Sources] = None,
    operator: Optional[StepOperator] = None,
) -> StateVector:
    """
    Advance `state` by one time step.

    Args:
        state: state at t_n
        system: assembled blocks
        scheme: theta, dt and solver tolerance
        sources: body and interface sources (None means zero)
        operator: prebuilt step operator to reuse its factorization

    Returns:
        The state at t_n + dt.
    """
    operator = operator or StepOperator(system, scheme)
    dofmaps = system.dofmaps
    t_n, t_np1 = state.t, state.t + scheme.dt
    loads = _step_loads(operator, sources, dofmaps, t_n, t_np1)
    x_np1 = operator.advance(state.to_free(dofmaps), loads)
    return StateVector.from_free(x_np1, dofmaps, t_np1)


def _step_loads(operator, sources, dofmaps, t_n, t_np1) -> LoadVectors:
    if sources is None or sources.is_zero:
        return LoadVectors.zeros(dofmaps)
    return operator.weighted_loads(assemble_load(sources, dofmaps, t_n), assemble_load(sources, dofmaps, t_np1))


def run(
    system: BlockSystem,
    scheme: SchemeConfig,
    initial: StateVector,
    sources: Optional[Sources] = None,
    operator: Optional[StepOperator] = None,
    label: str = "run",
) -> Trajectory:
    """
    Integrate from `initial` for `scheme.steps` steps and attach energy reports.

    The returned trajectory holds steps + 1 states; per-step source work is
    recorded with the same weights the scheme uses so the balance closes.
    """
    dofmaps = system.dofmaps
    initial.validate(dofmaps)
    operator = operator or StepOperator(system, scheme)
    trajectory = Trajectory(scheme=scheme, states=[initial], label=label)
    zero_sources = sources is None or sources.is_zero
    x = initial.to_free(dofmaps)
    t = initial.t
    loads_prev = None if zero_sources else assemble_load(sources, dofmaps, t)
    with timed("step", label):
        for _ in range(scheme.steps):
            t_next = t + scheme.dt
            if zero_sources:
                loads = LoadVectors.zeros(dofmaps)
            else:
                loads_next = assemble_load(sources, dofmaps, t_next)
                loads = operator.weighted_loads(loads_prev, loads_next)
                loads_prev = loads_next
            x_next = operator.advance(x, loads)
            trajectory.source_work.append(0.0 if zero_sources else operator.source_work(x, x_next, loads))
            trajectory.states.append(StateVector.from_free(x_next, dofmaps, t_next))
            x, t = x_next, t_next
    trajectory.reports = energy_reports(trajectory, system)
    return trajectory


def project_divergence_free(v: np.ndarray, system: BlockSystem, tol: float = 1e-12) -> Tuple[np.ndarray, float]:
    """
    Mass-weighted projection of a full v vector onto discretely divergence-free fields.

    Solves min 1/2 |v' - v|_M^2 subject to (div v', q_f) = 0 for all q_f as a
    saddle-point system.

    Returns:
        (projected full vector, M-norm of the correction).
    """
    vmap = system.dofmaps.v
    M = system["inertia_f"]
    B = system["stokes_div"]
    v_free = vmap.restrict(v)
    kkt = sp.bmat([[M, B.T], [B, None]], format="csr")
    rhs = np.concatenate([M @ v_free, np.zeros(B.shape[0])])
    solution = solve_saddle(kkt, rhs, tol, label="leray")
    projected = solution[: vmap.n_free]
    correction = projected - v_free
    defect = float(np.sqrt(max(correction @ (M @ correction), 0.0)))
    if defect > 0:
        logger.debug("divergence-free projection changed v by %.3e (mass norm)", defect)
    return vmap.expand(projected), defect


def stack_states(states: List[StateVector], dofmaps) -> np.ndarray:
    """Rows of monolithic free vectors, one per state."""
    return np.vstack([s.to_free(dofmaps) for s in states])
