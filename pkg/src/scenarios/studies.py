"""
Studies over scenarios: convergence, vanishing storage, uniqueness and
continuous dependence.

Independent runs (refinement levels, storage values, perturbation sizes) are
executed concurrently through the check guard, each owning its own state.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from src.analysis.diagnostics import integrate_squared_error, l2_errors
from src.discretization.forms import BlockSystem, Sources
from src.dynamics.state import StateVector, Trajectory
from src.dynamics.timestepper import StepOperator, project_divergence_free, run
from src.errors import BiotStokesError
from src.middleware.check_guard import run_jobs
from src.scenarios.cases import ScenarioConfig, prepare

logger = logging.getLogger(__name__)


def _unwrap(outcomes: Dict[str, dict]) -> Dict[str, object]:
    """Results of guarded jobs; the first failure is re-raised as BiotStokesError."""
    results = {}
    for name, outcome in outcomes.items():
        if not outcome["passed"]:
            raise BiotStokesError(f"study job {name} failed: {outcome.get('detail')}")
        results[name] = outcome["result"]
    return results


def distance_norm(a: StateVector, b: StateVector, system: BlockSystem) -> float:
    """
    sqrt(a_E(du, du) + rho_b |dw|^2 + |dp|^2 + rho_f |dv|^2), with |dp| the plain L2 norm.
    """
    d = a - b
    dm = system.dofmaps
    du, dw, dv = dm.u.restrict(d.u), dm.w.restrict(d.w), dm.v.restrict(d.v)
    total = (
        du @ (system["elastic"] @ du)
        + dw @ (system["inertia_b"] @ dw)
        + integrate_squared_error(d.p, dm.p)
        + dv @ (system["inertia_f"] @ dv)
    )
    return float(np.sqrt(max(total, 0.0)))


def trajectory_distance(a: Trajectory, b: Trajectory, system: BlockSystem) -> float:
    """Largest distance_norm over matching time levels."""
    return max(distance_norm(x, y, system) for x, y in zip(a.states, b.states))


# ----------------------------------------------------------------------
# Convergence
# ----------------------------------------------------------------------
@dataclass
class ErrorRow:
    n: int
    h: float
    dt: float
    steps: int
    errors: Dict[str, float]
    orders: Dict[str, Optional[float]] = field(default_factory=dict)


@dataclass
class ErrorTable:
    """Rows ordered by decreasing h."""

    rows: List[ErrorRow]

    def order(self, name: str) -> Optional[float]:
        """Observed order of `name` on the finest pair."""
        return self.rows[-1].orders.get(name) if self.rows else None

    def as_records(self) -> List[dict]:
        records = []
        for row in self.rows:
            for name, err in row.errors.items():
                records.append({
                    "n": row.n, "h": row.h, "dt": row.dt, "steps": row.steps,
                    "field": name, "error": err, "order": row.orders.get(name),
                })
        return records


def _convergence_level(case: ScenarioConfig, n: int, final_time: float, dt_factor: float) -> ErrorRow:
    h = 1.0 / n
    steps = max(1, int(math.ceil(final_time / (dt_factor * h * h))))
    dt = final_time / steps
    level = case.with_grid(n).with_scheme(dt=dt, steps=steps)
    prepared = prepare(level)
    trajectory = run(prepared.system, level.scheme, prepared.initial, level.sources, label=f"converge:n={n}")
    exact = level.exact.field_functions()
    errors = l2_errors(trajectory.final, prepared.dofmaps, exact)
    logger.info("convergence level n=%d: %s", n, {k: f"{v:.3e}" for k, v in errors.items()})
    return ErrorRow(n=n, h=h, dt=dt, steps=steps, errors=errors)


def convergence_study(
    case: ScenarioConfig,
    levels: Sequence[int],
    final_time: Optional[float] = None,
    dt_factor: float = 1.0,
) -> ErrorTable:
    """
    L2 errors at the final time for each refinement level, with dt = dt_factor h^2.

    Args:
        case: manufactured scenario (must carry an exact solution)
        levels: cells per unit edge, increasing
        final_time: integration horizon (defaults to the case's dt * steps)
        dt_factor: time step is dt_factor * h^2

    Returns:
        ErrorTable with observed orders log(e_coarse/e_fine)/log(h_coarse/h_fine).
    """
    if case.exact is None:
        raise ValueError("convergence_study needs a scenario with an exact solution")
    levels = sorted(levels)
    final_time = case.scheme.final_time if final_time is None else final_time
    jobs = {
        f"n={n}": (lambda n=n: _convergence_level(case, n, final_time, dt_factor))
        for n in levels
    }
    results = _unwrap(run_jobs(jobs))
    rows = [results[f"n={n}"] for n in levels]
    for coarse, fine in zip(rows[:-1], rows[1:]):
        for name in fine.errors:
            e_c, e_f = coarse.errors[name], fine.errors[name]
            if e_c > 0 and e_f > 0:
                fine.orders[name] = float(np.log(e_c / e_f) / np.log(coarse.h / fine.h))
            else:
                fine.orders[name] = None
    return ErrorTable(rows)


# ----------------------------------------------------------------------
# Vanishing storage
# ----------------------------------------------------------------------
@dataclass
class StorageTable:
    c0: List[float]
    distance: List[float]

    @property
    def monotone(self) -> bool:
        return all(a > b for a, b in zip(self.distance[:-1], self.distance[1:]))


def _final_state(case: ScenarioConfig):
    prepared = prepare(case)
    trajectory = run(prepared.system, case.scheme, prepared.initial, case.sources, label=f"storage:c0={case.params.c0:g}")
    return trajectory.final, prepared.system


def vanishing_storage_study(case: ScenarioConfig, c0_list: Sequence[float]) -> StorageTable:
    """
    Distance at the final time between each run with c0 > 0 and the c0 = 0 run.

    Runs use backward Euler so that the pressure weight equals theta for
    every c0. Initial data share u0, u1, v0 and the fluid content d0.
    """
    case = case.with_scheme(theta=1.0)
    positive = [float(c) for c in c0_list if c > 0]
    jobs = {"c0=0": lambda: _final_state(case.with_params(c0=0.0))}
    for c0 in positive:
        jobs[f"c0={c0:g}"] = lambda c0=c0: _final_state(case.with_params(c0=c0))
    results = _unwrap(run_jobs(jobs))
    reference, reference_system = results["c0=0"]
    distances = []
    for c0 in c0_list:
        if c0 == 0:
            distances.append(0.0)
            continue
        state, _ = results[f"c0={float(c0):g}"]
        distances.append(distance_norm(state, reference, reference_system))
    return StorageTable([float(c) for c in c0_list], distances)


# ----------------------------------------------------------------------
# Uniqueness
# ----------------------------------------------------------------------
@dataclass
class UniquenessReport:
    zero_data_sup_norm: float
    permuted_max_difference: float
    rerun_identical: bool


def uniqueness_probe(case: ScenarioConfig, seed: int = 0) -> UniquenessReport:
    """
    (a) the zero-data run stays at zero; (b) a randomly permuted step matrix
    reproduces the trajectory; (c) an identical rerun agrees bit for bit.
    """
    prepared = prepare(case)
    system = prepared.system
    zero = StateVector.zeros(prepared.dofmaps, prepared.initial.t)
    zero_run = run(system, case.scheme, zero, None, label="uniqueness:zero")
    zero_sup = max(distance_norm(s, zero, system) for s in zero_run.states)

    reference = run(system, case.scheme, prepared.initial, case.sources, label="uniqueness:reference")
    rerun = run(system, case.scheme, prepared.initial, case.sources, label="uniqueness:rerun")
    identical = all(
        all(np.array_equal(a, b) for a, b in zip(x.blocks(), y.blocks()))
        for x, y in zip(reference.states, rerun.states)
    )

    rng = np.random.default_rng(seed)
    size = sum(prepared.dofmaps.sizes())
    operator = StepOperator(system, case.scheme, permutation=rng.permutation(size), label="step_permuted")
    permuted = run(system, case.scheme, prepared.initial, case.sources, operator=operator, label="uniqueness:permuted")
    difference = max(
        (x - y).max_abs() for x, y in zip(reference.states, permuted.states)
    )
    return UniquenessReport(float(zero_sup), float(difference), identical)


# ----------------------------------------------------------------------
# Continuous dependence
# ----------------------------------------------------------------------
@dataclass
class DependenceTable:
    mode: str
    deltas: List[float]
    differences: List[float]
    data_norm: float = 1.0

    @property
    def constants(self) -> List[float]:
        return [d / (delta * self.data_norm) for d, delta in zip(self.differences, self.deltas)]

    @property
    def spread(self) -> float:
        """(max C - min C) / mean C over the perturbation sizes."""
        c = np.array(self.constants)
        mean = float(np.mean(c))
        return float((c.max() - c.min()) / mean) if mean > 0 else 0.0


def random_direction(prepared, seed: int = 0) -> StateVector:
    """Random admissible perturbation with unit distance norm and divergence-free v."""
    rng = np.random.default_rng(seed)
    dm = prepared.dofmaps
    system = prepared.system
    u = dm.u.expand(rng.standard_normal(dm.u.n_free))
    w = dm.w.expand(rng.standard_normal(dm.w.n_free))
    p = dm.p.expand(rng.standard_normal(dm.p.n_free)) if system.params.c0 > 0 else np.zeros(dm.p.n_dofs)
    v, _ = project_divergence_free(dm.v.expand(rng.standard_normal(dm.v.n_free)), system)
    direction = StateVector(u, w, p, v, np.zeros(dm.pf.n_dofs), prepared.initial.t)
    zero = StateVector.zeros(dm, prepared.initial.t)
    return direction.scaled(1.0 / distance_norm(direction, zero, system))


def continuous_dependence_study(
    case: ScenarioConfig,
    deltas: Sequence[float] = (1e-2, 1e-4, 1e-6),
    mode: str = "initial",
    seed: int = 0,
) -> DependenceTable:
    """
    Trajectory differences caused by perturbations of size delta.

    mode "initial" perturbs the initial state along a unit random direction;
    mode "sources" adds delta times a fixed smooth body source and reports
    the constant against the source-data norm.
    """
    prepared = prepare(case)
    system = prepared.system
    operator = StepOperator(system, case.scheme)
    base = run(system, case.scheme, prepared.initial, case.sources, operator=operator, label="dependence:base")

    if mode == "initial":
        direction = random_direction(prepared, seed)
        data_norm = 1.0

        def perturbed(delta: float) -> Trajectory:
            return run(system, case.scheme, prepared.initial + direction.scaled(delta), case.sources,
                       operator=operator, label=f"dependence:{delta:g}")
    elif mode == "sources":
        extra = _perturbation_sources(case)
        data_norm = _source_data_norm(extra, prepared, case)

        def perturbed(delta: float) -> Trajectory:
            return run(system, case.scheme, prepared.initial, _add_sources(case.sources, extra.scaled(delta)),
                       operator=operator, label=f"dependence:{delta:g}")
    else:
        raise ValueError(f"unknown perturbation mode {mode!r}")

    jobs = {f"{delta:g}": (lambda delta=delta: perturbed(delta)) for delta in deltas}
    results = _unwrap(run_jobs(jobs))
    differences = [trajectory_distance(results[f"{d:g}"], base, system) for d in deltas]
    return DependenceTable(mode, [float(d) for d in deltas], differences, data_norm)


def _perturbation_sources(case: ScenarioConfig) -> Sources:
    dim = case.grid.dim

    def body(x, t):
        out = np.zeros((np.atleast_2d(x).shape[0], dim))
        out[:, 0] = np.cos(2.0 * np.pi * x[:, 0]) * np.cos(t)
        return out

    def content(x, t):
        return np.sin(2.0 * np.pi * x[:, 0]) * (1.0 - x[:, -1]) * np.cos(t)

    return Sources(F_b=body, S=content, F_f=body)


def _add_sources(a: Sources, b: Sources) -> Sources:
    def add(f, g):
        if f is None:
            return g
        if g is None:
            return f
        return lambda x, t: np.asarray(f(x, t)) + np.asarray(g(x, t))

    names = ("F_b", "S", "F_f", "G1", "G2", "G3", "G4")
    return Sources(*(add(getattr(a, n), getattr(b, n)) for n in names))


def _source_data_norm(sources: Sources, prepared, case: ScenarioConfig) -> float:
    """integral over [0, T] of the L2 norms of F_b, S, F_f (trapezoidal in time)."""
    dm = prepared.dofmaps
    times = np.linspace(prepared.initial.t, prepared.initial.t + case.scheme.final_time, case.scheme.steps + 1)
    norms = []
    for t in times:
        total = 0.0
        for fn, dofmap in ((sources.F_b, dm.u), (sources.S, dm.p), (sources.F_f, dm.v)):
            if fn is None:
                continue
            total += integrate_squared_error(np.zeros(dofmap.n_dofs), dofmap, lambda x, fn=fn: fn(x, t))
        norms.append(np.sqrt(total))
    return float(trapezoid(norms, times)) if len(times) > 1 else float(norms[0])
