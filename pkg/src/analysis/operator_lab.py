"""
Discrete generator pencil M_X y' = J y of the coupled system for c0 > 0.

The reduced state is y = (u, w, p, v_hat) on free DOFs, with v = Z v_hat and
Z an orthonormal basis of the discretely divergence-free velocities, so the
Stokes pressure drops out exactly. M_X is the Gram matrix of the energy inner
product: a_E on u, rho_b mass on w, c0 mass on p, rho_f mass on v.
"""

import logging
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from src.analysis.diagnostics import dissipation_forms
from src.discretization.forms import BlockSystem
from src.dynamics.state import StateVector
from src.errors import DegenerateStorage, DenseCapExceeded, DissipativityViolation, SingularSystem, SolverFailure
from src.settings import get_dense_cap
from src.utils.solve_tracker import get_tracker

logger = logging.getLogger(__name__)

REDUCED_FIELDS = ("u", "w", "p", "v")


@dataclass(frozen=True)
class DivFreeBasis:
    """Orthonormal columns Z spanning the kernel of the discrete divergence on free v DOFs."""

    Z: np.ndarray
    constraint_rank: int

    @property
    def dimension(self) -> int:
        return self.Z.shape[1]


def _check_cap(size: int, what: str, cap: Optional[int]) -> None:
    cap = get_dense_cap() if cap is None else cap
    if size > cap:
        raise DenseCapExceeded(f"{what} has {size} unknowns, above the dense cap of {cap}")


def build_divfree_basis(system: BlockSystem, dense_cap: Optional[int] = None) -> DivFreeBasis:
    """Dense null-space basis of the assembled divergence constraint."""
    B = system["stokes_div"].toarray()
    _check_cap(B.shape[1], "free velocity space", dense_cap)
    Z = sla.null_space(B)
    rank = B.shape[1] - Z.shape[1]
    logger.debug("divergence-free basis: %d of %d velocity DOFs (constraint rank %d)", Z.shape[1], B.shape[1], rank)
    return DivFreeBasis(Z=Z, constraint_rank=rank)


@dataclass(frozen=True)
class PencilConvention:
    """
    Signs of the skew couplings of the pencil.

    The forward generator has every sign +1. The adjoint action flips the
    kinematic/elastic pair, the Biot pressure coupling, the interface
    pressure and the normal-flux condition; slip and diffusion are unchanged.
    """

    kinematic: int = 1
    pressure_coupling: int = 1
    interface_pressure: int = 1
    normal_flux: int = 1

    def flipped(self) -> "PencilConvention":
        return PencilConvention(-self.kinematic, -self.pressure_coupling, -self.interface_pressure, -self.normal_flux)


FORWARD = PencilConvention()
ADJOINT = FORWARD.flipped()


def assemble_pencil(system: BlockSystem, basis: DivFreeBasis, convention: PencilConvention) -> np.ndarray:
    """
    Dense first-order system matrix on the reduced state.

    Each row block is taken from the test row that owns it: the w row from
    the momentum blocks, the p row from the content blocks, the v row from
    the fluid blocks reduced by Z.
    """
    Z = basis.Z
    c = convention
    A = system["elastic"].toarray()
    grad_p = -system["pressure_grad"].toarray()          # alpha (p, div xi)
    iface_u = system["iface_p_u"].toarray()               # (p, xi . e_d)
    content = system["content_div"].toarray()             # alpha (div w, q)
    flux_u = system["iface_flux_u"].toarray()             # (w . e_d, q)
    flux_v = system["iface_flux_v"].toarray() @ Z         # -(v . e_d, q)
    iface_v = Z.T @ system["iface_p_v"].toarray()         # (p, zeta . e_d)
    slip_ww = system["slip_ww"].toarray()
    slip_wv = system["slip_wv"].toarray() @ Z
    slip_vw = Z.T @ system["slip_vw"].toarray()
    slip_vv = Z.T @ system["slip_vv"].toarray() @ Z
    viscous = Z.T @ system["viscous"].toarray() @ Z
    darcy = system["darcy"].toarray()

    nu_, np_, nv = A.shape[0], darcy.shape[0], Z.shape[1]
    zero = np.zeros
    rows = [
        [zero((nu_, nu_)), c.kinematic * A, zero((nu_, np_)), zero((nu_, nv))],
        [-c.kinematic * A, -slip_ww, c.pressure_coupling * grad_p + c.interface_pressure * iface_u, -slip_wv],
        [zero((np_, nu_)), -c.pressure_coupling * content - c.interface_pressure * flux_u, -darcy, -c.normal_flux * flux_v],
        [zero((nv, nu_)), -slip_vw, -c.normal_flux * iface_v, -(viscous + slip_vv)],
    ]
    return np.block(rows)


@dataclass(frozen=True)
class OperatorBundle:
    system: BlockSystem
    basis: DivFreeBasis
    M_X: np.ndarray
    J: np.ndarray
    J_adjoint: Optional[np.ndarray] = None

    @property
    def sizes(self) -> Sequence[int]:
        nu_ = self.system.field_size("u")
        return (nu_, nu_, self.system.field_size("p"), self.basis.dimension)

    @property
    def size(self) -> int:
        return self.M_X.shape[0]

    def split(self, y: np.ndarray) -> Dict[str, np.ndarray]:
        parts = np.split(np.asarray(y, dtype=float), np.cumsum(self.sizes)[:-1])
        return dict(zip(REDUCED_FIELDS, parts))

    def block(self, matrix: np.ndarray, row: str, col: str) -> np.ndarray:
        offsets = np.concatenate([[0], np.cumsum(self.sizes)])
        i, j = REDUCED_FIELDS.index(row), REDUCED_FIELDS.index(col)
        return matrix[offsets[i]:offsets[i + 1], offsets[j]:offsets[j + 1]]

    def inner(self, y: np.ndarray, z: np.ndarray) -> float:
        """Energy inner product (y, z)_X."""
        return float(y @ (self.M_X @ z))

    def norm(self, y: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(y, y), 0.0)))

    @cached_property
    def generator(self) -> np.ndarray:
        """A = M_X^{-1} J."""
        return sla.solve(self.M_X, self.J, assume_a="pos")

    @cached_property
    def adjoint_generator(self) -> np.ndarray:
        """A* = M_X^{-1} J^T, the adjoint of A in the energy inner product."""
        return sla.solve(self.M_X, self.J.T, assume_a="pos")

    @cached_property
    def lu_adjoint(self):
        return _factor(self.J.T, "resolvent")

    @cached_property
    def lu_forward(self):
        return _factor(self.J, "generator")

    def check_invertible(self) -> None:
        """Factorize J and J^T; raises SingularSystem if either is singular."""
        self.lu_forward
        self.lu_adjoint


def _factor(matrix: np.ndarray, label: str):
    lu, piv = sla.lu_factor(matrix, check_finite=True)
    diag = np.abs(np.diag(lu))
    scale = max(float(np.max(np.abs(matrix), initial=0.0)), np.finfo(float).tiny)
    if diag.size and float(np.min(diag)) <= np.finfo(float).eps * scale * matrix.shape[0]:
        get_tracker().track_failure(label)
        raise SingularSystem(f"{label} matrix is numerically singular (min pivot {np.min(diag):.3e})")
    get_tracker().track_factorization(label)
    return lu, piv


def gram_matrix(system: BlockSystem, basis: DivFreeBasis) -> np.ndarray:
    Z = basis.Z
    return sla.block_diag(
        system["elastic"].toarray(),
        system["inertia_b"].toarray(),
        system["storage"].toarray(),
        Z.T @ system["inertia_f"].toarray() @ Z,
    )


def build_generator(
    system: BlockSystem, basis: Optional[DivFreeBasis] = None, dense_cap: Optional[int] = None
) -> OperatorBundle:
    """
    Energy Gram matrix and forward pencil of the semi-discrete dynamics.

    Raises:
        DegenerateStorage: c0 = 0, where the energy form has no pressure part.
        DenseCapExceeded: reduced size beyond the dense cap.
    """
    if system.params.c0 <= 0:
        raise DegenerateStorage("the generator needs c0 > 0; with c0 = 0 no semigroup exists on X")
    basis = basis or build_divfree_basis(system, dense_cap)
    size = 2 * system.field_size("u") + system.field_size("p") + basis.dimension
    _check_cap(size, "reduced state", dense_cap)
    bundle = OperatorBundle(system, basis, gram_matrix(system, basis), assemble_pencil(system, basis, FORWARD))
    logger.debug("generator pencil of size %d", bundle.size)
    return bundle


def build_adjoint_system(
    system: BlockSystem, basis: Optional[DivFreeBasis] = None, dense_cap: Optional[int] = None
) -> np.ndarray:
    """Adjoint pencil matrix assembled from the adjoint action and flipped interface signs."""
    if system.params.c0 <= 0:
        raise DegenerateStorage("the adjoint generator needs c0 > 0")
    basis = basis or build_divfree_basis(system, dense_cap)
    size = 2 * system.field_size("u") + system.field_size("p") + basis.dimension
    _check_cap(size, "reduced state", dense_cap)
    return assemble_pencil(system, basis, ADJOINT)


def with_adjoint(bundle: OperatorBundle) -> OperatorBundle:
    return replace(bundle, J_adjoint=build_adjoint_system(bundle.system, bundle.basis))


def transpose_defect(bundle: OperatorBundle) -> float:
    """max |J~ - J^T| / max |J|."""
    adjoint = bundle.J_adjoint if bundle.J_adjoint is not None else build_adjoint_system(bundle.system, bundle.basis)
    scale = max(float(np.max(np.abs(bundle.J))), np.finfo(float).tiny)
    return float(np.max(np.abs(adjoint - bundle.J.T)) / scale)


# ----------------------------------------------------------------------
# Dissipativity
# ----------------------------------------------------------------------
def dissipator(bundle: OperatorBundle, y: np.ndarray) -> float:
    """k|grad p|^2 + 2 nu |D v|^2 + beta |(v - w) . tau|^2 from the assembled forms."""
    parts = bundle.split(y)
    v = bundle.basis.Z @ parts["v"]
    return sum(dissipation_forms(bundle.system, parts["p"], parts["w"], v).values())


def check_dissipativity(
    bundle: OperatorBundle,
    samples: int = 100,
    seed: int = 0,
    tol: float = 1e-10,
    vectors: Optional[np.ndarray] = None,
) -> Dict[str, float]:
    """
    Check y^T J y <= 0 and -y^T J y = dissipator(y) on sampled reduced states.

    Args:
        bundle: forward pencil
        samples: number of random states when `vectors` is not given
        seed: seed of the random generator
        tol: relative tolerance of both checks
        vectors: explicit states as rows (overrides sampling)

    Returns:
        Summary with the number of samples and the worst observed defects.

    Raises:
        DissipativityViolation: listing every offending sample.
    """
    if vectors is None:
        rng = np.random.default_rng(seed)
        vectors = rng.standard_normal((samples, bundle.size))
    vectors = np.atleast_2d(vectors)
    scale_J = float(np.max(np.abs(bundle.J), initial=0.0))
    offending: List[dict] = []
    worst_sign = 0.0
    worst_identity = 0.0
    for index, y in enumerate(vectors):
        quad = float(y @ (bundle.J @ y))
        expected = dissipator(bundle, y)
        scale = scale_J * float(y @ y)
        sign_excess = quad / scale if scale > 0 else 0.0
        mismatch = abs(-quad - expected)
        relative = mismatch / abs(expected) if expected != 0 else mismatch / max(scale, np.finfo(float).tiny)
        if mismatch <= 1e-14 * scale:
            relative = 0.0
        worst_sign = max(worst_sign, sign_excess)
        worst_identity = max(worst_identity, relative)
        if sign_excess > tol or relative > tol:
            offending.append({"sample": index, "yJy": quad, "dissipator": expected, "relative": relative})
    if offending:
        raise DissipativityViolation(offending)
    return {"samples": len(vectors), "max_sign_excess": worst_sign, "max_identity_defect": worst_identity}


# ----------------------------------------------------------------------
# Resolvent
# ----------------------------------------------------------------------
def solve_resolvent(bundle: OperatorBundle, y_star: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """
    Solve J^T y = M_X y*, the discrete stationary adjoint problem.

    Both J^T and J are factorized; either being singular raises SingularSystem.
    """
    y_star = np.asarray(y_star, dtype=float)
    bundle.check_invertible()
    rhs = bundle.M_X @ y_star
    if not np.any(rhs):
        return np.zeros_like(y_star)
    y = sla.lu_solve(bundle.lu_adjoint, rhs)
    residual = float(np.linalg.norm(bundle.J.T @ y - rhs) / np.linalg.norm(rhs))
    tracker = get_tracker()
    if residual > tol:
        tracker.track_failure("resolvent")
        raise SolverFailure(residual, tol, "resolvent")
    tracker.track_solve("resolvent", residual)
    return y


def apply_adjoint_generator(bundle: OperatorBundle, y: np.ndarray) -> np.ndarray:
    """A* y = M_X^{-1} J^T y."""
    return sla.solve(bundle.M_X, bundle.J.T @ y, assume_a="pos")


# ----------------------------------------------------------------------
# Reduced dynamics
# ----------------------------------------------------------------------
def reduce_state(state: StateVector, bundle: OperatorBundle) -> np.ndarray:
    """Reduced coordinates of a state with discretely divergence-free v."""
    dofmaps = bundle.system.dofmaps
    v_hat = bundle.basis.Z.T @ dofmaps.v.restrict(state.v)
    return np.concatenate([
        dofmaps.u.restrict(state.u),
        dofmaps.w.restrict(state.w),
        dofmaps.p.restrict(state.p),
        v_hat,
    ])


def expand_reduced(y: np.ndarray, bundle: OperatorBundle, t: float = 0.0) -> StateVector:
    """Full state from reduced coordinates; pf is set to zero."""
    dofmaps = bundle.system.dofmaps
    parts = bundle.split(y)
    return StateVector(
        u=dofmaps.u.expand(parts["u"]),
        w=dofmaps.w.expand(parts["w"]),
        p=dofmaps.p.expand(parts["p"]),
        v=dofmaps.v.expand(bundle.basis.Z @ parts["v"]),
        pf=np.zeros(dofmaps.pf.n_dofs),
        t=t,
    )


def reduced_theta_step(bundle: OperatorBundle, y0: np.ndarray, dt: float, theta: float, steps: int) -> List[np.ndarray]:
    """theta-scheme (M_X/dt - theta J) y_{n+1} = (M_X/dt + (1 - theta) J) y_n; returns y_0 .. y_steps."""
    lhs = bundle.M_X / dt - theta * bundle.J
    rhs_matrix = bundle.M_X / dt + (1 - theta) * bundle.J
    lu = _factor(lhs, "reduced_step")
    trajectory = [np.asarray(y0, dtype=float)]
    for _ in range(steps):
        trajectory.append(sla.lu_solve(lu, rhs_matrix @ trajectory[-1]))
    return trajectory


def propagate_exact(bundle: OperatorBundle, y0: np.ndarray, t: float) -> np.ndarray:
    """exp(t M_X^{-1} J) y0 by dense matrix exponential."""
    return sla.expm(t * bundle.generator) @ np.asarray(y0, dtype=float)


def semigroup_order(
    bundle: OperatorBundle, y0: np.ndarray, final_time: float, step_counts: Sequence[int] = (8, 16, 32, 64)
) -> Dict[str, List[float]]:
    """
    Energy-norm errors at `final_time` of Crank-Nicolson against the matrix
    exponential, and observed orders between consecutive step counts.
    """
    exact = propagate_exact(bundle, y0, final_time)
    errors = []
    for count in step_counts:
        approx = reduced_theta_step(bundle, y0, final_time / count, 0.5, count)[-1]
        errors.append(bundle.norm(approx - exact))
    orders = [
        float(np.log(errors[i] / errors[i + 1]) / np.log(step_counts[i + 1] / step_counts[i]))
        for i in range(len(errors) - 1)
    ]
    return {"steps": list(step_counts), "errors": errors, "orders": orders}


def adjoint_pairing_defect(
    bundle: OperatorBundle, trajectory: Sequence[np.ndarray], test_vectors: np.ndarray, dt: float, theta: float
) -> float:
    """
    Largest relative defect of (y_{n+1} - y_n, z)_X = dt (y^theta, A* z)_X over
    consecutive reduced states and test vectors z (columns).
    """
    tests = np.atleast_2d(np.asarray(test_vectors, dtype=float))
    if tests.shape[0] != bundle.size:
        tests = tests.T
    adjoint_images = sla.solve(bundle.M_X, bundle.J.T @ tests, assume_a="pos")
    defects = []
    magnitudes = []
    for y_n, y_np1 in zip(trajectory[:-1], trajectory[1:]):
        lhs = (y_np1 - y_n) @ (bundle.M_X @ tests)
        y_theta = theta * y_np1 + (1 - theta) * y_n
        rhs = dt * (y_theta @ (bundle.M_X @ adjoint_images))
        defects.append(np.abs(lhs - rhs))
        magnitudes.append(np.abs(lhs) + np.abs(rhs))
    if not defects:
        return 0.0
    scale = max(float(np.max(magnitudes)), np.finfo(float).tiny)
    return float(np.max(defects)) / scale
