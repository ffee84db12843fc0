"""Sparse direct solves of the monolithic saddle-point systems."""

import logging
from typing import Tuple, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from src.errors import SingularSystem, SolverFailure
from src.utils.solve_tracker import get_tracker

logger = logging.getLogger(__name__)

MatrixLike = Union[np.ndarray, sp.spmatrix]

MAX_REFINEMENT_STEPS = 3


def backward_error(matrix: MatrixLike, x: np.ndarray, rhs: np.ndarray, norm_a: float) -> float:
    """Normwise backward error ||b - Ax||_inf / (||A||_inf ||x||_inf + ||b||_inf)."""
    denom = norm_a * np.max(np.abs(x), initial=0.0) + np.max(np.abs(rhs), initial=0.0)
    if denom == 0.0:
        return 0.0
    return float(np.max(np.abs(rhs - matrix @ x), initial=0.0) / denom)


class SaddleFactorization:
    """
    Sparse LU of one saddle-point matrix, reusable across right-hand sides.

    Each solve applies up to MAX_REFINEMENT_STEPS rounds of iterative
    refinement and fails with SolverFailure when the backward error stays
    above the requested tolerance.
    """

    def __init__(self, matrix: MatrixLike, label: str = "saddle"):
        self.label = label
        self.matrix = sp.csc_matrix(matrix)
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError(f"matrix must be square, got {self.matrix.shape}")
        self.norm = float(spla.norm(self.matrix, np.inf)) if self.matrix.nnz else 0.0
        tracker = get_tracker()
        try:
            self._lu = spla.splu(self.matrix)
        except RuntimeError as exc:
            tracker.track_failure(label)
            raise SingularSystem(f"{label} matrix could not be factorized: {exc}") from exc
        tracker.track_factorization(label)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def solve(self, rhs: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        tracker = get_tracker()
        if not np.any(rhs):
            tracker.track_solve(self.label, 0.0)
            return np.zeros_like(rhs)
        x = self._lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            tracker.track_failure(self.label)
            raise SingularSystem(f"{self.label} solve produced non-finite values")
        residual = backward_error(self.matrix, x, rhs, self.norm)
        steps = 0
        while residual > tol and steps < MAX_REFINEMENT_STEPS:
            x = x + self._lu.solve(rhs - self.matrix @ x)
            residual = backward_error(self.matrix, x, rhs, self.norm)
            steps += 1
        if residual > tol:
            tracker.track_failure(self.label)
            raise SolverFailure(residual, tol, self.label)
        tracker.track_solve(self.label, residual)
        if steps:
            logger.debug("%s solve refined %d time(s), residual %.2e", self.label, steps, residual)
        return x


def solve_saddle(matrix: MatrixLike, rhs: np.ndarray, tol: float = 1e-12, label: str = "saddle") -> np.ndarray:
    """
    Solve one saddle-point system on free DOFs.

    Args:
        matrix: square sparse or dense matrix
        rhs: right-hand side
        tol: bound on the normwise backward error
        label: solve family recorded by the solver statistics tracker

    Returns:
        The solution vector.
    """
    return SaddleFactorization(matrix, label).solve(rhs, tol)


def saddle_inertia(matrix: MatrixLike, zero_tol: float = 1e-12) -> Tuple[int, int, int]:
    """
    Inertia (positive, negative, zero) of the symmetric part of `matrix`,
    counted from a dense LDL^T factorization (Sylvester's law of inertia).
    """
    dense = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, dtype=float)
    sym = 0.5 * (dense + dense.T)
    _, d, _ = sla.ldl(sym)
    eigs = np.linalg.eigvalsh(d)
    scale = max(float(np.max(np.abs(eigs), initial=0.0)), 1.0)
    positive = int(np.count_nonzero(eigs > zero_tol * scale))
    negative = int(np.count_nonzero(eigs < -zero_tol * scale))
    return positive, negative, len(eigs) - positive - negative
