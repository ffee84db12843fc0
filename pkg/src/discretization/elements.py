"""Tensor-product Lagrange elements and Gauss rules on the reference box [0, 1]^d."""

import itertools
from functools import lru_cache
from typing import Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

GAUSS_POINTS_PER_DIRECTION = 3


@lru_cache(maxsize=None)
def gauss_rule_1d(npts: int = GAUSS_POINTS_PER_DIRECTION) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights mapped to [0, 1]."""
    x, w = leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def gauss_rule(dim: int, npts: int = GAUSS_POINTS_PER_DIRECTION) -> Tuple[np.ndarray, np.ndarray]:
    """
    Tensor Gauss rule on [0, 1]^dim.

    Points are ordered lexicographically with the last coordinate varying fastest.
    A rule with dim = 0 is the single point of a vertex (used by 1D faces in 2D).
    """
    if dim == 0:
        return np.zeros((1, 0)), np.ones(1)
    x, w = gauss_rule_1d(npts)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.ones(1)
    for _ in range(dim):
        weights = np.multiply.outer(weights, w).ravel()
    return points, weights


def lagrange_1d(degree: int, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Values and derivatives of the equispaced 1D Lagrange basis on [0, 1].

    Returns:
        (values, derivatives), each of shape (degree + 1, len(x)).
    """
    x = np.asarray(x, dtype=float)
    if degree == 1:
        values = np.stack([1.0 - x, x])
        derivs = np.stack([-np.ones_like(x), np.ones_like(x)])
    elif degree == 2:
        values = np.stack([2.0 * x * x - 3.0 * x + 1.0, 4.0 * x * (1.0 - x), 2.0 * x * x - x])
        derivs = np.stack([4.0 * x - 3.0, 4.0 - 8.0 * x, 4.0 * x - 1.0])
    else:
        raise ValueError(f"unsupported Lagrange degree {degree}")
    return values, derivs


class ReferenceElement:
    """
    Continuous tensor-product Lagrange element of a given degree on [0, 1]^dim.

    Local nodes follow the same lexicographic order as the global node grids
    (last axis fastest), so local node (l_1, ..., l_d) of cell (c_1, ..., c_d)
    is global grid node (degree * c_1 + l_1, ..., degree * c_d + l_d).
    """

    def __init__(self, dim: int, degree: int):
        self.dim = dim
        self.degree = degree
        self.local_multi_index = np.array(
            list(itertools.product(range(degree + 1), repeat=dim)), dtype=int
        ).reshape(-1, dim)
        self.n_local = self.local_multi_index.shape[0]

    def tabulate(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Basis values and reference gradients at reference points.

        Args:
            points: array (npts, dim) in [0, 1]^dim

        Returns:
            values (n_local, npts) and gradients (n_local, npts, dim).
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        npts = points.shape[0]
        if self.dim == 0:
            return np.ones((1, npts)), np.zeros((1, npts, 0))
        vals_1d = []
        ders_1d = []
        for axis in range(self.dim):
            v, d = lagrange_1d(self.degree, points[:, axis])
            vals_1d.append(v)
            ders_1d.append(d)
        values = np.ones((self.n_local, npts))
        grads = np.ones((self.n_local, npts, self.dim))
        for axis in range(self.dim):
            idx = self.local_multi_index[:, axis]
            values *= vals_1d[axis][idx]
            for g_axis in range(self.dim):
                factor = ders_1d[axis][idx] if g_axis == axis else vals_1d[axis][idx]
                grads[:, :, g_axis] *= factor
        return values, grads


@lru_cache(maxsize=None)
def reference_element(dim: int, degree: int) -> ReferenceElement:
    return ReferenceElement(dim, degree)
