"""
Closed-form separable fields with exact derivatives.

A field is a sum of terms coef * f_1(x_1) * ... * f_d(x_d) * g(t), where every
factor is a cosine (`Trig`) or a numpy Polynomial. Differentiation maps a
cosine to a phase-shifted cosine and a polynomial to its derivative, so the
sources of a manufactured solution are exact to rounding.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import Polynomial


@dataclass(frozen=True)
class Trig:
    """amp * cos(omega * x + phase)."""

    omega: float
    phase: float = 0.0
    amp: float = 1.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.amp * np.cos(self.omega * np.asarray(x, dtype=float) + self.phase)

    def deriv(self, m: int = 1) -> "Trig":
        out = self
        for _ in range(m):
            out = Trig(out.omega, out.phase + 0.5 * np.pi, out.amp * out.omega)
        return out


Factor = Union[Trig, Polynomial]

ONE = Polynomial([1.0])


def _is_zero(factor: Factor) -> bool:
    if isinstance(factor, Trig):
        return factor.amp == 0.0
    return not np.any(factor.coef)


@dataclass(frozen=True)
class Term:
    coef: float
    space: Tuple[Factor, ...]
    time: Factor = ONE

    def __call__(self, points: np.ndarray, t: float) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        value = np.full(points.shape[0], self.coef * float(self.time(t)))
        for axis, factor in enumerate(self.space):
            value = value * factor(points[:, axis])
        return value

    def diff(self, axis: int) -> "Term":
        space = list(self.space)
        space[axis] = space[axis].deriv()
        return Term(self.coef, tuple(space), self.time)

    def dt(self) -> "Term":
        return Term(self.coef, self.space, self.time.deriv())

    @property
    def vanishes(self) -> bool:
        return self.coef == 0.0 or _is_zero(self.time) or any(_is_zero(f) for f in self.space)


@dataclass(frozen=True)
class Field:
    """Scalar closed-form field on R^dim x R."""

    dim: int
    terms: Tuple[Term, ...] = field(default_factory=tuple)

    @classmethod
    def zero(cls, dim: int) -> "Field":
        return cls(dim, ())

    @classmethod
    def product(cls, coef: float, space: Sequence[Factor], time: Factor = ONE) -> "Field":
        return cls(len(space), (Term(coef, tuple(space), time),))

    def __call__(self, points: np.ndarray, t: float = 0.0) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(points.shape[0])
        for term in self.terms:
            out += term(points, t)
        return out

    def _clean(self, terms) -> "Field":
        return Field(self.dim, tuple(t for t in terms if not t.vanishes))

    def __add__(self, other: "Field") -> "Field":
        return self._clean(self.terms + other.terms)

    def __neg__(self) -> "Field":
        return self * -1.0

    def __sub__(self, other: "Field") -> "Field":
        return self + (-other)

    def __mul__(self, scalar: float) -> "Field":
        return self._clean(Term(scalar * t.coef, t.space, t.time) for t in self.terms)

    __rmul__ = __mul__

    def diff(self, axis: int) -> "Field":
        return self._clean(t.diff(axis) for t in self.terms)

    def dt(self) -> "Field":
        return self._clean(t.dt() for t in self.terms)


Vector = Tuple[Field, ...]


def vzero(dim: int) -> Vector:
    return tuple(Field.zero(dim) for _ in range(dim))


def vadd(a: Vector, b: Vector) -> Vector:
    return tuple(x + y for x, y in zip(a, b))


def vscale(a: Vector, s: float) -> Vector:
    return tuple(s * x for x in a)


def vdt(a: Vector) -> Vector:
    return tuple(x.dt() for x in a)


def gradient(f: Field) -> Vector:
    return tuple(f.diff(a) for a in range(f.dim))


def divergence(a: Vector) -> Field:
    out = Field.zero(a[0].dim)
    for axis, comp in enumerate(a):
        out = out + comp.diff(axis)
    return out


def laplacian(f: Field) -> Field:
    out = Field.zero(f.dim)
    for axis in range(f.dim):
        out = out + f.diff(axis).diff(axis)
    return out


def jacobian(a: Vector) -> Tuple[Vector, ...]:
    """J[i][j] = d_j a_i."""
    return tuple(gradient(comp) for comp in a)


def div_sym_gradient(a: Vector, shear: float, bulk: float) -> Vector:
    """div(2 shear D(a) + bulk div(a) I) = shear lap a + (shear + bulk) grad div a."""
    grad_div = gradient(divergence(a))
    return tuple(shear * laplacian(comp) + (shear + bulk) * gd for comp, gd in zip(a, grad_div))


def curl_potential_velocity(potentials: Sequence[Field]) -> Vector:
    """
    Divergence-free velocity from lateral potentials psi_1 .. psi_{d-1}:
    v_a = d_d psi_a and v_d = -sum_a d_a psi_a.
    """
    dim = potentials[0].dim
    lateral = tuple(psi.diff(dim - 1) for psi in potentials)
    vertical = Field.zero(dim)
    for axis, psi in enumerate(potentials):
        vertical = vertical - psi.diff(axis)
    return lateral + (vertical,)


def as_scalar_fn(f: Field) -> Callable[[np.ndarray, float], np.ndarray]:
    return lambda x, t: f(x, t)


def as_vector_fn(a: Vector) -> Callable[[np.ndarray, float], np.ndarray]:
    return lambda x, t: np.stack([comp(x, t) for comp in a], axis=-1)


def as_jacobian_fn(a: Vector) -> Callable[[np.ndarray, float], np.ndarray]:
    """(npts, d, d) array of d_j a_i."""
    jac = jacobian(a)
    return lambda x, t: np.stack([np.stack([g(x, t) for g in row], axis=-1) for row in jac], axis=-2)


def at_time(fn: Callable[[np.ndarray, float], np.ndarray], t: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: fn(x, t)


def lateral_wave(dim: int, modes: Sequence[int], phases: Sequence[float]) -> List[Factor]:
    """Period-1 cosine factors on the d - 1 lateral axes."""
    return [Trig(2.0 * np.pi * m, ph) for m, ph in zip(modes[: dim - 1], phases[: dim - 1])]
