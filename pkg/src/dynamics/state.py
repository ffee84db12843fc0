"""State containers shared by the time stepper and the diagnostics."""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.discretization.spaces import FieldDofMaps
from src.errors import InitialDataError

FIELD_ORDER = ("u", "w", "p", "v", "pf")


class SchemeConfig(BaseModel):
    """theta-scheme settings: backward Euler (theta = 1) or Crank-Nicolson (theta = 1/2)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    theta: float = Field(0.5, description="1 for backward Euler, 0.5 for Crank-Nicolson.")
    dt: float = Field(0.1, description="Time step.")
    steps: int = Field(10, description="Number of steps; the final time is dt * steps.")
    tol: float = Field(1e-12, description="Bound on the relative residual of each linear solve.")

    @field_validator("theta")
    @classmethod
    def _check_theta(cls, value: float) -> float:
        if value not in (0.5, 1.0):
            raise ValueError("theta must be 1 or 1/2")
        return float(value)

    @field_validator("dt", "tol")
    @classmethod
    def _check_positive(cls, value: float, info) -> float:
        if not value > 0:
            raise ValueError(f"{info.field_name} must be > 0")
        return value

    @field_validator("steps")
    @classmethod
    def _check_steps(cls, value: int) -> int:
        if value < 0:
            raise ValueError("steps must be ≥ 0")
        return value

    @property
    def final_time(self) -> float:
        return self.dt * self.steps

    def pressure_theta(self, c0: float) -> float:
        """Weight of pressure-related terms: fully implicit when c0 = 0."""
        return 1.0 if c0 == 0 else self.theta


@dataclass
class StateVector:
    """Full coefficient vectors of (u, w, p, v, pf) at time t."""

    u: np.ndarray
    w: np.ndarray
    p: np.ndarray
    v: np.ndarray
    pf: np.ndarray
    t: float = 0.0

    @classmethod
    def zeros(cls, dofmaps: FieldDofMaps, t: float = 0.0) -> "StateVector":
        return cls(
            np.zeros(dofmaps.u.n_dofs),
            np.zeros(dofmaps.u.n_dofs),
            np.zeros(dofmaps.p.n_dofs),
            np.zeros(dofmaps.v.n_dofs),
            np.zeros(dofmaps.pf.n_dofs),
            t,
        )

    @classmethod
    def from_free(cls, x: np.ndarray, dofmaps: FieldDofMaps, t: float) -> "StateVector":
        """Split a monolithic free vector (u, w, p, v, pf) and expand each block."""
        sizes = dofmaps.sizes()
        parts = np.split(np.asarray(x, dtype=float), np.cumsum(sizes)[:-1])
        maps = (dofmaps.u, dofmaps.w, dofmaps.p, dofmaps.v, dofmaps.pf)
        return cls(*(m.expand(part) for m, part in zip(maps, parts)), t=t)

    def to_free(self, dofmaps: FieldDofMaps) -> np.ndarray:
        self.validate(dofmaps)
        maps = (dofmaps.u, dofmaps.w, dofmaps.p, dofmaps.v, dofmaps.pf)
        return np.concatenate([m.restrict(getattr(self, name)) for name, m in zip(FIELD_ORDER, maps)])

    def validate(self, dofmaps: FieldDofMaps) -> None:
        maps = (dofmaps.u, dofmaps.w, dofmaps.p, dofmaps.v, dofmaps.pf)
        for name, m in zip(FIELD_ORDER, maps):
            block = getattr(self, name)
            if np.shape(block) != (m.n_dofs,):
                raise InitialDataError(
                    f"block {name} has shape {np.shape(block)}, expected ({m.n_dofs},)"
                )

    def blocks(self) -> List[np.ndarray]:
        return [getattr(self, name) for name in FIELD_ORDER]

    def scaled(self, factor: float) -> "StateVector":
        return StateVector(*(factor * b for b in self.blocks()), t=self.t)

    def __sub__(self, other: "StateVector") -> "StateVector":
        return StateVector(*(a - b for a, b in zip(self.blocks(), other.blocks())), t=self.t)

    def __add__(self, other: "StateVector") -> "StateVector":
        return StateVector(*(a + b for a, b in zip(self.blocks(), other.blocks())), t=self.t)

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(b), initial=0.0)) for b in self.blocks())


@dataclass
class Trajectory:
    """States t_0 .. t_steps, per-step source work and the energy reports."""

    scheme: SchemeConfig
    states: List[StateVector] = field(default_factory=list)
    source_work: List[float] = field(default_factory=list)
    reports: list = field(default_factory=list)
    label: Optional[str] = None

    def __len__(self) -> int:
        return len(self.states)

    @property
    def final(self) -> StateVector:
        return self.states[-1]
