"""Exception hierarchy for the Biot-Stokes lab."""

from typing import List, Optional


class BiotStokesError(Exception):
    """Root of every error raised by this package."""


class MeshSpecError(BiotStokesError, ValueError):
    """Invalid grid specification (n < 1 or dim not in {2, 3})."""


class SpaceSpecError(BiotStokesError, ValueError):
    """Invalid finite element space specification."""


class BCViolation(BiotStokesError, ValueError):
    """A field handed to interpolation breaks an essential boundary condition."""

    def __init__(self, field: str, tag: str, max_violation: float, tol: float):
        self.field = field
        self.tag = tag
        self.max_violation = max_violation
        self.tol = tol
        super().__init__(
            f"{field} violates the essential condition on {tag}: "
            f"max |value| = {max_violation:.3e} > {tol:.1e}"
        )


class OutOfDomain(BiotStokesError, ValueError):
    """Evaluation point lies outside the box carrying the field."""


class InitialDataError(BiotStokesError, ValueError):
    """Initial data are missing or inconsistent with the storage regime."""


class SolverFailure(BiotStokesError, RuntimeError):
    """Linear solve finished with a residual above tolerance."""

    def __init__(self, achieved_residual: float, tol: float, label: str = "saddle"):
        self.achieved_residual = achieved_residual
        self.tol = tol
        self.label = label
        super().__init__(
            f"{label} solve residual {achieved_residual:.3e} exceeds tolerance {tol:.1e}"
        )


class SingularSystem(BiotStokesError, RuntimeError):
    """Matrix could not be factorized."""


class DegenerateStorage(BiotStokesError, ValueError):
    """Generator requested for c0 = 0, where no semigroup exists."""


class DenseCapExceeded(BiotStokesError, ValueError):
    """Dense linear algebra requested beyond the configured size cap."""


class DissipativityViolation(BiotStokesError, AssertionError):
    """One or more sampled states broke the dissipation inequality or identity."""

    def __init__(self, offending: List[dict]):
        self.offending = offending
        indices = ", ".join(str(item["sample"]) for item in offending[:10])
        super().__init__(f"dissipativity violated for {len(offending)} sample(s): {indices}")


class ParseError(BiotStokesError, ValueError):
    """Malformed configuration text."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class ConfigValidationError(BiotStokesError, ValueError):
    """Configuration parsed but violates a constraint."""


class IoError(BiotStokesError, OSError):
    """Writing or reading an output file failed."""
