"""
Run configuration: flat `section.key = value` text parsed into a validated RunConfig.

    # 2D Crank-Nicolson run
    mesh.dim = 2
    mesh.n = 4
    params.c0 = 0
    scheme.steps = 50
    scenario.kind = stock
    output.dir = out/stock

A `[section]` header line may be used instead of the prefix; keys under it are
read as `section.key`. Unknown sections and keys are rejected.
"""

import logging
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.discretization.forms import MaterialParams
from src.discretization.mesh import GridSpec
from src.dynamics.state import SchemeConfig
from src.errors import ConfigValidationError, IoError, ParseError
from src.scenarios.cases import ScenarioConfig, build_case

logger = logging.getLogger(__name__)

SECTIONS = ("mesh", "params", "scheme", "scenario", "output")


def _split_list(value):
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class ScenarioSection(BaseModel):
    """Which scenario to run and the knobs of the studies built on it."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["stock", "manufactured", "polynomial", "zero"] = "stock"
    amplitude: float = Field(1.0, description="Scale of the closed-form initial data.")
    levels: Tuple[int, ...] = Field((4, 8, 16), description="Refinement levels of `study converge`.")
    c0_list: Tuple[float, ...] = Field((1e-1, 1e-2, 1e-3, 1e-4), description="Storage values of `study storage`.")
    deltas: Tuple[float, ...] = Field((1e-2, 1e-4, 1e-6), description="Perturbation sizes of the dependence study.")
    perturb: Literal["initial", "sources"] = "initial"
    seed: int = 0
    samples: int = Field(100, description="Random states per dissipativity check.")

    @field_validator("levels", "c0_list", "deltas", mode="before")
    @classmethod
    def _parse_list(cls, value):
        return _split_list(value)

    @field_validator("levels")
    @classmethod
    def _check_levels(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        if len(value) < 2 or any(n < 1 for n in value):
            raise ValueError("levels must list at least two grids with n >= 1")
        return tuple(sorted(value))

    @field_validator("c0_list")
    @classmethod
    def _check_c0_list(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        if any(c < 0 for c in value):
            raise ValueError("c0 must be ≥ 0")
        return value

    @field_validator("deltas")
    @classmethod
    def _check_deltas(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        if not value or any(d <= 0 for d in value):
            raise ValueError("deltas must be > 0")
        return value

    @field_validator("samples")
    @classmethod
    def _check_samples(cls, value: int) -> int:
        if value < 1:
            raise ValueError("samples must be >= 1")
        return value


class OutputSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    dir: str = Field("output", description="Directory receiving CSVs, field dumps and reports.")
    field_stride: int = Field(0, description="Dump fields every `field_stride` steps; 0 keeps only the final state.")

    @field_validator("field_stride")
    @classmethod
    def _check_stride(cls, value: int) -> int:
        if value < 0:
            raise ValueError("field_stride must be ≥ 0")
        return value


class RunConfig(BaseModel):
    """Validated run configuration; every section falls back to its defaults."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    mesh: GridSpec = Field(default_factory=GridSpec)
    params: MaterialParams = Field(default_factory=MaterialParams)
    scheme: SchemeConfig = Field(default_factory=SchemeConfig)
    scenario: ScenarioSection = Field(default_factory=ScenarioSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @property
    def output_dir(self) -> Path:
        return Path(self.output.dir)

    def case(self) -> ScenarioConfig:
        return build_case(self.scenario.kind, self.mesh, self.params, self.scheme, self.scenario.amplitude)


def _describe(error: ValidationError) -> str:
    """'section.key: message' for every pydantic error, custom validator messages kept verbatim."""
    parts: List[str] = []
    for item in error.errors():
        location = ".".join(str(part) for part in item.get("loc", ()))
        message = item.get("msg", "")
        if message.startswith("Value error, "):
            message = message[len("Value error, "):]
        parts.append(f"{location}: {message}" if location else message)
    return "; ".join(parts)


def parse_config(text: str) -> RunConfig:
    """
    Parse flat configuration text.

    Args:
        text: lines of `section.key = value`; `#` starts a comment

    Returns:
        Validated RunConfig.

    Raises:
        ParseError: malformed line or duplicate key (with its 1-based line number)
        ConfigValidationError: a value breaks a constraint or a key is unknown
    """
    data: Dict[str, Dict[str, str]] = {}
    seen: Dict[str, int] = {}
    section: Optional[str] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not section:
                raise ParseError("empty section header", lineno)
            continue
        if "=" not in line:
            raise ParseError(f"expected `key = value`, got {line!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError("missing key before '='", lineno)
        if not value:
            raise ParseError(f"missing value for {key!r}", lineno)
        if "." in key:
            head, name = key.split(".", 1)
        elif section is not None:
            head, name = section, key
        else:
            raise ParseError(f"key {key!r} needs a section prefix", lineno)
        if not head or not name or "." in name:
            raise ParseError(f"malformed key {key!r}", lineno)
        full_key = f"{head}.{name}"
        if full_key in seen:
            raise ParseError(f"duplicate key {full_key!r} (first set on line {seen[full_key]})", lineno)
        seen[full_key] = lineno
        data.setdefault(head, {})[name] = value

    try:
        config = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigValidationError(_describe(exc)) from exc
    logger.debug("parsed configuration with %d keys", len(seen))
    return config


def load_config(path: Path) -> RunConfig:
    """Read and parse a configuration file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read configuration {path}: {exc}") from exc
    return parse_config(text)
