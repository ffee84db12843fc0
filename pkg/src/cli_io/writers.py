"""
Output writers: energy CSV, structured-grid field dumps and study tables.

Every writer renders into a temporary sibling file and replaces the target
only after a clean close; on failure the partial file is removed and IoError
is raised. Floats are written with 17 significant digits.
"""

import csv
import logging
from contextlib import contextmanager, suppress
from pathlib import Path
from typing import Dict, Iterator, List, Sequence

import numpy as np

from src.analysis.diagnostics import ENERGY_COLUMNS, EnergyReport
from src.discretization.spaces import DofMap, FieldDofMaps
from src.dynamics.state import StateVector
from src.errors import IoError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = ".17g"
FIELD_COLUMNS = {"b": ("u", "w", "p"), "f": ("v", "pf")}


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), FLOAT_FORMAT)


def _discard(path: Path) -> None:
    with suppress(OSError):
        path.unlink(missing_ok=True)


@contextmanager
def _atomic_text(path: Path) -> Iterator:
    """Open `path.tmp` for writing and move it over `path` on success."""
    path = Path(path)
    temp_file = path.with_name(path.name + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(temp_file, "w", encoding="utf-8", newline="") as f:
            yield f
        temp_file.replace(path)
    except OSError as exc:
        _discard(temp_file)
        raise IoError(f"cannot write {path}: {exc}") from exc
    except BaseException:
        _discard(temp_file)
        raise


# ----------------------------------------------------------------------
# Energy CSV
# ----------------------------------------------------------------------
def write_energy_csv(reports: Sequence[EnergyReport], path: Path) -> Path:
    """One row per report under the header step,t,e_kin_b,...,balance_residual."""
    if not reports:
        raise ValueError("write_energy_csv needs at least one report")
    with _atomic_text(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(ENERGY_COLUMNS)
        for report in reports:
            writer.writerow([_fmt(value) for value in report.as_row()])
    logger.debug("wrote %d energy rows to %s", len(reports), path)
    return Path(path)


def read_energy_csv(path: Path) -> List[EnergyReport]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or tuple(header) != ENERGY_COLUMNS:
                raise IoError(f"{path}: unexpected energy header {header}")
            rows = list(reader)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    reports = []
    for row in rows:
        values = dict(zip(ENERGY_COLUMNS, row))
        reports.append(EnergyReport(
            step=int(values["step"]),
            **{name: float(values[name]) for name in ENERGY_COLUMNS if name != "step"},
        ))
    return reports


# ----------------------------------------------------------------------
# Field dumps
# ----------------------------------------------------------------------
def _column_names(name: str, dofmap: DofMap) -> List[str]:
    if dofmap.components == 1:
        return [name]
    return [f"{name}_{c + 1}" for c in range(dofmap.components)]


def _values_at(coefs: np.ndarray, dofmap: DofMap, points: np.ndarray) -> np.ndarray:
    cells, local = dofmap.locate(points)
    values, _ = dofmap.evaluate_in_cells(coefs, cells, local)
    return values


def field_table(state: StateVector, dofmaps: FieldDofMaps, domain: str) -> Dict[str, np.ndarray]:
    """
    Node table of one box on its degree-2 grid: coordinates, then every field
    living on that box evaluated at the nodes (lower-degree fields by interpolation).
    """
    maps = {"u": dofmaps.u, "w": dofmaps.w, "p": dofmaps.p, "v": dofmaps.v, "pf": dofmaps.pf}
    grid = dofmaps.u if domain == "b" else dofmaps.v
    points = grid.coords
    columns = {f"x{a + 1}": points[:, a] for a in range(dofmaps.dim)}
    for name in FIELD_COLUMNS[domain]:
        dofmap = maps[name]
        coefs = getattr(state, name)
        if dofmap is grid:
            values = dofmap.component_view(coefs)
        else:
            values = _values_at(coefs, dofmap, points)
        for c, column in enumerate(_column_names(name, dofmap)):
            columns[column] = values[:, c]
    return columns


def write_fields(state: StateVector, dofmaps: FieldDofMaps, path: Path) -> Path:
    """
    Plain-text dump for external plotting.

    Header lines start with '#': dimension, grid size, time and field list.
    Each box follows as a `# domain <b|f>` line, a column line, then one row
    per grid node in lexicographic order (periodic slaves included, carrying
    their master's values).
    """
    state.validate(dofmaps)
    with _atomic_text(path) as f:
        f.write(f"# dim {dofmaps.dim}\n")
        f.write(f"# n {dofmaps.n}\n")
        f.write(f"# t {_fmt(state.t)}\n")
        f.write("# fields u w p v pf\n")
        for domain in ("b", "f"):
            table = field_table(state, dofmaps, domain)
            names = list(table)
            f.write(f"# domain {domain}\n")
            f.write(" ".join(names) + "\n")
            data = np.column_stack([table[name] for name in names])
            for row in data:
                f.write(" ".join(_fmt(value) for value in row) + "\n")
    return Path(path)


def read_fields(path: Path) -> Dict[str, object]:
    """Parse a field dump back into {"dim", "n", "t", "b": {column: array}, "f": {...}}."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    out: Dict[str, object] = {}
    domain = None
    names: List[str] = []
    rows: Dict[str, List[List[float]]] = {}
    for line in lines:
        if line.startswith("# domain"):
            domain = line.split()[-1]
            names = []
            rows[domain] = []
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(" ")
            if key in ("dim", "n"):
                out[key] = int(value)
            elif key == "t":
                out[key] = float(value)
            continue
        if domain is None:
            raise IoError(f"{path}: data before any domain block")
        if not names:
            names = line.split()
            out.setdefault("columns", {})[domain] = names
            continue
        rows[domain].append([float(x) for x in line.split()])
    for domain, data in rows.items():
        matrix = np.array(data, dtype=float).reshape(-1, len(out["columns"][domain]))
        out[domain] = {name: matrix[:, i] for i, name in enumerate(out["columns"][domain])}
    return out


# ----------------------------------------------------------------------
# Study tables
# ----------------------------------------------------------------------
def write_table_csv(records: Sequence[dict], columns: Sequence[str], path: Path) -> Path:
    """Generic CSV of dict records; missing or None entries are left empty."""
    with _atomic_text(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for record in records:
            writer.writerow([_fmt(record.get(name)) for name in columns])
    return Path(path)


def read_table_csv(path: Path) -> List[Dict[str, str]]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            return list(csv.DictReader(f))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
