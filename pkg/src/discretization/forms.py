"""
Sparse assembly of every bilinear and linear form of the coupled weak problem.

All cells of a box are translates of one another, so element matrices are
computed once per field pair and scattered over the cells. Blocks are stored on
free DOFs (periodic slaves folded into masters, Dirichlet DOFs dropped) and
indexed by name; `BLOCK_FIELDS` records the (test field, trial field) of each.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator

from src.discretization.elements import gauss_rule, reference_element
from src.discretization.mesh import MeshTopology
from src.discretization.spaces import (
    DofMap,
    FieldDofMaps,
    interface_quadrature_points,
    interface_reference_points,
    physical_quadrature_points,
)

logger = logging.getLogger(__name__)


class MaterialParams(BaseModel):
    """Physical coefficients of the Biot and Stokes subsystems (nondimensional)."""

    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    rho_b: float = Field(1.0, description="Biot mixture density.")
    rho_f: float = Field(1.0, description="Stokes fluid density.")
    lam: float = Field(1.0, alias="lambda", description="First Lame coefficient.")
    mu: float = Field(1.0, description="Shear modulus.")
    alpha: float = Field(1.0, description="Biot-Willis coupling constant.")
    c0: float = Field(1.0, description="Storage coefficient; 0 is the degenerate case.")
    k: float = Field(1.0, description="Scalar permeability.")
    nu: float = Field(1.0, description="Fluid viscosity.")
    beta: float = Field(1.0, description="Beavers-Joseph-Saffman slip coefficient.")

    @field_validator("rho_b", "rho_f", "mu", "alpha", "k", "nu", "beta")
    @classmethod
    def _strictly_positive(cls, value: float, info: ValidationInfo) -> float:
        if not value > 0:
            raise ValueError(f"{info.field_name} must be > 0")
        return value

    @field_validator("lam")
    @classmethod
    def _lambda_nonnegative(cls, value: float) -> float:
        if not value >= 0:
            raise ValueError("lambda must be ≥ 0")
        return value

    @field_validator("c0")
    @classmethod
    def _c0_nonnegative(cls, value: float) -> float:
        if not value >= 0:
            raise ValueError("c0 must be ≥ 0")
        return value


# (test field, trial field) of every assembled block
BLOCK_FIELDS: Dict[str, Tuple[str, str]] = {
    "elastic": ("u", "u"),          # a_E(u, xi)
    "inertia_b": ("u", "u"),        # rho_b (w, xi)
    "pressure_grad": ("u", "p"),    # -alpha (p, div xi)
    "storage": ("p", "p"),          # c0 (p, q)
    "content_div": ("p", "u"),      # alpha (div u, q)
    "darcy": ("p", "p"),            # k (grad p, grad q)
    "inertia_f": ("v", "v"),        # rho_f (v, zeta)
    "viscous": ("v", "v"),          # 2 nu (D v, D zeta)
    "stokes_grad": ("v", "pf"),     # -(pf, div zeta)
    "stokes_div": ("pf", "v"),      # (div v, q_f)
    "iface_p_u": ("u", "p"),        # (p, xi . e_d) on GammaI
    "iface_p_v": ("v", "p"),        # (p, zeta . e_d) on GammaI
    "iface_flux_v": ("p", "v"),     # -(v . e_d, q) on GammaI
    "iface_flux_u": ("p", "u"),     # (u . e_d, q) on GammaI
    "slip_ww": ("u", "u"),          # beta (w . tau, xi . tau)
    "slip_wv": ("u", "v"),          # -beta (v . tau, xi . tau)
    "slip_vw": ("v", "u"),          # -beta (w . tau, zeta . tau)
    "slip_vv": ("v", "v"),          # beta (v . tau, zeta . tau)
}

INTERIOR_BLOCKS = (
    "elastic", "inertia_b", "pressure_grad", "storage", "content_div", "darcy",
    "inertia_f", "viscous", "stokes_grad", "stokes_div",
)
INTERFACE_BLOCKS = (
    "iface_p_u", "iface_p_v", "iface_flux_v", "iface_flux_u",
    "slip_ww", "slip_wv", "slip_vw", "slip_vv",
)


@dataclass
class BlockSystem:
    """Named sparse blocks on free DOFs plus the maps and parameters they were built from."""

    dofmaps: FieldDofMaps
    params: MaterialParams
    blocks: Dict[str, sp.csr_matrix] = field(default_factory=dict)
    constrained: bool = True

    def __getitem__(self, name: str) -> sp.csr_matrix:
        return self.blocks[name]

    def __contains__(self, name: str) -> bool:
        return name in self.blocks

    def merge(self, other: "BlockSystem") -> "BlockSystem":
        overlap = set(self.blocks) & set(other.blocks)
        if overlap:
            raise ValueError(f"blocks assembled twice: {sorted(overlap)}")
        return BlockSystem(self.dofmaps, self.params, {**self.blocks, **other.blocks}, self.constrained)

    def field_size(self, name: str) -> int:
        maps = {"u": self.dofmaps.u, "w": self.dofmaps.w, "p": self.dofmaps.p,
                "v": self.dofmaps.v, "pf": self.dofmaps.pf}
        return maps[name].n_free

    def sizes(self) -> Tuple[int, ...]:
        return self.dofmaps.sizes()


# ----------------------------------------------------------------------
# Element tables
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class _Tables:
    values: np.ndarray  # (nloc, nq)
    grads: np.ndarray   # (nloc, nq, dim), physical
    weights: np.ndarray  # (nq,), physical


@lru_cache(maxsize=None)
def _cell_tables(dim: int, degree: int, n: int) -> _Tables:
    points, weights = gauss_rule(dim)
    values, grads = reference_element(dim, degree).tabulate(points)
    h = 1.0 / n
    return _Tables(values, grads / h, weights * h ** dim)


def _face_tables(dofmap: DofMap) -> _Tables:
    values, grads = reference_element(dofmap.dim, dofmap.degree).tabulate(
        interface_reference_points(dofmap)
    )
    _, weights = gauss_rule(dofmap.dim - 1)
    return _Tables(values, grads / dofmap.h, weights * dofmap.h ** (dofmap.dim - 1))


def _mass(row: _Tables, col: _Tables) -> np.ndarray:
    return np.einsum("iq,jq,q->ij", row.values, col.values, row.weights)


def _grad_grad(tab: _Tables) -> np.ndarray:
    """D[a, b, i, j] = integral of d_a phi_i d_b phi_j."""
    return np.einsum("iqa,jqb,q->abij", tab.grads, tab.grads, tab.weights)


def _vector_mass(tab: _Tables, dim: int) -> np.ndarray:
    return np.kron(np.eye(dim), _mass(tab, tab))


def _strain_matrix(tab: _Tables, dim: int, shear: float, bulk: float) -> np.ndarray:
    """2 shear (D u, D xi) + bulk (div u, div xi) with local order (component, node)."""
    D = _grad_grad(tab)
    nloc = tab.values.shape[0]
    trace = sum(D[c, c] for c in range(dim))
    local = np.zeros((dim, nloc, dim, nloc))
    for a in range(dim):
        for b in range(dim):
            local[a, :, b, :] = shear * D[b, a] + bulk * D[a, b]
            if a == b:
                local[a, :, b, :] += shear * trace
    return local.reshape(dim * nloc, dim * nloc)


def _divergence_matrix(scalar: _Tables, vector: _Tables, dim: int) -> np.ndarray:
    """B[k, (b, j)] = integral of psi_k d_b phi_j."""
    local = np.einsum("kq,jqb,q->kbj", scalar.values, vector.grads, scalar.weights)
    return local.reshape(scalar.values.shape[0], dim * vector.values.shape[0])


def _component_rows(local: np.ndarray, dim: int, component: int) -> np.ndarray:
    """Embed a scalar-row matrix as the rows of one component of a vector field."""
    nloc = local.shape[0]
    out = np.zeros((dim * nloc, local.shape[1]))
    out[component * nloc:(component + 1) * nloc] = local
    return out


def _tangential_mass(row: _Tables, col: _Tables, dim: int) -> np.ndarray:
    """Sum over tangents tau = e_1 .. e_{d-1} of (x . tau, y . tau) face mass."""
    base = _mass(row, col)
    nr, nc = base.shape
    out = np.zeros((dim * nr, dim * nc))
    for a in range(dim - 1):
        out[a * nr:(a + 1) * nr, a * nc:(a + 1) * nc] = base
    return out


# ----------------------------------------------------------------------
# Scatter
# ----------------------------------------------------------------------
def cell_dofs(dofmap: DofMap, cells: np.ndarray, constrained: bool) -> np.ndarray:
    """
    Global indices (ncells, components * nloc) of the local DOFs of `cells`.

    With `constrained` the indices are free indices (-1 for pinned DOFs);
    otherwise they index the full coefficient vector.
    """
    nodes = dofmap.cell_nodes[cells]
    blocks = []
    for comp in range(dofmap.components):
        if constrained:
            idx = dofmap.free_index[nodes]
            blocks.append(np.where(idx >= 0, comp * dofmap.n_free_nodes + idx, -1))
        else:
            blocks.append(comp * dofmap.n_nodes + nodes)
    return np.concatenate(blocks, axis=1)


def _scatter(local: np.ndarray, rows: np.ndarray, cols: np.ndarray, shape: Tuple[int, int]) -> sp.csr_matrix:
    ncells = rows.shape[0]
    R = np.broadcast_to(rows[:, :, None], (ncells, rows.shape[1], cols.shape[1]))
    C = np.broadcast_to(cols[:, None, :], (ncells, rows.shape[1], cols.shape[1]))
    V = np.broadcast_to(local, (ncells,) + local.shape)
    keep = (R >= 0) & (C >= 0)
    matrix = sp.coo_matrix((V[keep], (R[keep], C[keep])), shape=shape).tocsr()
    matrix.sum_duplicates()
    matrix.eliminate_zeros()
    return matrix


def _assemble_block(
    local: np.ndarray,
    row_map: DofMap,
    col_map: DofMap,
    row_cells: np.ndarray,
    col_cells: np.ndarray,
    constrained: bool,
) -> sp.csr_matrix:
    if constrained:
        rows = cell_dofs(row_map, row_cells, True)
        cols = cell_dofs(col_map, col_cells, True)
        return _scatter(local, rows, cols, (row_map.n_free, col_map.n_free))
    rows = cell_dofs(row_map, row_cells, False)
    cols = cell_dofs(col_map, col_cells, False)
    full = _scatter(local, rows, cols, (row_map.n_dofs, col_map.n_dofs))
    condensed = (row_map.prolongation.T @ full @ col_map.prolongation).tocsr()
    condensed.eliminate_zeros()
    return condensed


def _all_cells(dofmap: DofMap) -> np.ndarray:
    return np.arange(dofmap.cell_nodes.shape[0])


# ----------------------------------------------------------------------
# Public assembly
# ----------------------------------------------------------------------
def assemble_interior(
    params: MaterialParams, mesh: MeshTopology, dofmaps: FieldDofMaps, constrained: bool = True
) -> BlockSystem:
    """
    Volume blocks of both boxes.

    Args:
        params: material coefficients
        mesh: grid the maps were built on
        dofmaps: field DOF maps
        constrained: scatter straight into free DOFs (default) or assemble the
            unconstrained matrices and condense them as P^T A P

    Returns:
        BlockSystem holding the names of INTERIOR_BLOCKS.
    """
    dim, n = mesh.dim, mesh.n
    u, p, v, pf = dofmaps.u, dofmaps.p, dofmaps.v, dofmaps.pf
    tu = _cell_tables(dim, u.degree, n)
    tp = _cell_tables(dim, p.degree, n)
    tv = _cell_tables(dim, v.degree, n)
    tpf = _cell_tables(dim, pf.degree, n)
    cb = _all_cells(u)
    cf = _all_cells(v)

    B_b = _divergence_matrix(tp, tu, dim)
    B_f = _divergence_matrix(tpf, tv, dim)
    D_p = _grad_grad(tp)

    local = {
        "elastic": (_strain_matrix(tu, dim, params.mu, params.lam), u, u, cb, cb),
        "inertia_b": (params.rho_b * _vector_mass(tu, dim), u, u, cb, cb),
        "pressure_grad": (-params.alpha * B_b.T, u, p, cb, cb),
        "storage": (params.c0 * _mass(tp, tp), p, p, cb, cb),
        "content_div": (params.alpha * B_b, p, u, cb, cb),
        "darcy": (params.k * sum(D_p[a, a] for a in range(dim)), p, p, cb, cb),
        "inertia_f": (params.rho_f * _vector_mass(tv, dim), v, v, cf, cf),
        "viscous": (_strain_matrix(tv, dim, params.nu, 0.0), v, v, cf, cf),
        "stokes_grad": (-B_f.T, v, pf, cf, cf),
        "stokes_div": (B_f, pf, v, cf, cf),
    }
    blocks = {
        name: _assemble_block(mat, rmap, cmap, rc, cc, constrained)
        for name, (mat, rmap, cmap, rc, cc) in local.items()
    }
    logger.debug("assembled %d interior blocks (constrained=%s)", len(blocks), constrained)
    return BlockSystem(dofmaps, params, blocks, constrained)


def assemble_interface(
    params: MaterialParams, mesh: MeshTopology, dofmaps: FieldDofMaps, constrained: bool = True
) -> BlockSystem:
    """Face blocks on GammaI: interface pressure, normal flux, normal-trace mass and BJS slip."""
    dim = mesh.dim
    u, p, v = dofmaps.u, dofmaps.p, dofmaps.v
    fu, fp, fv = _face_tables(u), _face_tables(p), _face_tables(v)
    cb = u.interface_cells
    cf = v.interface_cells
    normal = dim - 1

    ipu = _component_rows(_mass(fu, fp), dim, normal)
    ipv = _component_rows(_mass(fv, fp), dim, normal)
    slip_bb = params.beta * _tangential_mass(fu, fu, dim)
    slip_bf = params.beta * _tangential_mass(fu, fv, dim)
    slip_ff = params.beta * _tangential_mass(fv, fv, dim)

    local = {
        "iface_p_u": (ipu, u, p, cb, cb),
        "iface_p_v": (ipv, v, p, cf, cb),
        "iface_flux_v": (-ipv.T, p, v, cb, cf),
        "iface_flux_u": (ipu.T, p, u, cb, cb),
        "slip_ww": (slip_bb, u, u, cb, cb),
        "slip_wv": (-slip_bf, u, v, cb, cf),
        "slip_vw": (-slip_bf.T, v, u, cf, cb),
        "slip_vv": (slip_ff, v, v, cf, cf),
    }
    blocks = {
        name: _assemble_block(mat, rmap, cmap, rc, cc, constrained)
        for name, (mat, rmap, cmap, rc, cc) in local.items()
    }
    logger.debug("assembled %d interface blocks on %d faces", len(blocks), len(cb))
    return BlockSystem(dofmaps, params, blocks, constrained)


def assemble_system(
    params: MaterialParams, mesh: MeshTopology, dofmaps: FieldDofMaps, constrained: bool = True
) -> BlockSystem:
    return assemble_interior(params, mesh, dofmaps, constrained).merge(
        assemble_interface(params, mesh, dofmaps, constrained)
    )


# ----------------------------------------------------------------------
# Loads
# ----------------------------------------------------------------------
FieldFn = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class Sources:
    """
    Body sources and optional interface sources, each a callable (points, t).

    Interface sources G1..G4 are the prescribed values of the four interface
    residuals: G1 and G4 are scalar, G2 holds the d - 1 tangential components,
    G3 is a full vector.
    """

    F_b: Optional[FieldFn] = None
    S: Optional[FieldFn] = None
    F_f: Optional[FieldFn] = None
    G1: Optional[FieldFn] = None
    G2: Optional[FieldFn] = None
    G3: Optional[FieldFn] = None
    G4: Optional[FieldFn] = None

    @property
    def is_zero(self) -> bool:
        return all(getattr(self, name) is None for name in ("F_b", "S", "F_f", "G1", "G2", "G3", "G4"))

    def scaled(self, factor: float) -> "Sources":
        def scale(fn):
            if fn is None:
                return None
            return lambda x, t: factor * np.asarray(fn(x, t), dtype=float)

        return Sources(*(scale(getattr(self, name)) for name in ("F_b", "S", "F_f", "G1", "G2", "G3", "G4")))

    def interface_targets(self) -> Dict[str, FieldFn]:
        """Interface sources keyed by the residual they prescribe (G1 -> R1, ...)."""
        return {f"R{i}": getattr(self, f"G{i}") for i in range(1, 5) if getattr(self, f"G{i}") is not None}


@dataclass(frozen=True)
class LoadVectors:
    """Right-hand sides on free DOFs of the momentum, content and fluid rows."""

    momentum: np.ndarray
    content: np.ndarray
    fluid: np.ndarray

    @classmethod
    def zeros(cls, dofmaps: FieldDofMaps) -> "LoadVectors":
        return cls(np.zeros(dofmaps.u.n_free), np.zeros(dofmaps.p.n_free), np.zeros(dofmaps.v.n_free))

    def combine(self, other: "LoadVectors", a: float = 1.0, b: float = 1.0) -> "LoadVectors":
        return LoadVectors(
            a * self.momentum + b * other.momentum,
            a * self.content + b * other.content,
            a * self.fluid + b * other.fluid,
        )


def _volume_load(fn: FieldFn, dofmap: DofMap, t: float) -> np.ndarray:
    points, weights = physical_quadrature_points(dofmap)
    ncells, nq, dim = points.shape
    values = np.asarray(fn(points.reshape(-1, dim), t), dtype=float).reshape(ncells, nq, -1)
    tab = _cell_tables(dim, dofmap.degree, dofmap.n)
    return _scatter_load(values, weights, tab.values, dofmap, _all_cells(dofmap))


def _scatter_load(
    values: np.ndarray, weights: np.ndarray, basis: np.ndarray, dofmap: DofMap, cells: np.ndarray
) -> np.ndarray:
    """values (ncells, nq, components) against basis (nloc, nq) -> free load vector."""
    local = np.einsum("cqa,iq,q->cai", values, basis, weights).reshape(len(cells), -1)
    full = np.zeros(dofmap.n_dofs)
    np.add.at(full, cell_dofs(dofmap, cells, False), local)
    return dofmap.prolongation.T @ full


def _interface_load(values: np.ndarray, dofmap: DofMap) -> np.ndarray:
    tab = _face_tables(dofmap)
    return _scatter_load(values, tab.weights, tab.values, dofmap, dofmap.interface_cells)


def assemble_load(sources: Sources, dofmaps: FieldDofMaps, t: float) -> LoadVectors:
    """
    (F_b, xi), (S, q), (F_f, zeta) by quadrature at time t, plus the interface
    source pairings when G1..G4 are present:
    content -(G1, q); momentum -(G2, xi.tau) - (G4, xi.e_d) + (G3, xi);
    fluid +(G2, zeta.tau) + (G4, zeta.e_d).
    """
    loads = LoadVectors.zeros(dofmaps)
    momentum, content, fluid = loads.momentum.copy(), loads.content.copy(), loads.fluid.copy()
    if sources.F_b is not None:
        momentum += _volume_load(sources.F_b, dofmaps.u, t)
    if sources.S is not None:
        content += _volume_load(sources.S, dofmaps.p, t)
    if sources.F_f is not None:
        fluid += _volume_load(sources.F_f, dofmaps.v, t)

    if any(g is not None for g in (sources.G1, sources.G2, sources.G3, sources.G4)):
        points, _ = interface_quadrature_points(dofmaps.u)
        nfaces, nq, dim = points.shape
        flat = points.reshape(-1, dim)

        def face_values(fn, width):
            return np.asarray(fn(flat, t), dtype=float).reshape(nfaces, nq, width)

        vec_b = np.zeros((nfaces, nq, dim))
        vec_f = np.zeros((nfaces, nq, dim))
        if sources.G1 is not None:
            content -= _interface_load(face_values(sources.G1, 1), dofmaps.p)
        if sources.G2 is not None:
            g2 = face_values(sources.G2, dim - 1)
            vec_b[..., :dim - 1] -= g2
            vec_f[..., :dim - 1] += g2
        if sources.G3 is not None:
            vec_b += face_values(sources.G3, dim)
        if sources.G4 is not None:
            g4 = face_values(sources.G4, 1)[..., 0]
            vec_b[..., dim - 1] -= g4
            vec_f[..., dim - 1] += g4
        momentum += _interface_load(vec_b, dofmaps.u)
        fluid += _interface_load(vec_f, dofmaps.v)

    return LoadVectors(momentum, content, fluid)


def fluid_content(u: np.ndarray, p: np.ndarray, params: MaterialParams, dofmaps: FieldDofMaps) -> np.ndarray:
    """
    Nodal values of zeta = c0 p + alpha div u on every node of the p grid.

    `u` and `p` are full coefficient vectors. div u is evaluated from the
    degree-2 field in the cell that owns each node under the locate convention.
    """
    pmap, umap = dofmaps.p, dofmaps.u
    cells, local = umap.locate(pmap.coords)
    _, grads = umap.evaluate_in_cells(u, cells, local)
    divergence = np.trace(grads, axis1=1, axis2=2)
    return params.c0 * np.asarray(p, dtype=float) + params.alpha * divergence
