"""Continuous Lagrange spaces on one box with periodic and Dirichlet constraints."""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, FrozenSet, Tuple

import numpy as np
import scipy.sparse as sp

from src.discretization.elements import gauss_rule, reference_element
from src.discretization.mesh import BIOT, STOKES, FaceTag, MeshTopology, periodic_master
from src.errors import BCViolation, OutOfDomain, SpaceSpecError

logger = logging.getLogger(__name__)

BC_TOLERANCE = 1e-12
DOMAIN_TOLERANCE = 1e-12


@dataclass(frozen=True)
class SpaceSpec:
    field: str
    degree: int
    components: int
    domain: str
    dirichlet: FrozenSet[FaceTag]
    periodic: bool = True


def space_spec(field: str, dim: int) -> SpaceSpec:
    """
    Element choices of the coupled system: Q2 for u, w, v and Q1 for p, pf.
    u, w, p vanish on GammaB; v vanishes on GammaF; pf is free.
    """
    if field in ("u", "w"):
        return SpaceSpec(field, 2, dim, BIOT, frozenset({FaceTag.GAMMA_B}))
    if field == "p":
        return SpaceSpec(field, 1, 1, BIOT, frozenset({FaceTag.GAMMA_B}))
    if field == "v":
        return SpaceSpec(field, 2, dim, STOKES, frozenset({FaceTag.GAMMA_F}))
    if field == "pf":
        return SpaceSpec(field, 1, 1, STOKES, frozenset())
    raise SpaceSpecError(f"unknown field {field!r}")


@dataclass(frozen=True)
class DofMap:
    """
    Global numbering of one field.

    Full coefficient vectors hold one value per (component, grid node), laid
    out component-major: index = component * n_nodes + node. Free vectors hold
    one value per (component, free node) in the same layout. Periodic slaves
    map onto their master's free index; pinned (Dirichlet) nodes have free
    index -1, and a periodic class containing a Dirichlet node is pinned whole.
    """

    spec: SpaceSpec
    dim: int
    n: int
    node_shape: Tuple[int, ...]
    coords: np.ndarray
    master: np.ndarray
    pinned: np.ndarray
    free_index: np.ndarray
    free_nodes: np.ndarray
    cell_nodes: np.ndarray
    cell_origin: np.ndarray
    interface_nodes: np.ndarray
    interface_cells: np.ndarray
    z0: float

    @property
    def degree(self) -> int:
        return self.spec.degree

    @property
    def components(self) -> int:
        return self.spec.components

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def n_dofs(self) -> int:
        return self.components * self.n_nodes

    @property
    def n_free_nodes(self) -> int:
        return self.free_nodes.shape[0]

    @property
    def n_free(self) -> int:
        return self.components * self.n_free_nodes

    @property
    def n_slaves(self) -> int:
        return self.components * int(np.count_nonzero(self.master != np.arange(self.n_nodes)))

    @property
    def n_pinned(self) -> int:
        """Pinned DOFs after class resolution, counting masters only."""
        is_master = self.master == np.arange(self.n_nodes)
        return self.components * int(np.count_nonzero(self.pinned & is_master))

    @cached_property
    def prolongation(self) -> sp.csr_matrix:
        """Sparse map free -> full (slaves copy masters, pinned rows are zero)."""
        rows = []
        cols = []
        node_ids = np.nonzero(self.free_index >= 0)[0]
        for comp in range(self.components):
            rows.append(comp * self.n_nodes + node_ids)
            cols.append(comp * self.n_free_nodes + self.free_index[node_ids])
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        return sp.csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(self.n_dofs, self.n_free)
        )

    def expand(self, free: np.ndarray) -> np.ndarray:
        return self.prolongation @ np.asarray(free, dtype=float)

    def restrict(self, full: np.ndarray) -> np.ndarray:
        full = np.asarray(full, dtype=float).reshape(self.components, self.n_nodes)
        return full[:, self.free_nodes].ravel()

    def component_view(self, full: np.ndarray) -> np.ndarray:
        """(n_nodes, components) view of a full coefficient vector."""
        return np.asarray(full, dtype=float).reshape(self.components, self.n_nodes).T

    def boundary_nodes(self, tag: FaceTag) -> np.ndarray:
        """Grid nodes lying on the faces of this box carrying `tag`."""
        multi = self._node_multi
        top = self.node_shape[-1] - 1
        if tag == FaceTag.LATERAL:
            mask = np.zeros(self.n_nodes, dtype=bool)
            for axis in range(self.dim - 1):
                mask |= (multi[:, axis] == 0) | (multi[:, axis] == self.node_shape[axis] - 1)
            return np.nonzero(mask)[0]
        if self.spec.domain == BIOT:
            z_index = {FaceTag.GAMMA_B: top, FaceTag.GAMMA_I: 0}.get(tag)
        else:
            z_index = {FaceTag.GAMMA_F: 0, FaceTag.GAMMA_I: top}.get(tag)
        if z_index is None:
            return np.zeros(0, dtype=int)
        return np.nonzero(multi[:, -1] == z_index)[0]

    @cached_property
    def _node_multi(self) -> np.ndarray:
        grids = np.meshgrid(*[np.arange(s) for s in self.node_shape], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    # ------------------------------------------------------------------
    # Point location and evaluation
    # ------------------------------------------------------------------
    def locate(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Cell index and reference coordinates of each point.

        Points on a cell boundary belong to the cell with the smaller index
        along each axis, except on the far faces of the box.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        lower = np.zeros(self.dim)
        lower[-1] = self.z0
        rel = (points - lower) * self.n
        tol = DOMAIN_TOLERANCE * self.n
        outside = np.any((rel < -tol) | (rel > self.n + tol), axis=1)
        if np.any(outside):
            bad = points[np.argmax(outside)]
            raise OutOfDomain(f"point {bad.tolist()} lies outside the {self.spec.field} box")
        cell_multi = np.clip(np.floor(rel).astype(int), 0, self.n - 1)
        local = np.clip(rel - cell_multi, 0.0, 1.0)
        cells = np.ravel_multi_index(tuple(cell_multi.T), (self.n,) * self.dim)
        return cells, local

    def evaluate_in_cells(
        self, coefs: np.ndarray, cells: np.ndarray, local_points: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        Values (npts, components) and gradients (npts, components, dim) of a
        full coefficient vector at reference points of the given cells.
        """
        element = reference_element(self.dim, self.degree)
        values_ref, grads_ref = element.tabulate(local_points)
        nodal = self.component_view(coefs)[self.cell_nodes[cells]]
        values = np.einsum("pic,ip->pc", nodal, values_ref)
        grads = np.einsum("pic,ipd->pcd", nodal, grads_ref) / self.h
        return values, grads


def build_dofmap(mesh: MeshTopology, spec: SpaceSpec) -> DofMap:
    """Number the nodes of `spec` on its box of `mesh` and resolve constraints."""
    if spec.degree not in (1, 2):
        raise SpaceSpecError(f"degree must be 1 or 2, got {spec.degree}")
    if spec.domain not in (BIOT, STOKES):
        raise SpaceSpecError(f"unknown domain {spec.domain!r}")

    dim, n, r = mesh.dim, mesh.n, spec.degree
    node_shape = (r * n + 1,) * dim
    z0 = 0.0 if spec.domain == BIOT else -1.0
    grids = np.meshgrid(*[np.arange(s) for s in node_shape], indexing="ij")
    multi = np.stack([g.ravel() for g in grids], axis=-1)
    coords = multi.astype(float) / (r * n)
    coords[:, -1] += z0
    n_nodes = coords.shape[0]

    if spec.periodic:
        master_multi = periodic_master(multi, node_shape, dim - 1)
        master = np.ravel_multi_index(tuple(master_multi.T), node_shape)
    else:
        master = np.arange(n_nodes)

    pinned = np.zeros(n_nodes, dtype=bool)
    top = r * n
    for tag in spec.dirichlet:
        if tag == FaceTag.LATERAL:
            for axis in range(dim - 1):
                pinned |= (multi[:, axis] == 0) | (multi[:, axis] == top)
        elif tag == FaceTag.GAMMA_I:
            pinned |= multi[:, -1] == (0 if spec.domain == BIOT else top)
        elif tag == FaceTag.GAMMA_B and spec.domain == BIOT:
            pinned |= multi[:, -1] == top
        elif tag == FaceTag.GAMMA_F and spec.domain == STOKES:
            pinned |= multi[:, -1] == 0
    class_pinned = np.zeros(n_nodes, dtype=bool)
    np.logical_or.at(class_pinned, master, pinned)
    pinned = class_pinned[master]

    is_free_master = (master == np.arange(n_nodes)) & ~pinned
    free_nodes = np.nonzero(is_free_master)[0]
    master_free = np.full(n_nodes, -1, dtype=int)
    master_free[free_nodes] = np.arange(len(free_nodes))
    free_index = master_free[master]

    element = reference_element(dim, r)
    cell_multi = np.array(np.unravel_index(np.arange(n ** dim), (n,) * dim)).T
    node_multi = r * cell_multi[:, None, :] + element.local_multi_index[None, :, :]
    cell_nodes = np.ravel_multi_index(tuple(np.moveaxis(node_multi, -1, 0)), node_shape)
    cell_origin = cell_multi.astype(float) / n
    cell_origin[:, -1] += z0

    face_element = reference_element(dim - 1, r)
    lateral_cells = np.array(np.unravel_index(np.arange(n ** (dim - 1)), (n,) * (dim - 1))).T
    lateral_cells = lateral_cells.reshape(n ** (dim - 1), dim - 1)
    z_cell = 0 if spec.domain == BIOT else n - 1
    z_node = 0 if spec.domain == BIOT else top
    face_multi = r * lateral_cells[:, None, :] + face_element.local_multi_index[None, :, :]
    face_multi = np.concatenate(
        [face_multi, np.full(face_multi.shape[:2] + (1,), z_node, dtype=int)], axis=-1
    )
    interface_nodes = np.ravel_multi_index(tuple(np.moveaxis(face_multi, -1, 0)), node_shape)
    interface_cells = np.ravel_multi_index(
        tuple(np.concatenate([lateral_cells, np.full((len(lateral_cells), 1), z_cell)], axis=1).T),
        (n,) * dim,
    )

    dofmap = DofMap(
        spec=spec,
        dim=dim,
        n=n,
        node_shape=node_shape,
        coords=coords,
        master=master,
        pinned=pinned,
        free_index=free_index,
        free_nodes=free_nodes,
        cell_nodes=cell_nodes,
        cell_origin=cell_origin,
        interface_nodes=np.atleast_2d(interface_nodes),
        interface_cells=np.atleast_1d(interface_cells),
        z0=z0,
    )
    logger.debug(
        "dofmap %s: %d nodes, %d free DOFs, %d slave DOFs",
        spec.field, n_nodes, dofmap.n_free, dofmap.n_slaves,
    )
    return dofmap


@dataclass(frozen=True)
class FieldDofMaps:
    """DOF maps of the five unknowns; w shares the u space."""

    u: DofMap
    p: DofMap
    v: DofMap
    pf: DofMap

    @property
    def w(self) -> DofMap:
        return self.u

    @property
    def dim(self) -> int:
        return self.u.dim

    @property
    def n(self) -> int:
        return self.u.n

    def sizes(self) -> Tuple[int, int, int, int, int]:
        """Free sizes in monolithic order (u, w, p, v, pf)."""
        return (self.u.n_free, self.u.n_free, self.p.n_free, self.v.n_free, self.pf.n_free)


def build_field_dofmaps(mesh: MeshTopology) -> FieldDofMaps:
    return FieldDofMaps(
        u=build_dofmap(mesh, space_spec("u", mesh.dim)),
        p=build_dofmap(mesh, space_spec("p", mesh.dim)),
        v=build_dofmap(mesh, space_spec("v", mesh.dim)),
        pf=build_dofmap(mesh, space_spec("pf", mesh.dim)),
    )


def interpolate(fn: Callable[[np.ndarray], np.ndarray], dofmap: DofMap) -> np.ndarray:
    """
    Nodal interpolant of a closed-form field as a full coefficient vector.

    `fn` maps points (npts, dim) to values (npts,) or (npts, components).
    Slave entries are copied from their masters; pinned entries are zero
    once the field is checked to vanish there.
    """
    values = np.asarray(fn(dofmap.coords), dtype=float).reshape(dofmap.n_nodes, -1)
    if values.shape[1] != dofmap.components:
        raise SpaceSpecError(
            f"{dofmap.spec.field} expects {dofmap.components} component(s), got {values.shape[1]}"
        )
    if np.any(dofmap.pinned):
        violation = float(np.max(np.abs(values[dofmap.pinned])))
        if violation > BC_TOLERANCE:
            tags = ",".join(sorted(t.value for t in dofmap.spec.dirichlet))
            raise BCViolation(dofmap.spec.field, tags, violation, BC_TOLERANCE)
    resolved = values[dofmap.master]
    resolved[dofmap.pinned] = 0.0
    return resolved.T.ravel()


def eval_field(coefs: np.ndarray, dofmap: DofMap, point: np.ndarray) -> np.ndarray:
    """
    Evaluate a full coefficient vector at one point (dim,) or many (npts, dim).

    Scalar fields return a float per point, vector fields a (components,) row.
    """
    point = np.asarray(point, dtype=float)
    single = point.ndim == 1
    cells, local = dofmap.locate(point)
    values, _ = dofmap.evaluate_in_cells(coefs, cells, local)
    if dofmap.components == 1:
        values = values[:, 0]
    return values[0] if single else values


def eval_gradient(coefs: np.ndarray, dofmap: DofMap, point: np.ndarray) -> np.ndarray:
    """Gradient (components, dim) per point, same cell convention as eval_field."""
    point = np.asarray(point, dtype=float)
    single = point.ndim == 1
    cells, local = dofmap.locate(point)
    _, grads = dofmap.evaluate_in_cells(coefs, cells, local)
    return grads[0] if single else grads


def quadrature_tables(dofmap: DofMap, face: bool = False) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Shared reference tables for assembly on every cell (or interface face) of
    the box: (ref points, ref weights, basis values, reference gradients).
    """
    dim = dofmap.dim - 1 if face else dofmap.dim
    points, weights = gauss_rule(dim)
    values, grads = reference_element(dim, dofmap.degree).tabulate(points)
    return points, weights, values, grads


def physical_quadrature_points(dofmap: DofMap) -> Tuple[np.ndarray, np.ndarray]:
    """Quadrature points (ncells, nq, dim) and physical weights (nq,) of every cell."""
    ref_points, ref_weights, _, _ = quadrature_tables(dofmap)
    points = dofmap.cell_origin[:, None, :] + dofmap.h * ref_points[None, :, :]
    return points, ref_weights * dofmap.h ** dofmap.dim


def interface_quadrature_points(dofmap: DofMap) -> Tuple[np.ndarray, np.ndarray]:
    """Quadrature points (nfaces, nq, dim) on GammaI and physical weights (nq,)."""
    ref_points, ref_weights, _, _ = quadrature_tables(dofmap, face=True)
    origins = dofmap.cell_origin[dofmap.interface_cells].copy()
    origins[:, -1] = 0.0
    nq = ref_points.shape[0]
    lateral = origins[:, None, :-1] + dofmap.h * ref_points[None, :, :]
    points = np.concatenate([lateral, np.zeros((len(origins), nq, 1))], axis=-1)
    return points, ref_weights * dofmap.h ** (dofmap.dim - 1)


def interface_reference_points(dofmap: DofMap) -> np.ndarray:
    """Face quadrature points lifted to the reference cell adjacent to GammaI."""
    ref_points, _, _, _ = quadrature_tables(dofmap, face=True)
    z_ref = 0.0 if dofmap.spec.domain == BIOT else 1.0
    return np.concatenate([ref_points, np.full((ref_points.shape[0], 1), z_ref)], axis=1)

