"""Structured grid of the two stacked boxes: Biot box on top, Stokes box below."""

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.discretization.elements import gauss_rule
from src.errors import MeshSpecError

logger = logging.getLogger(__name__)

BIOT = "b"
STOKES = "f"


class FaceTag(str, Enum):
    GAMMA_B = "GammaB"
    GAMMA_F = "GammaF"
    GAMMA_I = "GammaI"
    LATERAL = "Lateral"


def check_grid(dim: int = 2, n: int = 1) -> None:
    """Raise MeshSpecError for a dimension outside {2, 3} or fewer than one cell per edge."""
    if dim not in (2, 3):
        raise MeshSpecError(f"dim must be 2 or 3, got {dim}")
    if n < 1:
        raise MeshSpecError(f"n must be >= 1, got {n}")


class GridSpec(BaseModel):
    """Uniform grid: n cells per unit edge in every direction, on both boxes."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    dim: int = Field(2, description="Spatial dimension: 3 is the physical case, 2 the fast analog.")
    n: int = Field(2, description="Cells per unit edge; each box has n cell layers.")

    @field_validator("dim")
    @classmethod
    def _check_dim(cls, value: int) -> int:
        check_grid(dim=value)
        return value

    @field_validator("n")
    @classmethod
    def _check_n(cls, value: int) -> int:
        check_grid(n=value)
        return value

    @property
    def h(self) -> float:
        return 1.0 / self.n


@dataclass(frozen=True)
class BoundaryFace:
    """
    One boundary face of a box.

    For GammaI faces `domain` is None and `normal` is the interface normal
    n_f = -n_b = e_d; for every other face `normal` points out of `domain`.
    """

    index: int
    tag: FaceTag
    domain: Optional[str]
    axis: int
    origin: Tuple[float, ...]
    vertices: Tuple[int, ...]
    normal: Tuple[float, ...]


@dataclass(frozen=True)
class MeshTopology:
    spec: GridSpec
    vertices: np.ndarray
    vertex_shape: Tuple[int, ...]
    cells: np.ndarray
    cell_domain: np.ndarray
    cell_origin: np.ndarray
    faces: Tuple[BoundaryFace, ...]
    lateral_partner: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def h(self) -> float:
        return self.spec.h

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    def faces_with_tag(self, tag: FaceTag) -> List[BoundaryFace]:
        return [f for f in self.faces if f.tag == tag]

    def cell_volume(self, cell: int) -> float:
        return self.h ** self.dim

    def face_area(self, face) -> float:
        return self.h ** (self.dim - 1)

    def cell_quadrature(self, cell: int) -> Tuple[np.ndarray, np.ndarray]:
        """Physical 3-point-per-direction Gauss rule on one cell."""
        ref_points, ref_weights = gauss_rule(self.dim)
        origin = self.cell_origin[cell]
        return origin + self.h * ref_points, ref_weights * self.h ** self.dim

    def face_quadrature(self, face) -> Tuple[np.ndarray, np.ndarray]:
        """Physical Gauss rule on a boundary face (a BoundaryFace or its index)."""
        if not isinstance(face, BoundaryFace):
            face = self.faces[int(face)]
        ref_points, ref_weights = gauss_rule(self.dim - 1)
        points = np.empty((ref_points.shape[0], self.dim))
        tangential = [a for a in range(self.dim) if a != face.axis]
        points[:, tangential] = ref_points
        points[:, face.axis] = 0.0
        points = np.asarray(face.origin) + self.h * points
        return points, ref_weights * self.h ** (self.dim - 1)


def _vertex_index(multi: Tuple[int, ...], shape: Tuple[int, ...]) -> int:
    return int(np.ravel_multi_index(multi, shape))


def build_mesh(spec: GridSpec) -> MeshTopology:
    """
    Build the conforming grid of Omega_b = (0,1)^(d-1) x (0,1) and
    Omega_f = (0,1)^(d-1) x (-1,0), tag boundary faces and pair lateral faces.

    Cells are numbered Biot box first, each box in lexicographic order of its
    cell multi-index (last coordinate fastest). GammaI faces come first in the
    face list, ordered like the lateral cell multi-index, so GammaI face i sits
    between Biot cell (i, 0) and Stokes cell (i, n - 1).
    """
    dim, n = spec.dim, spec.n
    check_grid(dim, n)

    h = 1.0 / n
    lateral_axes = list(range(dim - 1))
    vertex_shape = (n + 1,) * (dim - 1) + (2 * n + 1,)
    grids = np.meshgrid(*[np.arange(s) for s in vertex_shape], indexing="ij")
    multi = np.stack([g.ravel() for g in grids], axis=-1)
    vertices = multi.astype(float) * h
    vertices[:, -1] -= 1.0

    corner_offsets = list(itertools.product((0, 1), repeat=dim))
    cells = []
    cell_domain = []
    cell_origin = []
    for domain, z_shift in ((BIOT, n), (STOKES, 0)):
        for c in itertools.product(range(n), repeat=dim):
            base = list(c)
            base[-1] += z_shift
            cells.append([_vertex_index(tuple(b + o for b, o in zip(base, off)), vertex_shape)
                          for off in corner_offsets])
            cell_domain.append(domain)
            origin = np.array(c, dtype=float) * h
            origin[-1] += 0.0 if domain == BIOT else -1.0
            cell_origin.append(origin)

    faces: List[BoundaryFace] = []
    e_d = tuple(1.0 if a == dim - 1 else 0.0 for a in range(dim))
    minus_e_d = tuple(-x for x in e_d)

    def horizontal_face(tag, domain, z_index, normal):
        for c in itertools.product(range(n), repeat=dim - 1):
            verts = tuple(
                _vertex_index(tuple(ci + oi for ci, oi in zip(c, off)) + (z_index,), vertex_shape)
                for off in itertools.product((0, 1), repeat=dim - 1)
            )
            origin = tuple(ci * h for ci in c) + (z_index * h - 1.0,)
            faces.append(BoundaryFace(len(faces), tag, domain, dim - 1, origin, verts, normal))

    horizontal_face(FaceTag.GAMMA_I, None, n, e_d)
    horizontal_face(FaceTag.GAMMA_B, BIOT, 2 * n, e_d)
    horizontal_face(FaceTag.GAMMA_F, STOKES, 0, minus_e_d)

    lateral_key: Dict[Tuple, int] = {}
    for domain, z_shift in ((BIOT, n), (STOKES, 0)):
        for axis in lateral_axes:
            others = [a for a in range(dim) if a != axis]
            for side in (0, 1):
                normal = tuple((1.0 if side else -1.0) if a == axis else 0.0 for a in range(dim))
                for c in itertools.product(range(n), repeat=dim - 1):
                    base = [0] * dim
                    for a, ci in zip(others, c):
                        base[a] = ci
                    base[axis] = side * n
                    base[-1] += z_shift
                    verts = []
                    for off in itertools.product((0, 1), repeat=dim - 1):
                        v = list(base)
                        for a, oi in zip(others, off):
                            v[a] += oi
                        verts.append(_vertex_index(tuple(v), vertex_shape))
                    origin = tuple(b * h for b in base[:-1]) + (base[-1] * h - 1.0,)
                    lateral_key[(domain, axis, side, c)] = len(faces)
                    faces.append(BoundaryFace(len(faces), FaceTag.LATERAL, domain, axis,
                                              origin, tuple(verts), normal))

    partner = np.full(len(faces), -1, dtype=int)
    for (domain, axis, side, c), idx in lateral_key.items():
        partner[idx] = lateral_key[(domain, axis, 1 - side, c)]

    logger.debug("built %dD mesh with n=%d: %d cells, %d boundary faces", dim, n, len(cells), len(faces))
    return MeshTopology(
        spec=spec,
        vertices=vertices,
        vertex_shape=vertex_shape,
        cells=np.array(cells, dtype=int),
        cell_domain=np.array(cell_domain),
        cell_origin=np.array(cell_origin),
        faces=tuple(faces),
        lateral_partner=partner,
    )


def periodic_master(multi: np.ndarray, shape: Tuple[int, ...], n_lateral: int) -> np.ndarray:
    """
    Map grid multi-indices to their periodic master: index shape[a] - 1 on a
    lateral axis a is identified with 0. Corner and edge nodes resolve in one
    pass to the single master of their class.
    """
    master = np.array(multi, copy=True)
    for axis in range(n_lateral):
        column = master[..., axis]
        column[column == shape[axis] - 1] = 0
    return master


def lateral_pairs(mesh: MeshTopology) -> List[Tuple[int, int]]:
    """
    Slave -> master vertex pairs of the lateral periodic identification.

    Every vertex with x_1 = 1 (or x_2 = 1 in 3D) is a slave; its master has
    those coordinates replaced by 0 and all others unchanged.
    """
    shape = mesh.vertex_shape
    grids = np.meshgrid(*[np.arange(s) for s in shape], indexing="ij")
    multi = np.stack([g.ravel() for g in grids], axis=-1)
    master_multi = periodic_master(multi, shape, mesh.dim - 1)
    masters = np.ravel_multi_index(tuple(master_multi.T), shape)
    slaves = np.nonzero(masters != np.arange(len(masters)))[0]
    return [(int(s), int(masters[s])) for s in slaves]


def resolve_master(pairs: List[Tuple[int, int]], vertex: int) -> int:
    """Follow a slave -> master map until a fixed point."""
    mapping = dict(pairs)
    seen = set()
    while vertex in mapping and vertex not in seen:
        seen.add(vertex)
        vertex = mapping[vertex]
    return vertex
