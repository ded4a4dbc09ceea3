"""Structured tetrahedral meshes of a box.

The box is split into ``N x N x N`` cuboids and every cuboid into either six
tetrahedra sharing its main diagonal (Kuhn/Freudenthal) or five tetrahedra
with mirror orientation alternating between neighbouring cuboids.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import permutations
from typing import Sequence

import numpy as np

__all__ = [
    "BoxDomain",
    "Mesh",
    "PatchIndex",
    "build_mesh",
    "build_patches",
    "face_diameter",
    "tet_volumes",
    "write_vtk",
]

# cube corner c = dx + 2*dy + 4*dz
_CORNERS = np.array([[c & 1, (c >> 1) & 1, (c >> 2) & 1] for c in range(8)])


def _kuhn_cube() -> np.ndarray:
    tets = []
    for p in permutations(range(3)):
        a = 1 << p[0]
        b = a + (1 << p[1])
        tets.append([0, a, b, 7])
    return np.array(tets)


_SIX_TET = _kuhn_cube()
_FIVE_TET_EVEN = np.array([[0, 3, 5, 6], [1, 0, 3, 5], [2, 0, 3, 6], [4, 0, 5, 6], [7, 3, 5, 6]])
_FIVE_TET_ODD = np.array([[1, 2, 4, 7], [0, 1, 2, 4], [3, 1, 2, 7], [5, 1, 4, 7], [6, 2, 4, 7]])

# local face k is opposite local vertex k
LOCAL_FACES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
LOCAL_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])


@dataclass(frozen=True)
class BoxDomain:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3:
            raise ValueError("box corners must be 3-vectors")
        if not all(h > l for l, h in zip(lo, hi)):
            raise ValueError(f"degenerate box: lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, a: float, b: float) -> "BoxDomain":
        return cls((a, a, a), (b, b, b))

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(np.subtract(self.hi, self.lo)))


def tet_volumes(points: np.ndarray) -> np.ndarray:
    """Signed volumes of tetrahedra given as an array of shape (..., 4, 3)."""
    p = np.asarray(points, dtype=float)
    d = p[..., 1:, :] - p[..., :1, :]
    return np.linalg.det(d) / 6.0


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable structured tetrahedral mesh.

    ``faces`` holds sorted node triples; ``face_elements[f]`` the adjacent
    element ids in ascending order, with ``-1`` in the second slot for
    boundary faces.
    """

    domain: BoxDomain
    n_per_axis: int
    subdivision: str
    nodes: np.ndarray
    elements: np.ndarray
    faces: np.ndarray
    face_elements: np.ndarray
    element_faces: np.ndarray
    boundary_node_flags: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def h(self) -> float:
        """Cuboid edge length (largest over the three axes)."""
        return float(np.max(np.subtract(self.domain.hi, self.domain.lo)) / self.n_per_axis)

    @cached_property
    def element_points(self) -> np.ndarray:
        return self.nodes[self.elements]

    @cached_property
    def volumes(self) -> np.ndarray:
        return tet_volumes(self.element_points)

    @cached_property
    def p1_coefficients(self) -> np.ndarray:
        """Monomial coefficients (1, x, y, z) of the four barycentric functions.

        Shape (M, 4, 4): ``[e, j]`` are the coefficients of the basis function
        attached to local vertex ``j``.
        """
        p = self.element_points
        V = np.concatenate([np.ones(p.shape[:2] + (1,)), p], axis=2)
        return np.transpose(np.linalg.inv(V), (0, 2, 1))

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique sorted node pairs."""
        e = np.sort(self.elements[:, LOCAL_EDGES].reshape(-1, 2), axis=1)
        return np.unique(e, axis=0)

    @cached_property
    def node_elements(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR (indptr, indices) mapping nodes to incident elements."""
        flat = self.elements.ravel()
        order = np.argsort(flat, kind="stable")
        indices = (order // 4).astype(np.int64)
        counts = np.bincount(flat, minlength=self.n_nodes)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return indptr, indices

    @property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_elements[:, 1] >= 0)

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_elements[:, 1] < 0)


def _grid_nodes(domain: BoxDomain, n: int) -> np.ndarray:
    axes = [np.linspace(domain.lo[k], domain.hi[k], n + 1) for k in range(3)]
    # x varies fastest: node id = i + (n+1)*j + (n+1)^2*k
    z, y, x = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
    return np.column_stack([x.ravel(), y.ravel(), z.ravel()])


def build_mesh(domain: BoxDomain, n: int, subdivision: str = "six_tet") -> Mesh:
    """Subdivide ``domain`` into ``n^3`` cuboids and those into tetrahedra."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if subdivision not in ("six_tet", "five_tet"):
        raise ValueError(f"unknown subdivision {subdivision!r}")
    n = int(n)
    nodes = _grid_nodes(domain, n)

    i, j, k = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    i, j, k = (a.transpose(2, 1, 0).ravel() for a in (i, j, k))  # cube order: i fastest
    s = n + 1
    corner_ids = (
        (i[:, None] + _CORNERS[None, :, 0])
        + s * (j[:, None] + _CORNERS[None, :, 1])
        + s * s * (k[:, None] + _CORNERS[None, :, 2])
    )
    if subdivision == "six_tet":
        elements = corner_ids[:, _SIX_TET].reshape(-1, 4)
    else:
        parity = ((i + j + k) % 2)[:, None, None]
        local = np.where(parity == 0, _FIVE_TET_EVEN[None], _FIVE_TET_ODD[None])
        elements = np.take_along_axis(corner_ids[:, None, :], local, axis=2).reshape(-1, 4)

    vol = tet_volumes(nodes[elements])
    neg = vol < 0
    elements[neg] = elements[neg][:, [1, 0, 2, 3]]

    faces, face_elements, element_faces = _build_faces(elements, len(nodes))

    g = np.stack(np.meshgrid(np.arange(s), np.arange(s), np.arange(s), indexing="ij"), -1)
    g = g.transpose(2, 1, 0, 3).reshape(-1, 3)
    boundary = np.any((g == 0) | (g == n), axis=1)

    return Mesh(
        domain=domain,
        n_per_axis=n,
        subdivision=subdivision,
        nodes=nodes,
        elements=elements,
        faces=faces,
        face_elements=face_elements,
        element_faces=element_faces,
        boundary_node_flags=boundary,
    )


def _build_faces(elements: np.ndarray, n_nodes: int):
    m = len(elements)
    local = np.sort(elements[:, LOCAL_FACES], axis=2).reshape(-1, 3).astype(np.int64)
    key = (local[:, 0] * n_nodes + local[:, 1]) * n_nodes + local[:, 2]
    uniq, first, inverse = np.unique(key, return_index=True, return_inverse=True)
    faces = local[first]
    owner = np.arange(4 * m) // 4
    order = np.argsort(inverse, kind="stable")
    counts = np.bincount(inverse, minlength=len(uniq))
    if counts.max() > 2:
        raise RuntimeError("non-manifold face detected")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    face_elements = np.full((len(uniq), 2), -1, dtype=np.int64)
    face_elements[:, 0] = owner[order[starts]]
    two = counts == 2
    face_elements[two, 1] = owner[order[starts[two] + 1]]
    element_faces = inverse.reshape(m, 4)
    return faces, face_elements, element_faces


class PatchIndex:
    """Element patches: elements whose boundary touches the element's boundary.

    For a conforming tetrahedral mesh this is the set of elements sharing at
    least one vertex. Patches are computed on demand from the node-to-element
    incidence, so memory stays linear in the mesh size.
    """

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self._indptr, self._indices = mesh.node_elements

    def __len__(self) -> int:
        return self.mesh.n_elements

    def __getitem__(self, e: int) -> np.ndarray:
        parts = [self._indices[self._indptr[v]:self._indptr[v + 1]] for v in self.mesh.elements[e]]
        return np.unique(np.concatenate(parts))

    def sizes(self, elements: Sequence[int] | None = None) -> np.ndarray:
        ids = range(len(self)) if elements is None else elements
        return np.array([len(self[e]) for e in ids])


def build_patches(mesh: Mesh) -> PatchIndex:
    return PatchIndex(mesh)


def face_diameter(mesh: Mesh, face_id) -> np.ndarray | float:
    """Longest edge length of a face (vectorised over an array of face ids)."""
    p = mesh.nodes[mesh.faces[face_id]]
    d = np.stack(
        [
            np.linalg.norm(p[..., 1, :] - p[..., 0, :], axis=-1),
            np.linalg.norm(p[..., 2, :] - p[..., 1, :], axis=-1),
            np.linalg.norm(p[..., 0, :] - p[..., 2, :], axis=-1),
        ],
        axis=-1,
    ).max(axis=-1)
    return float(d) if np.ndim(d) == 0 else d


def write_vtk(path, mesh: Mesh, point_data: dict | None = None, cell_data: dict | None = None) -> None:
    """Write the mesh as a legacy ASCII VTK unstructured grid."""
    lines = [
        "# vtk DataFile Version 3.0",
        f"ifem3d mesh N={mesh.n_per_axis} {mesh.subdivision}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    lines += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.nodes]
    m = mesh.n_elements
    lines.append(f"CELLS {m} {5 * m}")
    lines += [f"4 {a} {b} {c} {d}" for a, b, c, d in mesh.elements]
    lines.append(f"CELL_TYPES {m}")
    lines += ["10"] * m
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        for name, values in point_data.items():
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [f"{v:.17g}" for v in np.asarray(values, dtype=float)]
    if cell_data:
        lines.append(f"CELL_DATA {m}")
        for name, values in cell_data.items():
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [f"{v:.17g}" for v in np.asarray(values, dtype=float)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
