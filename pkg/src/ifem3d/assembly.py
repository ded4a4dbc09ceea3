"""Symmetric interior-penalty assembly of the enriched IFE system.

Unknowns are the nodal values of the homogeneous IFE function, one per mesh
node exactly as for P1 elements. Interface elements use the homogeneous
local functions; jump data only reaches the right-hand side through the
enrichment. Face terms act on the interior faces whose vertices carry both
signs: on every other face the traces of IFE functions from both sides are
the same linear polynomial, so the jump vanishes identically there.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp

from .basis import build_B_matrices, degenerate_cut_bases, solve_local_bases
from .enrichment import EnrichmentField, assemble_enrichment
from .geometry import INTERFACE, PLUS, build_cut_geometry, classify, refine_cut_faces
from .levelset import LevelSet
from .mesh import Mesh, build_patches, face_diameter
from .quadrature import map_tet, map_triangle, tet_rule, triangle_rule

__all__ = [
    "AssemblyParams",
    "FaceData",
    "Discretization",
    "SparseSystem",
    "IFEField",
    "assemble_bilinear",
    "assemble_rhs",
    "assemble_system",
    "reconstruct_solution",
    "interpolate",
    "p1_stiffness",
    "export_matrix_market",
    "symmetry_defect",
]

_CHUNK = 40000


@dataclass(frozen=True)
class AssemblyParams:
    sigma: float | None = None  # None: max(beta-, beta+)
    penalty_length: str = "face_diameter"
    enrichment_mode: str = "pointwise"
    source_degree: int = 4
    split: str = "plane"  # four-point cuts, see geometry.cut_element

    def __post_init__(self):
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.penalty_length != "face_diameter":
            raise ValueError(f"unknown penalty length {self.penalty_length!r}")
        if self.enrichment_mode not in ("pointwise", "patch_average"):
            raise ValueError(f"unknown enrichment mode {self.enrichment_mode!r}")
        if self.split not in ("edge_root", "plane"):
            raise ValueError(f"unknown split {self.split!r}")

    def sigma_for(self, beta_minus: float, beta_plus: float) -> float:
        return max(beta_minus, beta_plus) if self.sigma is None else float(self.sigma)


@dataclass
class FaceData:
    """Cut faces and their common refinements, flattened.

    ``elements`` (F, 2) ascending, ``position`` (F, 2) rows in the cut
    geometry, ``normal`` (F, 3) pointing from the lower to the higher element,
    ``length`` (F,) face diameter. Sub-triangles: ``triangles`` (S, 3, 3),
    ``face`` (S,) index into the face arrays, ``sides`` (S, 2).
    """

    face_ids: np.ndarray
    elements: np.ndarray
    position: np.ndarray
    normal: np.ndarray
    length: np.ndarray
    triangles: np.ndarray
    face: np.ndarray
    sides: np.ndarray

    def __len__(self) -> int:
        return len(self.face_ids)


@dataclass
class SparseSystem:
    matrix: sp.csr_matrix  # free x free
    rhs: np.ndarray
    free: np.ndarray  # node ids of the unknowns, ascending
    dof_map: np.ndarray  # node id -> dof index, -1 on Dirichlet nodes
    boundary: np.ndarray  # Dirichlet node ids
    dirichlet_values: np.ndarray  # g at ``boundary``
    full_matrix: sp.csr_matrix | None = None
    enrichment: EnrichmentField | None = None
    timings: dict = field(default_factory=dict)

    @property
    def n_dofs(self) -> int:
        return len(self.free)

    def nodal_vector(self, u_free) -> np.ndarray:
        u = np.zeros(len(self.dof_map))
        u[self.free] = u_free
        u[self.boundary] = self.dirichlet_values
        return u


def p1_stiffness(mesh: Mesh, beta=1.0) -> sp.csr_matrix:
    """Standard P1 stiffness matrix with an element-wise constant coefficient."""
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (mesh.n_elements,))
    G = mesh.p1_coefficients[:, :, 1:]
    K = (beta * mesh.volumes)[:, None, None] * np.einsum("mik,mjk->mij", G, G)
    return _scatter(mesh.elements, K, mesh.n_nodes)


def _scatter(nodes, blocks, n) -> sp.csr_matrix:
    k = nodes.shape[1]
    rows = np.repeat(nodes, k, axis=1).ravel()
    cols = np.tile(nodes, (1, k)).ravel()
    return sp.csr_matrix((blocks.ravel(), (rows, cols)), shape=(n, n))


def _poly(c, x):
    """Evaluate linear polynomials c (..., 4) at points x (..., 3)."""
    return c[..., 0] + np.einsum("...k,...k->...", c[..., 1:], x)


class Discretization:
    """Geometry, local bases and face data of the IFE method on one mesh.

    Everything that does not depend on f, g or the jump data is built here
    once; several right-hand sides can reuse it.
    """

    def __init__(self, mesh: Mesh, level_set: LevelSet, beta_minus: float, beta_plus: float,
                 params: AssemblyParams | None = None, strict: bool = True):
        if not (beta_minus > 0 and beta_plus > 0):
            raise ValueError("coefficients must be positive")
        self.mesh = mesh
        self.level_set = level_set
        self.beta_minus = float(beta_minus)
        self.beta_plus = float(beta_plus)
        self.params = params or AssemblyParams()
        self.sigma = self.params.sigma_for(self.beta_minus, self.beta_plus)
        t0 = time.perf_counter()
        self.classification = classify(mesh, level_set, strict=strict)
        self.geometry = build_cut_geometry(mesh, level_set, self.classification, self.params.split)
        g = self.geometry
        B = build_B_matrices(mesh.nodes[mesh.elements[g.element_ids]], g.vertex_plus, g.D, g.plane_normal,
                             self.beta_minus, self.beta_plus)
        self.B = B
        # elements whose plus vertices all lie on the interface have a
        # zero-volume plus piece; they take the limit functions instead
        snapped = np.zeros(mesh.n_nodes, dtype=bool)
        snapped[self.classification.snapped_nodes] = True
        self.degenerate = np.all(snapped[g.nodes] | ~g.vertex_plus, axis=1) if len(B) else np.zeros(0, bool)
        self.coeffs = np.zeros((len(B), 8, 2, 4))
        ok = ~self.degenerate
        if np.any(ok):
            self.coeffs[ok] = solve_local_bases(B[ok], g.element_ids[ok])
        if np.any(self.degenerate):
            dg = self.degenerate
            self.coeffs[dg] = degenerate_cut_bases(mesh.nodes[g.nodes[dg]], g.vertex_plus[dg], g.D[dg])
        self.faces = self._build_faces()
        self.setup_time = time.perf_counter() - t0
        self._matrix = None
        self._patches = None

    # ------------------------------------------------------------------ data
    @property
    def phi(self) -> np.ndarray:
        """Homogeneous local functions on the interface elements, (K, 4, 2, 4)."""
        return self.coeffs[:, :4]

    @property
    def xi(self) -> np.ndarray:
        return self.coeffs[:, 4:]

    @property
    def tags(self) -> np.ndarray:
        return self.classification.tags

    @property
    def patches(self):
        if self._patches is None:
            self._patches = build_patches(self.mesh)
        return self._patches

    def element_beta(self) -> np.ndarray:
        """Coefficient on non-interface elements (unused on interface ones)."""
        return np.where(self.tags == PLUS, self.beta_plus, self.beta_minus)

    def _build_faces(self) -> FaceData:
        mesh, g = self.mesh, self.geometry
        fids = self.classification.interface_faces
        elems = mesh.face_elements[fids]
        pos = np.array([[g.position[int(e)] for e in pair] for pair in elems], dtype=np.int64).reshape(-1, 2)
        X = mesh.nodes[mesh.faces[fids]]
        n = np.cross(X[:, 1] - X[:, 0], X[:, 2] - X[:, 0])
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        if len(fids):
            el0 = mesh.elements[elems[:, 0]]
            off = ~(el0[:, :, None] == mesh.faces[fids][:, None, :]).any(axis=2)
            opp = el0[off]
            flip = np.einsum("ij,ij->i", mesh.nodes[opp] - X[:, 0], n) > 0
            n[flip] *= -1
        tris, owner, sides = refine_cut_faces(mesh, fids, g, self.classification.node_plus)
        return FaceData(
            face_ids=fids,
            elements=elems,
            position=pos,
            normal=n.reshape(-1, 3),
            length=np.asarray(face_diameter(mesh, fids), dtype=float).reshape(-1),
            triangles=tris,
            face=owner,
            sides=sides,
        )

    # ---------------------------------------------------------- face traces
    def _face_traces(self, coeffs, degree: int = 2):
        """Jumps and flux averages of element functions on face sub-triangles.

        ``coeffs`` (K, m, 2, 4) gives m piecewise-linear functions per cut
        element. Returns quadrature weights (S, q), jumps (S, q, 2m) and
        averages of beta grad . n (S, 2m); the first m functions belong to the
        lower element, the rest to the higher one.
        """
        fd = self.faces
        x, w = map_triangle(triangle_rule(degree), fd.triangles)
        n = fd.normal[fd.face]
        jumps, avgs = [], []
        for j, sign in ((0, 1.0), (1, -1.0)):
            pos = fd.position[fd.face, j]
            plus = fd.sides[:, j] == PLUS
            c = coeffs[pos, :, 1] * plus[:, None, None] + coeffs[pos, :, 0] * (~plus)[:, None, None]
            beta = np.where(plus, self.beta_plus, self.beta_minus)
            vals = c[:, None, :, 0] + np.einsum("sqk,smk->sqm", x, c[..., 1:])
            jumps.append(sign * vals)  # jump = lower trace - higher trace, along the normal
            avgs.append(0.5 * beta[:, None] * np.einsum("smk,sk->sm", c[..., 1:], n))
        return w, np.concatenate(jumps, axis=2), np.concatenate(avgs, axis=1)

    def _face_nodes(self) -> np.ndarray:
        fd = self.faces
        return self.mesh.elements[fd.elements[fd.face]].reshape(-1, 8)

    # --------------------------------------------------------------- matrix
    def matrix(self) -> sp.csr_matrix:
        """Full node-by-node stiffness matrix (before boundary elimination)."""
        if self._matrix is not None:
            return self._matrix
        mesh, g = self.mesh, self.geometry
        beta = self.element_beta()
        beta[g.element_ids] = 0.0
        parts = [p1_stiffness(mesh, beta)]
        if len(g.element_ids):
            gm = self.phi[:, :, 0, 1:]
            gp = self.phi[:, :, 1, 1:]
            K = (self.beta_minus * g.minus_volume)[:, None, None] * np.einsum("kid,kjd->kij", gm, gm)
            K += (self.beta_plus * g.plus_volume)[:, None, None] * np.einsum("kid,kjd->kij", gp, gp)
            parts.append(_scatter(mesh.elements[g.element_ids], K, mesh.n_nodes))
        if len(self.faces):
            w, J, Av = self._face_traces(self.phi)
            P = np.einsum("sq,sqa,sqb->sab", w, J, J)
            Jbar = np.einsum("sq,sqa->sa", w, J)
            C = -(Av[:, :, None] * Jbar[:, None, :] + Jbar[:, :, None] * Av[:, None, :])
            pen = self.sigma / self.faces.length[self.faces.face]
            M = pen[:, None, None] * P + C
            parts.append(_scatter(self._face_nodes(), M, mesh.n_nodes))
        # one COO sum: sparse '+' would drop couplings that cancel to zero
        coo = [sp.coo_matrix(P) for P in parts]
        A = sp.csr_matrix((np.concatenate([c.data for c in coo]),
                           (np.concatenate([c.row for c in coo]), np.concatenate([c.col for c in coo]))),
                          shape=parts[0].shape)
        A.sum_duplicates()
        A.sort_indices()
        self._matrix = A
        return A

    # ---------------------------------------------------------------- rhs
    def enrichment(self, jump, mode: str | None = None) -> EnrichmentField:
        mode = mode or self.params.enrichment_mode
        patches = self.patches if mode == "patch_average" else None
        return assemble_enrichment(self.geometry, self.xi, jump, mode=mode, level_set=self.level_set, patches=patches)

    def load_vector(self, f, jump=None, enrichment: EnrichmentField | None = None, f_pieces=None) -> np.ndarray:
        """L(v) - a_h(q_h, v) for every nodal test function (full length).

        On cut elements the source is integrated per sub-tetrahedron; with
        ``f_pieces = (f_minus, f_plus)`` each sub-tetrahedron uses the source
        of its own side, otherwise ``f`` is evaluated as given.
        """
        mesh, g = self.mesh, self.geometry
        n = mesh.n_nodes
        b = np.zeros(n)
        rule = tet_rule(self.params.source_degree)
        lam = rule.points
        non = np.flatnonzero(self.tags != INTERFACE)
        for s in range(0, len(non), _CHUNK):
            idx = non[s:s + _CHUNK]
            x, w = map_tet(rule, mesh.element_points[idx])
            fx = np.asarray(f(x), dtype=float)
            loc = np.einsum("mq,qj->mj", w * fx, lam)
            b += np.bincount(mesh.elements[idx].ravel(), loc.ravel(), minlength=n)
        if len(g.element_ids):
            x, w = map_tet(rule, g.subtets)
            plus = g.subtet_side == PLUS
            if f_pieces is not None:
                fx = np.where(plus[:, None], f_pieces[1](x), f_pieces[0](x))
            else:
                fx = np.asarray(f(x), dtype=float)
            c = np.where(plus[:, None, None], self.phi[g.subtet_owner, :, 1], self.phi[g.subtet_owner, :, 0])
            vals = c[:, None, :, 0] + np.einsum("sqk,sjk->sqj", x, c[..., 1:])
            loc = np.einsum("sq,sqj->sj", w * fx, vals)
            b += np.bincount(mesh.elements[g.element_ids[g.subtet_owner]].ravel(), loc.ravel(), minlength=n)
        if jump is None or not len(g.element_ids):
            return b
        if jump.has_flux:
            x, w = map_triangle(triangle_rule(4), g.triangles)
            q2 = jump.flux(x, self.level_set.normal(x))
            c = self.phi[g.triangle_owner]
            vm = c[:, None, :, 0, 0] + np.einsum("rqk,rjk->rqj", x, c[:, :, 0, 1:])
            vp = c[:, None, :, 1, 0] + np.einsum("rqk,rjk->rqj", x, c[:, :, 1, 1:])
            loc = -np.einsum("rq,rqj->rj", w * q2, 0.5 * (vm + vp))
            b += np.bincount(mesh.elements[g.element_ids[g.triangle_owner]].ravel(), loc.ravel(), minlength=n)
        if enrichment is None:
            enrichment = self.enrichment(jump)
        if not enrichment.is_zero:
            b -= self.apply_to_enrichment(enrichment.coeffs)
        return b

    def apply_to_enrichment(self, q) -> np.ndarray:
        """a_h(q, phi_i) for every node i, with q (K, 2, 4) on the cut elements."""
        mesh, g = self.mesh, self.geometry
        n = mesh.n_nodes
        gq = q[:, :, 1:]
        loc = (self.beta_minus * g.minus_volume)[:, None] * np.einsum("kjd,kd->kj", self.phi[:, :, 0, 1:], gq[:, 0])
        loc += (self.beta_plus * g.plus_volume)[:, None] * np.einsum("kjd,kd->kj", self.phi[:, :, 1, 1:], gq[:, 1])
        out = np.bincount(mesh.elements[g.element_ids].ravel(), loc.ravel(), minlength=n)
        if len(self.faces):
            w, J, Av = self._face_traces(self.phi)
            _, Jq, Aq = self._face_traces(q[:, None])
            Jq, Aq = Jq.sum(axis=2), Aq.sum(axis=1)  # q has a single function per side
            pen = self.sigma / self.faces.length[self.faces.face]
            r = -Aq[:, None] * np.einsum("sq,sqa->sa", w, J)
            r -= Av * np.einsum("sq,sq->s", w, Jq)[:, None]
            r += pen[:, None] * np.einsum("sq,sq,sqa->sa", w, Jq, J)
            out += np.bincount(self._face_nodes().ravel(), r.ravel(), minlength=n)
        return out


def assemble_bilinear(disc: Discretization) -> sp.csr_matrix:
    return disc.matrix()


def _pieces(problem):
    if getattr(problem, "f_minus", None) is not None and getattr(problem, "f_plus", None) is not None:
        return problem.f_minus, problem.f_plus
    return None


def assemble_rhs(disc: Discretization, problem, enrichment: EnrichmentField | None = None) -> np.ndarray:
    return disc.load_vector(problem.f, problem.jump, enrichment, _pieces(problem))


def assemble_system(disc: Discretization, problem, enrichment: EnrichmentField | None = None) -> SparseSystem:
    """Stiffness matrix and load vector with Dirichlet nodes eliminated."""
    mesh = disc.mesh
    t0 = time.perf_counter()
    A = disc.matrix()
    if enrichment is None:
        enrichment = disc.enrichment(problem.jump)
    b = disc.load_vector(problem.f, problem.jump, enrichment, _pieces(problem))
    bnd = np.flatnonzero(mesh.boundary_node_flags)
    free = np.flatnonzero(~mesh.boundary_node_flags)
    gval = np.asarray(problem.g(mesh.nodes[bnd]), dtype=float)
    Aff = A[free][:, free].tocsr()
    rhs = b[free] - A[free][:, bnd] @ gval
    dof_map = np.full(mesh.n_nodes, -1, dtype=np.int64)
    dof_map[free] = np.arange(len(free))
    return SparseSystem(Aff, rhs, free, dof_map, bnd, gval, full_matrix=A, enrichment=enrichment,
                        timings={"assemble_s": time.perf_counter() - t0 + disc.setup_time})


@dataclass
class IFEField:
    """Discrete solution: one (2, 4) piecewise-linear pair per element.

    On non-interface elements both pieces coincide. Points are assigned to
    a piece by the sign of the level set (``mode="levelset"``) or by the side
    of the element's interface plane (``mode="plane"``).
    """

    disc: Discretization
    coeffs: np.ndarray  # (M, 2, 4)
    nodal: np.ndarray

    def _pieces(self, elements, x, mode):
        elements = np.asarray(elements)
        x = np.asarray(x, dtype=float)
        c = self.coeffs[elements]
        if mode == "levelset":
            plus = self.disc.level_set.value(x) > 0
        elif mode == "plane":
            g = self.disc.geometry
            plus = np.zeros(x.shape[:-1], dtype=bool)
            cut = self.disc.tags[elements] == INTERFACE
            if np.any(cut):
                k = np.array([g.position[int(e)] for e in np.ravel(elements)]).reshape(np.shape(elements)) if np.ndim(elements) else g.position[int(elements)]
                kk = np.where(cut, k, 0) if np.ndim(elements) else k
                F = g.plane_point[kk]
                nn = g.plane_normal[kk]
                extra = x.ndim - np.ndim(elements) - 1
                for _ in range(extra):
                    F, nn = F[..., None, :], nn[..., None, :]
                plus = np.einsum("...k,...k->...", x - F, nn) > 0
        else:
            raise ValueError(f"unknown mode {mode!r}")
        extra = x.ndim - np.ndim(elements) - 1
        for _ in range(extra):
            c = c[..., None, :, :]
        return c, plus

    def value(self, elements, x, mode: str = "levelset") -> np.ndarray:
        c, plus = self._pieces(elements, x, mode)
        return np.where(plus, _poly(c[..., 1, :], x), _poly(c[..., 0, :], x))

    def gradient(self, elements, x, mode: str = "levelset") -> np.ndarray:
        c, plus = self._pieces(elements, x, mode)
        x = np.asarray(x, dtype=float)
        gp = np.broadcast_to(c[..., 1, 1:], x.shape)
        gm = np.broadcast_to(c[..., 0, 1:], x.shape)
        return np.where(plus[..., None], gp, gm)


def reconstruct_solution(disc: Discretization, system: SparseSystem, u_free,
                         enrichment: EnrichmentField | None = None) -> IFEField:
    """u_h = homogeneous part from nodal values plus the enrichment."""
    mesh, g = disc.mesh, disc.geometry
    U = system.nodal_vector(u_free)
    ue = U[mesh.elements]
    c = np.einsum("mj,mjk->mk", ue, mesh.p1_coefficients)
    coeffs = np.repeat(c[:, None, :], 2, axis=1)
    if len(g.element_ids):
        ci = np.einsum("kj,kjsm->ksm", ue[g.element_ids], disc.phi)
        enrichment = enrichment if enrichment is not None else system.enrichment
        if enrichment is not None:
            ci = ci + enrichment.coeffs
        coeffs[g.element_ids] = ci
    return IFEField(disc, coeffs, U)


def export_matrix_market(path, matrix) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(matrix), field="real", symmetry="general")


def symmetry_defect(A) -> float:
    """max|A - A^T| / max|A|."""
    A = sp.csr_matrix(A)
    d = abs(A - A.T)
    top = abs(A).max()
    return float(d.max() / top) if top else 0.0



def interpolate(disc: Discretization, exact, jump=None, enrichment: EnrichmentField | None = None) -> IFEField:
    """Global Lagrange-type IFE interpolant of a piecewise exact solution.

    Nodal values come from the piece matching each node's sign; on the cut
    elements the enrichment built from ``jump`` is added.
    """
    mesh, g = disc.mesh, disc.geometry
    U = np.asarray(exact.value(mesh.nodes, disc.classification.node_plus), dtype=float)
    ue = U[mesh.elements]
    c = np.einsum("mj,mjk->mk", ue, mesh.p1_coefficients)
    coeffs = np.repeat(c[:, None, :], 2, axis=1)
    if len(g.element_ids):
        ci = np.einsum("kj,kjsm->ksm", ue[g.element_ids], disc.phi)
        if enrichment is None and jump is not None:
            enrichment = disc.enrichment(jump)
        if enrichment is not None:
            ci = ci + enrichment.coeffs
        coeffs[g.element_ids] = ci
    return IFEField(disc, coeffs, U)
