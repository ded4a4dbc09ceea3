"""Interface geometry on a tetrahedral mesh.

Elements are classified by the sign of the level set at their vertices. On
every cut element the interface is replaced by a plane through three edge
intersection points, and the element and its faces are split into pieces on
which the immersed functions are plain polynomials.
"""

from __future__ import annotations

import warnings
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .levelset import LevelSet
from .mesh import LOCAL_EDGES, Mesh, tet_volumes

__all__ = [
    "MINUS",
    "PLUS",
    "INTERFACE",
    "AssumptionViolationError",
    "DegenerateCutError",
    "GeometryWarning",
    "ElementClassification",
    "CutElementGeometry",
    "CutGeometry",
    "FaceRefinement",
    "classify",
    "edge_root",
    "edge_roots",
    "select_plane_triple",
    "cut_element",
    "build_cut_geometry",
    "refine_cut_face",
    "refine_cut_faces",
]

MINUS, PLUS, INTERFACE = -1, 1, 0

_EDGE_INDEX = {(int(a), int(b)): k for k, (a, b) in enumerate(LOCAL_EDGES)}


class AssumptionViolationError(ValueError):
    """The interface crosses an element edge more than once."""

    def __init__(self, message, elements=()):
        super().__init__(message)
        self.elements = list(elements)


class DegenerateCutError(ValueError):
    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class GeometryWarning(UserWarning):
    pass


@dataclass
class ElementClassification:
    tags: np.ndarray  # per element: MINUS, PLUS or INTERFACE
    node_plus: np.ndarray  # per node: True on the plus side (after snapping)
    node_values: np.ndarray
    interface_elements: np.ndarray
    interface_faces: np.ndarray
    snapped_nodes: np.ndarray
    messages: list[str] = field(default_factory=list)

    @property
    def n_interface(self) -> int:
        return len(self.interface_elements)


def edge_roots(ls: LevelSet, a: np.ndarray, b: np.ndarray, plus_a=None, iterations: int = 64) -> np.ndarray:
    """Vectorised bisection plus one Newton polish for roots on segments a->b.

    ``plus_a`` gives the side of the start point (defaults to ``ls(a) > 0``);
    the end point is assumed to lie on the other side.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    d = b - a
    sa = ls.value(a) > 0 if plus_a is None else np.asarray(plus_a, dtype=bool)
    lo = np.zeros(len(a))
    hi = np.ones(len(a))
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        same = (ls.value(a + mid[:, None] * d) > 0) == sa
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    t = 0.5 * (lo + hi)
    x = a + t[:, None] * d
    v = ls.value(x)
    slope = np.sum(ls.gradient(x) * d, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        tn = t - v / slope
    ok = np.isfinite(tn) & (tn >= lo) & (tn <= hi)
    if np.any(ok):
        vn = ls.value(a[ok] + tn[ok, None] * d[ok])
        better = np.abs(vn) < np.abs(v[ok])
        idx = np.flatnonzero(ok)[better]
        t[idx] = tn[idx]
    return t


def edge_root(ls: LevelSet, a, b) -> float:
    """Parametric position of the level-set root on the segment a->b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ga, gb = float(ls.value(a)), float(ls.value(b))
    if ga * gb >= 0:
        raise ValueError(f"edge endpoints do not bracket a root: gamma(a)={ga}, gamma(b)={gb}")
    return float(edge_roots(ls, a[None], b[None], plus_a=[ga > 0])[0])


def classify(mesh: Mesh, ls: LevelSet, strict: bool = True, samples: int = 16) -> ElementClassification:
    """Tag elements as minus / plus / interface by vertex signs of ``ls``.

    Nodes with ``|gamma| < 1e-12 h`` are moved to the plus side. With
    ``strict`` a sign-changing edge that the level set crosses more than
    once raises :class:`AssumptionViolationError`.
    """
    values = ls.value(mesh.nodes)
    snap = np.abs(values) < 1e-12 * mesh.h
    node_plus = (values > 0) | snap
    messages = []
    if np.any(snap):
        msg = f"{int(snap.sum())} mesh node(s) within snapping tolerance moved to the plus side"
        messages.append(msg)
        warnings.warn(msg, GeometryWarning, stacklevel=2)

    nplus = node_plus[mesh.elements].sum(axis=1)
    tags = np.where(nplus == 0, MINUS, np.where(nplus == 4, PLUS, INTERFACE)).astype(np.int8)
    interface_elements = np.flatnonzero(tags == INTERFACE)

    fp = node_plus[mesh.faces]
    mixed = fp.any(axis=1) & ~fp.all(axis=1)
    interface_faces = np.flatnonzero(mixed & (mesh.face_elements[:, 1] >= 0))

    cls = ElementClassification(
        tags=tags,
        node_plus=node_plus,
        node_values=values,
        interface_elements=interface_elements,
        interface_faces=interface_faces,
        snapped_nodes=np.flatnonzero(snap),
        messages=messages,
    )
    if len(interface_elements):
        _check_edges(mesh, ls, cls, samples, strict)
    return cls


def _check_edges(mesh, ls, cls, samples, strict):
    el = mesh.elements[cls.interface_elements]
    pairs = el[:, LOCAL_EDGES].reshape(-1, 2)
    owner = np.repeat(cls.interface_elements, 6)
    a = mesh.nodes[pairs[:, 0]]
    b = mesh.nodes[pairs[:, 1]]
    t = np.linspace(0.0, 1.0, samples + 1)[1:-1]
    inner = ls.value(a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]) > 0
    signs = np.column_stack([cls.node_plus[pairs[:, 0]], inner, cls.node_plus[pairs[:, 1]]])
    changes = np.count_nonzero(signs[:, 1:] != signs[:, :-1], axis=1)
    cut = cls.node_plus[pairs[:, 0]] != cls.node_plus[pairs[:, 1]]
    bad = cut & (changes > 1)
    doubled = ~cut & (changes > 0)
    if np.any(doubled):
        ids = np.unique(owner[doubled])
        msg = f"{len(ids)} interface element(s) have an uncut edge crossed twice by the interface"
        cls.messages.append(msg)
        warnings.warn(msg, GeometryWarning, stacklevel=3)
    if np.any(bad):
        ids = np.unique(owner[bad])
        msg = f"interface crosses an edge more than once in element(s) {ids[:10].tolist()}"
        if strict:
            raise AssumptionViolationError(msg, ids)
        cls.messages.append(msg)
        warnings.warn(msg, GeometryWarning, stacklevel=3)


def _triangle_angles(p: np.ndarray) -> np.ndarray:
    ang = np.empty(3)
    for i in range(3):
        u = p[(i + 1) % 3] - p[i]
        v = p[(i + 2) % 3] - p[i]
        c = np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))
        ang[i] = np.arccos(np.clip(c, -1.0, 1.0))
    return ang


def select_plane_triple(points, tol: float = 1e-10) -> tuple[int, int, int]:
    """Pick three of four cyclically ordered cut points for the interface plane.

    Among the four triangles obtained by dropping one point, the one with the
    smallest maximal interior angle is returned (ties go to the smallest
    dropped index). The result is listed cyclically starting after the
    dropped point.
    """
    p = np.asarray(points, dtype=float)
    if len(p) == 3:
        return (0, 1, 2)
    if len(p) != 4:
        raise ValueError("expected 3 or 4 cut points")
    scale = max(np.ptp(p, axis=0).max(), np.finfo(float).tiny)
    best, best_angle = None, np.inf
    for drop in range(4):
        idx = ((drop + 1) % 4, (drop + 2) % 4, (drop + 3) % 4)
        tri = p[list(idx)]
        area2 = np.linalg.norm(np.cross(tri[1] - tri[0], tri[2] - tri[0]))
        if area2 <= tol * scale * scale:
            continue
        worst = _triangle_angles(tri).max()
        if worst < best_angle - 1e-12:
            best, best_angle = idx, worst
    if best is None:
        raise DegenerateCutError("all candidate cut triangles are collinear")
    return best


@dataclass
class CutElementGeometry:
    element_id: int
    nodes: np.ndarray
    vertices: np.ndarray
    vertex_plus: np.ndarray
    cut_edges: np.ndarray  # (k, 2) local (minus vertex, plus vertex)
    cut_t: np.ndarray  # parameter along each cut edge, minus -> plus
    cut_points: np.ndarray  # (k, 3), cyclic order for k = 4
    selected: tuple
    plane_point: np.ndarray
    plane_normal: np.ndarray
    edge_points: np.ndarray  # (6, 3), NaN on uncut local edges
    minus_subtets: np.ndarray
    plus_subtets: np.ndarray
    interface_triangles: np.ndarray
    fourth: int | None = None
    fourth_point: np.ndarray | None = None
    clamped: bool = False

    @property
    def D(self) -> np.ndarray:
        """The three points spanning the approximation plane."""
        return self.cut_points[list(self.selected)]

    @property
    def minus_volume(self) -> float:
        return float(np.abs(tet_volumes(self.minus_subtets)).sum())

    @property
    def plus_volume(self) -> float:
        return float(np.abs(tet_volumes(self.plus_subtets)).sum())

    @property
    def interface_area(self) -> float:
        t = self.interface_triangles
        return float(0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1).sum())

    def plane_side(self, x) -> np.ndarray:
        """+1 where (x - F).n > 0, else -1 (points on the plane go to minus)."""
        s = (np.asarray(x, dtype=float) - self.plane_point) @ self.plane_normal
        return np.where(s > 0, PLUS, MINUS)


def _prism(top, bottom):
    t0, t1, t2 = top
    b0, b1, b2 = bottom
    return [[t0, t1, t2, b0], [t1, t2, b0, b1], [t2, b0, b1, b2]]


def _orient(tets: np.ndarray) -> np.ndarray:
    tets = np.asarray(tets, dtype=float)
    neg = tet_volumes(tets) < 0
    tets[neg] = tets[neg][:, [1, 0, 2, 3]]
    return tets


def cut_element(
    vertices,
    vertex_plus,
    edge_points,
    element_id: int = -1,
    nodes=None,
    split: str = "plane",
) -> CutElementGeometry:
    """Build the cut geometry of one element.

    ``edge_points`` is a (6, 3) array holding the level-set root on every
    sign-changing local edge (rows of ``LOCAL_EDGES``); other rows are
    ignored. The plane normal is oriented towards the plus vertices; callers
    holding a level set may re-orient it with the gradient.

    With four cut points the two sides are separated either by the plane
    itself, which meets the fourth cut edge at D4' (``split="plane"``), or by
    the quadrilateral through the four edge roots folded along the diagonal
    of the selected triangle (``split="edge_root"``). In the second case the
    separating surface meets every element face along the segment joining
    the two roots on that face, which the neighbouring element shares, and
    the selected triangle still lies in the plane.
    """
    if split not in ("edge_root", "plane"):
        raise ValueError(f"unknown split {split!r}")
    A = np.asarray(vertices, dtype=float)
    plus = np.asarray(vertex_plus, dtype=bool)
    roots = np.asarray(edge_points, dtype=float)
    minus_ids = [int(i) for i in np.flatnonzero(~plus)]
    plus_ids = [int(i) for i in np.flatnonzero(plus)]
    if not minus_ids or not plus_ids:
        raise ValueError(f"element {element_id} is not cut")

    def key(u, v):
        return _EDGE_INDEX[(min(u, v), max(u, v))]

    if len(minus_ids) == 2:
        a, b = minus_ids
        c, d = plus_ids
        cut_edges = np.array([[a, c], [a, d], [b, d], [b, c]])
    else:
        cut_edges = np.array([[u, v] for u in minus_ids for v in plus_ids])
        cut_edges = cut_edges[np.argsort([key(u, v) for u, v in cut_edges])]
    eids = [key(u, v) for u, v in cut_edges]
    cut_points = roots[eids].copy()
    seg = A[cut_edges[:, 1]] - A[cut_edges[:, 0]]
    cut_t = np.einsum("ij,ij->i", cut_points - A[cut_edges[:, 0]], seg) / np.einsum("ij,ij->i", seg, seg)

    try:
        selected = select_plane_triple(cut_points)
    except DegenerateCutError as exc:
        raise DegenerateCutError(str(exc), element_id) from None
    D = cut_points[list(selected)]
    F = D[0].copy()
    n = np.cross(D[1] - D[0], D[2] - D[0])
    n /= np.linalg.norm(n)
    s_plus = np.mean((A[plus] - F) @ n)
    s_minus = np.mean((A[~plus] - F) @ n)
    if s_plus < s_minus:
        n = -n

    eff = np.full((6, 3), np.nan)
    eff[eids] = cut_points
    fourth = None
    fourth_point = None
    clamped = False
    if len(cut_points) == 4:
        fourth = ({0, 1, 2, 3} - set(selected)).pop()
        u, v = cut_edges[fourth]
        du = (A[u] - F) @ n
        dv = (A[v] - F) @ n
        t = du / (du - dv) if du != dv else 0.5
        if not (0.0 < t < 1.0):
            t = min(max(t, 0.0), 1.0)
            clamped = split == "plane"
        if clamped:
            warnings.warn(
                f"element {element_id}: interface plane misses the fourth cut edge; clamped",
                GeometryWarning,
                stacklevel=2,
            )
        fourth_point = A[u] + t * (A[v] - A[u])
        if split == "plane":
            eff[eids[fourth]] = fourth_point

    def P(u, v):
        return eff[key(u, v)]

    if len(minus_ids) == 2:
        a, b = minus_ids
        c, d = plus_ids
        q = [P(a, c), P(a, d), P(b, d), P(b, c)]
        if fourth % 2 == 0:  # fold along q1-q3
            minus = _prism([A[a], P(a, c), P(a, d)], [A[b], P(b, c), P(b, d)])
            plus_t = _prism([A[c], P(a, c), P(b, c)], [A[d], P(a, d), P(b, d)])
            tris = [[q[1], q[2], q[3]], [q[3], q[0], q[1]]]
        else:  # fold along q0-q2
            minus = _prism([A[a], P(a, d), P(a, c)], [A[b], P(b, d), P(b, c)])
            plus_t = _prism([A[c], P(b, c), P(a, c)], [A[d], P(b, d), P(a, d)])
            tris = [[q[0], q[1], q[2]], [q[2], q[3], q[0]]]
    else:
        lone_minus = len(minus_ids) == 1
        v = minus_ids[0] if lone_minus else plus_ids[0]
        others = plus_ids if lone_minus else minus_ids
        top = [P(v, w) for w in others]
        lone = [[A[v], *top]]
        wedge = _prism(top, [A[w] for w in others])
        minus, plus_t = (lone, wedge) if lone_minus else (wedge, lone)
        tris = [top]

    return CutElementGeometry(
        element_id=int(element_id),
        nodes=np.asarray(nodes) if nodes is not None else np.arange(4),
        vertices=A,
        vertex_plus=plus,
        cut_edges=cut_edges,
        cut_t=cut_t,
        cut_points=cut_points,
        selected=tuple(int(i) for i in selected),
        plane_point=F,
        plane_normal=n,
        edge_points=eff,
        minus_subtets=_orient(minus),
        plus_subtets=_orient(plus_t),
        interface_triangles=np.asarray(tris, dtype=float),
        fourth=fourth,
        fourth_point=fourth_point,
        clamped=clamped,
    )


class CutGeometry(Mapping):
    """Cut geometries of all interface elements, with stacked arrays.

    Behaves as a read-only mapping ``element id -> CutElementGeometry``.
    Stacked arrays follow the order of ``element_ids``:

    ``plane_point`` (K, 3), ``plane_normal`` (K, 3), ``D`` (K, 3, 3),
    ``vertex_plus`` (K, 4), ``minus_volume`` / ``plus_volume`` (K,),
    ``subtets`` (S, 4, 3) with ``subtet_owner`` (position in element_ids)
    and ``subtet_side``, ``triangles`` (R, 3, 3) with ``triangle_owner``.
    """

    def __init__(self, geoms: list[CutElementGeometry]):
        self._geoms = {g.element_id: g for g in geoms}
        self.element_ids = np.array([g.element_id for g in geoms], dtype=np.int64)
        self.position = {int(e): k for k, e in enumerate(self.element_ids)}
        k = len(geoms)
        self.plane_point = np.array([g.plane_point for g in geoms]).reshape(k, 3)
        self.plane_normal = np.array([g.plane_normal for g in geoms]).reshape(k, 3)
        self.D = np.array([g.D for g in geoms]).reshape(k, 3, 3)
        self.vertex_plus = np.array([g.vertex_plus for g in geoms]).reshape(k, 4)
        self.nodes = np.array([g.nodes for g in geoms], dtype=np.int64).reshape(k, 4)
        self.edge_points = np.array([g.edge_points for g in geoms]).reshape(k, 6, 3)
        sub, owner, side = [], [], []
        tris, towner = [], []
        for i, g in enumerate(geoms):
            sub.append(g.minus_subtets)
            sub.append(g.plus_subtets)
            owner += [i] * (len(g.minus_subtets) + len(g.plus_subtets))
            side += [MINUS] * len(g.minus_subtets) + [PLUS] * len(g.plus_subtets)
            tris.append(g.interface_triangles)
            towner += [i] * len(g.interface_triangles)
        self.subtets = np.concatenate(sub) if sub else np.zeros((0, 4, 3))
        self.subtet_owner = np.array(owner, dtype=np.int64)
        self.subtet_side = np.array(side, dtype=np.int8)
        self.triangles = np.concatenate(tris) if tris else np.zeros((0, 3, 3))
        self.triangle_owner = np.array(towner, dtype=np.int64)
        vol = np.abs(tet_volumes(self.subtets))
        self.minus_volume = np.bincount(self.subtet_owner, vol * (self.subtet_side == MINUS), minlength=k)
        self.plus_volume = np.bincount(self.subtet_owner, vol * (self.subtet_side == PLUS), minlength=k)
        t = self.triangles
        self.triangle_area = 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)

    def __getitem__(self, element_id) -> CutElementGeometry:
        return self._geoms[int(element_id)]

    def __iter__(self):
        return iter(self._geoms)

    def __len__(self) -> int:
        return len(self._geoms)

    @property
    def n_clamped(self) -> int:
        return sum(g.clamped for g in self._geoms.values())

    def interface_area(self) -> float:
        return float(self.triangle_area.sum())


def build_cut_geometry(mesh: Mesh, ls: LevelSet, classification: ElementClassification,
                       split: str = "plane") -> CutGeometry:
    """Cut geometry for every interface element of ``classification``.

    ``split`` selects how four-point cuts are divided, see ``cut_element``.
    """
    ids = classification.interface_elements
    if len(ids) == 0:
        return CutGeometry([])
    plus = classification.node_plus
    el = mesh.elements[ids]
    pairs = np.sort(el[:, LOCAL_EDGES], axis=2)  # (K, 6, 2) global ids
    cut = plus[pairs[..., 0]] != plus[pairs[..., 1]]
    n = mesh.n_nodes
    keys = pairs[..., 0].astype(np.int64) * n + pairs[..., 1]
    ukeys, inv = np.unique(keys[cut], return_inverse=True)
    ua, ub = ukeys // n, ukeys % n
    t = edge_roots(ls, mesh.nodes[ua], mesh.nodes[ub], plus_a=plus[ua])
    roots = mesh.nodes[ua] + t[:, None] * (mesh.nodes[ub] - mesh.nodes[ua])
    edge_pts = np.full(pairs.shape[:2] + (3,), np.nan)
    edge_pts[cut] = roots[inv]

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", GeometryWarning)
        geoms = [
            cut_element(mesh.nodes[el[k]], plus[el[k]], edge_pts[k], element_id=int(ids[k]), nodes=el[k], split=split)
            for k in range(len(ids))
        ]
    if caught:
        classification.messages.append(f"{len(caught)} cut element(s) clamped to a nearby edge endpoint")
        warnings.warn(classification.messages[-1], GeometryWarning, stacklevel=2)

    # orient normals along the level-set gradient
    F = np.array([g.plane_point for g in geoms])
    nrm = np.array([g.plane_normal for g in geoms])
    dots = np.sum(ls.gradient(F) * nrm, axis=1)
    for g, d in zip(geoms, dots):
        if d < 0:
            g.plane_normal = -g.plane_normal
    return CutGeometry(geoms)


@dataclass
class FaceRefinement:
    face_id: int
    elements: tuple  # adjacent element ids, ascending
    triangles: np.ndarray  # (k, 3, 3)
    sides: np.ndarray  # (k, len(elements)) piece index per adjacent element

    @property
    def areas(self) -> np.ndarray:
        t = self.triangles
        return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)


def _split_polygon(poly, P, Q, m, eps):
    """Split a convex polygon by the line PQ lying in the plane with normal m."""
    s = np.array([np.dot(np.cross(Q - P, X - P), m) for X in poly])
    s[np.abs(s) <= eps] = 0.0
    left, right = [], []
    k = len(poly)
    for i in range(k):
        X, Y = poly[i], poly[(i + 1) % k]
        sx, sy = s[i], s[(i + 1) % k]
        if sx >= 0:
            left.append(X)
        if sx <= 0:
            right.append(X)
        if sx * sy < 0:
            Z = X + (sx / (sx - sy)) * (Y - X)
            left.append(Z)
            right.append(Z)
    return left, right


def _poly_area(poly, m):
    if len(poly) < 3:
        return 0.0
    a = 0.0
    for i in range(1, len(poly) - 1):
        a += 0.5 * np.dot(np.cross(poly[i] - poly[0], poly[i + 1] - poly[0]), m)
    return abs(a)


def refine_cut_face(mesh: Mesh, face_id: int, geometries: Mapping, tags=None) -> FaceRefinement:
    """Common refinement of a face against the interface planes of its elements.

    Every returned triangle lies on a single side of each adjacent element's
    cut; ``sides[i, j]`` is that side (MINUS or PLUS) for adjacent element j.
    Elements without cut geometry are labelled from ``tags``.
    """
    fnodes = mesh.faces[face_id]
    elems = tuple(int(e) for e in mesh.face_elements[face_id] if e >= 0)
    X = mesh.nodes[fnodes]
    m = np.cross(X[1] - X[0], X[2] - X[0])
    area = 0.5 * np.linalg.norm(m)
    m = m / np.linalg.norm(m)
    scale = np.max(np.linalg.norm(X - X.mean(axis=0), axis=1))
    eps = 1e-12 * scale * scale

    cuts = []  # (P, Q, orientation) per element, None for uncut
    for e in elems:
        g = geometries.get(e) if hasattr(geometries, "get") else None
        if g is None:
            cuts.append(None)
            continue
        loc = [int(np.flatnonzero(g.nodes == v)[0]) for v in fnodes]
        pts = []
        for i, j in ((0, 1), (1, 2), (0, 2)):
            p = g.edge_points[_EDGE_INDEX[(min(loc[i], loc[j]), max(loc[i], loc[j]))]]
            if not np.isnan(p[0]):
                pts.append(p)
        if len(pts) != 2:
            side = PLUS if g.vertex_plus[loc].all() else MINUS
            cuts.append(("uniform", side))
            continue
        P, Q = pts
        if np.linalg.norm(Q - P) <= 1e-12 * scale:
            # segment collapsed onto a vertex: the face lies on the other side
            far = [i for i in range(3) if not np.allclose(X[i], P, atol=1e-12 * scale)]
            cuts.append(("uniform", PLUS if g.vertex_plus[[loc[i] for i in far]].all() else MINUS))
            continue
        minus_vertex = X[int(np.flatnonzero(~g.vertex_plus[loc])[0])]
        orient = np.sign(np.dot(np.cross(Q - P, minus_vertex - P), m))
        cuts.append((P, Q, orient))

    polys = [[X[0], X[1], X[2]]]
    for c in cuts:
        if c is None or isinstance(c[0], str):
            continue
        P, Q, _ = c
        new = []
        for poly in polys:
            for half in _split_polygon(poly, P, Q, m, eps * 1e-2):
                if _poly_area(half, m) > 1e-14 * area:
                    new.append(half)
        polys = new

    tris, sides = [], []
    for poly in polys:
        c = np.mean(poly, axis=0)
        lab = []
        for e, cut in zip(elems, cuts):
            if cut is None:
                lab.append(int(tags[e]) if tags is not None else MINUS)
            elif isinstance(cut[0], str):
                lab.append(cut[1])
            else:
                P, Q, orient = cut
                s = np.dot(np.cross(Q - P, c - P), m)
                lab.append(MINUS if s * orient > 0 else PLUS)
        for i in range(1, len(poly) - 1):
            tris.append([poly[0], poly[i], poly[i + 1]])
            sides.append(lab)
    tris = np.asarray(tris, dtype=float)
    total = 0.5 * np.linalg.norm(np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]), axis=1).sum()
    if abs(total - area) > 1e-10 * area:
        raise RuntimeError(f"face {face_id}: refinement area {total} differs from face area {area}")
    return FaceRefinement(face_id=int(face_id), elements=elems, triangles=tris, sides=np.asarray(sides, dtype=np.int8))


def _clip_face(s1, t1, s2, t2, eps):
    """Cut the reference triangle V=(0,0), W1=(1,0), W2=(0,1) by two lines.

    Line k joins (s_k, 0) and (0, t_k). Returns polygons with, per
    polygon, a flag per line: True on the side of V.
    """
    polys = [([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], [])]
    for s, t in ((s1, t1), (s2, t2)):
        out = []
        for poly, flags in polys:
            vals = [a * t + b * s - s * t for a, b in poly]
            vals = [0.0 if abs(v) <= eps else v for v in vals]
            if not any(vals):
                # the line collapsed onto V: the V side is empty
                out.append((poly, flags + [False]))
                continue
            inner, outer = [], []
            m = len(poly)
            for i in range(m):
                p, q = poly[i], poly[(i + 1) % m]
                vp, vq = vals[i], vals[(i + 1) % m]
                if vp <= 0:
                    inner.append(p)
                if vp >= 0:
                    outer.append(p)
                if vp * vq < 0:
                    r = vp / (vp - vq)
                    z = (p[0] + r * (q[0] - p[0]), p[1] + r * (q[1] - p[1]))
                    inner.append(z)
                    outer.append(z)
            for part, flag in ((inner, True), (outer, False)):
                if len(part) >= 3 and _area2(part) > eps:
                    out.append((part, flags + [flag]))
        polys = out
    return polys


def _area2(poly):
    a = 0.0
    x0, y0 = poly[0]
    for i in range(1, len(poly) - 1):
        x1, y1 = poly[i]
        x2, y2 = poly[i + 1]
        a += (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    return abs(a)


def refine_cut_faces(mesh: Mesh, face_ids, geometry: CutGeometry, node_plus) -> tuple:
    """Batched common refinement of interior faces with mixed vertex signs.

    Both adjacent elements are cut elements and their interface segments
    join points on the same two face edges, those meeting at the vertex
    whose sign differs from the other two. Clipping is done in the
    barycentric frame of that vertex. Returns ``triangles`` (S, 3, 3),
    ``face`` (S,) positions into ``face_ids`` and ``sides`` (S, 2) for the
    ascending pair of adjacent elements.
    """
    face_ids = np.asarray(face_ids, dtype=np.int64)
    if len(face_ids) == 0:
        return np.zeros((0, 3, 3)), np.zeros(0, dtype=np.int64), np.zeros((0, 2), dtype=np.int8)
    fn = mesh.faces[face_ids]
    fp = node_plus[fn]
    lone = np.where(fp.sum(axis=1) == 1, np.argmax(fp, axis=1), np.argmin(fp, axis=1))
    V = fn[np.arange(len(fn)), lone]
    W1 = fn[np.arange(len(fn)), (lone + 1) % 3]
    W2 = fn[np.arange(len(fn)), (lone + 2) % 3]
    XV, X1, X2 = mesh.nodes[V], mesh.nodes[W1], mesh.nodes[W2]
    e1, e2 = X1 - XV, X2 - XV
    elems = mesh.face_elements[face_ids]
    pos = np.array([geometry.position[int(e)] for e in elems.ravel()], dtype=np.int64).reshape(-1, 2)
    edge_lut = np.full((4, 4), -1, dtype=np.int64)
    for (a, b), k in _EDGE_INDEX.items():
        edge_lut[a, b] = edge_lut[b, a] = k
    params = np.empty((len(face_ids), 2, 2))
    for j in range(2):
        en = geometry.nodes[pos[:, j]]
        lv = np.argmax(en == V[:, None], axis=1)
        l1 = np.argmax(en == W1[:, None], axis=1)
        l2 = np.argmax(en == W2[:, None], axis=1)
        ep = geometry.edge_points[pos[:, j]]
        P = ep[np.arange(len(en)), edge_lut[lv, l1]]
        Q = ep[np.arange(len(en)), edge_lut[lv, l2]]
        params[:, j, 0] = np.einsum("ij,ij->i", P - XV, e1) / np.einsum("ij,ij->i", e1, e1)
        params[:, j, 1] = np.einsum("ij,ij->i", Q - XV, e2) / np.einsum("ij,ij->i", e2, e2)
    if np.isnan(params).any():
        raise RuntimeError("cut face without matching interface segment")
    vplus = node_plus[V]
    tri_ab, face_of, sides = [], [], []
    for i in range(len(face_ids)):
        s1, t1 = params[i, 0]
        s2, t2 = params[i, 1]
        sv = PLUS if vplus[i] else MINUS
        for poly, flags in _clip_face(float(s1), float(t1), float(s2), float(t2), 1e-13):
            lab = [sv if f else -sv for f in flags]
            for k in range(1, len(poly) - 1):
                tri_ab.append((poly[0], poly[k], poly[k + 1]))
                face_of.append(i)
                sides.append(lab)
    ab = np.asarray(tri_ab, dtype=float)  # (S, 3, 2)
    face_of = np.asarray(face_of, dtype=np.int64)
    tris = XV[face_of][:, None, :] + ab[..., 0:1] * e1[face_of][:, None, :] + ab[..., 1:2] * e2[face_of][:, None, :]
    return tris, face_of, np.asarray(sides, dtype=np.int8)
