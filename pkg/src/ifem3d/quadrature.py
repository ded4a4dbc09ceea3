"""Quadrature on tetrahedra and triangles, including cut elements and faces."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations
from typing import Callable

import numpy as np
from scipy.special import roots_jacobi

from .geometry import MINUS, PLUS
from .mesh import tet_volumes

__all__ = [
    "QuadratureRule",
    "tet_rule",
    "triangle_rule",
    "map_tet",
    "map_triangle",
    "integrate_element",
    "integrate_face",
    "integrate_interface",
]


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # barycentric coordinates, (q, 4) or (q, 3)
    weights: np.ndarray  # sum to the reference measure (1/6 or 1/2)
    degree: int


def _orbit(*coords):
    return np.unique(np.array(list(permutations(coords))), axis=0)


def _conical_tet(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed-coordinate Gauss-Jacobi product rule (n^3 points, positive weights)."""
    x0, w0 = roots_jacobi(n, 2, 0)
    x1, w1 = roots_jacobi(n, 1, 0)
    x2, w2 = roots_jacobi(n, 0, 0)
    a, b, c = (x0 + 1) / 2, (x1 + 1) / 2, (x2 + 1) / 2
    wa, wb, wc = w0 / 8, w1 / 4, w2 / 2
    pts, wts = [], []
    for i in range(n):
        for j in range(n):
            for k in range(n):
                x = a[i]
                y = (1 - a[i]) * b[j]
                z = (1 - a[i]) * (1 - b[j]) * c[k]
                pts.append([1 - x - y - z, x, y, z])
                wts.append(wa[i] * wb[j] * wc[k])
    return np.array(pts), np.array(wts)


@lru_cache(maxsize=None)
def tet_rule(degree: int) -> QuadratureRule:
    if degree <= 1:
        return QuadratureRule(np.full((1, 4), 0.25), np.array([1 / 6]), 1)
    if degree == 2:
        a, b = 0.5854101966249685, 0.1381966011250105
        pts = _orbit(a, b, b, b)
        return QuadratureRule(pts, np.full(4, 1 / 24), 2)
    if degree == 3:
        pts, w = _conical_tet(2)
        return QuadratureRule(pts, w, 3)
    if degree <= 5:
        a1, w1 = 0.0927352503108912, 0.01224884051939366
        a2, w2 = 0.3108859192633006, 0.01878132095300264
        b3, w3 = 0.0455037041256496, 0.007091003462846911
        g1 = _orbit(a1, a1, a1, 1 - 3 * a1)
        g2 = _orbit(a2, a2, a2, 1 - 3 * a2)
        g3 = _orbit(b3, b3, 0.5 - b3, 0.5 - b3)
        pts = np.vstack([g1, g2, g3])
        w = np.concatenate([np.full(4, w1), np.full(4, w2), np.full(6, w3)])
        return QuadratureRule(pts, w, 5)
    n = (degree + 2) // 2
    pts, w = _conical_tet(n)
    return QuadratureRule(pts, w, 2 * n - 1)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    if degree <= 1:
        return QuadratureRule(np.full((1, 3), 1 / 3), np.array([0.5]), 1)
    if degree == 2:
        return QuadratureRule(_orbit(2 / 3, 1 / 6, 1 / 6), np.full(3, 1 / 6), 2)
    if degree <= 4:
        a, wa = 0.445948490915965, 0.223381589678011
        b, wb = 0.091576213509771, 0.109951743655322
        pts = np.vstack([_orbit(1 - 2 * a, a, a), _orbit(1 - 2 * b, b, b)])
        w = np.concatenate([np.full(3, wa), np.full(3, wb)]) / 2
        return QuadratureRule(pts, w, 4)
    if degree == 5:
        a, wa = 0.470142064105115, 0.132394152788506
        b, wb = 0.101286507323456, 0.125939180544827
        pts = np.vstack([[[1 / 3, 1 / 3, 1 / 3]], _orbit(1 - 2 * a, a, a), _orbit(1 - 2 * b, b, b)])
        w = np.concatenate([[0.225], np.full(3, wa), np.full(3, wb)]) / 2
        return QuadratureRule(pts, w, 5)
    raise ValueError(f"no triangle rule of degree {degree}")


def map_tet(rule: QuadratureRule, tets: np.ndarray):
    """Physical points (K, q, 3) and weights (K, q) for tetrahedra (K, 4, 3)."""
    tets = np.asarray(tets, dtype=float)
    x = np.einsum("qi,kij->kqj", rule.points, tets)
    w = 6.0 * np.abs(tet_volumes(tets))[:, None] * rule.weights[None, :]
    return x, w


def map_triangle(rule: QuadratureRule, tris: np.ndarray):
    tris = np.asarray(tris, dtype=float)
    x = np.einsum("qi,kij->kqj", rule.points, tris)
    area2 = np.linalg.norm(np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]), axis=1)
    w = area2[:, None] * rule.weights[None, :]
    return x, w


def integrate_element(element, integrand: Callable, geom=None, degree: int = 2, side: int = MINUS) -> float:
    """Integrate ``integrand(x, side)`` over one tetrahedron.

    ``element`` holds the four vertices. Without ``geom`` the element is
    treated as uncut and ``side`` is passed through; with a cut geometry the
    rule is applied on every sub-tetrahedron with its own side.
    """
    rule = tet_rule(degree)
    if geom is None:
        x, w = map_tet(rule, np.asarray(element, dtype=float)[None])
        return float(np.sum(w[0] * integrand(x[0], side)))
    total = 0.0
    for subs, s in ((geom.minus_subtets, MINUS), (geom.plus_subtets, PLUS)):
        if len(subs):
            x, w = map_tet(rule, subs)
            total += float(np.sum(w * integrand(x.reshape(-1, 3), s).reshape(w.shape)))
    return total


def integrate_face(refinement, integrand: Callable, degree: int = 2) -> float:
    """Integrate ``integrand(x, sides)`` over the sub-triangles of a refined face.

    ``sides`` is the side label tuple of the sub-triangle for each adjacent
    element, so jumps and averages can pick the right polynomial pieces.
    """
    rule = triangle_rule(degree)
    x, w = map_triangle(rule, refinement.triangles)
    total = 0.0
    for k in range(len(w)):
        total += float(np.sum(w[k] * integrand(x[k], tuple(refinement.sides[k]))))
    return total


def integrate_interface(geometries, integrand: Callable, degree: int = 2) -> float:
    """Integrate ``integrand(x, element_id)`` over the discrete interface."""
    rule = triangle_rule(degree)
    total = 0.0
    for e in geometries:
        g = geometries[e]
        x, w = map_triangle(rule, g.interface_triangles)
        total += float(np.sum(w * integrand(x.reshape(-1, 3), e).reshape(w.shape)))
    return total
