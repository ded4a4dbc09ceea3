"""Enrichment functions carrying non-homogeneous jump data.

The enrichment on a cut element is a combination of the four jump-type
shape functions with coefficients read off the data: the solution jump at
the three plane points and a single value of the flux jump. It never adds
unknowns; it only moves data to the right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .basis import IFELocalBasis, PiecewiseLinear
from .geometry import CutElementGeometry, CutGeometry
from .levelset import LevelSet
from .quadrature import map_triangle, triangle_rule

__all__ = [
    "JumpData",
    "EnrichmentField",
    "build_qT1",
    "build_qT2",
    "pointwise_q2",
    "assemble_enrichment",
]


@dataclass
class JumpData:
    """Jump data on the interface.

    ``q1`` is the solution jump u+ - u-. The flux jump is either a vector
    field ``q2_vector`` (beta+ grad u+ - beta- grad u-), dotted with a normal
    on evaluation, or a scalar ``q2_scalar`` already referring to the normal
    pointing from the minus to the plus side.
    """

    q1: Callable | None = None
    q2_vector: Callable | None = None
    q2_scalar: Callable | None = None
    smoothness_hint: str = "pointwise_ok"

    @property
    def has_flux(self) -> bool:
        return self.q2_vector is not None or self.q2_scalar is not None

    def jump(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.q1 is None:
            return np.zeros(x.shape[:-1])
        return np.asarray(self.q1(x), dtype=float)

    def flux(self, x, normal) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.q2_scalar is not None:
            return np.broadcast_to(np.asarray(self.q2_scalar(x), dtype=float), x.shape[:-1]).copy()
        if self.q2_vector is not None:
            return np.sum(np.asarray(self.q2_vector(x), dtype=float) * normal, axis=-1)
        return np.zeros(x.shape[:-1])


@dataclass
class EnrichmentField:
    """Enrichment pieces on the interface elements, zero elsewhere.

    ``coeffs[k]`` is the (2, 4) piecewise-linear sum of both enrichment
    terms on element ``element_ids[k]``.
    """

    element_ids: np.ndarray
    q1_coeffs: np.ndarray
    q2_coeffs: np.ndarray
    q1_values: np.ndarray
    q2_values: np.ndarray
    position: dict = field(default_factory=dict)

    @property
    def coeffs(self) -> np.ndarray:
        return self.q1_coeffs + self.q2_coeffs

    def on(self, element_id) -> PiecewiseLinear:
        k = self.position.get(int(element_id))
        if k is None:
            return PiecewiseLinear(np.zeros(4), np.zeros(4))
        return PiecewiseLinear.from_array(self.coeffs[k])

    @property
    def is_zero(self) -> bool:
        return not np.any(self.q1_coeffs) and not np.any(self.q2_coeffs)


def build_qT1(geom: CutElementGeometry, basis: IFELocalBasis, data: JumpData) -> PiecewiseLinear:
    q = data.jump(geom.D)
    out = PiecewiseLinear(np.zeros(4), np.zeros(4))
    for j in range(3):
        out = out + q[j] * basis.xi[j]
    return out


def _interface_centroid(geom: CutElementGeometry) -> np.ndarray:
    t = geom.interface_triangles
    a = 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)
    return (a[:, None] * t.mean(axis=1)).sum(axis=0) / a.sum()


def pointwise_q2(geom: CutElementGeometry, data: JumpData, level_set: LevelSet | None) -> float:
    """Flux jump at the interface centroid, moved onto the zero set if possible."""
    X = _interface_centroid(geom)
    if level_set is None:
        return float(data.flux(X, geom.plane_normal))
    X = level_set.project(X)
    return float(data.flux(X, level_set.normal(X)))


def _triangle_flux_integrals(triangles, normals, data: JumpData, degree: int = 4):
    x, w = map_triangle(triangle_rule(degree), triangles)
    vals = data.flux(x, normals[:, None, :])
    return np.sum(w * vals, axis=1), w.sum(axis=1)


def build_qT2(geom: CutElementGeometry, patch, geometries, basis: IFELocalBasis, data: JumpData,
              mode: str = "pointwise", level_set: LevelSet | None = None) -> PiecewiseLinear:
    """Flux-jump enrichment: a flux value times the fourth jump function.

    ``pointwise`` takes the flux jump at the projected interface centroid;
    ``patch_average`` averages it over the discrete interface inside the
    element patch.
    """
    if not data.has_flux:
        return PiecewiseLinear(np.zeros(4), np.zeros(4))
    if mode == "pointwise":
        if data.smoothness_hint == "average_required":
            raise ValueError("flux data flagged as non-smooth; use mode='patch_average'")
        q = pointwise_q2(geom, data, level_set)
    elif mode == "patch_average":
        num = area = 0.0
        for e in patch:
            g = geometries.get(int(e)) if hasattr(geometries, "get") else None
            if g is None:
                continue
            normals = np.repeat(g.plane_normal[None], len(g.interface_triangles), axis=0)
            i, a = _triangle_flux_integrals(g.interface_triangles, normals, data)
            num += i.sum()
            area += a.sum()
        if area <= 0:
            raise RuntimeError(f"element {geom.element_id}: empty interface in patch")
        q = num / area
    else:
        raise ValueError(f"unknown enrichment mode {mode!r}")
    return q * basis.xi[3]


def assemble_enrichment(geometries: CutGeometry, xi_coeffs: np.ndarray, data: JumpData,
                        mode: str = "pointwise", level_set: LevelSet | None = None,
                        patches=None) -> EnrichmentField:
    """Enrichment on every interface element (vectorised).

    ``xi_coeffs`` holds the jump-type shape functions, shape (K, 4, 2, 4),
    in the order of ``geometries.element_ids``.
    """
    ids = geometries.element_ids
    k = len(ids)
    q1 = data.jump(geometries.D) if k else np.zeros((0, 3))
    q1_coeffs = np.einsum("kj,kjsm->ksm", q1, xi_coeffs[:, :3]) if k else np.zeros((0, 2, 4))
    q2 = np.zeros(k)
    if k and data.has_flux:
        normals = geometries.plane_normal[geometries.triangle_owner]
        if mode == "pointwise":
            if data.smoothness_hint == "average_required":
                raise ValueError("flux data flagged as non-smooth; use mode='patch_average'")
            t = geometries.triangles
            a = geometries.triangle_area
            own = geometries.triangle_owner
            cen = np.stack([np.bincount(own, a * t.mean(axis=1)[:, c], minlength=k) for c in range(3)], axis=1)
            area = np.bincount(own, a, minlength=k)
            # zero-area pieces (degenerate cuts) fall back to the plane point
            cen = np.where(area[:, None] > 0, cen / np.where(area > 0, area, 1.0)[:, None], geometries.plane_point)
            if level_set is not None:
                cen = level_set.project(cen)
                q2 = data.flux(cen, level_set.normal(cen))
            else:
                q2 = data.flux(cen, geometries.plane_normal)
        elif mode == "patch_average":
            if patches is None:
                raise ValueError("patch_average mode needs a PatchIndex")
            integ, area = _triangle_flux_integrals(geometries.triangles, normals, data)
            own = geometries.triangle_owner
            el_int = np.bincount(own, integ, minlength=k)
            el_area = np.bincount(own, area, minlength=k)
            is_cut = np.zeros(patches.mesh.n_elements, dtype=bool)
            is_cut[ids] = True
            pos = np.full(patches.mesh.n_elements, -1)
            pos[ids] = np.arange(k)
            for i, e in enumerate(ids):
                p = patches[e]
                p = pos[p[is_cut[p]]]
                if el_area[p].sum() <= 0:
                    raise RuntimeError(f"element {e}: empty interface in patch")
                q2[i] = el_int[p].sum() / el_area[p].sum()
        else:
            raise ValueError(f"unknown enrichment mode {mode!r}")
    q2_coeffs = q2[:, None, None] * xi_coeffs[:, 3] if k else np.zeros((0, 2, 4))
    return EnrichmentField(
        element_ids=ids,
        q1_coeffs=q1_coeffs,
        q2_coeffs=q2_coeffs,
        q1_values=q1,
        q2_values=q2,
        position={int(e): i for i, e in enumerate(ids)},
    )
