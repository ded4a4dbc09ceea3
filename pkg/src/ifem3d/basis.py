"""Local immersed finite element shape functions.

On a cut element a function is a pair of linear polynomials, one per side of
the interface. Coefficients are stacked as ``(1, x, y, z)`` for the minus
piece followed by the plus piece. The eight local functions are fixed by
eight functionals: four nodal values, the solution jump at the three plane
points and the flux jump across the plane.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import MINUS, PLUS, CutElementGeometry
from .levelset import LevelSet

__all__ = [
    "PiecewiseLinear",
    "IFELocalBasis",
    "NearDegenerateWarning",
    "dof_functionals",
    "build_B_matrix",
    "build_B_matrices",
    "solve_local_basis",
    "solve_local_bases",
    "degenerate_cut_bases",
    "evaluate",
    "evaluate_gradient",
    "interpolate_local",
]


class NearDegenerateWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PiecewiseLinear:
    minus_coeffs: np.ndarray
    plus_coeffs: np.ndarray

    @classmethod
    def from_array(cls, c) -> "PiecewiseLinear":
        """From an (8,) stacked vector or a (2, 4) array."""
        c = np.asarray(c, dtype=float).reshape(2, 4)
        return cls(c[0].copy(), c[1].copy())

    @classmethod
    def linear(cls, c) -> "PiecewiseLinear":
        c = np.asarray(c, dtype=float)
        return cls(c.copy(), c.copy())

    def as_array(self) -> np.ndarray:
        return np.stack([self.minus_coeffs, self.plus_coeffs])

    def piece(self, side: int) -> np.ndarray:
        return self.plus_coeffs if side == PLUS else self.minus_coeffs

    def __add__(self, other):
        return PiecewiseLinear(self.minus_coeffs + other.minus_coeffs, self.plus_coeffs + other.plus_coeffs)

    def __mul__(self, s):
        return PiecewiseLinear(s * self.minus_coeffs, s * self.plus_coeffs)

    __rmul__ = __mul__


def _poly(c, x):
    x = np.asarray(x, dtype=float)
    return c[..., 0] + np.einsum("...k,...k->...", np.broadcast_to(c[..., 1:], x.shape), x)


def dof_functionals(v: PiecewiseLinear, geom: CutElementGeometry, beta_minus: float, beta_plus: float) -> np.ndarray:
    """(N1..N4, J1..J4): nodal values, jumps at the plane points, flux jump."""
    out = np.empty(8)
    for i in range(4):
        c = v.plus_coeffs if geom.vertex_plus[i] else v.minus_coeffs
        out[i] = c[0] + c[1:] @ geom.vertices[i]
    for j, d in enumerate(geom.D):
        out[4 + j] = (v.plus_coeffs[0] + v.plus_coeffs[1:] @ d) - (v.minus_coeffs[0] + v.minus_coeffs[1:] @ d)
    n = geom.plane_normal
    out[7] = beta_plus * (v.plus_coeffs[1:] @ n) - beta_minus * (v.minus_coeffs[1:] @ n)
    return out


def build_B_matrices(vertices, vertex_plus, D, normal, beta_minus: float, beta_plus: float) -> np.ndarray:
    """Stacked (K, 8, 8) functional matrices for K cut elements."""
    A = np.asarray(vertices, dtype=float).reshape(-1, 4, 3)
    vp = np.asarray(vertex_plus, dtype=bool).reshape(-1, 4)
    D = np.asarray(D, dtype=float).reshape(-1, 3, 3)
    n = np.asarray(normal, dtype=float).reshape(-1, 3)
    k = len(A)
    B = np.zeros((k, 8, 8))
    rows = np.concatenate([np.ones((k, 4, 1)), A], axis=2)
    B[:, :4, :4] = np.where(vp[..., None], 0.0, rows)
    B[:, :4, 4:] = np.where(vp[..., None], rows, 0.0)
    d = np.concatenate([np.ones((k, 3, 1)), D], axis=2)
    B[:, 4:7, :4] = -d
    B[:, 4:7, 4:] = d
    B[:, 7, 1:4] = -beta_minus * n
    B[:, 7, 5:8] = beta_plus * n
    return B


def build_B_matrix(geom: CutElementGeometry, beta_minus: float, beta_plus: float) -> np.ndarray:
    return build_B_matrices(geom.vertices, geom.vertex_plus, geom.D, geom.plane_normal, beta_minus, beta_plus)[0]


def solve_local_bases(B: np.ndarray, element_ids=None, cond_limit: float = 1e12) -> np.ndarray:
    """Solve B c = e_i for all eight unit vectors on a stack of matrices.

    Rows are equilibrated by their max-norm before the solve. Returns
    coefficients of shape (K, 8, 2, 4): function, side, monomial.
    """
    B = np.asarray(B, dtype=float)
    scale = 1.0 / np.abs(B).max(axis=2)
    Bs = B * scale[..., None]
    rhs = np.zeros_like(B)
    idx = np.arange(8)
    rhs[:, idx, idx] = scale
    C = np.linalg.solve(Bs, rhs)  # columns are the functions
    if len(B):
        cond = np.linalg.cond(Bs)
        bad = np.flatnonzero(~(cond < cond_limit))
        if len(bad):
            ids = bad if element_ids is None else np.asarray(element_ids)[bad]
            warnings.warn(
                f"ill-conditioned local IFE system in element(s) {list(ids[:10])}",
                NearDegenerateWarning,
                stacklevel=2,
            )
    return np.transpose(C, (0, 2, 1)).reshape(-1, 8, 2, 4)


def degenerate_cut_bases(vertices, vertex_plus, D) -> np.ndarray:
    """Limit of the local functions when the plus piece has zero volume.

    This happens when every plus vertex of the element sits on the
    interface (a snapped node), so the plane points collapse onto those
    vertices and B is singular. In the limit the homogeneous functions are
    the P1 hats on both sides; the jump function of the first plane point
    at a vertex v is -lambda_v on the minus side and zero on the plus side
    (jump 1 at v, 0 at the other plane points and zero nodal values);
    repeated points and the flux function vanish. Shape (K, 8, 2, 4).
    """
    V = np.asarray(vertices, dtype=float).reshape(-1, 4, 3)
    vp = np.asarray(vertex_plus, dtype=bool).reshape(-1, 4)
    D = np.asarray(D, dtype=float).reshape(-1, 3, 3)
    k = len(V)
    rows = np.concatenate([np.ones((k, 4, 1)), V], axis=2)
    hats = np.transpose(np.linalg.inv(rows), (0, 2, 1))  # hats[k, i] = coefficients of lambda_i
    out = np.zeros((k, 8, 2, 4))
    out[:, :4, 0] = hats
    out[:, :4, 1] = hats
    for e in range(k):
        used = set()
        for j in range(3):
            d2 = np.sum((V[e] - D[e, j]) ** 2, axis=1)
            d2[~vp[e]] = np.inf
            v = int(np.argmin(d2))
            if v not in used:
                used.add(v)
                out[e, 4 + j, 0] = -hats[e, v]
    return out


@dataclass(frozen=True)
class IFELocalBasis:
    element_id: int
    phi: tuple
    xi: tuple
    B_matrix: np.ndarray
    beta_minus: float
    beta_plus: float


def solve_local_basis(geom: CutElementGeometry, beta_minus: float, beta_plus: float) -> IFELocalBasis:
    B = build_B_matrix(geom, beta_minus, beta_plus)
    C = solve_local_bases(B[None], [geom.element_id])[0]
    funcs = [PiecewiseLinear(C[j, 0].copy(), C[j, 1].copy()) for j in range(8)]
    return IFELocalBasis(geom.element_id, tuple(funcs[:4]), tuple(funcs[4:]), B, beta_minus, beta_plus)


def _side(x, selector) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if isinstance(selector, LevelSet):
        return np.where(selector.value(x) > 0, PLUS, MINUS)
    if isinstance(selector, CutElementGeometry):
        return selector.plane_side(x)
    if isinstance(selector, (int, np.integer)):
        return np.full(x.shape[:-1], selector)
    point, normal = selector
    return np.where((x - np.asarray(point)) @ np.asarray(normal) > 0, PLUS, MINUS)


def evaluate(v: PiecewiseLinear, x, side_selector) -> np.ndarray:
    """Value of ``v`` at ``x`` with the piece chosen by ``side_selector``.

    The selector may be a level set (piece by the sign of gamma), a cut
    geometry or a ``(point, normal)`` pair (piece by the side of the plane),
    or a fixed side. Points on the zero set use the minus piece.
    """
    x = np.asarray(x, dtype=float)
    s = _side(x, side_selector)
    vm = v.minus_coeffs[0] + x @ v.minus_coeffs[1:]
    vp = v.plus_coeffs[0] + x @ v.plus_coeffs[1:]
    return np.where(s == PLUS, vp, vm)


def evaluate_gradient(v: PiecewiseLinear, x, side_selector) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    s = _side(x, side_selector)
    return np.where((s == PLUS)[..., None], v.plus_coeffs[1:], v.minus_coeffs[1:])


def interpolate_local(u_minus, u_plus, geom: CutElementGeometry, basis: IFELocalBasis, jump_data=None,
                      level_set: LevelSet | None = None, q2_value: float | None = None) -> PiecewiseLinear:
    """Lagrange-type interpolant: nodal part plus the two enrichment terms.

    ``u_minus``/``u_plus`` are callables on points (n, 3). The solution
    jump is sampled at the three plane points; the flux jump is either
    given as ``q2_value`` or taken from ``jump_data`` at the interface
    centroid (projected onto the zero set when ``level_set`` is given).
    """
    from .enrichment import JumpData, build_qT1, pointwise_q2

    A = geom.vertices
    nodal = np.where(geom.vertex_plus, u_plus(A), u_minus(A))
    out = PiecewiseLinear(np.zeros(4), np.zeros(4))
    for j in range(4):
        out = out + nodal[j] * basis.phi[j]
    if jump_data is None:
        jump_data = JumpData(q1=lambda x: u_plus(x) - u_minus(x))
    out = out + build_qT1(geom, basis, jump_data)
    if q2_value is None:
        q2_value = pointwise_q2(geom, jump_data, level_set) if jump_data.has_flux else 0.0
    return out + q2_value * basis.xi[3]
