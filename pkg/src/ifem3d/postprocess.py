"""Error norms, convergence tables and interface error maps."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import IFEField
from .geometry import INTERFACE, PLUS
from .mesh import write_vtk
from .quadrature import map_tet, map_triangle, tet_rule, triangle_rule

__all__ = [
    "ErrorReport",
    "compute_errors",
    "energy_norm",
    "convergence_table",
    "surface_error_map",
    "write_convergence_csv",
    "write_surface_map",
    "write_solution_vtk",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ["N", "h", "dofs", "l2", "h1", "linf", "energy", "l2_order", "h1_order",
               "iterations", "assemble_s", "solve_s"]
_CHUNK = 20000


@dataclass
class ErrorReport:
    l2_error: float
    h1_seminorm_error: float
    linf_error: float
    energy_error: float
    n: int
    h: float
    dofs: int
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for k in ("l2_error", "h1_seminorm_error", "linf_error", "energy_error"):
            if not getattr(self, k) >= 0:
                raise ValueError(f"{k} must be non-negative")


def _volume_errors(field: IFEField, exact, degree):
    """Sums of squared L2, H1-seminorm and beta-weighted H1 errors, plus max."""
    d = field.disc
    mesh, g, ls = d.mesh, d.geometry, d.level_set
    rule = tet_rule(degree)
    l2 = h1 = eh1 = 0.0
    linf = 0.0

    def acc(elements, tets):
        nonlocal l2, h1, eh1, linf
        x, w = map_tet(rule, tets)
        plus = ls.value(x) > 0
        e = exact.value(x, plus) - field.value(elements, x)
        ge = exact.gradient(x, plus) - field.gradient(elements, x)
        beta = np.where(plus, d.beta_plus, d.beta_minus)
        g2 = np.sum(ge * ge, axis=-1)
        l2 += float(np.sum(w * e * e))
        h1 += float(np.sum(w * g2))
        eh1 += float(np.sum(w * beta * g2))
        if e.size:
            linf = max(linf, float(np.abs(e).max()))

    non = np.flatnonzero(d.tags != INTERFACE)
    for s in range(0, len(non), _CHUNK):
        idx = non[s:s + _CHUNK]
        acc(idx, mesh.element_points[idx])
    if len(g.element_ids):
        own = g.element_ids[g.subtet_owner]
        for s in range(0, len(own), _CHUNK):
            acc(own[s:s + _CHUNK], g.subtets[s:s + _CHUNK])
    return l2, h1, eh1, linf


def _face_energy(field: IFEField, exact, degree: int = 4) -> float:
    """Sum over cut faces of sigma/|e| |[e]|^2 + |e|/sigma |{beta grad e . n}|^2."""
    d = field.disc
    fd = d.faces
    if not len(fd):
        return 0.0
    x, w = map_triangle(triangle_rule(degree), fd.triangles)
    n = fd.normal[fd.face]
    errs, fluxes = [], []
    for j in range(2):
        el = fd.elements[fd.face, j]
        plus = fd.sides[:, j] == PLUS
        c = np.where(plus[:, None], field.coeffs[el, 1], field.coeffs[el, 0])
        uh = c[:, None, 0] + np.einsum("sqk,sk->sq", x, c[:, 1:])
        pq = np.broadcast_to(plus[:, None], x.shape[:2])
        u = exact.value(x, pq)
        gu = exact.gradient(x, pq)
        beta = np.where(plus, d.beta_plus, d.beta_minus)[:, None]
        errs.append(u - uh)
        fluxes.append(beta * np.einsum("sqk,sk->sq", gu - c[:, None, 1:], n))
    jump = errs[0] - errs[1]
    avg = 0.5 * (fluxes[0] + fluxes[1])
    le = fd.length[fd.face][:, None]
    return float(np.sum(w * (d.sigma / le * jump**2 + le / d.sigma * avg**2)))


def energy_norm(field: IFEField, exact=None, degree: int = 4) -> float:
    """Energy norm of ``field`` (or of the error ``exact - field``)."""
    if exact is None:
        exact = _ZeroExact()
    _, _, eh1, _ = _volume_errors(field, exact, degree)
    return math.sqrt(eh1 + _face_energy(field, exact, degree))


class _ZeroExact:
    @staticmethod
    def value(x, plus):
        return np.zeros(np.shape(x)[:-1])

    @staticmethod
    def gradient(x, plus):
        return np.zeros(np.shape(x))


def compute_errors(field: IFEField, exact, degree: int = 4, dofs: int | None = None) -> ErrorReport:
    """L2, broken H1-seminorm, sampled L-infinity and energy errors.

    The exact and the discrete piece are both chosen by the sign of the
    level set at each point. L-infinity samples quadrature points, mesh
    nodes and interface-triangle centroids.
    """
    d = field.disc
    mesh = d.mesh
    l2, h1, eh1, linf = _volume_errors(field, exact, degree)
    face = _face_energy(field, exact, degree)
    # nodes: the nodal value is taken with the vertex's own sign
    plus = d.classification.node_plus
    linf = max(linf, float(np.abs(exact.value(mesh.nodes, plus) - field.nodal).max()))
    sm = surface_error_map(field, exact)
    if len(sm):
        linf = max(linf, float(sm[:, 3].max()))
    if dofs is None:
        dofs = int(np.count_nonzero(~mesh.boundary_node_flags))
    return ErrorReport(
        l2_error=math.sqrt(l2),
        h1_seminorm_error=math.sqrt(h1),
        linf_error=linf,
        energy_error=math.sqrt(eh1 + face),
        n=mesh.n_per_axis,
        h=mesh.h,
        dofs=dofs,
    )


def surface_error_map(field: IFEField, exact) -> np.ndarray:
    """Rows (x, y, z, |error|) at the centroid of every interface triangle.

    The centroid lies on the discrete interface; both the exact and the
    discrete piece there are chosen by the level-set sign.
    """
    g = field.disc.geometry
    if not len(g.element_ids):
        return np.zeros((0, 4))
    c = g.triangles.mean(axis=1)
    el = g.element_ids[g.triangle_owner]
    plus = field.disc.level_set.value(c) > 0
    err = np.abs(exact.value(c, plus) - field.value(el, c))
    return np.column_stack([c, err])


def _order(a, b, ha, hb):
    if not (a > 0 and b > 0):
        return float("nan")
    return math.log(a / b) / math.log(ha / hb)


def convergence_table(reports, extras=None) -> list[dict]:
    """Rows with observed orders log(e_coarse/e_fine)/log(h_coarse/h_fine)."""
    reports = list(reports)
    if len(reports) < 2:
        raise ValueError("need at least two error reports")
    rows = []
    for i, r in enumerate(reports):
        row = {
            "N": r.n,
            "h": r.h,
            "dofs": r.dofs,
            "l2": r.l2_error,
            "h1": r.h1_seminorm_error,
            "linf": r.linf_error,
            "energy": r.energy_error,
        }
        for key, col in (("l2", "l2_order"), ("h1", "h1_order"), ("linf", "linf_order"), ("energy", "energy_order")):
            row[col] = float("nan") if i == 0 else _order(rows[-1][key], row[key], rows[-1]["h"], r.h)
        row.update(r.extra)
        if extras is not None:
            row.update(extras[i])
        rows.append(row)
    return rows


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else f"{v:.6e}"
    return str(v)


def write_convergence_csv(path, rows, columns=CSV_COLUMNS) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, float("nan"))) for c in columns])


def write_surface_map(path_csv, samples: np.ndarray, path_vtk=None) -> None:
    """Surface error samples as CSV (x,y,z,err) and optionally VTK points."""
    with open(path_csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "z", "err"])
        for row in samples:
            w.writerow([f"{v:.9e}" for v in row])
    if path_vtk is not None:
        _write_point_cloud(path_vtk, samples[:, :3], {"err": samples[:, 3]})


def _write_point_cloud(path, points, point_data) -> None:
    n = len(points)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\ninterface error samples\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {n} double\n")
        for p in points:
            fh.write(f"{p[0]:.9e} {p[1]:.9e} {p[2]:.9e}\n")
        fh.write(f"CELLS {n} {2 * n}\n")
        for i in range(n):
            fh.write(f"1 {i}\n")
        fh.write(f"CELL_TYPES {n}\n")
        fh.write("1\n" * n)
        fh.write(f"POINT_DATA {n}\n")
        for name, vals in point_data.items():
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            for v in vals:
                fh.write(f"{v:.9e}\n")


def write_solution_vtk(path, field: IFEField, exact=None) -> None:
    """Nodal solution (and nodal error if ``exact`` is given) on the mesh."""
    d = field.disc
    pdata = {"u_h": field.nodal}
    if exact is not None:
        ex = exact.value(d.mesh.nodes, d.classification.node_plus)
        pdata["error"] = np.abs(ex - field.nodal)
    write_vtk(path, d.mesh, point_data=pdata, cell_data={"tag": d.tags.astype(float)})

