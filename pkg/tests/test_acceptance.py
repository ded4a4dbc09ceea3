"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Thresholds are the contract values; a criterion that the method does not
meet at the stated scale fails here rather than being relaxed.
"""

import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from _helpers import mesh_like_cut_tet, random_cut_tet
from scipy.stats import qmc

from ifem3d.assembly import Discretization, assemble_system, symmetry_defect
from ifem3d.basis import dof_functionals, solve_local_basis
from ifem3d.geometry import GeometryWarning, _triangle_angles, build_cut_geometry, classify
from ifem3d.mesh import build_mesh
from ifem3d.pipeline import (
    SolverOptions,
    conditioning_study,
    convergence_study,
    epsilon_robustness_study,
    solve_problem,
)
from ifem3d.problems import example1, example2, example3, planar_patch
from ifem3d.solver import estimate_condition

pytestmark = [pytest.mark.slow, pytest.mark.filterwarnings("ignore::ifem3d.geometry.GeometryWarning")]

L2_ORDER, H1_ORDER = 1.8, 0.85
RHOS = [0.01, 0.1, 1.0, 10.0, 100.0, 1000.0]


@pytest.fixture(scope="module")
def example1_study():
    return convergence_study(example1(), [8, 16, 32])


def _orders(rows):
    last = rows[-1]
    return last["l2_order"], last["h1_order"], last["energy_order"]


def test_c1_patch_test(report):
    errs = []
    for n in (4, 8):
        r = solve_problem(planar_patch(), n, solver=SolverOptions(method="direct"))
        errs.append(max(r.errors.l2_error, r.errors.h1_seminorm_error, r.errors.linf_error))
    ok = max(errs) <= 1e-9
    report("C1 patch test", ok, f"max(L2, H1, Linf) error N=4: {errs[0]:.2e}, N=8: {errs[1]:.2e} (<= 1e-9)")
    assert ok


def test_c2_example1_convergence(report, example1_study):
    rows, _ = example1_study
    l2, h1, en = _orders(rows)
    ok = l2 >= L2_ORDER and h1 >= H1_ORDER
    errs = ", ".join(f"N={r['N']}: {r['l2']:.3e}/{r['h1']:.3e}" for r in rows)
    report("C2 Example 1 convergence", ok,
           f"L2 order {l2:.3f} (>= {L2_ORDER}), H1 order {h1:.3f} (>= {H1_ORDER}), energy order {en:.3f}; "
           f"L2/H1 errors {errs}")
    assert ok


def test_c3_example2_convergence(report):
    rows, _ = convergence_study(example2(), [10, 20, 40])
    l2, h1, en = _orders(rows)
    ok = l2 >= L2_ORDER and h1 >= H1_ORDER
    errs = ", ".join(f"N={r['N']}: {r['l2']:.3e}/{r['h1']:.3e}" for r in rows)
    report("C3 Example 2 convergence", ok,
           f"L2 order {l2:.3f} (>= {L2_ORDER}), H1 order {h1:.3f} (>= {H1_ORDER}), energy order {en:.3f}; "
           f"L2/H1 errors {errs}")
    assert ok


def _example1_matrix(n, beta_plus=100.0):
    pb = example1(beta_plus=beta_plus)
    d = Discretization(build_mesh(pb.domain, n), pb.level_set, pb.beta_minus, pb.beta_plus)
    return assemble_system(d, pb).matrix


def test_c4_condition_number_scaling(report):
    k8, k16 = (estimate_condition(_example1_matrix(n), tol=1e-8, inner="direct").kappa for n in (8, 16))
    q = k16 / k8
    ok = 3.0 <= q <= 5.0
    report("C4 conditioning scaling", ok, f"kappa(8) = {k8:.4g}, kappa(16) = {k16:.4g}, ratio {q:.3f} in [3, 5]")
    assert ok


def test_c5_interface_location_robustness(report):
    eps = [1e-1, 1e-6]
    ns = [10, 20, 40]
    rows = epsilon_robustness_study(lambda e: example3(e), eps, ns)
    its = {(r["epsilon"], r["N"]): r["iterations"] for r in rows}
    spread = max(abs(its[(eps[0], n)] - its[(eps[1], n)]) for n in ns)
    orders = [[r for r in rows if r["epsilon"] == e][-1]["l2_order"] for e in eps]
    ok = max(its.values()) <= 40 and spread <= 5 and min(orders) >= L2_ORDER
    table = ", ".join(f"eps={e:g} N={n}: {its[(e, n)]}" for e in eps for n in ns)
    report("C5 interface-location robustness", ok,
           f"iterations {table}; max {max(its.values())} (<= 40), spread {spread} (<= 5); "
           f"L2 orders {orders[0]:.3f}, {orders[1]:.3f} (>= {L2_ORDER})")
    assert ok


def _p1_pattern(mesh, free):
    m, n = mesh.n_elements, mesh.n_nodes
    E = sp.csr_matrix((np.ones(4 * m), (np.repeat(np.arange(m), 4), mesh.elements.ravel())), shape=(m, n))
    return _stored((E.T @ E).tocsr()[free][:, free])


def _stored(A):
    """Structural pattern: every stored entry, including exact zeros."""
    A = sp.csr_matrix(A, copy=True)
    A.data[:] = 1.0
    return A != 0


def test_c6_structural_identity(report):
    configs = [("Example 1, N=8", example1(), 8), ("Example 2, N=10", example2(), 10),
               ("Example 3 eps=1e-6, N=10", example3(1e-6), 10), ("patch, N=4", planar_patch(), 4)]
    ok, parts = True, []
    for name, pb, n in configs:
        d = Discretization(build_mesh(pb.domain, n), pb.level_set, pb.beta_minus, pb.beta_plus)
        s = assemble_system(d, pb)
        A = _stored(s.matrix)
        P = _p1_pattern(d.mesh, s.free)
        extra = (A > P).nnz
        missing = (P > A).nnz
        sym = symmetry_defect(s.matrix)
        lmin = estimate_condition(s.matrix, inner="direct").lambda_min
        good = extra == 0 and missing == 0 and sym <= 1e-10 and lmin > 0
        ok &= good
        parts.append(f"{name}: +{extra}/-{missing} entries vs P1, symmetry {sym:.1e}, lambda_min {lmin:.3e}")
    report("C6 structural identity", ok, "; ".join(parts))
    assert ok


def test_c7_basis_properties(report):
    rng = np.random.default_rng(7)
    kron = pu = pu_rel = closed = 0.0
    angle_gap = np.inf
    for _ in range(10_000):
        g = mesh_like_cut_tet(rng)
        bp = 10 ** rng.uniform(-3, 3)
        b = solve_local_basis(g, 1.0, bp)
        F = np.array([dof_functionals(f, g, 1.0, bp) for f in b.phi + b.xi])
        kron = max(kron, np.abs(F - np.eye(8)).max())
        s = sum(f.as_array() for f in b.phi)
        e = np.abs(s[:, :1] + s[:, 1:] @ g.vertices.T - 1).max()
        scale = max(np.abs(f.as_array()).max() for f in b.phi)
        pu, pu_rel = max(pu, e), max(pu_rel, e / scale)
        n, x0, c = g.plane_normal, g.plane_point, (1.0 - bp) / bp
        for f in b.phi:
            p = f.minus_coeffs
            gn = p[1:] @ n
            pred = np.concatenate([[p[0] - c * gn * (x0 @ n)], p[1:] + c * gn * n])
            closed = max(closed, np.abs(pred - f.plus_coeffs).max() / max(1.0, np.abs(f.plus_coeffs).max()))
        if len(g.cut_points) == 4:
            angle_gap = min(angle_gap, np.pi - _triangle_angles(g.D).max())
    ok = kron <= 1e-9 and pu <= 1e-12 and closed <= 1e-10 and angle_gap > 1e-3
    report("C7 basis properties", ok,
           f"Kronecker {kron:.1e} (<= 1e-9), partition of unity {pu:.1e} (<= 1e-12; relative to coefficient "
           f"size {pu_rel:.1e}), closed form {closed:.1e} (<= 1e-10), min(pi - max angle) {angle_gap:.3f} (> 1e-3)")
    assert ok


def _sphere_area_errors(ns):
    pb = example1()
    exact = 4 * np.pi * pb.level_set.radius**2
    out = {}
    for split in ("edge_root", "plane"):
        errs = []
        for n in ns:
            mesh = build_mesh(pb.domain, n)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", GeometryWarning)
                geo = build_cut_geometry(mesh, pb.level_set, classify(mesh, pb.level_set), split)
            errs.append(abs(geo.interface_area() - exact))
        out[split] = errs
    return out


def _mc_stiffness_error(rng, seed):
    g = random_cut_tet(rng, min_volume=0.02, t_range=(0.15, 0.85))
    bm, bp = 1.0, float(10 ** rng.uniform(-1, 1))
    b = solve_local_basis(g, bm, bp)
    G = np.array([[f.minus_coeffs[1:], f.plus_coeffs[1:]] for f in b.phi])
    K = bm * g.minus_volume * G[:, 0] @ G[:, 0].T + bp * g.plus_volume * G[:, 1] @ G[:, 1].T
    # uniform points in the tetrahedron: spacings of sorted uniforms are barycentric coordinates
    u = np.sort(qmc.Sobol(3, seed=seed).random_base2(20), axis=1)
    lam = np.diff(np.column_stack([np.zeros(len(u)), u, np.ones(len(u))]), axis=1)
    frac = np.mean(g.plane_side(lam @ g.vertices) > 0)
    vol = abs(np.linalg.det(g.vertices[1:] - g.vertices[0])) / 6
    Kmc = vol * ((1 - frac) * bm * G[:, 0] @ G[:, 0].T + frac * bp * G[:, 1] @ G[:, 1].T)
    return np.linalg.norm(K - Kmc) / np.linalg.norm(K)


def test_c8_geometry_oracles(report):
    rng = np.random.default_rng(8)
    vol_err = 0.0
    for i in range(10_000):
        g = mesh_like_cut_tet(rng, split=("plane", "edge_root")[i % 2])
        vol = abs(np.linalg.det(g.vertices[1:] - g.vertices[0])) / 6
        vol_err = max(vol_err, abs(g.minus_volume + g.plus_volume - vol) / vol)
    areas = _sphere_area_errors([10, 20, 40])
    e = areas["edge_root"]
    ratios = [e[0] / e[1], e[1] / e[2]]
    p = areas["plane"]
    mc = max(_mc_stiffness_error(rng, k) for k in range(20))
    ok = vol_err <= 1e-10 and all(3 <= r <= 5 for r in ratios) and mc <= 1e-3
    report("C8 geometry oracles", ok,
           f"volume conservation {vol_err:.1e} (<= 1e-10); sphere area errors N=10,20,40 "
           f"{e[0]:.3e}, {e[1]:.3e}, {e[2]:.3e}, ratios {ratios[0]:.2f}, {ratios[1]:.2f} in [3, 5] "
           f"(fitting-plane split ratios {p[0] / p[1]:.2f}, {p[1] / p[2]:.2f}); "
           f"Monte-Carlo stiffness {mc:.1e} (<= 1e-3)")
    assert ok


def test_c9_jump_ratio_monotonicity(report):
    rows = conditioning_study(lambda rho: example1(beta_plus=rho), 10, RHOS)
    k = [r["kappa"] for r in rows]
    ok = all(b >= a for a, b in zip(k, k[1:]))
    report("C9 jump-ratio monotonicity", ok,
           "kappa at N=10: " + ", ".join(f"rho={r:g}: {v:.4g}" for r, v in zip(RHOS, k)) + " (non-decreasing)")
    assert ok


def test_c10_cpu_scaling(report, example1_study):
    _, results = example1_study
    dofs = np.array([r.system.n_dofs for r in results], dtype=float)
    t = np.array([r.timings["assemble_s"] + r.timings["solve_s"] for r in results])
    slope = np.polyfit(np.log(dofs), np.log(t), 1)[0]
    ok = slope <= 1.3
    report("C10 CPU scaling", ok,
           "assemble+solve " + ", ".join(f"{int(d)} dofs: {s:.2f} s" for d, s in zip(dofs, t))
           + f"; log-log slope {slope:.3f} (<= 1.3)")
    assert ok
