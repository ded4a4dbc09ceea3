import warnings

import numpy as np
import pytest
import scipy.io
import scipy.sparse.linalg as spla

from ifem3d.assembly import (
    AssemblyParams,
    Discretization,
    assemble_bilinear,
    assemble_system,
    export_matrix_market,
    interpolate,
    p1_stiffness,
    reconstruct_solution,
    symmetry_defect,
)
from ifem3d.geometry import GeometryWarning
from ifem3d.levelset import Plane, Sphere
from ifem3d.mesh import BoxDomain, build_mesh
from ifem3d.postprocess import compute_errors
from ifem3d.problems import example1, example3, planar_patch


def _disc(pb, n, params=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GeometryWarning)
        return Discretization(build_mesh(pb.domain, n), pb.level_set, pb.beta_minus, pb.beta_plus, params)


def test_equal_coefficients_reduce_to_p1():
    m = build_mesh(BoxDomain.cube(-1, 1), 6)
    d = Discretization(m, Sphere(0.55), 2.0, 2.0)
    A = assemble_bilinear(d)
    P = p1_stiffness(m, 2.0)
    assert abs(A - P).max() <= 1e-12 * abs(P).max()


def test_no_interface_is_plain_p1():
    m = build_mesh(BoxDomain.cube(0, 1), 4)
    d = Discretization(m, Plane((1, 0, 0), 2.0), 1.0, 7.0)  # the plane misses the box
    assert len(d.geometry) == 0
    A = assemble_bilinear(d)
    assert abs(A - p1_stiffness(m, 1.0)).max() <= 1e-13


def test_p1_stiffness_annihilates_constants():
    m = build_mesh(BoxDomain.cube(0, 1), 3)
    P = p1_stiffness(m)
    assert np.abs(P @ np.ones(m.n_nodes)).max() <= 1e-13


@pytest.mark.parametrize("pb", [example1(), example3(1e-6), planar_patch()], ids=["sphere", "squircle", "plane"])
def test_symmetric_positive_definite(pb):
    d = _disc(pb, 6)
    s = assemble_system(d, pb)
    assert symmetry_defect(s.matrix) <= 1e-12
    lmin = spla.eigsh(s.matrix.tocsc(), 1, sigma=0, which="LM", return_eigenvectors=False)[0]
    assert lmin > 0


def test_pattern_contains_p1_pattern():
    pb = example1()
    d = _disc(pb, 6)
    A = assemble_bilinear(d)
    P = p1_stiffness(d.mesh)
    # stored entries, so P1 couplings that cancel to zero still count
    a = set(zip(*A.tocoo().coords))
    assert set(zip(*P.tocoo().coords)) <= a


@pytest.mark.parametrize("n", [4, 8])
def test_patch_test_is_exact(n):
    pb = planar_patch()
    d = _disc(pb, n)
    s = assemble_system(d, pb)
    u = spla.spsolve(s.matrix.tocsc(), s.rhs)
    e = compute_errors(reconstruct_solution(d, s, u), pb.exact)
    assert max(e.l2_error, e.h1_seminorm_error, e.linf_error) <= 1e-9


def test_interpolant_is_consistent_for_patch():
    # the exact solution's nodal values satisfy the discrete equations
    pb = planar_patch(offset=0.43, beta_plus=0.02)
    d = _disc(pb, 5)
    s = assemble_system(d, pb)
    U = interpolate(d, pb.exact, jump=pb.jump).nodal
    r = s.matrix @ U[s.free] - s.rhs
    assert np.abs(r).max() <= 1e-10 * max(1.0, np.abs(s.rhs).max())


def test_penalty_default_and_override():
    assert AssemblyParams().sigma_for(1.0, 100.0) == 100.0
    assert AssemblyParams(sigma=5.0).sigma_for(1.0, 100.0) == 5.0
    with pytest.raises(ValueError):
        AssemblyParams(sigma=-1.0)
    with pytest.raises(ValueError):
        AssemblyParams(enrichment_mode="nearest")


def test_matrix_market_roundtrip(tmp_path):
    pb = example1()
    s = assemble_system(_disc(pb, 4), pb)
    export_matrix_market(tmp_path / "a.mtx", s.matrix)
    B = scipy.io.mmread(tmp_path / "a.mtx").tocsr()
    assert abs(B - s.matrix).max() <= 1e-14 * abs(s.matrix).max()


def test_rhs_is_linear_in_the_data():
    pb = example1()
    d = _disc(pb, 6)
    b1 = d.load_vector(pb.f, pb.jump)
    b0 = d.load_vector(lambda x: np.zeros(x.shape[:-1]), None)
    assert np.allclose(b0, 0)
    b2 = d.load_vector(lambda x: 2 * pb.f(x), None) + 2 * (b1 - d.load_vector(pb.f, None))
    assert np.allclose(b2, 2 * b1, rtol=1e-12, atol=1e-10)
