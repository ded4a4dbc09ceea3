import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifem3d.mesh import BoxDomain, build_mesh, build_patches, face_diameter, tet_volumes, write_vtk


@pytest.mark.parametrize("n", [1, 2, 5])
def test_six_tet_counts_closed_form(n):
    m = build_mesh(BoxDomain.cube(0, 1), n)
    assert m.n_nodes == (n + 1) ** 3
    assert m.n_elements == 6 * n**3
    # every tet has four faces, boundary faces are counted once: 2 per square
    assert len(m.faces) == 12 * n**3 + 6 * n**2
    assert len(m.boundary_faces) == 12 * n**2
    # Euler characteristic of a ball: V - E + F - T = 1
    assert m.n_nodes - len(m.edges) + len(m.faces) - m.n_elements == 1


@pytest.mark.parametrize("n", [2, 4])
def test_five_tet_counts_closed_form(n):
    m = build_mesh(BoxDomain.cube(0, 1), n, "five_tet")
    assert m.n_elements == 5 * n**3
    assert len(m.faces) == 10 * n**3 + 6 * n**2
    assert m.n_nodes - len(m.edges) + len(m.faces) - m.n_elements == 1


@settings(max_examples=20, deadline=None)
@given(n=st.integers(1, 6), sub=st.sampled_from(["six_tet", "five_tet"]),
       lo=st.floats(-2, 0), size=st.floats(0.1, 3))
def test_volumes_positive_and_sum_to_box(n, sub, lo, size):
    dom = BoxDomain.cube(lo, lo + size)
    m = build_mesh(dom, n, sub)
    assert np.all(m.volumes > 0)
    assert m.volumes.sum() == pytest.approx(dom.volume, rel=1e-12)


def test_faces_are_consistent():
    m = build_mesh(BoxDomain.cube(-1, 1), 3)
    for e in range(0, m.n_elements, 7):
        for f in m.element_faces[e]:
            assert e in m.face_elements[f]
            assert set(m.faces[f]) <= set(m.elements[e])
    # interior faces have two distinct neighbours
    fe = m.face_elements[m.interior_faces]
    assert np.all(fe[:, 0] < fe[:, 1])


def test_boundary_flags_match_coordinates():
    m = build_mesh(BoxDomain((0, -1, 2), (1, 1, 3)), 4)
    on = np.any(np.isclose(m.nodes, m.domain.lo) | np.isclose(m.nodes, m.domain.hi), axis=1)
    assert np.array_equal(on, m.boundary_node_flags)


def test_p1_coefficients_are_barycentric():
    m = build_mesh(BoxDomain.cube(0, 1), 2)
    c = m.p1_coefficients
    x = m.element_points
    vals = c[:, :, :1] + np.einsum("ejk,eik->eji", c[:, :, 1:], x)  # basis j at vertex i
    assert np.allclose(vals, np.eye(4)[None], atol=1e-12)


def test_patch_of_interior_element():
    m = build_mesh(BoxDomain.cube(0, 1), 4)
    patches = build_patches(m)
    e = m.n_elements // 2
    p = patches[e]
    assert e in p
    shared = [np.intersect1d(m.elements[k], m.elements[e]).size for k in p]
    assert min(shared) >= 1
    others = np.setdiff1d(np.arange(m.n_elements), p)
    assert all(np.intersect1d(m.elements[k], m.elements[e]).size == 0 for k in others[:200])


def test_face_diameter_is_longest_edge():
    m = build_mesh(BoxDomain.cube(0, 2), 2)
    d = face_diameter(m, np.arange(len(m.faces)))
    h = 1.0
    assert set(np.round(d / h, 12)) <= {round(np.sqrt(2), 12), round(np.sqrt(3), 12)}


def test_tet_volume_sign():
    t = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    assert tet_volumes(t) == pytest.approx(1 / 6)
    assert tet_volumes(t[[1, 0, 2, 3]]) == pytest.approx(-1 / 6)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        build_mesh(BoxDomain.cube(0, 1), 0)
    with pytest.raises(ValueError):
        build_mesh(BoxDomain.cube(0, 1), 2, "seven_tet")
    with pytest.raises(ValueError):
        BoxDomain((0, 0, 0), (1, 0, 1))


def test_write_vtk(tmp_path):
    m = build_mesh(BoxDomain.cube(0, 1), 2)
    p = tmp_path / "m.vtk"
    write_vtk(p, m, point_data={"u": m.nodes[:, 0]}, cell_data={"v": m.volumes})
    text = p.read_text()
    assert text.startswith("# vtk DataFile Version 3.0")
    assert f"POINTS {m.n_nodes}" in text
    assert f"CELLS {m.n_elements}" in text
