import warnings

import numpy as np
import pytest
from _helpers import random_cut_tet
from hypothesis import given, settings
from hypothesis import strategies as st

from ifem3d.geometry import (
    INTERFACE,
    AssumptionViolationError,
    DegenerateCutError,
    GeometryWarning,
    _clip_face,
    _triangle_angles,
    build_cut_geometry,
    classify,
    edge_root,
    refine_cut_face,
    refine_cut_faces,
    select_plane_triple,
)
from ifem3d.levelset import FunctionLevelSet, Plane, Sphere
from ifem3d.mesh import BoxDomain, build_mesh, tet_volumes


def test_edge_root_plane_exact():
    ls = Plane((1, 0, 0), 0.31)
    t = edge_root(ls, [0, 0, 0], [1, 0, 0])
    assert t == pytest.approx(0.31, abs=1e-14)
    with pytest.raises(ValueError):
        edge_root(ls, [0.5, 0, 0], [1, 0, 0])


@settings(max_examples=40, deadline=None)
@given(r=st.floats(0.2, 0.9), d=st.floats(0.05, 1.0))
def test_edge_root_sphere_matches_closed_form(r, d):
    # segment from the centre outwards along a random direction
    a, b = np.zeros(3), np.array([1.0, 0.5, -0.3])
    b *= (r + d) / np.linalg.norm(b)
    t = edge_root(Sphere(r), a, b)
    assert t * np.linalg.norm(b) == pytest.approx(r, abs=1e-12)


def test_volume_conservation_fuzz(rng):
    for _ in range(2000):
        g = random_cut_tet(rng)
        vol = abs(tet_volumes(g.vertices))
        assert abs(g.minus_volume + g.plus_volume - vol) <= 1e-10 * vol


def test_volume_conservation_edge_root_split(rng):
    for _ in range(500):
        g = random_cut_tet(rng, split="edge_root")
        vol = abs(tet_volumes(g.vertices))
        assert abs(g.minus_volume + g.plus_volume - vol) <= 1e-10 * vol


def test_subtets_lie_on_their_side_of_the_plane(rng):
    for _ in range(300):
        g = random_cut_tet(rng)
        if g.clamped:
            continue
        tol = 1e-9
        for subs, sign in ((g.minus_subtets, -1), (g.plus_subtets, 1)):
            if len(subs):
                s = (subs.reshape(-1, 3) - g.plane_point) @ g.plane_normal
                assert np.all(sign * s >= -tol)


def test_max_angle_selection_is_minimax(rng):
    for _ in range(2000):
        p = rng.random((4, 3))
        idx = select_plane_triple(p)
        worst = _triangle_angles(p[list(idx)]).max()
        for drop in range(4):
            other = [(drop + k) % 4 for k in (1, 2, 3)]
            assert worst <= _triangle_angles(p[other]).max() + 1e-12


def test_max_angle_on_planar_quadrilateral():
    # a kite where dropping the far tip gives the obtuse triangle
    p = np.array([[0, 0, 0], [1, 0.05, 0], [2, 0, 0], [1, -1, 0]], dtype=float)
    idx = select_plane_triple(p)
    assert _triangle_angles(p[list(idx)]).max() < np.pi - 0.2


def test_degenerate_cut_raises():
    p = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]], dtype=float)
    with pytest.raises(DegenerateCutError):
        select_plane_triple(p)


def test_classify_sphere_and_snapping():
    m = build_mesh(BoxDomain.cube(-1, 1), 4)
    ls = Sphere(0.5)  # passes exactly through the grid node (0.5, 0, 0)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        c = classify(m, ls)
    assert any("snapping" in str(x.message) for x in w)
    i = np.flatnonzero(np.all(np.isclose(m.nodes, [0.5, 0, 0]), axis=1))[0]
    assert c.node_plus[i]
    assert np.all(c.tags[c.interface_elements] == INTERFACE)
    vp = c.node_plus[m.elements]
    mixed = vp.any(1) & ~vp.all(1)
    assert np.array_equal(np.flatnonzero(mixed), c.interface_elements)


def test_assumption_violation_is_reported():
    # three roots between the grid planes x = 0 and x = 0.5
    ls = FunctionLevelSet(lambda x: (x[..., 0] - 0.1) * (x[..., 0] - 0.2) * (x[..., 0] - 0.3))
    m = build_mesh(BoxDomain.cube(0, 1), 2)
    with pytest.raises(AssumptionViolationError):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", GeometryWarning)
            classify(m, ls, strict=True)


def test_sphere_area_converges():
    ls = Sphere(np.pi / 4)
    exact = 4 * np.pi * (np.pi / 4) ** 2
    errs = []
    for n in (10, 20, 40):
        m = build_mesh(BoxDomain.cube(-1, 1), n)
        g = build_cut_geometry(m, ls, classify(m, ls), split="edge_root")
        errs.append(abs(g.interface_area() - exact))
    assert 3 <= errs[0] / errs[1] <= 5
    assert 3 <= errs[1] / errs[2] <= 5


def test_face_refinement_partitions_face():
    m = build_mesh(BoxDomain.cube(-1, 1), 6)
    ls = Sphere(0.55)
    c = classify(m, ls)
    g = build_cut_geometry(m, ls, c)
    faces = c.interface_faces
    tris, owner, sides = refine_cut_faces(m, faces, g, c.node_plus)
    area = 0.5 * np.linalg.norm(np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]), axis=1)
    X = m.nodes[m.faces[faces]]
    face_area = 0.5 * np.linalg.norm(np.cross(X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]), axis=1)
    assert np.allclose(np.bincount(owner, area, minlength=len(faces)), face_area, rtol=1e-10)
    # the scalar path agrees on total area and on the side labels
    for k in range(0, len(faces), 11):
        r = refine_cut_face(m, faces[k], g, c.tags)
        assert r.areas.sum() == pytest.approx(face_area[k], rel=1e-10)
        for side in (0, 1):
            a_batch = area[(owner == k) & (sides[:, side] == 1)].sum()
            a_scalar = r.areas[r.sides[:, side] == 1].sum()
            assert a_batch == pytest.approx(a_scalar, abs=1e-12 * face_area[k])


def test_clip_collapsed_line_keeps_whole_face():
    # regression: a cut line collapsed onto the lone vertex used to emit the
    # face on both sides
    polys = _clip_face(0.0, 0.0, 0.4, 0.6, 1e-14)
    first_side = [flags[0] for _, flags in polys]
    assert not any(first_side)
    total = sum(_area(p) for p, _ in polys)
    assert total == pytest.approx(0.5, abs=1e-14)


def _area(poly):
    p = np.asarray(poly)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def test_clip_partitions_reference_triangle(rng):
    for _ in range(200):
        s1, t1, s2, t2 = rng.uniform(0.01, 0.99, 4)
        polys = _clip_face(s1, t1, s2, t2, 1e-14)
        assert sum(_area(p) for p, _ in polys) == pytest.approx(0.5, abs=1e-12)
        # the V side of line 1 is the small triangle (0,0), (s1,0), (0,t1)
        a1 = sum(_area(p) for p, f in polys if f[0])
        assert a1 == pytest.approx(0.5 * s1 * t1, abs=1e-12)
