import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ifem3d.levelset import (
    LEVEL_SETS,
    FunctionLevelSet,
    Orthocircle,
    Plane,
    Sphere,
    Squircle,
    make_level_set,
    register_level_set,
)

points = arrays(np.float64, (5, 3), elements=st.floats(-1.2, 1.2))


@settings(max_examples=30, deadline=None)
@given(x=points, ls=st.sampled_from([Sphere(), Squircle(0.1), Orthocircle(), Plane((1, 2, 3), 0.2)]))
def test_analytic_gradient_matches_central_differences(x, ls):
    fd = FunctionLevelSet(ls.value, fd_step=1e-6).gradient(x)
    g = ls.gradient(x)
    scale = 1 + np.abs(g).max()
    assert np.allclose(g, fd, atol=1e-5 * scale)


def test_sign_convention():
    s = Sphere(0.5)
    assert s.value(np.zeros(3)) < 0
    assert s.value(np.ones(3)) > 0
    q = Squircle(epsilon=0.25)
    assert q.radius == pytest.approx(0.5)
    assert q.value(np.array([0.5, 0, 0])) == pytest.approx(0.0)


def test_orthocircle_formula():
    x = np.array([0.3, -0.7, 0.2])
    X, Y, Z = x
    ref = ((X**2 + Y**2 - 1) ** 2 + Z**2) * ((X**2 + Z**2 - 1) ** 2 + Y**2) * ((Y**2 + Z**2 - 1) ** 2 + X**2) \
        - 0.075**2 * (1 + 3 * (X**2 + Y**2 + Z**2))
    assert Orthocircle().value(x) == pytest.approx(ref, rel=1e-14)


@settings(max_examples=20, deadline=None)
@given(x=arrays(np.float64, (4, 3), elements=st.floats(-1, 1)))
def test_projection_lands_on_sphere(x):
    s = Sphere(0.6)
    x = x[np.linalg.norm(x, axis=1) > 0.1]  # the gradient vanishes at the centre
    p = s.project(x)
    assert np.allclose(np.linalg.norm(p, axis=1), 0.6, atol=1e-10)


def test_registry():
    register_level_set("slab", lambda width=0.1: FunctionLevelSet(lambda x: np.abs(x[..., 0]) - width))
    try:
        ls = make_level_set("slab", width=0.2)
        assert ls.value(np.array([0.0, 0, 0])) == pytest.approx(-0.2)
    finally:
        LEVEL_SETS.pop("slab")
    with pytest.raises(KeyError, match="unknown level set"):
        make_level_set("torus")
