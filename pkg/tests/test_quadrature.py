from math import factorial

import numpy as np
import pytest
from _helpers import random_cut_tet

from ifem3d.geometry import MINUS, PLUS
from ifem3d.quadrature import integrate_element, integrate_interface, map_tet, map_triangle, tet_rule, triangle_rule

REF_TET = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
REF_TRI = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)


def tet_monomial(a, b, c):
    return factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3)


def tri_monomial(a, b):
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("degree", [1, 2, 3, 4, 5, 6, 7])
def test_tet_rule_exact_on_monomials(degree):
    rule = tet_rule(degree)
    assert rule.degree >= degree
    assert np.all(rule.weights > 0)
    x, w = map_tet(rule, REF_TET[None])
    x, w = x[0], w[0]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            for c in range(degree + 1 - a - b):
                q = np.sum(w * x[:, 0] ** a * x[:, 1] ** b * x[:, 2] ** c)
                assert q == pytest.approx(tet_monomial(a, b, c), rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("degree", [1, 2, 3, 4, 5])
def test_triangle_rule_exact_on_monomials(degree):
    rule = triangle_rule(degree)
    x, w = map_triangle(rule, REF_TRI[None])
    x, w = x[0], w[0]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            q = np.sum(w * x[:, 0] ** a * x[:, 1] ** b)
            assert q == pytest.approx(tri_monomial(a, b), rel=1e-12, abs=1e-15)


def test_triangle_rule_degree_limit():
    with pytest.raises(ValueError):
        triangle_rule(9)


def test_mapped_rule_scales_with_volume(rng):
    for _ in range(20):
        t = rng.random((4, 3))
        _, w = map_tet(tet_rule(4), t[None])
        assert w.sum() == pytest.approx(abs(np.linalg.det(t[1:] - t[0])) / 6, rel=1e-12)


def test_integrate_cut_element_piecewise_constant(rng):
    g = random_cut_tet(rng)
    val = integrate_element(g.vertices, lambda x, s: np.where(s == PLUS, 3.0, 1.0) * np.ones(len(x)), g, degree=1)
    assert val == pytest.approx(g.minus_volume + 3 * g.plus_volume, rel=1e-12)
    plain = integrate_element(g.vertices, lambda x, s: np.full(len(x), float(s == MINUS)), degree=1)
    assert plain == pytest.approx(g.minus_volume + g.plus_volume, rel=1e-12)


def test_integrate_interface_area(rng):
    g = random_cut_tet(rng)
    area = integrate_interface({7: g}, lambda x, e: np.ones(len(x)))
    assert area == pytest.approx(g.interface_area, rel=1e-12)
