import numpy as np
import pytest
from _helpers import random_cut_tet
from hypothesis import given, settings
from hypothesis import strategies as st

from ifem3d.basis import (
    NearDegenerateWarning,
    PiecewiseLinear,
    build_B_matrices,
    build_B_matrix,
    degenerate_cut_bases,
    dof_functionals,
    evaluate,
    evaluate_gradient,
    interpolate_local,
    solve_local_basis,
    solve_local_bases,
)
from ifem3d.enrichment import JumpData
from ifem3d.geometry import MINUS, PLUS, cut_element
from ifem3d.mesh import LOCAL_EDGES


def closed_form_plus(p, n, F, beta_minus, beta_plus):
    """Plus piece of a homogeneous function from its minus piece p."""
    k = (beta_minus - beta_plus) / beta_plus
    gn = p[1:] @ n
    return np.concatenate([[p[0] - k * gn * (F @ n)], p[1:] + k * gn * n])


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), log_ratio=st.floats(-3, 3))
def test_kronecker_and_partition_of_unity(seed, log_ratio):
    g = random_cut_tet(np.random.default_rng(seed), min_volume=5e-3, t_range=(0.05, 0.95))
    bp = 10.0**log_ratio
    b = solve_local_basis(g, 1.0, bp)
    F = np.array([dof_functionals(f, g, 1.0, bp) for f in b.phi + b.xi])
    assert np.abs(F - np.eye(8)).max() <= 1e-9
    s = sum(f.as_array() for f in b.phi)
    scale = max(np.abs(f.as_array()).max() for f in b.phi)
    assert np.abs(s - [[1, 0, 0, 0], [1, 0, 0, 0]]).max() <= 1e-14 * max(scale, 1.0) * 50


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), log_ratio=st.floats(-3, 3))
def test_homogeneous_functions_match_closed_form(seed, log_ratio):
    g = random_cut_tet(np.random.default_rng(seed), min_volume=5e-3, t_range=(0.05, 0.95))
    bp = 10.0**log_ratio
    b = solve_local_basis(g, 1.0, bp)
    for f in b.phi:
        pred = closed_form_plus(f.minus_coeffs, g.plane_normal, g.plane_point, 1.0, bp)
        assert np.allclose(f.plus_coeffs, pred, rtol=0, atol=1e-10 * max(1.0, np.abs(pred).max()))


def test_equal_coefficients_and_no_jump_give_p1_hats(rng):
    g = random_cut_tet(rng)
    b = solve_local_basis(g, 3.0, 3.0)
    rows = np.column_stack([np.ones(4), g.vertices])
    hats = np.linalg.inv(rows).T
    for j in range(4):
        assert np.allclose(b.phi[j].minus_coeffs, hats[j], atol=1e-10)
        assert np.allclose(b.phi[j].plus_coeffs, hats[j], atol=1e-10)


def test_batched_matrices_match_single(rng):
    gs = [random_cut_tet(rng) for _ in range(5)]
    B = build_B_matrices([g.vertices for g in gs], [g.vertex_plus for g in gs], [g.D for g in gs],
                         [g.plane_normal for g in gs], 1.0, 10.0)
    for k, g in enumerate(gs):
        assert np.array_equal(B[k], build_B_matrix(g, 1.0, 10.0))
    C = solve_local_bases(B)
    assert C.shape == (5, 8, 2, 4)


def test_ill_conditioned_system_warns():
    B = np.eye(8)[None].copy()
    B[0, 7, 6] = 1.0
    B[0, 7, 7] = 1e-14  # row 7 nearly repeats row 6
    with pytest.warns(NearDegenerateWarning):
        solve_local_bases(B)


def test_degenerate_limit_functions():
    # the lone plus vertex sits on the interface: the plus piece is empty
    V = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    plus = np.array([False, True, False, False])
    D = np.repeat(V[1][None], 3, axis=0)
    C = degenerate_cut_bases(V, plus, D)[0]
    hats = np.linalg.inv(np.column_stack([np.ones(4), V])).T
    for j in range(4):
        assert np.allclose(C[j, 0], hats[j]) and np.allclose(C[j, 1], hats[j])
    # the first jump function has a unit jump at the collapsed plane point
    f = PiecewiseLinear.from_array(C[4])
    x = V[1]
    jump = (f.plus_coeffs[0] + f.plus_coeffs[1:] @ x) - (f.minus_coeffs[0] + f.minus_coeffs[1:] @ x)
    assert jump == pytest.approx(1.0)
    assert np.allclose(C[5:], 0.0)


def test_evaluate_selectors(rng):
    g = random_cut_tet(rng)
    f = PiecewiseLinear(np.array([1.0, 0, 0, 0]), np.array([2.0, 0, 0, 0]))
    x = np.array([g.plane_point + g.plane_normal, g.plane_point - g.plane_normal])
    assert np.allclose(evaluate(f, x, g), [2.0, 1.0])
    assert np.allclose(evaluate(f, x, PLUS), 2.0)
    assert np.allclose(evaluate(f, x, (g.plane_point, g.plane_normal)), [2.0, 1.0])
    assert np.allclose(evaluate_gradient(f, x, MINUS), 0.0)


def test_interpolation_reproduces_piecewise_linear_exactly(rng):
    # a piecewise-linear function with homogeneous flux jump and a linear
    # solution jump across a plane is reproduced exactly
    V = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float) * 0.5 + 0.1
    n = np.array([1.0, 0, 0])
    x0 = 0.3
    plus = V[:, 0] > x0
    E = np.full((6, 3), np.nan)
    for k, (a, b) in enumerate(LOCAL_EDGES):
        if plus[a] != plus[b]:
            t = (x0 - V[a, 0]) / (V[b, 0] - V[a, 0])
            E[k] = V[a] + t * (V[b] - V[a])
    g = cut_element(V, plus, E)
    bm, bp = 1.0, 100.0
    cm = np.array([0.5, 2.0, -1.0, 0.3])
    cp = np.array([0.2, 0.7, 0.4, -0.6])
    um = lambda x: cm[0] + x @ cm[1:]  # noqa: E731
    up = lambda x: cp[0] + x @ cp[1:]  # noqa: E731
    q2 = bp * cp[1:] @ n - bm * cm[1:] @ n
    b = solve_local_basis(g, bm, bp)
    v = interpolate_local(um, up, g, b, JumpData(q1=lambda x: up(x) - um(x)), q2_value=q2)
    assert np.allclose(v.minus_coeffs, cm, atol=1e-12)
    assert np.allclose(v.plus_coeffs, cp, atol=1e-12)
