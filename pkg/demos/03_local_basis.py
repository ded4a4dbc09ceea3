"""
The local basis on one cut tetrahedron
======================================

Each cut element carries four homogeneous functions phi_j, one per vertex,
and four enrichment functions xi_j that carry the jump data. Both families
are built by inverting one 8x8 matrix of degree-of-freedom functionals.
"""

import numpy as np

from ifem3d.basis import dof_functionals, solve_local_basis
from ifem3d.geometry import cut_element
from ifem3d.mesh import LOCAL_EDGES

# a reference tetrahedron with vertex 0 on the minus side
V = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
plus = np.array([False, True, True, True])
E = np.full((6, 3), np.nan)
for k, (a, b) in enumerate(LOCAL_EDGES):
    if plus[a] != plus[b]:
        E[k] = V[a] + 0.4 * (V[b] - V[a])
g = cut_element(V, plus, E)
print("interface plane normal:", g.plane_normal, " minus volume:", g.minus_volume)

beta_minus, beta_plus = 1.0, 100.0
b = solve_local_basis(g, beta_minus, beta_plus)

# rows: functions, columns: nodal values, three point jumps, one flux jump
F = np.array([dof_functionals(f, g, beta_minus, beta_plus) for f in b.phi + b.xi])
np.set_printoptions(precision=2, suppress=True)
print(F)

# the homogeneous functions sum to one on both pieces
s = sum(f.as_array() for f in b.phi)
print("sum of phi (minus, plus coefficients):\n", s)

# the flux beta grad(phi).n is continuous across the plane
n = g.plane_normal
for j, f in enumerate(b.phi):
    print(f"phi_{j}: flux minus {beta_minus * f.minus_coeffs[1:] @ n:+.4f}, "
          f"plus {beta_plus * f.plus_coeffs[1:] @ n:+.4f}")
