"""
Conditioning of the stiffness matrix
====================================

Lanczos estimates of the spectral condition number on Example 1 matrices:
first under mesh refinement at beta+/beta- = 100, then over the jump
ratio at a fixed mesh.
"""

from ifem3d import conditioning_study, example1

for n in (8, 16):
    (r,) = conditioning_study(lambda rho: example1(beta_plus=rho), n, [100.0])
    print(f"N={n}: lambda_min {r['lambda_min']:.4g}, lambda_max {r['lambda_max']:.4g}, kappa {r['kappa']:.4g}")

print()
for r in conditioning_study(lambda rho: example1(beta_plus=rho), 10, [0.01, 0.1, 1, 10, 100, 1000]):
    print(f"rho={r['rho']:>7g}: kappa {r['kappa']:.4g}")
