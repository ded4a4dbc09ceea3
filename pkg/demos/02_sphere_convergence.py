"""
Convergence on a spherical interface
====================================

Example 1: a sphere of radius pi/4 in (-1, 1)^3 with beta- = 1, beta+ = 100
and non-homogeneous jumps. The L2 error should fall like h^2 and the
H1 error like h.
"""

from ifem3d import convergence_study, example1

rows, results = convergence_study(example1(), [8, 16, 32])

print(f"{'N':>4} {'dofs':>7} {'L2':>10} {'order':>6} {'H1':>10} {'order':>6} {'its':>4}")
for r in rows:
    print(f"{r['N']:>4} {r['dofs']:>7} {r['l2']:10.3e} {r['l2_order']:6.2f} "
          f"{r['h1']:10.3e} {r['h1_order']:6.2f} {r['iterations']:>4}")

# the finest solution carries per-element piecewise-linear pieces
fine = results[-1]
print("cut elements at N=32:", fine.disc.geometry.element_ids.size)
print("interface area:", fine.disc.geometry.interface_area())
