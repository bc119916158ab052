"""
Euler-Cauchy polygons under refinement
======================================

Solve at K = 16, 32, ..., 512 and compare the phase-space polygons with
each other and with an RK4 reference flow.
"""

from varmin import Problem, catalog_lookup, refine_study

osc = catalog_lookup("harmonic_oscillator", {"omega": 1.0})
prob = Problem.two_point(osc, [0.0], [1.0], 1.0)
rep = refine_study(prob, 16, 6)

# One row per level. distance_to_next halves with h, so the observed
# order is close to one.
print(rep.table())
print("orders", [round(o, 3) for o in rep.orders])

# The Euler-Lagrange residual of the polygon decays at the same rate.
print("EL orders", [round(o, 3) for o in rep.el_orders])

# A cosine potential is not quadratic; Newton takes a couple of steps per
# level and the picture is the same.
mech = catalog_lookup("mechanical", {"potential": "cos", "amplitude": 1.0})
rep = refine_study(Problem.two_point(mech, [0.0], [2.0], 2.0), 16, 5)
print(rep.table())
