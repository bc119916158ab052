"""
Discrete minimisers on a uniform grid
=====================================

Minimise the Riemann-sum action of a path with K intervals and look at
what comes back: the nodes, the discrete momenta and the bounds
certificate.
"""

import math

import numpy as np

from varmin import Problem, catalog_lookup, solve, terminal_cost_lookup, transversality_residual

# A free particle joining 0 to 1 in unit time. The straight line is the
# exact discrete minimiser for every K, so Newton has nothing to do.
free = catalog_lookup("free_particle")
line = Problem.two_point(free, [0.0], [1.0], 1.0)
for K in (2, 16, 256):
    res = solve(line, K)
    print(f"K={K:4d}  action={res.action:.15f}  iterations={res.iterations}")

# The harmonic oscillator is quadratic too, so one Newton step lands on
# the minimiser. The discrete action approaches cot(1)/2 at rate O(h).
osc = catalog_lookup("harmonic_oscillator", {"omega": 1.0})
prob = Problem.two_point(osc, [0.0], [1.0], 1.0)
exact = 0.5 / math.tan(1.0)
for K in (64, 256, 1024):
    res = solve(prob, K)
    print(f"K={K:5d}  action={res.action:.8f}  error={res.action - exact:+.2e}")

# The momenta z_k = L_xi(y_k, t_k, y'_k) sit on the grid intervals.
res = solve(prob, 8)
print(np.column_stack([res.path.grid.nodes[:-1], res.path.nodes[:-1, 0], res.momenta.z[:, 0]]))

# Bolza problem: only the right end is fixed and w(y0) = y0^2/2 is paid at
# the left end. The minimiser starts at y0 = x/(1+t) with z_0 = w'(y0).
bolza = Problem.bolza(free, [1.0], 1.0, terminal_cost_lookup("quadratic", {"weight": 1.0}))
res = solve(bolza, 64, "constant")
print("y0 =", res.path.nodes[0, 0], " action =", res.action)
print("transversality residual", transversality_residual(bolza, res))

# The certificate bounds every node by R1 and the smallest slope by R2.
cert = res.certificate
print(f"C_x={cert.C_x}  R1={cert.R1}  R2={cert.R2}  holds={cert.holds}")
print(f"max |y_k| = {cert.max_node_norm:.3f},  min |y'_k| = {cert.min_slope_norm:.3f} at k* = {cert.k_star}")
