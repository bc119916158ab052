"""
Smoothing a Lipschitz competitor
================================

A zigzag joining 0 to 1 has slopes 3 and -1. Mollified copies keep the
end points, their action decreases towards the zigzag's own action as
the radius shrinks, and none of them beats the straight line.
"""

import numpy as np

from varmin import Problem, SampledCurve, catalog_lookup, mollification_study

free = catalog_lookup("free_particle")
prob = Problem.two_point(free, [0.0], [1.0], 1.0)

n, teeth = 2 ** 14, 8
s = np.linspace(0.0, 1.0, n + 1)
tooth = 1.0 / teeth
phase = (s % tooth) / tooth
y = np.floor(s / tooth) * tooth + np.where(phase < 0.5, 3 * phase * tooth, 1.5 * tooth - (phase - 0.5) * tooth)
y[-1] = 1.0
zigzag = SampledCurve(s, y)

eps = [0.125 / 2 ** j for j in range(6)]
table = mollification_study(prob, zigzag, eps, minimizer_action=0.5)
print(table.table())
print("all dominated:", table.all_dominated)
print("differences decreasing:", table.differences_decreasing())

# With the end values held constant outside [0, 1] instead of continued
# linearly, a straight line is no longer a fixed point of the smoothing.
table = mollification_study(prob, zigzag, eps, 0.5, extension="constant")
print(table.table())
