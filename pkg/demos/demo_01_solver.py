"""
The embedded MILP solver
========================

A capital-budgeting toy problem solved three ways: by the native dual
simplex plus branch-and-bound, by HiGHS, and by brute force.  The model is
then written in the plain-text exchange format.
"""

import itertools

import numpy as np

from microgrid_ems.milp import MilpModel, export_model_text, solve, solve_lp

rng = np.random.default_rng(5)

# eight projects with random payoffs and two budget rows; one continuous
# "loan" variable lets the first budget stretch at a price
payoff = rng.uniform(3, 9, 8)
cost = rng.uniform(2, 6, (2, 8))
m = MilpModel("budget")
x = [m.add_var(f"x{k}", binary=True, obj=-payoff[k]) for k in range(8)]
loan = m.add_var("loan", 0.0, 4.0, obj=1.5)
m.add_row({**{j: cost[0, k] for k, j in enumerate(x)}, loan: -1.0}, "<=", 12.0, "budget0")
m.add_row({j: cost[1, k] for k, j in enumerate(x)}, "<=", 14.0, "budget1")

###############################################################################
# The LP relaxation gives the first bound; branch-and-bound closes the gap.

relax = solve_lp(m)
native = solve(m, backend="native", gap_target=0.0)
highs = solve(m, backend="highs", gap_target=0.0)
print(f"LP relaxation bound : {relax.objective:10.4f}")
print(f"native B&B          : {native.objective:10.4f} ({native.nodes} nodes)")
print(f"HiGHS               : {highs.objective:10.4f}")

###############################################################################
# With eight binaries the whole tree is small enough to enumerate.  For each
# pattern the best loan is the smallest one that covers the first budget.

best = np.inf
for pattern in itertools.product((0, 1), repeat=8):
    p = np.array(pattern)
    if cost[1] @ p > 14.0:
        continue
    need = max(cost[0] @ p - 12.0, 0.0)
    if need <= 4.0:
        best = min(best, -payoff @ p + 1.5 * need)
print(f"enumeration         : {best:10.4f}")
print("chosen projects     :", [k for k, j in enumerate(x) if native.x[j] > 0.5])

###############################################################################
# The text format is line oriented and round-trips exactly.

print()
print(export_model_text(m))
