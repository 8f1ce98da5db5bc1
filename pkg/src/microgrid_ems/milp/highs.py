"""Optional HiGHS backend (via ``scipy.optimize.milp``) for large models."""

from __future__ import annotations

import math
import time

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .model import MilpModel, MilpSolution, Status, relative_gap


def solve_mip_highs(model: MilpModel, time_limit: float = 600.0,
                    gap_target: float = 0.0) -> MilpSolution:
    t0 = time.perf_counter()
    c, A, rlo, rhi, lb, ub, is_bin = model.arrays()
    cons = [LinearConstraint(A, rlo, rhi)] if model.num_rows else []
    res = milp(c, constraints=cons, integrality=is_bin.astype(int), bounds=Bounds(lb, ub),
               options={"time_limit": time_limit, "mip_rel_gap": max(gap_target, 1e-9),
                        "presolve": True})
    wall = time.perf_counter() - t0
    const = model.obj_constant
    if res.x is None:
        status = {2: Status.INFEASIBLE, 3: Status.UNBOUNDED, 1: Status.TIME_LIMIT}.get(
            res.status, Status.NUMERICAL)
        return MilpSolution(status, None, math.inf, -math.inf, math.inf, 0, 0, wall)
    x = np.asarray(res.x, float)
    x[is_bin] = np.round(x[is_bin])
    obj = float(c @ x) + const
    bound = getattr(res, "mip_dual_bound", None)
    bound = obj if bound is None or not math.isfinite(bound) else float(bound) + const
    bound = min(bound, obj)
    gap = relative_gap(obj, bound)
    status = Status.OPTIMAL if res.status == 0 and gap <= 1e-9 else Status.FEASIBLE
    return MilpSolution(status, x, obj, bound, gap, int(getattr(res, "mip_node_count", 0) or 0),
                        0, wall)
