"""Best-bound branch-and-bound over binary variables."""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
from typing import Callable

import numpy as np

from .model import MilpModel, MilpSolution, Status, relative_gap
from .simplex import DualSimplex

log = logging.getLogger(__name__)

INT_TOL = 1e-6

# A heuristic receives the model and an LP-relaxation point and may return
# fixings {var: 0/1} for a subset of binaries (or a list of such dicts); the
# LP over the remaining variables is then solved for a candidate incumbent.
Heuristic = Callable[[MilpModel, np.ndarray], "dict[int, float] | list | None"]


def solve_lp(model: MilpModel, time_limit: float | None = None) -> MilpSolution:
    """Solve the LP relaxation (binaries relaxed to their [0, 1] box)."""
    t0 = time.perf_counter()
    c, A, rlo, rhi, lb, ub, _ = model.arrays()
    deadline = t0 + time_limit if time_limit else None
    res = DualSimplex(c, A, rlo, rhi, lb, ub).solve(deadline=deadline)
    wall = time.perf_counter() - t0
    if res.status == "optimal":
        obj = res.objective + model.obj_constant
        return MilpSolution(Status.OPTIMAL, res.x, obj, obj, 0.0, 1, res.iterations, wall)
    status = {"infeasible": Status.INFEASIBLE, "time-limit": Status.TIME_LIMIT}.get(
        res.status, Status.NUMERICAL)
    return MilpSolution(status, None, math.inf, -math.inf, math.inf, 1, res.iterations, wall)


def _round_fixings(model: MilpModel, x: np.ndarray) -> dict[int, float]:
    return {j: float(round(x[j])) for j in model.binaries}


def solve_mip(model: MilpModel, time_limit: float = 600.0, gap_target: float = 0.0,
              heuristic: Heuristic | None = None, node_limit: int | None = None,
              record_history: bool = False) -> MilpSolution:
    """Branch-and-bound with best-bound node selection.

    Branches on the most fractional binary (lowest index on ties). Child LPs
    are warm-started from the parent's optimal basis. The search stops when
    the tree is exhausted (OPTIMAL), the relative gap drops to
    ``gap_target`` (FEASIBLE unless the gap is zero), or time runs out.
    """
    t0 = time.perf_counter()
    deadline = t0 + time_limit
    c, A, rlo, rhi, lb0, ub0, is_bin = model.arrays()
    bins = np.flatnonzero(is_bin)
    engine = DualSimplex(c, A, rlo, rhi, lb0, ub0)
    const = model.obj_constant

    inc_x: np.ndarray | None = None
    inc_obj = math.inf
    nodes = 0
    lp_iters = 0
    history: list[tuple[int, float, float]] = []
    counter = itertools.count()

    def bounds_for(fix: dict[int, float]):
        lb, ub = lb0.copy(), ub0.copy()
        for j, v in fix.items():
            lb[j] = ub[j] = v
        return lb, ub

    def prune_level() -> float:
        if not math.isfinite(inc_obj):
            return math.inf
        return inc_obj - 1e-9 * max(1.0, abs(inc_obj + const))

    def try_fixings(fix: dict[int, float], warm) -> None:
        nonlocal inc_x, inc_obj, lp_iters
        lb, ub = bounds_for(fix)
        engine.set_bounds(lb, ub)
        res = engine.solve(warm=warm, deadline=deadline, cutoff=prune_level())
        lp_iters += res.iterations
        if res.status == "optimal" and res.objective < inc_obj:
            frac = np.abs(res.x[bins] - np.round(res.x[bins]))
            if frac.size == 0 or frac.max() <= INT_TOL:
                inc_x, inc_obj = res.x.copy(), res.objective

    # root
    engine.set_bounds(lb0, ub0)
    root = engine.solve(deadline=deadline)
    nodes = 1
    lp_iters += root.iterations
    if root.status == "infeasible":
        return MilpSolution(Status.INFEASIBLE, None, math.inf, math.inf, math.inf, nodes,
                            lp_iters, time.perf_counter() - t0)
    if root.status != "optimal":
        status = Status.TIME_LIMIT if root.status == "time-limit" else Status.NUMERICAL
        return MilpSolution(status, None, math.inf, -math.inf, math.inf, nodes, lp_iters,
                            time.perf_counter() - t0)

    heap: list = []
    heapq.heappush(heap, (root.objective, next(counter), {}, root.basis, root.x))
    first = True
    timed_out = False
    best_bound = root.objective
    while heap:
        best_bound = heap[0][0]
        gap = relative_gap(inc_obj + const, best_bound + const)
        if record_history:
            history.append((nodes, inc_obj + const, best_bound + const))
        if gap <= gap_target:
            break
        if time.perf_counter() > deadline or (node_limit and nodes >= node_limit):
            timed_out = True
            break
        bound, _, fix, warm, x = heapq.heappop(heap)
        if bound >= prune_level():
            continue
        if not first:
            lb, ub = bounds_for(fix)
            engine.set_bounds(lb, ub)
            res = engine.solve(warm=warm, deadline=deadline, cutoff=prune_level())
            nodes += 1
            lp_iters += res.iterations
            if res.status == "time-limit":
                heapq.heappush(heap, (bound, next(counter), fix, warm, x))
                timed_out = True
                break
            if res.status != "optimal":
                continue
            bound, warm, x = max(bound, res.objective), res.basis, res.x
            if bound >= prune_level():
                continue
        frac = np.abs(x[bins] - np.round(x[bins]))
        if frac.size == 0 or frac.max() <= INT_TOL:
            if bound < inc_obj:
                inc_x, inc_obj = x.copy(), bound
            first = False
            continue
        if first:
            first = False
            try_fixings(_round_fixings(model, x), warm)
        if heuristic is not None and (nodes == 1 or nodes % 50 == 0):
            fixings = heuristic(model, x) or []
            for cand in [fixings] if isinstance(fixings, dict) else fixings:
                merged = dict(fix)
                merged.update(cand)
                try_fixings(merged, warm)
        # most fractional, lowest index on ties
        k = int(np.argmax(np.round(0.5 - np.abs(x[bins] - np.floor(x[bins]) - 0.5), 12)))
        j = int(bins[k])
        for val in (0.0, 1.0):
            child = dict(fix)
            child[j] = val
            heapq.heappush(heap, (bound, next(counter), child, warm, x))

    if not heap:
        best_bound = inc_obj if inc_x is not None else math.inf
    else:
        best_bound = min(heap[0][0], inc_obj)
    wall = time.perf_counter() - t0
    if inc_x is None:
        status = Status.TIME_LIMIT if timed_out else Status.INFEASIBLE
        return MilpSolution(status, None, math.inf, best_bound + const, math.inf, nodes,
                            lp_iters, wall)
    x = inc_x.copy()
    x[bins] = np.round(x[bins])
    obj = inc_obj + const
    bound = best_bound + const
    gap = relative_gap(obj, bound)
    status = Status.OPTIMAL if gap <= 1e-9 else Status.FEASIBLE
    if record_history:
        history.append((nodes, obj, bound))
    return MilpSolution(status, x, obj, bound, gap, nodes, lp_iters, wall, history)
