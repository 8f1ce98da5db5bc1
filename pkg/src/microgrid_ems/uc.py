"""Day-ahead unit commitment over a 24-slot window."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import milp
from .formulation import Ablations, VarMap, build_slots, extract
from .milp import MilpModel, MilpSolution
from .model import CgSpec, CgState, MicrogridConfig, ModelInputError, SlotDecision, SlotObservation

log = logging.getLogger(__name__)


class UcError(RuntimeError):
    """The day-ahead problem could not be solved."""


def min_onoff_rows(spec: CgSpec, T: int, boundary: CgState,
                   u_ids: Sequence[int] | None = None, v_ids: Sequence[int] | None = None):
    """Linear minimum on/off rows for one unit over ``T`` slots.

    Returns ``(coeffs, sense, rhs, name)`` tuples. Without explicit ids the
    layout ``u_t -> t`` and ``v_t -> T + t`` is used.
    """
    u = list(range(T)) if u_ids is None else list(u_ids)
    v = list(range(T, 2 * T)) if v_ids is None else list(v_ids)
    rows = []
    # runs that began before the window
    if boundary.u_prev == 1:
        for tau in range(min(max(spec.t_on_min - boundary.t_on, 0), T)):
            rows.append(({u[tau]: 1.0}, ">=", 1.0, f"minon0[{spec.name},{tau}]"))
    else:
        for tau in range(min(max(spec.t_off_min - boundary.t_off, 0), T)):
            rows.append(({u[tau]: 1.0}, "<=", 0.0, f"minoff0[{spec.name},{tau}]"))
    for t in range(T):
        for tau in range(t + 1, min(t + spec.t_on_min, T)):
            # u_tau >= u_t - v_t
            rows.append(({u[tau]: 1.0, u[t]: -1.0, v[t]: 1.0}, ">=", 0.0,
                         f"minon[{spec.name},{t},{tau}]"))
        for tau in range(t + 1, min(t + spec.t_off_min, T)):
            # u_tau <= 1 - (u_{t-1} - v_t)
            if t == 0:
                rows.append(({u[tau]: 1.0, v[t]: -1.0}, "<=", 1.0 - boundary.u_prev,
                             f"minoff[{spec.name},{t},{tau}]"))
            else:
                rows.append(({u[tau]: 1.0, u[t - 1]: 1.0, v[t]: -1.0}, "<=", 1.0,
                             f"minoff[{spec.name},{t},{tau}]"))
    return rows


def runs_respect_minimums(spec: CgSpec, boundary: CgState, pattern: Sequence[int]) -> bool:
    """Direct run-length check of the minimum on/off times for an on/off pattern."""
    u_prev, t_on, t_off = boundary.u_prev, boundary.t_on, boundary.t_off
    for u in pattern:
        if u_prev == 1 and u == 0 and t_on < spec.t_on_min:
            return False
        if u_prev == 0 and u == 1 and t_off < spec.t_off_min:
            return False
        if u:
            t_on, t_off = (t_on + 1 if u_prev else 1), 0
        else:
            t_on, t_off = 0, (t_off + 1 if not u_prev else 1)
        u_prev = u
    return True


def on_durations(u: np.ndarray) -> np.ndarray:
    """Remaining scheduled-on run length from each slot (0 where off)."""
    u = np.atleast_2d(np.asarray(u, dtype=int))
    tau = np.zeros_like(u)
    for i in range(u.shape[0]):
        run = 0
        for t in range(u.shape[1] - 1, -1, -1):
            run = run + 1 if u[i, t] else 0
            tau[i, t] = run
    return tau


@dataclass
class UcProblem:
    model: MilpModel
    varmap: VarMap
    slots: list
    config: MicrogridConfig
    boundary: tuple

    @property
    def T(self) -> int:
        return len(self.slots)


@dataclass
class UcPlan:
    u: np.ndarray
    v: np.ndarray
    tau: np.ndarray
    planned: list = field(default_factory=list)
    objective: float = 0.0
    gap: float = 0.0
    status: str = "optimal"
    nodes: int = 0
    wall_time: float = 0.0
    slots: list = field(default_factory=list)

    def to_text(self, names: Sequence[str]) -> str:
        """Slot x unit grid of ``u*`` and ``tau``."""
        head = "slot\t" + "\t".join(f"u[{n}]\ttau[{n}]" for n in names)
        lines = [head]
        for k, t in enumerate(self.slots or range(self.u.shape[1])):
            cells = []
            for i in range(self.u.shape[0]):
                cells += [str(int(self.u[i, k])), str(int(self.tau[i, k]))]
            lines.append(f"{t}\t" + "\t".join(cells))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "UcPlan":
        rows = [ln.split("\t") for ln in text.strip().splitlines()[1:]]
        slots = [int(r[0]) for r in rows]
        vals = np.array([[int(c) for c in r[1:]] for r in rows])
        u = vals[:, 0::2].T
        tau = vals[:, 1::2].T
        return cls(u=u, v=np.zeros_like(u), tau=tau, slots=slots)


def build_p0(config: MicrogridConfig, slots: Sequence[int], forecasts: Sequence[SlotObservation],
             cg_states: Sequence[CgState], socs: Sequence[float],
             ablations: Ablations = Ablations()) -> UcProblem:
    """Day-ahead model with the per-slot curtailment ceiling set to alpha_avg."""
    if len(cg_states) != len(config.cgs) or len(socs) != len(config.esss):
        raise ModelInputError("one boundary state per unit is required")
    for g, st in zip(config.cgs, cg_states):
        st.validate(g)
        if st.u_prev and st.p_prev > g.p_max + 1e-6:
            raise ModelInputError(f"{g.name}: boundary output above p_max")
    for e, s in zip(config.esss, socs):
        if not e.s_min - 1e-9 <= s <= e.s_max + 1e-9:
            raise ModelInputError(f"{e.name}: boundary SOC {s} outside [s_min, s_max]")
    socs = [min(max(s, e.s_min), e.s_max) for e, s in zip(config.esss, socs)]
    model, vm = build_slots(config, list(slots), list(forecasts), cg_states, socs,
                            alpha=config.qos.alpha_avg, ablations=ablations,
                            name=f"P0_{slots[0]}")
    return UcProblem(model, vm, list(slots), config, (tuple(cg_states), tuple(socs)))


def expected_p0_counts(config: MicrogridConfig, T: int, ablations: Ablations = Ablations()):
    """Closed-form tally of binaries and continuous variables of ``build_p0``."""
    nc, ne = len(config.cgs), len(config.esss)
    binaries = T * (2 * nc + ne)
    per_ess = 3 + (0 if ablations.omit_ess_aging_cost else 3)  # pc, pd, soc; yc, yd, za
    continuous = T * (2 * nc + ne * per_ess + 3)  # p, zf per CG; pp, ps, w per slot
    return binaries, continuous


def _repair_runs(spec: CgSpec, boundary: CgState, pattern: list[int]) -> list[int]:
    """Greedy extension of short on-runs and filling of short off-runs."""
    u = list(pattern)
    T = len(u)
    if boundary.u_prev == 1:
        for t in range(min(max(spec.t_on_min - boundary.t_on, 0), T)):
            u[t] = 1
    else:
        for t in range(min(max(spec.t_off_min - boundary.t_off, 0), T)):
            u[t] = 0
    for _ in range(2 * T):
        if runs_respect_minimums(spec, boundary, u):
            return u
        prev, t_on, t_off = boundary.u_prev, boundary.t_on, boundary.t_off
        for t in range(T):
            if prev == 1 and u[t] == 0 and t_on < spec.t_on_min:
                u[t] = 1  # extend the on-run
                break
            if prev == 0 and u[t] == 1 and t_off < spec.t_off_min:
                # close a short off gap by staying on through it when possible
                start = t - t_off
                if start >= 0 and all(u[k] == 0 for k in range(start, t)):
                    for k in range(start, t):
                        u[k] = 1
                else:
                    u[t] = 0
                break
            if u[t]:
                t_on, t_off = (t_on + 1 if prev else 1), 0
            else:
                t_on, t_off = 0, (t_off + 1 if not prev else 1)
            prev = u[t]
    return u


def rounding_heuristic(problem: UcProblem):
    """Round the LP commitment, repair minimum run lengths, fix binaries."""
    vm, cfg = problem.varmap, problem.config
    cg_states = problem.boundary[0]

    def heuristic(model: MilpModel, x: np.ndarray):
        out = []
        for threshold in (0.5, 1e-3):
            fix = {}
            for i, g in enumerate(cfg.cgs):
                pat = [1 if x[vm.u[i][k]] >= threshold else 0 for k in range(vm.T)]
                pat = _repair_runs(g, cg_states[i], pat)
                prev = cg_states[i].u_prev
                for k in range(vm.T):
                    fix[vm.u[i][k]] = float(pat[k])
                    fix[vm.v[i][k]] = float(prev * pat[k])
                    prev = pat[k]
            for j in range(len(cfg.esss)):
                for k in range(vm.T):
                    fix[vm.vc[j][k]] = 1.0 if x[vm.pc[j][k]] >= x[vm.pd[j][k]] else 0.0
            out.append(fix)
        return out

    return heuristic


def solve_uc(problem: UcProblem, backend: str | None = None, gap_target: float | None = None,
             time_limit: float | None = None) -> UcPlan:
    algo = problem.config.algo
    backend = backend or algo.uc_backend
    gap_target = algo.uc_gap_target if gap_target is None else gap_target
    time_limit = algo.uc_time_limit if time_limit is None else time_limit
    if backend == "native":
        sol = milp.solve_mip(problem.model, time_limit=time_limit, gap_target=gap_target,
                             heuristic=rounding_heuristic(problem))
    else:
        sol = milp.solve(problem.model, backend=backend, time_limit=time_limit,
                         gap_target=gap_target)
    return plan_from_solution(problem, sol)


def plan_from_solution(problem: UcProblem, sol: MilpSolution) -> UcPlan:
    if not sol.ok:
        raise UcError(f"day-ahead problem {problem.model.name}: {sol.status.value}")
    vm = problem.varmap
    nc = len(problem.config.cgs)
    u = np.array([[int(round(sol.x[vm.u[i][k]])) for k in range(vm.T)] for i in range(nc)])
    v = np.array([[int(round(sol.x[vm.v[i][k]])) for k in range(vm.T)] for i in range(nc)])
    planned: list[SlotDecision] = [extract(sol.x, vm, k) for k in range(vm.T)]
    return UcPlan(u=u, v=v, tau=on_durations(u), planned=planned, objective=sol.objective,
                  gap=sol.gap, status=sol.status.value, nodes=sol.nodes,
                  wall_time=sol.wall_time, slots=list(problem.slots))
