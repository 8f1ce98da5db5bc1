"""Shared MILP construction for the day-ahead and hour-ahead problems.

Both problems use the same per-slot physics; they differ in whether the
commitment is a decision (day-ahead) or fixed (hour-ahead), in the
curtailment ceiling used for the supply lower bound, and in the extra
queue-weighted objective terms of the hour-ahead stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .milp import MilpModel
from .model import (CgState, MicrogridConfig, SlotDecision, SlotObservation, disp_bounds)
from .pwl import PwlCurve, add_epigraph, approximate_quadratic


@dataclass(frozen=True)
class Ablations:
    omit_startstop_cost: bool = False
    omit_ess_aging_cost: bool = False


@dataclass
class VarMap:
    """Variable ids by (unit, slot); ``None`` entries are constants."""

    T: int
    u: list = field(default_factory=list)
    v: list = field(default_factory=list)
    p: list = field(default_factory=list)
    zf: list = field(default_factory=list)
    pc: list = field(default_factory=list)
    pd: list = field(default_factory=list)
    vc: list = field(default_factory=list)
    soc: list = field(default_factory=list)
    yc: list = field(default_factory=list)
    yd: list = field(default_factory=list)
    za: list = field(default_factory=list)
    pp: list = field(default_factory=list)
    ps: list = field(default_factory=list)
    w: list = field(default_factory=list)
    fixed_u: np.ndarray | None = None
    fixed_v: np.ndarray | None = None


def fuel_curve(config: MicrogridConfig, i: int) -> PwlCurve:
    g = config.cgs[i]
    return approximate_quadratic(g.fuel_quad, g.fuel_lin, 0.0, g.p_max, config.algo.fuel_segments)


def square_curve(hi: float, segments: int) -> PwlCurve:
    return approximate_quadratic(1.0, 0.0, 0.0, hi, segments)


def _aging_z_bound(spec) -> float:
    n = spec.module_count
    g = spec.gamma
    return max(g * spec.eta_c * (1000 * a * spec.p_c_max ** 2 + n * abs(b) * spec.p_c_max)
               + (1 - g) * (1000 * a * spec.p_d_max ** 2 + n * abs(b) * spec.p_d_max) / spec.eta_d
               for a, b in spec.aging_segments)


def build_slots(config: MicrogridConfig, slots: Sequence[int], obs: Sequence[SlotObservation],
                cg_states: Sequence[CgState], socs: Sequence[float], *,
                alpha: float, commitment: np.ndarray | None = None,
                cost_weight: float = 1.0, soc_queue: Sequence[float] | None = None,
                shortage_queue_weight: float = 0.0, p_caps: Sequence[float] | None = None,
                ablations: Ablations = Ablations(), name: str = "model"):
    """Build the MILP for consecutive ``slots``; returns ``(model, varmap)``.

    ``commitment`` (n_cg x T array) fixes the on/off status; without it the
    commitment, its auxiliary ``v`` and the minimum on/off rows are part of
    the model. ``soc_queue`` and ``shortage_queue_weight`` add the
    hour-ahead queue terms (single-slot models only).
    """
    from .uc import min_onoff_rows  # circular at import time otherwise

    T = len(slots)
    if len(obs) != T:
        raise ValueError("one observation per slot is required")
    cgs, esss, qos, mkt = config.cgs, config.esss, config.qos, config.market
    nc, ne = len(cgs), len(esss)
    K_aging = config.algo.aging_segments
    m = MilpModel(name=name)
    vm = VarMap(T)
    W = cost_weight
    const = 0.0

    if commitment is not None:
        commitment = np.asarray(commitment, dtype=int).reshape(nc, T)
        vm.fixed_u = commitment
        prev = np.array([s.u_prev for s in cg_states])
        full = np.column_stack([prev, commitment])
        vm.fixed_v = full[:, :-1] * full[:, 1:]

    fuel = [fuel_curve(config, i) for i in range(nc)]
    sq_c = [square_curve(e.p_c_max, K_aging) for e in esss]
    sq_d = [square_curve(e.p_d_max, K_aging) for e in esss]

    # ---- CG variables ----------------------------------------------------
    for i, g in enumerate(cgs):
        us, vs, ps_, zs = [], [], [], []
        for k, t in enumerate(slots):
            if commitment is None:
                us.append(m.add_var(f"u[{g.name},{t}]", 0, 1, binary=True))
                v_ub = 1.0 if (k > 0 or cg_states[i].u_prev) else 0.0
                vs.append(m.add_var(f"v[{g.name},{t}]", 0, v_ub, binary=True))
                p_lo, p_hi = 0.0, g.p_max
            else:
                us.append(None)
                vs.append(None)
                on = commitment[i, k]
                p_lo, p_hi = on * g.p_min, on * g.p_max
            ps_.append(m.add_var(f"p[{g.name},{t}]", p_lo, p_hi))
            zs.append(m.add_var(f"zf[{g.name},{t}]", 0.0, fuel[i].ys[-1] + 1.0))
        vm.u.append(us)
        vm.v.append(vs)
        vm.p.append(ps_)
        vm.zf.append(zs)

    # ---- ESS variables ---------------------------------------------------
    for j, e in enumerate(esss):
        pcs, pds, vcs, socs_, ycs, yds, zas = [], [], [], [], [], [], []
        for k, t in enumerate(slots):
            pcs.append(m.add_var(f"pc[{e.name},{t}]", 0.0, e.p_c_max))
            pds.append(m.add_var(f"pd[{e.name},{t}]", 0.0, e.p_d_max))
            vcs.append(m.add_var(f"vc[{e.name},{t}]", 0, 1, binary=True))
            socs_.append(m.add_var(f"soc[{e.name},{t}]", e.s_min, e.s_max))
            if ablations.omit_ess_aging_cost:
                ycs.append(None)
                yds.append(None)
                zas.append(None)
            else:
                ycs.append(m.add_var(f"yc[{e.name},{t}]", 0.0, e.p_c_max ** 2))
                yds.append(m.add_var(f"yd[{e.name},{t}]", 0.0, e.p_d_max ** 2))
                zas.append(m.add_var(f"za[{e.name},{t}]", 0.0, _aging_z_bound(e)))
        vm.pc.append(pcs)
        vm.pd.append(pds)
        vm.vc.append(vcs)
        vm.soc.append(socs_)
        vm.yc.append(ycs)
        vm.yd.append(yds)
        vm.za.append(zas)

    # ---- market and shortage ---------------------------------------------
    bounds = [disp_bounds(o, qos, alpha) for o in obs]
    for k, t in enumerate(slots):
        vm.pp.append(m.add_var(f"pp[{t}]", 0.0, mkt.p_p_max))
        vm.ps.append(m.add_var(f"ps[{t}]", 0.0, mkt.p_s_max))
        lo, _ = bounds[k]
        vm.w.append(m.add_var(f"w[{t}]", 0.0, max(obs[k].d_net_hat - lo, 0.0) + 1.0))

    # ---- rows ------------------------------------------------------------
    for i, g in enumerate(cgs):
        st = cg_states[i]
        for k, t in enumerate(slots):
            p = vm.p[i][k]
            if commitment is None:
                u, v = vm.u[i][k], vm.v[i][k]
                m.add_row({p: 1.0, u: -g.p_max}, "<=", 0.0, f"pmax[{g.name},{t}]")
                m.add_row({p: 1.0, u: -g.p_min}, ">=", 0.0, f"pmin[{g.name},{t}]")
                m.add_row({v: 1.0, u: -1.0}, "<=", 0.0, f"v_le_u[{g.name},{t}]")
                if k > 0:
                    m.add_row({v: 1.0, vm.u[i][k - 1]: -1.0}, "<=", 0.0,
                              f"v_le_uprev[{g.name},{t}]")
            if k == 0:
                m.add_row({p: 1.0}, "<=", st.p_prev + g.ramp, f"ramp_up[{g.name},{t}]")
                m.add_row({p: -1.0}, "<=", g.ramp - st.p_prev, f"ramp_dn[{g.name},{t}]")
            else:
                q = vm.p[i][k - 1]
                m.add_row({p: 1.0, q: -1.0}, "<=", g.ramp, f"ramp_up[{g.name},{t}]")
                m.add_row({q: 1.0, p: -1.0}, "<=", g.ramp, f"ramp_dn[{g.name},{t}]")
            if p_caps is not None and commitment[i, k] and p_caps[i] < g.p_max:
                m.add_row({p: 1.0}, "<=", float(p_caps[i]), f"uc_cap[{g.name},{t}]")
            add_epigraph(m, fuel[i], p, vm.zf[i][k], f"fuel[{g.name},{t}]")
        if commitment is None:
            for coeffs, sense, rhs, rname in min_onoff_rows(g, T, st, vm.u[i], vm.v[i]):
                m.add_row(coeffs, sense, rhs, rname)

    for j, e in enumerate(esss):
        for k, t in enumerate(slots):
            pc, pd, vc, s = vm.pc[j][k], vm.pd[j][k], vm.vc[j][k], vm.soc[j][k]
            m.add_row({pc: 1.0, vc: -e.p_c_max}, "<=", 0.0, f"chg[{e.name},{t}]")
            m.add_row({pd: 1.0, vc: e.p_d_max}, "<=", e.p_d_max, f"dis[{e.name},{t}]")
            coeffs = {s: 1.0, pc: -e.eta_c / e.e_cap, pd: 1.0 / (e.eta_d * e.e_cap)}
            if k == 0:
                m.add_row(coeffs, "==", float(socs[j]), f"soc[{e.name},{t}]")
            else:
                coeffs[vm.soc[j][k - 1]] = -1.0
                m.add_row(coeffs, "==", 0.0, f"soc[{e.name},{t}]")
            if not ablations.omit_ess_aging_cost:
                yc, yd, za = vm.yc[j][k], vm.yd[j][k], vm.za[j][k]
                add_epigraph(m, sq_c[j], pc, yc, f"sqc[{e.name},{t}]")
                add_epigraph(m, sq_d[j], pd, yd, f"sqd[{e.name},{t}]")
                n, gm = e.module_count, e.gamma
                for kk, (a, b) in enumerate(e.aging_segments):
                    m.add_row({za: 1.0,
                               yc: -gm * e.eta_c * 1000 * a,
                               pc: -gm * e.eta_c * n * b,
                               yd: -(1 - gm) * 1000 * a / e.eta_d,
                               pd: -(1 - gm) * n * b / e.eta_d},
                              ">=", 0.0, f"aging[{e.name},{t},{kk}]")

    for k, t in enumerate(slots):
        disp = {vm.pp[k]: 1.0, vm.ps[k]: -1.0}
        for i in range(nc):
            disp[vm.p[i][k]] = 1.0
        for j in range(ne):
            disp[vm.pd[j][k]] = 1.0
            disp[vm.pc[j][k]] = -1.0
        lo, hi = bounds[k]
        m.add_row(disp, ">=", lo, f"disp_lo[{t}]")
        m.add_row(disp, "<=", hi, f"disp_hi[{t}]")
        m.add_row({**disp, vm.w[k]: 1.0}, ">=", obs[k].d_net_hat, f"shortage[{t}]")
        m.add_row({vm.p[i][k]: g.emis_lin for i, g in enumerate(cgs)}, "<=", qos.emission_cap,
                  f"emission[{t}]")
        if qos.reserve_mode == "literal":
            m.add_row({vm.p[i][k]: 1.0 for i in range(nc)}, "<=",
                      config.total_cg_capacity - qos.reserve, f"reserve[{t}]")
        elif commitment is None:
            coeffs = {}
            for i, g in enumerate(cgs):
                coeffs[vm.p[i][k]] = -1.0
                coeffs[vm.u[i][k]] = g.p_max
            m.add_row(coeffs, ">=", qos.reserve, f"reserve[{t}]")
        else:
            cap = sum(g.p_max * commitment[i, k] for i, g in enumerate(cgs))
            m.add_row({vm.p[i][k]: 1.0 for i in range(nc)}, "<=", cap - qos.reserve,
                      f"reserve[{t}]")

    # ---- objective -------------------------------------------------------
    for k, t in enumerate(slots):
        for i, g in enumerate(cgs):
            m.add_obj(vm.zf[i][k], W)
            m.add_obj(vm.p[i][k], W * g.maint_lin)
            if ablations.omit_startstop_cost:
                continue
            if commitment is None:
                u, v = vm.u[i][k], vm.v[i][k]
                m.add_obj(u, W * g.c_su)
                m.add_obj(v, -W * (g.c_su + g.c_sd))
                if k == 0:
                    const += W * g.c_sd * cg_states[i].u_prev
                else:
                    m.add_obj(vm.u[i][k - 1], W * g.c_sd)
            else:
                u_now = commitment[i, k]
                u_before = commitment[i, k - 1] if k else cg_states[i].u_prev
                v_now = vm.fixed_v[i, k]
                const += W * (g.c_su * (u_now - v_now) + g.c_sd * (u_before - v_now))
        for j, e in enumerate(esss):
            if not ablations.omit_ess_aging_cost:
                m.add_obj(vm.za[j][k], W * e.aging_scale)
        m.add_obj(vm.pp[k], W * mkt.buy(t))
        m.add_obj(vm.ps[k], -W * mkt.sell(t))
        # shortage + surplus: (cs + cu) w + cu (p_disp - d_net_hat)
        cs, cu = qos.shortage_price, qos.surplus_price
        m.add_obj(vm.w[k], W * (cs + cu) + shortage_queue_weight)
        for i in range(nc):
            m.add_obj(vm.p[i][k], W * cu)
        for j in range(ne):
            m.add_obj(vm.pd[j][k], W * cu)
            m.add_obj(vm.pc[j][k], -W * cu)
        m.add_obj(vm.pp[k], W * cu)
        m.add_obj(vm.ps[k], -W * cu)
        const -= W * cu * obs[k].d_net_hat
        if soc_queue is not None:
            for j, e in enumerate(esss):
                m.add_obj(vm.pc[j][k], soc_queue[j] * e.eta_c / e.e_cap)
                m.add_obj(vm.pd[j][k], -soc_queue[j] / (e.eta_d * e.e_cap))
    m.obj_constant = const
    return m, vm


def value(x: np.ndarray, var) -> float:
    return 0.0 if var is None else float(x[var])


def extract(x: np.ndarray, vm: VarMap, k: int) -> SlotDecision:
    """Decision of model slot ``k`` from a solution vector."""
    nc, ne = len(vm.p), len(vm.pc)
    if vm.fixed_u is not None:
        u = vm.fixed_u[:, k].astype(int)
        v = vm.fixed_v[:, k].astype(int)
    else:
        u = np.array([int(round(x[vm.u[i][k]])) for i in range(nc)])
        v = np.array([int(round(x[vm.v[i][k]])) for i in range(nc)])
    p = np.array([x[vm.p[i][k]] for i in range(nc)]) * u
    pc = np.array([max(x[vm.pc[j][k]], 0.0) for j in range(ne)])
    pd = np.array([max(x[vm.pd[j][k]], 0.0) for j in range(ne)])
    vc = np.array([int(round(x[vm.vc[j][k]])) for j in range(ne)])
    pc = np.where(vc == 1, pc, 0.0)
    pd = np.where(vc == 0, pd, 0.0)
    return SlotDecision(u, v, p, pc, pd, vc, max(float(x[vm.pp[k]]), 0.0),
                        max(float(x[vm.ps[k]]), 0.0), max(float(x[vm.w[k]]), 0.0))
