"""Hour-ahead economic dispatch by drift-plus-penalty.

Each slot solves a single-slot MILP whose objective is ``V`` times the
operating cost plus queue-weighted terms: the SOC queues ``S_i`` price the
SOC change and the shortage queue ``Q`` prices unmet elastic demand.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from . import milp
from .formulation import Ablations, build_slots, extract
from .milp import MilpModel, Status
from .model import (CgState, EssSpec, MarketSpec, MicrogridConfig, ModelInputError,
                    SlotDecision, SlotObservation, soc_change)

log = logging.getLogger(__name__)

IDENTITY_TOL = 1e-9


class DispatchError(RuntimeError):
    """P1 could not be solved; carries the rows violated by the best-effort point."""

    def __init__(self, message: str, rows: Sequence[str] = ()):
        super().__init__(message)
        self.rows = list(rows)


class QueueIdentityError(RuntimeError):
    """``S_i`` drifted away from ``soc_i - beta_i``."""


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

def _side_slope(spec: EssSpec, x: float, side: str) -> float:
    n, g = spec.module_count, spec.gamma
    best_val, best_slope = -math.inf, -math.inf
    for a, b in spec.aging_segments:
        if side == "c":
            val = g * spec.eta_c * (1000 * a * x * x + n * b * x)
            slope = g * spec.eta_c * (2000 * a * x + n * b)
        else:
            val = (1 - g) * (1000 * a * x * x + n * b * x) / spec.eta_d
            slope = (1 - g) * (2000 * a * x + n * b) / spec.eta_d
        # on ties the larger slope is the right derivative
        if val > best_val + 1e-12 or (abs(val - best_val) <= 1e-12 and slope > best_slope):
            best_val, best_slope = val, slope
    return spec.aging_scale * best_slope


def marginal_aging_bounds(spec: EssSpec) -> tuple[float, float]:
    """Largest marginal aging cost ($/kWh) on the charge and discharge sides.

    The one-sided cost is a maximum of convex quadratics, hence convex, so the
    largest derivative sits at the right end of the rate interval.
    """
    if spec.unit_cost == 0:
        return 0.0, 0.0
    c_c = max(_side_slope(spec, spec.p_c_max, "c"), 0.0)
    c_d = max(_side_slope(spec, spec.p_d_max, "d"), 0.0)
    return c_c, c_d


def compute_beta(spec: EssSpec, V: float, c_p_max: float) -> float:
    if V < 0:
        raise ValueError("V must be nonnegative")
    c_c, _ = marginal_aging_bounds(spec)
    return (spec.s_min + spec.p_d_max / (spec.eta_d * spec.e_cap)
            + V * spec.e_cap * (c_c + c_p_max) / spec.eta_c)


def v_max_ratio(spec: EssSpec, market: MarketSpec) -> float:
    c_c, c_d = marginal_aging_bounds(spec)
    num = (spec.s_max - spec.s_min
           - (spec.eta_c * spec.p_c_max + spec.p_d_max / spec.eta_d) / spec.e_cap)
    den = spec.e_cap * ((c_c + market.c_p_max) / spec.eta_c
                        + spec.eta_d * (c_d - market.c_s_min))
    if num <= 0:
        raise ModelInputError(
            f"{spec.name}: SOC band too narrow for the rate limits; widen [s_min, s_max] "
            "or reduce p_c_max / p_d_max")
    if den <= 0:
        raise ModelInputError(f"{spec.name}: nonpositive denominator in the V bound")
    return num / den


def compute_v_max(esss: Sequence[EssSpec], market: MarketSpec) -> float:
    if not esss:
        raise ModelInputError("the V bound needs at least one ESS")
    return min(v_max_ratio(e, market) for e in esss)


def compute_B(config: MicrogridConfig, delta_net_max: float) -> float:
    """Drift-bound constant; diagnostic only."""
    qos = config.qos
    b = 0.5 * max(qos.alpha_max ** 2, (delta_net_max / qos.d_e_min) ** 2)
    for e in config.esss:
        b += 0.5 * max((e.eta_c * e.p_c_max) ** 2, (e.p_d_max / e.eta_d) ** 2) / e.e_cap ** 2
    return b


@dataclass(frozen=True)
class LyapunovParams:
    V: float
    V_max: float
    beta: tuple
    c_c_max: tuple
    c_d_max: tuple

    @classmethod
    def from_config(cls, config: MicrogridConfig) -> "LyapunovParams":
        v_max = compute_v_max(config.esss, config.market)
        algo = config.algo
        V = algo.v_override if algo.v_override is not None else algo.v_scale * v_max
        if V <= 0:
            raise ModelInputError("V must be positive")
        if V > v_max:
            log.info("V=%.6g exceeds V_max=%.6g; SOC limits stay hard", V, v_max)
        bounds = [marginal_aging_bounds(e) for e in config.esss]
        beta = tuple(compute_beta(e, V, config.market.c_p_max) for e in config.esss)
        return cls(V, v_max, beta, tuple(b[0] for b in bounds), tuple(b[1] for b in bounds))


@dataclass
class QueueState:
    Q: float
    S: np.ndarray

    @classmethod
    def initial(cls, socs: Sequence[float], params: LyapunovParams) -> "QueueState":
        return cls(0.0, np.asarray(socs, float) - np.asarray(params.beta))

    def copy(self) -> "QueueState":
        return QueueState(self.Q, self.S.copy())


def shortage_ratio(obs: SlotObservation, p_disp: float) -> float:
    if obs.d_e_hat <= 0:
        raise ModelInputError("forecast elastic demand must be positive (d_e >= d_e_min > 0)")
    return max(obs.d_net_hat - p_disp, 0.0) / obs.d_e_hat


def update_queue_q(Q_prev: float, obs: SlotObservation, p_disp: float, alpha_avg: float) -> float:
    if Q_prev < 0:
        raise ValueError("Q must be nonnegative")
    return max(Q_prev + shortage_ratio(obs, p_disp) - alpha_avg, 0.0)


def update_queue_s(S_prev: float, p_c: float, p_d: float, spec: EssSpec,
                   soc_new: float | None = None, beta: float | None = None) -> float:
    S = S_prev + soc_change(spec, p_c, p_d)
    if soc_new is not None and beta is not None and abs(S - (soc_new - beta)) > IDENTITY_TOL:
        raise QueueIdentityError(
            f"{spec.name}: S={S!r} but soc - beta = {soc_new - beta!r}")
    return S


def advance_queues(queues: QueueState, params: LyapunovParams, config: MicrogridConfig,
                   obs: SlotObservation, dec: SlotDecision,
                   socs_new: Sequence[float] | None = None) -> QueueState:
    Q = update_queue_q(queues.Q, obs, dec.p_disp, config.qos.alpha_avg)
    S = np.array([update_queue_s(queues.S[j], dec.p_c[j], dec.p_d[j], e,
                                 None if socs_new is None else socs_new[j], params.beta[j])
                  for j, e in enumerate(config.esss)])
    return QueueState(Q, S)


# ---------------------------------------------------------------------------
# P1
# ---------------------------------------------------------------------------

def p_caps_from_tau(config: MicrogridConfig, tau: Sequence[int]) -> np.ndarray:
    """Output ceiling ``tau * r * p_max`` that lets a unit ramp to zero before shut-down."""
    return np.array([t * g.ramp_coeff * g.p_max for g, t in zip(config.cgs, tau)])


def build_p1(config: MicrogridConfig, params: LyapunovParams, queues: QueueState,
             u_slot: Sequence[int], tau_slot: Sequence[int], slot: int,
             obs: SlotObservation, cg_states: Sequence[CgState], socs: Sequence[float],
             ablations: Ablations = Ablations()) -> tuple[MilpModel, object]:
    """Single-slot model with the commitment fixed to ``u_slot``."""
    if obs.d_e_hat <= 0:
        raise ModelInputError("forecast elastic demand must be positive")
    commitment = np.asarray(u_slot, int).reshape(-1, 1)
    return build_slots(config, [slot], [obs], cg_states, socs,
                       alpha=config.qos.alpha_max, commitment=commitment,
                       cost_weight=params.V, soc_queue=list(queues.S),
                       shortage_queue_weight=queues.Q / obs.d_e_hat,
                       p_caps=p_caps_from_tau(config, tau_slot), ablations=ablations,
                       name=f"P1_{slot}")


@dataclass
class DispatchDecision:
    decision: SlotDecision
    objective: float
    gap: float
    status: str
    wall_time: float
    nodes: int = 0
    notes: list = field(default_factory=list)


def _diagnose(model: MilpModel) -> list[str]:
    """Rows that need slack when the total row violation is minimized."""
    _, A, lo, hi, lb, ub, _ = model.arrays()
    rows = []
    m, n = A.shape
    eye = sp.identity(m, format="csc")
    A_ub = sp.vstack([sp.hstack([A, -eye, sp.csc_matrix((m, m))]),
                      sp.hstack([-A, sp.csc_matrix((m, m)), -eye])]).tocsc()
    b_ub = np.concatenate([np.where(np.isfinite(hi), hi, 1e30),
                           np.where(np.isfinite(lo), -lo, 1e30)])
    cost = np.concatenate([np.zeros(n), np.ones(2 * m)])
    bounds = list(zip(lb, ub)) + [(0, None)] * (2 * m)
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status == 0:
        slack = res.x[n:n + m] + res.x[n + m:]
        rows = [model.rows[i].name for i in np.flatnonzero(slack > 1e-7)]
    return rows


def dispatch_slot(config: MicrogridConfig, params: LyapunovParams, queues: QueueState,
                  u_slot: Sequence[int], tau_slot: Sequence[int], slot: int,
                  obs: SlotObservation, cg_states: Sequence[CgState], socs: Sequence[float],
                  ablations: Ablations = Ablations(), time_limit: float = 60.0) -> DispatchDecision:
    """Solve P1 for one slot and return the decision at the optimum."""
    t0 = time.perf_counter()
    model, vm = build_p1(config, params, queues, u_slot, tau_slot, slot, obs, cg_states, socs,
                         ablations)
    sol = milp.solve(model, backend=config.algo.p1_backend, time_limit=time_limit)
    if not sol.ok:
        rows = _diagnose(model) if sol.status == Status.INFEASIBLE else []
        raise DispatchError(f"P1 at slot {slot}: {sol.status.value}; rows {rows}", rows)
    dec = extract(sol.x, vm, 0)
    return DispatchDecision(dec, sol.objective, sol.gap, sol.status.value,
                            time.perf_counter() - t0, sol.nodes)


# ---------------------------------------------------------------------------
# decision log
# ---------------------------------------------------------------------------

def decision_log_header(config: MicrogridConfig) -> list[str]:
    cols = ["slot"]
    cols += [f"p[{g.name}]" for g in config.cgs]
    for e in config.esss:
        cols += [f"p_c[{e.name}]", f"p_d[{e.name}]"]
    cols += ["p_p", "p_s", "w"]
    cols += [f"v_c[{e.name}]" for e in config.esss]
    cols += ["Q"] + [f"S[{e.name}]" for e in config.esss]
    cols += ["objective", "gap", "wall_time"]
    return cols


def write_decision_log_row(fh: TextIO, slot: int, res: DispatchDecision, queues: QueueState) -> None:
    d = res.decision
    vals = [str(slot)] + [f"{x:.6f}" for x in d.p]
    for pc, pd in zip(d.p_c, d.p_d):
        vals += [f"{pc:.6f}", f"{pd:.6f}"]
    vals += [f"{d.p_p:.6f}", f"{d.p_s:.6f}", f"{d.w:.6f}"]
    vals += [str(int(v)) for v in d.v_c]
    vals += [f"{queues.Q:.9f}"] + [f"{s:.9f}" for s in queues.S]
    vals += [f"{res.objective:.6f}", f"{res.gap:.3g}", f"{res.wall_time:.4f}"]
    fh.write("\t".join(vals) + "\n")
