"""Rolling-horizon simulation: daily commitment, hourly dispatch, realized costs."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dispatch import (DispatchError, LyapunovParams, QueueState, advance_queues,
                       build_p1, decision_log_header, dispatch_slot, shortage_ratio,
                       write_decision_log_row)
from .formulation import Ablations
from .forecast import ErrorModel, TraceSet
from .model import (CgState, ConfigError, MicrogridConfig, SlotDecision, SlotObservation, cg_cost,
                    cg_emission, ess_aging_cost, ess_soc_update, market_cost)
from .uc import UcError, build_p0, runs_respect_minimums, solve_uc

log = logging.getLogger(__name__)

MODES = ("two-stage", "one-stage-only", "benchmark-error-free")
FEAS_TOL = 1e-5

BENCHMARK_NOTE = ("benchmark: chained per-day error-free commitment and dispatch carrying "
                  "realized states across days (not a single whole-horizon optimization)")


class SimulationError(RuntimeError):
    """A solver failed during the simulation."""


class InvariantBreach(RuntimeError):
    """A hard constraint or queue identity failed; carries the violation log."""

    def __init__(self, message: str, violations: Sequence[dict] = ()):
        super().__init__(message)
        self.violations = list(violations)


@dataclass(frozen=True)
class ScenarioConfig:
    mode: str = "two-stage"
    ablations: Ablations = Ablations()
    rho: float = 1.0
    horizon: int = 168
    seed: int = 0

    def validate(self) -> "ScenarioConfig":
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.rho < 0:
            raise ConfigError("rho must be nonnegative")
        if self.horizon < 24 or self.horizon % 24:
            raise ConfigError("horizon must be a positive multiple of 24 slots")
        return self

    @property
    def label(self) -> str:
        tags = [self.mode, f"rho={self.rho:g}", f"seed={self.seed}"]
        if self.ablations.omit_startstop_cost:
            tags.append("no-startstop")
        if self.ablations.omit_ess_aging_cost:
            tags.append("no-aging")
        return " ".join(tags)


@dataclass
class SlotRecord:
    slot: int
    decision: SlotDecision
    d_ie: float
    d_e: float
    p_rg: float
    d_net_hat: float
    d_e_hat: float
    shortage: float
    surplus: float
    costs: dict
    emission: float
    Q: float
    S: np.ndarray
    soc: np.ndarray
    scheduled_ratio: float

    @property
    def cost(self) -> float:
        return sum(self.costs.values())

    @property
    def shortage_pct(self) -> float:
        return 100.0 * self.shortage / self.d_e


@dataclass
class SimReport:
    scenario: ScenarioConfig
    config: MicrogridConfig
    params: LyapunovParams | None
    records: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    solver_stats: dict = field(default_factory=dict)
    initial_u: np.ndarray | None = None
    initial_vc: np.ndarray | None = None
    notes: list = field(default_factory=list)
    captured: object = None

    # ---- aggregates --------------------------------------------------------
    @property
    def T(self) -> int:
        return len(self.records)

    def category_totals(self) -> dict:
        out: dict = {}
        for r in self.records:
            for k, v in r.costs.items():
                out[k] = out.get(k, 0.0) + v
        return out

    @property
    def total_cost(self) -> float:
        return sum(r.cost for r in self.records)

    @property
    def shortage_pct(self) -> float:
        """Time-average realized unsatisfied elastic demand, in percent."""
        return float(np.mean([r.shortage_pct for r in self.records]))

    @property
    def scheduled_shortage_avg(self) -> float:
        return float(np.mean([r.scheduled_ratio for r in self.records]))

    @property
    def Q_T(self) -> float:
        return self.records[-1].Q if self.records else 0.0

    @property
    def emission_total(self) -> float:
        return sum(r.emission for r in self.records)

    def trade_volumes(self) -> tuple[float, float]:
        return (sum(r.decision.p_p for r in self.records),
                sum(r.decision.p_s for r in self.records))

    def start_stop_events(self) -> int:
        prev = self.initial_u.copy()
        n = 0
        for r in self.records:
            n += int(np.sum(prev != r.decision.u))
            prev = r.decision.u
        return n

    def ess_cycles(self) -> int:
        """Sign changes between charging and discharging, summed over ESSs."""
        n = 0
        for j in range(len(self.config.esss)):
            last = 0
            for r in self.records:
                net = r.decision.p_c[j] - r.decision.p_d[j]
                sign = 0 if abs(net) <= 1e-6 else (1 if net > 0 else -1)
                if sign and last and sign != last:
                    n += 1
                if sign:
                    last = sign
        return n

    # ---- writers -----------------------------------------------------------
    def per_slot_csv(self) -> str:
        cfg = self.config
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        head = ["slot", "d_ie", "d_e", "p_rg", "d_net_hat"]
        head += [f"u[{g.name}]" for g in cfg.cgs] + [f"p[{g.name}]" for g in cfg.cgs]
        for e in cfg.esss:
            head += [f"p_c[{e.name}]", f"p_d[{e.name}]", f"soc[{e.name}]", f"S[{e.name}]"]
        head += ["p_p", "p_s", "w", "shortage", "surplus", "Q", "emission",
                 "cost_cg", "cost_ess", "cost_market", "cost_shortage", "cost_surplus", "cost"]
        wr.writerow(head)
        for r in self.records:
            d = r.decision
            row = [r.slot, r.d_ie, r.d_e, r.p_rg, r.d_net_hat]
            row += [int(x) for x in d.u] + list(d.p)
            for j in range(len(cfg.esss)):
                row += [d.p_c[j], d.p_d[j], r.soc[j], r.S[j]]
            row += [d.p_p, d.p_s, d.w, r.shortage, r.surplus, r.Q, r.emission]
            row += [r.costs[k] for k in ("cg", "ess", "market", "shortage", "surplus")]
            row.append(r.cost)
            wr.writerow([_fmt(x) for x in row])
        return buf.getvalue()

    def summary_text(self) -> str:
        buy, sell = self.trade_volumes()
        cats = self.category_totals()
        lines = [f"scenario: {self.scenario.label}"]
        if self.scenario.mode == "benchmark-error-free":
            lines.append(BENCHMARK_NOTE)
        lines += [
            f"slots: {self.T}",
            f"total cost: {self.total_cost:.4f}",
            *(f"  {k}: {v:.4f}" for k, v in cats.items()),
            f"shortage %: {self.shortage_pct:.4f}",
            f"scheduled shortage ratio (avg): {self.scheduled_shortage_avg:.6f}",
            f"Q_T: {self.Q_T:.6f}",
            f"emission kg: {self.emission_total:.4f}",
            f"purchase kWh: {buy:.4f}",
            f"sale kWh: {sell:.4f}",
            f"start/stop events: {self.start_stop_events()}",
            f"ESS cycles: {self.ess_cycles()}",
            f"violations: {len(self.violations)}",
        ]
        if self.params is not None:
            lines.append(f"V: {self.params.V:.9g} (V_max {self.params.V_max:.9g})")
            lines.append("beta: " + ", ".join(f"{b:.9g}" for b in self.params.beta))
        # wall times vary run to run; they go to the manifest instead
        for k, v in sorted(self.solver_stats.items()):
            if not k.endswith("_time_s"):
                lines.append(f"solver {k}: {_fmt(v)}")
        lines += self.notes
        return "\n".join(lines) + "\n"

    def generation_stack_csv(self) -> str:
        cfg = self.config
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["slot"] + [g.name for g in cfg.cgs]
                    + ["ess_discharge", "ess_charge", "purchase", "sale", "renewable",
                       "inelastic_demand", "elastic_demand"])
        for r in self.records:
            d = r.decision
            wr.writerow([_fmt(x) for x in [r.slot, *d.p, float(np.sum(d.p_d)),
                                           float(np.sum(d.p_c)), d.p_p, d.p_s, r.p_rg,
                                           r.d_ie, r.d_e]])
        return buf.getvalue()

    def hourly_cost_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["slot", "cost", "cumulative_cost"])
        acc = 0.0
        for r in self.records:
            acc += r.cost
            wr.writerow([r.slot, _fmt(r.cost), _fmt(acc)])
        return buf.getvalue()

    def write(self, out_dir: str | Path, prefix: str = "") -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {"slots.csv": self.per_slot_csv(), "summary.txt": self.summary_text(),
                 "generation_stack.csv": self.generation_stack_csv(),
                 "hourly_cost.csv": self.hourly_cost_csv()}
        paths = []
        for name, text in files.items():
            p = out / f"{prefix}{name}"
            p.write_text(text)
            paths.append(p)
        return paths


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.6f}"
    return str(x)


# ---------------------------------------------------------------------------
# accounting and checks
# ---------------------------------------------------------------------------

def realized_accounting(dec: SlotDecision, u_prev: Sequence[int], truth: SlotObservation,
                        t: int, config: MicrogridConfig) -> dict:
    """Re-price a decision against the realized loads and renewable output."""
    qos = config.qos
    costs = {"cg": 0.0, "ess": 0.0, "market": 0.0}
    for i, g in enumerate(config.cgs):
        costs["cg"] += cg_cost(g, int(u_prev[i]), int(dec.u[i]), int(dec.v[i]), float(dec.p[i]))
    for j, e in enumerate(config.esss):
        costs["ess"] += ess_aging_cost(e, float(dec.p_c[j]), float(dec.p_d[j]))
    costs["market"] = market_cost(config.market, t, dec.p_p, dec.p_s)
    gap = truth.d_net - dec.p_disp
    # only elastic demand can go unserved; any excess is an inelastic breach
    shortage, surplus = min(max(gap, 0.0), truth.d_e), max(-gap, 0.0)
    costs["shortage"] = qos.shortage_price * shortage
    costs["surplus"] = qos.surplus_price * surplus
    events = []
    if gap > truth.d_e + FEAS_TOL:
        events.append({"slot": t, "kind": "inelastic-qos-breach",
                       "detail": f"shortage {gap:.3f} exceeds elastic demand {truth.d_e:.3f}"})
    elif truth.d_e > 0 and shortage / truth.d_e > qos.alpha_max + FEAS_TOL:
        events.append({"slot": t, "kind": "alpha-max-exceeded",
                       "detail": f"realized ratio {shortage / truth.d_e:.4f}"})
    emission = sum(cg_emission(g, int(dec.u[i]), float(dec.p[i]))
                   for i, g in enumerate(config.cgs))
    return {"costs": costs, "shortage": shortage, "surplus": surplus, "emission": emission,
            "events": events}


def hard_violations(dec: SlotDecision, t: int, config: MicrogridConfig,
                    cg_states: Sequence[CgState], socs_new: Sequence[float],
                    obs: SlotObservation, alpha: float) -> list[dict]:
    """Scheduled-quantity checks of the hard constraints for one slot."""
    out = []

    def bad(kind, detail):
        out.append({"slot": t, "kind": kind, "detail": detail})

    qos = config.qos
    for i, g in enumerate(config.cgs):
        u, p, st = int(dec.u[i]), float(dec.p[i]), cg_states[i]
        if u and not g.p_min - FEAS_TOL <= p <= g.p_max + FEAS_TOL:
            bad("cg-limits", f"{g.name} p={p}")
        if not u and p > FEAS_TOL:
            bad("cg-limits", f"{g.name} off with p={p}")
        if abs(p - st.p_prev) > g.ramp + FEAS_TOL:
            bad("ramp", f"{g.name} {st.p_prev} -> {p}")
        if not runs_respect_minimums(g, st, [u]):
            bad("min-on-off", f"{g.name} switched at t_on={st.t_on} t_off={st.t_off}")
    for j, e in enumerate(config.esss):
        if not e.s_min - FEAS_TOL <= socs_new[j] <= e.s_max + FEAS_TOL:
            bad("soc", f"{e.name} soc={socs_new[j]}")
        if dec.p_c[j] > FEAS_TOL and dec.p_d[j] > FEAS_TOL:
            bad("ess-exclusive", e.name)
    em = sum(g.emis_lin * dec.p[i] for i, g in enumerate(config.cgs))
    if em > qos.emission_cap + FEAS_TOL:
        bad("emission", f"{em:.3f} > {qos.emission_cap}")
    total_p = float(np.sum(dec.p))
    if qos.reserve_mode == "literal":
        cap = config.total_cg_capacity
    else:
        cap = sum(g.p_max * int(dec.u[i]) for i, g in enumerate(config.cgs))
    if total_p > cap - qos.reserve + FEAS_TOL:
        bad("reserve", f"{total_p:.3f} > {cap - qos.reserve:.3f}")
    lo = obs.d_net_hat + obs.delta_net - alpha * (obs.d_e_hat + obs.delta_e)
    hi = obs.d_net_hat + obs.delta_net
    if not lo - 1e-4 <= dec.p_disp <= hi + 1e-4:
        bad("dispatch-range", f"p_disp {dec.p_disp:.3f} outside [{lo:.3f}, {hi:.3f}]")
    return out


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def _clip_ess(dec: SlotDecision, config: MicrogridConfig, socs: Sequence[float]) -> tuple:
    """Shrink ESS rates so SOC stays in bounds; returns (decision, clipped?)."""
    clipped = False
    pc, pd = dec.p_c.copy(), dec.p_d.copy()
    for j, e in enumerate(config.esss):
        room_up = (e.s_max - socs[j]) * e.e_cap / e.eta_c
        room_dn = (socs[j] - e.s_min) * e.e_cap * e.eta_d
        if pc[j] > room_up:
            pc[j], clipped = max(room_up, 0.0), True
        if pd[j] > room_dn:
            pd[j], clipped = max(room_dn, 0.0), True
    if not clipped:
        return dec, False
    return SlotDecision(dec.u, dec.v, dec.p, pc, pd, dec.v_c, dec.p_p, dec.p_s, dec.w), True


def run_scenario(config: MicrogridConfig, traces: TraceSet, scenario: ScenarioConfig,
                 error_model: ErrorModel | None = None, decision_log=None,
                 strict: bool = True, capture: tuple[str, int] | None = None) -> SimReport:
    """Simulate ``scenario.horizon`` slots day by day.

    Args:
        config: Validated microgrid configuration.
        traces: True values covering the horizon.
        scenario: Mode, ablations, error scale and seed.
        error_model: Base error model; its seed is replaced by the scenario seed
            and its scale by ``scenario.rho``.
        decision_log: Optional text stream receiving the per-slot dispatch log.
        strict: Raise ``InvariantBreach`` after the run if any hard check failed.
        capture: ``("p0", day)`` or ``("p1", slot)``; stop when that model is built
            and return it as ``report.captured``.
    """
    scenario.validate()
    config.validate()
    if traces.horizon < scenario.horizon:
        raise ValueError(f"traces cover {traces.horizon} slots, scenario needs {scenario.horizon}")
    traces.validate(config.qos.d_e_min)
    base = error_model or ErrorModel()
    em = None if scenario.mode == "benchmark-error-free" else \
        replace(base, seed=scenario.seed, rho=scenario.rho)
    abl = scenario.ablations

    cg_states = [CgState.initial(g) for g in config.cgs]
    socs = np.array([e.soc0 for e in config.esss], float)
    params = LyapunovParams.from_config(config) if config.esss else None
    queues = QueueState.initial(socs, params) if params else QueueState(0.0, np.zeros(0))
    report = SimReport(scenario, config, params,
                       initial_u=np.array([s.u_prev for s in cg_states]))
    stats = {"uc_solves": 0, "uc_time_s": 0.0, "uc_max_gap": 0.0, "p1_solves": 0,
             "p1_time_s": 0.0, "p1_max_gap": 0.0, "ess_clip_events": 0}
    if decision_log is not None and scenario.mode == "two-stage":
        decision_log.write("\t".join(decision_log_header(config)) + "\n")

    for day in range(scenario.horizon // 24):
        slots = list(range(24 * day, 24 * day + 24))
        da_obs = [traces.observe(t, k + 1, em) for k, t in enumerate(slots)]
        try:
            problem = build_p0(config, slots, da_obs, cg_states, list(socs), abl)
            if capture == ("p0", day):
                report.captured = problem.model
                return report
            plan = solve_uc(problem)
        except UcError as exc:
            raise SimulationError(f"day {day}: {exc}") from exc
        stats["uc_solves"] += 1
        stats["uc_time_s"] += plan.wall_time
        stats["uc_max_gap"] = max(stats["uc_max_gap"], plan.gap)

        for k, t in enumerate(slots):
            u_prev = [s.u_prev for s in cg_states]
            if scenario.mode == "two-stage":
                obs = traces.observe(t, 1, em)
                alpha = config.qos.alpha_max
                if capture == ("p1", t):
                    report.captured = build_p1(config, params, queues, plan.u[:, k],
                                               plan.tau[:, k], t, obs, cg_states, socs, abl)[0]
                    return report
                try:
                    res = dispatch_slot(config, params, queues, plan.u[:, k], plan.tau[:, k], t,
                                        obs, cg_states, socs, abl)
                except DispatchError as exc:
                    report.violations.append({"slot": t, "kind": "p1-failure",
                                              "detail": str(exc)})
                    raise SimulationError(str(exc)) from exc
                dec = res.decision
                stats["p1_solves"] += 1
                stats["p1_time_s"] += res.wall_time
                stats["p1_max_gap"] = max(stats["p1_max_gap"], res.gap)
            else:
                obs = da_obs[k]
                alpha = config.qos.alpha_avg
                dec = plan.planned[k]
                dec, clipped = _clip_ess(dec, config, socs)
                if clipped:
                    stats["ess_clip_events"] += 1
                    report.violations.append({"slot": t, "kind": "ess-clip",
                                              "detail": "planned ESS rate clipped"})
            socs_new = np.array([ess_soc_update(e, socs[j], dec.p_c[j], dec.p_d[j])
                                 for j, e in enumerate(config.esss)])
            report.violations += hard_violations(dec, t, config, cg_states, socs_new, obs, alpha)
            truth = traces.exact(t)
            acc = realized_accounting(dec, u_prev, truth, t, config)
            report.violations += acc["events"]
            ratio = shortage_ratio(obs, dec.p_disp)
            if params is not None:
                queues = advance_queues(queues, params, config, obs, dec, socs_new)
            else:
                queues = QueueState(max(queues.Q + ratio - config.qos.alpha_avg, 0.0),
                                    queues.S)
            if decision_log is not None and scenario.mode == "two-stage":
                write_decision_log_row(decision_log, t, res, queues)
            report.records.append(SlotRecord(
                t, dec, truth.d_ie, truth.d_e, truth.p_rg, obs.d_net_hat, obs.d_e_hat,
                acc["shortage"], acc["surplus"], acc["costs"], acc["emission"], queues.Q,
                queues.S.copy(), socs_new.copy(), ratio))
            cg_states = [s.advance(int(dec.u[i]), float(dec.p[i]))
                         for i, s in enumerate(cg_states)]
            socs = socs_new

    report.solver_stats = stats
    if scenario.mode == "benchmark-error-free":
        report.notes.append(BENCHMARK_NOTE)
    check_queue_guarantee(report)
    hard = [v for v in report.violations if v["kind"] not in
            ("ess-clip", "alpha-max-exceeded", "inelastic-qos-breach")]
    if strict and hard:
        raise InvariantBreach(f"{len(hard)} hard-constraint violations; first: {hard[0]}", hard)
    return report


def check_queue_guarantee(report: SimReport, tol: float = 1e-9) -> None:
    """Telescoped queue bound on the scheduled shortage ratio, checked on every prefix."""
    alpha = report.config.qos.alpha_avg
    acc = 0.0
    for n, r in enumerate(report.records, start=1):
        acc += r.scheduled_ratio
        if r.Q < -tol or acc / n > alpha + r.Q / n + tol:
            raise InvariantBreach(f"queue bound failed at slot {r.slot}",
                                  [{"slot": r.slot, "kind": "queue-bound", "detail": f"{acc / n}"}])


# ---------------------------------------------------------------------------
# sensitivity sweep
# ---------------------------------------------------------------------------

@dataclass
class SweepTable:
    rhos: list
    costs: dict  # mode -> list of totals, aligned with rhos
    hourly: dict  # (mode, rho) -> hourly cost array

    def cumulative_differences(self, mode: str) -> dict:
        """Cumulative hourly cost at each rho minus that at the smallest rho."""
        r0 = min(self.rhos)
        base = np.cumsum(self.hourly[(mode, r0)])
        return {r: np.cumsum(self.hourly[(mode, r)]) - base for r in self.rhos}

    def increase(self, mode: str) -> float:
        c = self.costs[mode]
        return c[self.rhos.index(max(self.rhos))] - c[self.rhos.index(min(self.rhos))]

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        modes = list(self.costs)
        wr.writerow(["rho"] + [f"total_cost[{m}]" for m in modes])
        for k, r in enumerate(self.rhos):
            wr.writerow([_fmt(float(r))] + [_fmt(self.costs[m][k]) for m in modes])
        return buf.getvalue()

    def cumulative_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        cols, series = ["slot"], []
        for m in self.costs:
            for r, s in self.cumulative_differences(m).items():
                cols.append(f"{m}@rho={r:g}")
                series.append(s)
        wr.writerow(cols)
        for t in range(len(series[0]) if series else 0):
            wr.writerow([t] + [_fmt(float(s[t])) for s in series])
        return buf.getvalue()


def rho_sweep(config: MicrogridConfig, traces: TraceSet, rhos: Sequence[float],
              seed: int = 0, horizon: int = 168, ablations: Ablations = Ablations(),
              modes: Sequence[str] = ("two-stage", "one-stage-only"),
              error_model: ErrorModel | None = None) -> SweepTable:
    rhos = [float(r) for r in rhos]
    if any(r < 0 for r in rhos):
        raise ValueError("rho values must be nonnegative")
    costs = {m: [] for m in modes}
    hourly = {}
    for mode in modes:
        for r in rhos:
            sc = ScenarioConfig(mode, ablations, r, horizon, seed)
            rep = run_scenario(config, traces, sc, error_model)
            costs[mode].append(rep.total_cost)
            hourly[(mode, r)] = np.array([rec.cost for rec in rep.records])
    return SweepTable(rhos, costs, hourly)
