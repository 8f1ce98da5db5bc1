"""Microgrid component specifications and exact cost/constraint evaluation.

Units follow the usual convention of the domain: kW for power, kWh for
energy, $ for cost, kg for emissions; one slot is one hour so power and
per-slot energy are interchangeable.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MODULE_CAPACITY_KWH = 0.0081
AGING_SEGMENTS = ((0.0020, 0.0086), (0.0026, 0.0060), (0.0134, -0.0884))
TOL = 1e-9


class ConfigError(ValueError):
    """Invalid configuration values."""


class ModelInputError(ValueError):
    """An evaluation function was called outside its domain."""


# --------------------------------------------------------------------------
# specifications and states
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CgSpec:
    name: str
    p_min: float
    p_max: float
    ramp_coeff: float
    t_on_min: int
    t_off_min: int
    c_su: float
    c_sd: float
    fuel_quad: float
    fuel_lin: float
    maint_lin: float
    emis_lin: float

    def validate(self) -> None:
        if not 0 < self.p_min <= self.p_max:
            raise ConfigError(f"{self.name}: need 0 < p_min <= p_max")
        if not 0 < self.ramp_coeff <= 1:
            raise ConfigError(f"{self.name}: ramp_coeff must lie in (0, 1]")
        if self.t_on_min < 1 or self.t_off_min < 1:
            raise ConfigError(f"{self.name}: minimum on/off times must be >= 1")
        for attr in ("c_su", "c_sd", "fuel_quad", "fuel_lin", "maint_lin", "emis_lin"):
            if getattr(self, attr) < 0:
                raise ConfigError(f"{self.name}: {attr} must be nonnegative")

    def fuel(self, p: float) -> float:
        return self.fuel_quad * p * p + self.fuel_lin * p

    @property
    def ramp(self) -> float:
        return self.ramp_coeff * self.p_max


@dataclass(frozen=True)
class CgState:
    u_prev: int
    p_prev: float
    t_on: int
    t_off: int

    def validate(self, spec: CgSpec | None = None) -> None:
        if (self.t_on > 0) == (self.t_off > 0):
            raise ModelInputError("exactly one of t_on, t_off must be positive")
        if (self.u_prev == 1) != (self.t_on >= 1):
            raise ModelInputError("u_prev must be 1 iff t_on >= 1")
        if self.u_prev == 0 and self.p_prev != 0:
            raise ModelInputError("an off unit must have p_prev = 0")
        if spec is not None and self.u_prev == 1 and not (
                spec.p_min - 1e-6 <= self.p_prev <= spec.p_max + 1e-6):
            raise ModelInputError(f"{spec.name}: p_prev outside [p_min, p_max]")

    @classmethod
    def initial(cls, spec: CgSpec) -> "CgState":
        """Off long enough that no minimum-off row binds."""
        return cls(u_prev=0, p_prev=0.0, t_on=0, t_off=spec.t_off_min)

    def advance(self, u: int, p: float) -> "CgState":
        if u:
            return CgState(1, float(p), self.t_on + 1 if self.u_prev else 1, 0)
        return CgState(0, 0.0, 0, self.t_off + 1 if not self.u_prev else 1)


@dataclass(frozen=True)
class EssSpec:
    name: str
    e_cap: float
    s_min: float
    s_max: float
    p_c_max: float
    p_d_max: float
    eta_c: float
    eta_d: float
    unit_cost: float = 0.25
    gamma: float = 0.5
    soc0: float = 0.5
    aging_segments: tuple = AGING_SEGMENTS

    @property
    def module_count(self) -> int:
        return int(round(self.e_cap / MODULE_CAPACITY_KWH))

    def validate(self) -> None:
        if not 0 < self.s_min < self.s_max <= 1:
            raise ConfigError(f"{self.name}: need 0 < s_min < s_max <= 1")
        if self.p_c_max <= 0 or self.p_d_max <= 0 or self.e_cap <= 0:
            raise ConfigError(f"{self.name}: capacity and rate limits must be positive")
        if not (0 < self.eta_c <= 1 and 0 < self.eta_d <= 1):
            raise ConfigError(f"{self.name}: efficiencies must lie in (0, 1]")
        if not 0 <= self.gamma <= 1 or self.unit_cost < 0:
            raise ConfigError(f"{self.name}: need gamma in [0,1] and unit_cost >= 0")
        if self.module_count <= 0:
            raise ConfigError(f"{self.name}: module count must be positive")
        if len(self.aging_segments) < 1:
            raise ConfigError(f"{self.name}: at least one aging segment is required")
        if not self.s_min <= self.soc0 <= self.s_max:
            raise ConfigError(f"{self.name}: initial SOC outside [s_min, s_max]")

    @property
    def aging_scale(self) -> float:
        return self.unit_cost / (0.8 * self.e_cap)


@dataclass(frozen=True)
class EssState:
    soc: float

    def validate(self, spec: EssSpec) -> None:
        if not spec.s_min - 1e-9 <= self.soc <= spec.s_max + 1e-9:
            raise ModelInputError(f"{spec.name}: SOC {self.soc} outside [s_min, s_max]")


def tou_prices(peak=0.232, mid=0.103, off=0.056) -> tuple[float, ...]:
    """Hourly purchase prices: peak 12-18 h, mid-peak 8-12 h and 18-20 h."""
    out = []
    for h in range(24):
        if 12 <= h < 18:
            out.append(peak)
        elif 8 <= h < 12 or 18 <= h < 20:
            out.append(mid)
        else:
            out.append(off)
    return tuple(out)


@dataclass(frozen=True)
class MarketSpec:
    buy_price: tuple = field(default_factory=tou_prices)
    sell_price: tuple = field(default_factory=lambda: tuple(0.6 * c for c in tou_prices()))
    p_p_max: float = 1000.0
    p_s_max: float = 1000.0

    def validate(self) -> None:
        if len(self.buy_price) != len(self.sell_price) or not self.buy_price:
            raise ConfigError("market: buy and sell price profiles must have equal length")
        for cp, cs in zip(self.buy_price, self.sell_price):
            if not 0 < cs < cp:
                raise ConfigError("market: need 0 < sell price < buy price in every slot")
        if self.p_p_max <= 0 or self.p_s_max <= 0:
            raise ConfigError("market: transaction limits must be positive")

    def buy(self, t: int) -> float:
        return self.buy_price[t % len(self.buy_price)]

    def sell(self, t: int) -> float:
        return self.sell_price[t % len(self.sell_price)]

    @property
    def c_p_max(self) -> float:
        return max(self.buy_price)

    @property
    def c_s_min(self) -> float:
        return min(self.sell_price)


@dataclass(frozen=True)
class QosSpec:
    alpha_avg: float = 0.3
    alpha_max: float = 0.4
    shortage_price: float = 0.06
    surplus_price: float = 0.07
    emission_cap: float = 1337.6
    reserve: float = 150.0
    d_e_min: float = 10.0
    reserve_mode: str = "literal"

    def validate(self) -> None:
        if not 0 <= self.alpha_avg <= self.alpha_max < 1:
            raise ConfigError("qos: need 0 <= alpha_avg <= alpha_max < 1")
        if self.d_e_min <= 0:
            raise ConfigError("qos: d_e_min must be positive")
        if self.shortage_price < 0 or self.surplus_price < 0:
            raise ConfigError("qos: shortage/surplus prices must be nonnegative")
        if self.reserve_mode not in ("literal", "committed"):
            raise ConfigError("qos: reserve_mode must be 'literal' or 'committed'")


@dataclass(frozen=True)
class AlgoSpec:
    v_override: float | None = None
    v_scale: float = 1.0
    fuel_segments: int = 8
    aging_segments: int = 8
    uc_gap_target: float = 0.02
    uc_time_limit: float = 600.0
    uc_backend: str = "native"
    p1_backend: str = "native"

    def validate(self) -> None:
        if self.v_override is not None and self.v_override <= 0:
            raise ConfigError("algo: V must be positive")
        if self.v_scale <= 0:
            raise ConfigError("algo: v_scale must be positive")
        if self.fuel_segments < 1 or self.aging_segments < 1:
            raise ConfigError("algo: PWL segment counts must be >= 1")
        for b in (self.uc_backend, self.p1_backend):
            if b not in ("native", "highs"):
                raise ConfigError(f"algo: unknown solver backend {b!r}")


@dataclass(frozen=True)
class MicrogridConfig:
    cgs: tuple
    esss: tuple
    market: MarketSpec = field(default_factory=MarketSpec)
    qos: QosSpec = field(default_factory=QosSpec)
    algo: AlgoSpec = field(default_factory=AlgoSpec)

    def validate(self) -> "MicrogridConfig":
        if not self.cgs:
            raise ConfigError("at least one CG is required")
        for spec in (*self.cgs, *self.esss):
            spec.validate()
        self.market.validate()
        self.qos.validate()
        self.algo.validate()
        names = [s.name for s in (*self.cgs, *self.esss)]
        if len(set(names)) != len(names):
            raise ConfigError("component names must be unique")
        return self

    def replace(self, **sections) -> "MicrogridConfig":
        return dataclasses.replace(self, **sections)

    def with_qos(self, **kw) -> "MicrogridConfig":
        return dataclasses.replace(self, qos=dataclasses.replace(self.qos, **kw))

    def with_algo(self, **kw) -> "MicrogridConfig":
        return dataclasses.replace(self, algo=dataclasses.replace(self.algo, **kw))

    @property
    def total_cg_capacity(self) -> float:
        return sum(g.p_max for g in self.cgs)


DEFAULT_CGS = (
    CgSpec("CG1", 90, 600, 0.60, 2, 2, 49.2, 49.2, 1.72e-6, 0.055, 0.026, 0.475),
    CgSpec("CG2", 200, 1000, 0.55, 3, 3, 79.7, 79.7, 1.66e-6, 0.053, 0.025, 0.472),
    CgSpec("CG3", 350, 1400, 0.50, 4, 4, 108.1, 108.1, 1.59e-6, 0.051, 0.024, 0.465),
)

DEFAULT_ESSS = (
    EssSpec("ESS1", 480, 0.2, 0.9, 34, 25, 0.82, 0.88, soc0=0.5),
    EssSpec("ESS2", 720, 0.2, 0.9, 49, 37, 0.85, 0.90, soc0=0.6),
)


def default_config() -> MicrogridConfig:
    """The three-CG, two-ESS microgrid with the published parameters."""
    cap = sum(g.p_max for g in DEFAULT_CGS)
    emis = 0.95 * sum(g.emis_lin * g.p_max for g in DEFAULT_CGS)
    qos = QosSpec(emission_cap=round(emis, 6), reserve=0.05 * cap)
    return MicrogridConfig(DEFAULT_CGS, DEFAULT_ESSS, MarketSpec(), qos).validate()


# --------------------------------------------------------------------------
# observations and decisions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SlotObservation:
    """True values for one slot together with one forecast of them."""

    d_ie: float
    d_e: float
    p_rg: float
    d_ie_hat: float
    d_e_hat: float
    p_rg_hat: float
    delta_ie: float = 0.0
    delta_e: float = 0.0
    delta_rg: float = 0.0

    @classmethod
    def exact(cls, d_ie: float, d_e: float, p_rg: float) -> "SlotObservation":
        return cls(d_ie, d_e, p_rg, d_ie, d_e, p_rg)

    @property
    def d_net(self) -> float:
        return self.d_ie + self.d_e - self.p_rg

    @property
    def d_net_hat(self) -> float:
        return self.d_ie_hat + self.d_e_hat - self.p_rg_hat

    @property
    def delta_net(self) -> float:
        return self.delta_ie + self.delta_e + self.delta_rg

    def validate(self, d_e_min: float = 0.0) -> None:
        vals = (self.d_ie, self.d_e, self.p_rg, self.d_ie_hat, self.d_e_hat, self.p_rg_hat,
                self.delta_ie, self.delta_e, self.delta_rg)
        if any(v < 0 or not math.isfinite(v) for v in vals):
            raise ModelInputError("observation quantities must be finite and nonnegative")
        if self.d_e < d_e_min or self.d_e_hat < d_e_min:
            raise ModelInputError(
                f"elastic demand below d_e_min={d_e_min} (unbiased bounded-error load model "
                "requires d_e >= d_e_min > 0)")
        for hat, true, delta, name in ((self.d_ie_hat, self.d_ie, self.delta_ie, "d_ie"),
                                       (self.d_e_hat, self.d_e, self.delta_e, "d_e"),
                                       (self.p_rg_hat, self.p_rg, self.delta_rg, "p_rg")):
            if abs(hat - true) > delta + 1e-9 * max(1.0, abs(true)):
                raise ModelInputError(f"|{name}_hat - {name}| exceeds its error bound")


@dataclass
class SlotDecision:
    """All decision variables of one slot."""

    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    p_c: np.ndarray
    p_d: np.ndarray
    v_c: np.ndarray
    p_p: float
    p_s: float
    w: float

    @property
    def p_disp(self) -> float:
        return dispatchable_supply(self.p, self.p_c, self.p_d, self.p_p, self.p_s)

    @classmethod
    def idle(cls, n_cg: int, n_ess: int) -> "SlotDecision":
        z = np.zeros
        return cls(z(n_cg, int), z(n_cg, int), z(n_cg), z(n_ess), z(n_ess), np.ones(n_ess, int),
                   0.0, 0.0, 0.0)


# --------------------------------------------------------------------------
# evaluation functions
# --------------------------------------------------------------------------

def cg_cost(spec: CgSpec, u_prev: int, u: int, v: int, p: float) -> float:
    """Start-up, shut-down, fuel and maintenance cost of one CG in one slot."""
    if v > u_prev or v > u:
        raise ModelInputError("need v <= u_prev and v <= u")
    if u == 0 and p > TOL:
        raise ModelInputError(f"{spec.name}: positive output while off")
    if u == 1 and not spec.p_min - 1e-6 <= p <= spec.p_max + 1e-6:
        raise ModelInputError(f"{spec.name}: output {p} outside [p_min, p_max]")
    return (spec.c_su * (u - v) + spec.c_sd * (u_prev - v)
            + spec.fuel(p) + spec.maint_lin * p)


def cg_emission(spec: CgSpec, u: int, p: float) -> float:
    return u * spec.emis_lin * p


def soc_change(spec: EssSpec, p_c: float, p_d: float) -> float:
    return (spec.eta_c * p_c - p_d / spec.eta_d) / spec.e_cap


def ess_soc_update(spec: EssSpec, soc: float, p_c: float, p_d: float) -> float:
    if p_c > TOL and p_d > TOL:
        raise ModelInputError(f"{spec.name}: simultaneous charge and discharge")
    if p_c < -TOL or p_d < -TOL:
        raise ModelInputError(f"{spec.name}: negative rates")
    return soc + soc_change(spec, p_c, p_d)


def aging_terms(spec: EssSpec, p_c: float, p_d: float) -> list[float]:
    """The per-segment expressions whose maximum sets the aging cost."""
    n = spec.module_count
    g = spec.gamma
    return [g * spec.eta_c * (1000 * a * p_c * p_c + n * b * p_c)
            + (1 - g) * (1000 * a * p_d * p_d + n * b * p_d) / spec.eta_d
            for a, b in spec.aging_segments]


def ess_aging_cost(spec: EssSpec, p_c: float, p_d: float) -> float:
    if p_c < -TOL or p_d < -TOL:
        raise ModelInputError(f"{spec.name}: negative rates")
    p_c, p_d = max(p_c, 0.0), max(p_d, 0.0)
    if p_c == 0.0 and p_d == 0.0:
        return 0.0
    return spec.aging_scale * max(aging_terms(spec, p_c, p_d))


def market_cost(spec: MarketSpec, t: int, p_p: float, p_s: float) -> float:
    if not (-TOL <= p_p <= spec.p_p_max + 1e-6 and -TOL <= p_s <= spec.p_s_max + 1e-6):
        raise ModelInputError("trade outside transaction limits")
    return spec.buy(t) * p_p - spec.sell(t) * p_s


def dispatchable_supply(p_cg: Sequence[float], p_c: Sequence[float], p_d: Sequence[float],
                        p_p: float, p_s: float) -> float:
    return float(np.sum(p_cg) + np.sum(p_d) - np.sum(p_c) + p_p - p_s)


def disp_bounds(obs: SlotObservation, qos: QosSpec,
                alpha: float | None = None) -> tuple[float, float]:
    """Lower and upper bounds on dispatchable supply from the forecast.

    ``alpha`` overrides the per-slot curtailment ceiling (the day-ahead stage
    passes ``alpha_avg``).
    """
    a = qos.alpha_max if alpha is None else alpha
    upper = obs.d_net_hat + obs.delta_net
    lower = upper - a * (obs.d_e_hat + obs.delta_e)
    return lower, upper


def shortage_surplus_cost(qos: QosSpec, w: float, p_disp: float, d_net_hat: float) -> float:
    surplus = p_disp - d_net_hat + w
    if w < -1e-9 or surplus < -1e-6 * max(1.0, abs(d_net_hat)):
        raise ModelInputError("need w >= 0 and w >= d_net_hat - p_disp")
    return qos.shortage_price * w + qos.surplus_price * max(surplus, 0.0)


def slot_cost_J(dec: SlotDecision, u_prev: Sequence[int], obs: SlotObservation, t: int,
                config: MicrogridConfig, breakdown: bool = False):
    """Operating cost of one slot evaluated against the forecast net demand."""
    parts = {"cg": 0.0, "ess": 0.0, "market": 0.0, "shortage_surplus": 0.0}
    for i, spec in enumerate(config.cgs):
        parts["cg"] += cg_cost(spec, int(u_prev[i]), int(dec.u[i]), int(dec.v[i]), dec.p[i])
    for i, spec in enumerate(config.esss):
        parts["ess"] += ess_aging_cost(spec, dec.p_c[i], dec.p_d[i])
    parts["market"] = market_cost(config.market, t, dec.p_p, dec.p_s)
    parts["shortage_surplus"] = shortage_surplus_cost(config.qos, dec.w, dec.p_disp,
                                                      obs.d_net_hat)
    total = sum(parts.values())
    return (total, parts) if breakdown else total
