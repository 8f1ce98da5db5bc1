"""TOML configuration files.

Sections map one-to-one onto the specification dataclasses::

    [qos]        alpha_avg, alpha_max, shortage_price, surplus_price, emission_cap (kg/h),
                 reserve (kW), d_e_min (kW), reserve_mode ("literal" | "committed")
    [algo]       v_override, v_scale, fuel_segments, aging_segments, uc_gap_target,
                 uc_time_limit (s), uc_backend, p1_backend ("native" | "highs")
    [market]     buy_price (24 values, $/kWh), sell_price, p_p_max (kW), p_s_max (kW)
    [forecast]   coeff_ie, coeff_e, coeff_rg, cap_lo, cap_hi, cap_mode
    [traces]     wind_peak (kW), load_peak (kW), inelastic_min, inelastic_max
    [[cgs]]      one table per generator, CgSpec field names
    [[esss]]     one table per storage unit, EssSpec field names

Omitted sections and keys keep their defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .forecast import LOAD_PEAK_KW, WIND_PEAK_KW, ErrorModel, TraceError
from .model import (AGING_SEGMENTS, DEFAULT_CGS, DEFAULT_ESSS, AlgoSpec, CgSpec, ConfigError,
                    EssSpec, MarketSpec, MicrogridConfig, QosSpec, default_config)

_FORECAST_KEYS = ("coeff_ie", "coeff_e", "coeff_rg", "cap_lo", "cap_hi", "cap_mode")


@dataclass(frozen=True)
class TraceParams:
    wind_peak: float = WIND_PEAK_KW
    load_peak: float = LOAD_PEAK_KW
    inelastic_min: float = 0.70
    inelastic_max: float = 0.90

    def validate(self) -> None:
        if self.wind_peak < 0 or self.load_peak <= 0:
            raise ConfigError("traces: peaks must be nonnegative (load positive)")
        if not 0 <= self.inelastic_min <= self.inelastic_max < 1:
            raise ConfigError("traces: need 0 <= inelastic_min <= inelastic_max < 1")


@dataclass(frozen=True)
class Settings:
    microgrid: MicrogridConfig = field(default_factory=default_config)
    forecast: ErrorModel = field(default_factory=ErrorModel)
    traces: TraceParams = field(default_factory=TraceParams)

    def validate(self) -> "Settings":
        self.microgrid.validate()
        try:
            self.forecast.validate()
        except TraceError as exc:
            raise ConfigError(f"forecast: {exc}") from exc
        self.traces.validate()
        return self


def _build(cls, data: dict, section: str, base=None):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"[{section}]: unknown keys {sorted(unknown)}")
    try:
        return dataclasses.replace(base, **data) if base is not None else cls(**data)
    except TypeError as exc:
        raise ConfigError(f"[{section}]: {exc}") from exc


def settings_from_dict(data: dict) -> Settings:
    known = {"qos", "algo", "market", "forecast", "traces", "cgs", "esss"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")
    base = default_config()
    cgs = tuple(_build(CgSpec, d, "cgs") for d in data["cgs"]) if "cgs" in data else DEFAULT_CGS
    esss = DEFAULT_ESSS
    if "esss" in data:
        esss = tuple(_build(EssSpec, {**d, "aging_segments": tuple(
            tuple(s) for s in d.get("aging_segments", AGING_SEGMENTS))}, "esss")
            for d in data["esss"])
    market = base.market
    if "market" in data:
        m = dict(data["market"])
        for k in ("buy_price", "sell_price"):
            if k in m:
                m[k] = tuple(float(x) for x in m[k])
        market = _build(MarketSpec, m, "market", base.market)
    qos = _build(QosSpec, data.get("qos", {}), "qos", base.qos)
    algo = _build(AlgoSpec, data.get("algo", {}), "algo", base.algo)
    fc = data.get("forecast", {})
    bad = set(fc) - set(_FORECAST_KEYS)
    if bad:
        raise ConfigError(f"[forecast]: unknown keys {sorted(bad)}")
    forecast = dataclasses.replace(ErrorModel(), **fc)
    traces = _build(TraceParams, data.get("traces", {}), "traces")
    cfg = MicrogridConfig(cgs, esss, market, qos, algo)
    return Settings(cfg, forecast, traces).validate()


def settings_to_dict(settings: Settings) -> dict:
    cfg = settings.microgrid
    out = {
        "qos": dataclasses.asdict(cfg.qos),
        "algo": {k: v for k, v in dataclasses.asdict(cfg.algo).items() if v is not None},
        "market": {**dataclasses.asdict(cfg.market),
                   "buy_price": list(cfg.market.buy_price),
                   "sell_price": list(cfg.market.sell_price)},
        "forecast": {k: getattr(settings.forecast, k) for k in _FORECAST_KEYS},
        "traces": dataclasses.asdict(settings.traces),
        "cgs": [dataclasses.asdict(g) for g in cfg.cgs],
        "esss": [{**dataclasses.asdict(e),
                  "aging_segments": [list(s) for s in e.aging_segments]} for e in cfg.esss],
    }
    return out


def load_settings(path: str | Path | None) -> Settings:
    if path is None:
        return Settings().validate()
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return settings_from_dict(data)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return repr(float(v)) if isinstance(v, float) else str(v)


def dump_toml(settings: Settings) -> str:
    """Serialize settings to TOML text that loads back to equal settings."""
    d = settings_to_dict(settings)
    lines = []
    for section in ("qos", "algo", "market", "forecast", "traces"):
        lines.append(f"[{section}]")
        lines += [f"{k} = {_toml_value(v)}" for k, v in d[section].items()]
        lines.append("")
    for section in ("cgs", "esss"):
        for item in d[section]:
            lines.append(f"[[{section}]]")
            lines += [f"{k} = {_toml_value(v)}" for k, v in item.items()]
            lines.append("")
    return "\n".join(lines)
