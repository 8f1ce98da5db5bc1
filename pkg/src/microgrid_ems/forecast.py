"""Synthetic traces and bounded, unbiased forecast errors.

Errors are uniform on ``[-delta, delta]`` with ``delta`` proportional to the
slot-to-slot change of the true value and growing with the lead time. Every
draw comes from its own stream keyed by ``(seed, slot, quantity, lead)`` so
paired scenarios see the same randomness.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, TextIO

import numpy as np

from .model import ModelInputError, SlotObservation

log = logging.getLogger(__name__)

QUANTITIES = ("ie", "e", "rg")
_QCODE = {q: k for k, q in enumerate(QUANTITIES)}

WIND_PEAK_KW = 1200.0
LOAD_PEAK_KW = 3000.0

TRUTH_COLUMNS = ("slot_index", "d_ie_kw", "d_e_kw", "p_rg_kw")
FORECAST_COLUMNS = ("d_ie_hat_kw", "d_e_hat_kw", "p_rg_hat_kw",
                    "delta_ie_kw", "delta_e_kw", "delta_rg_kw")


class TraceError(ValueError):
    """Malformed or inconsistent trace data."""


def linear_lead_multiplier(lead: int) -> float:
    """1 at one slot ahead, 2 at 24 slots ahead, linear in between."""
    return 1.0 + (min(max(lead, 1), 24) - 1) / 23.0


@dataclass(frozen=True)
class ErrorModel:
    coeff_ie: float = 0.05
    coeff_e: float = 0.10
    coeff_rg: float = 0.15
    lead_multiplier: Callable[[int], float] = linear_lead_multiplier
    cap_lo: float = 0.8
    cap_hi: float = 1.2
    cap_mode: str = "value"  # "value" clamps the forecast, "delta" shrinks the bound
    rho: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if min(self.coeff_ie, self.coeff_e, self.coeff_rg) < 0:
            raise TraceError("error coefficients must be nonnegative")
        if abs(self.lead_multiplier(1) - 1.0) > 1e-12:
            raise TraceError("lead multiplier must equal 1 at lead 1")
        if not 0 < self.cap_lo < self.cap_hi:
            raise TraceError("need 0 < cap_lo < cap_hi")
        if self.cap_mode not in ("value", "delta"):
            raise TraceError(f"unknown cap mode {self.cap_mode!r}")
        if self.rho < 0:
            raise TraceError("rho must be nonnegative")

    def coeff(self, kind: str) -> float:
        return self.rho * {"ie": self.coeff_ie, "e": self.coeff_e, "rg": self.coeff_rg}[kind]

    def with_rho(self, rho: float) -> "ErrorModel":
        return replace(self, rho=rho)


def unit_draw(seed: int, slot: int, kind: str, lead: int) -> float:
    """Uniform draw on [-1, 1) from the stream keyed by its arguments."""
    rng = np.random.default_rng([seed, slot, _QCODE[kind], lead])
    return float(rng.uniform(-1.0, 1.0))


def make_forecast(value: float, value_prev: float, model: ErrorModel, lead: int, kind: str,
                  slot: int = 0, value_range: tuple[float, float] | None = None,
                  draw: float | None = None) -> tuple[float, float]:
    """Forecast of one quantity; returns ``(hat, delta)`` with ``|hat - value| <= delta``.

    Args:
        value: True value of the slot.
        value_prev: True value of the preceding slot.
        model: Error model (coefficients already scaled by ``rho``).
        lead: Lead time in slots, at least 1.
        kind: One of ``"ie"``, ``"e"``, ``"rg"``.
        slot: Slot index used to key the random stream.
        value_range: ``(min, max)`` of the true trace for the caps; no cap when omitted.
        draw: Unit draw in [-1, 1] overriding the keyed stream.
    """
    if lead < 1:
        raise TraceError("lead must be at least one slot")
    delta = model.coeff(kind) * model.lead_multiplier(lead) * abs(value - value_prev)
    if delta == 0.0:
        return float(value), 0.0
    if draw is None:
        draw = unit_draw(model.seed, slot, kind, lead)
    if value_range is None:
        return float(value + draw * delta), float(delta)
    lo, hi = model.cap_lo * value_range[0], model.cap_hi * value_range[1]
    if model.cap_mode == "delta":
        delta = max(min(delta, value - lo, hi - value), 0.0)
        return float(value + draw * delta), float(delta)
    raw = value + draw * delta
    hat = min(max(raw, lo), hi)
    if hat != raw:
        log.debug("forecast clamp active: %s slot %d lead %d", kind, slot, lead)
    # the true value lies inside the cap range, so clamping never widens the error
    return float(hat), float(delta)


@dataclass
class TraceSet:
    """True per-slot values plus an optional set of ingested hour-ahead forecasts."""

    d_ie: np.ndarray
    d_e: np.ndarray
    p_rg: np.ndarray
    source: str = "generated"
    seed: int | None = None
    hour_ahead: list[SlotObservation] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.d_ie = np.asarray(self.d_ie, dtype=float)
        self.d_e = np.asarray(self.d_e, dtype=float)
        self.p_rg = np.asarray(self.p_rg, dtype=float)
        if not len(self.d_ie) == len(self.d_e) == len(self.p_rg):
            raise TraceError("trace columns differ in length")

    @property
    def horizon(self) -> int:
        return len(self.d_ie)

    def truth(self, kind: str) -> np.ndarray:
        return {"ie": self.d_ie, "e": self.d_e, "rg": self.p_rg}[kind]

    def value_range(self, kind: str) -> tuple[float, float]:
        x = self.truth(kind)
        return float(x.min()), float(x.max())

    def exact(self, slot: int) -> SlotObservation:
        return SlotObservation.exact(self.d_ie[slot], self.d_e[slot], self.p_rg[slot])

    def observe(self, slot: int, lead: int, model: ErrorModel | None) -> SlotObservation:
        """Truth and a forecast issued ``lead`` slots ahead; exact when ``model`` is None."""
        if model is None:
            return self.exact(slot)
        if lead == 1 and self.hour_ahead is not None and model.rho == 1.0:
            return self.hour_ahead[slot]
        hats, deltas = [], []
        for kind in QUANTITIES:
            x = self.truth(kind)
            prev = x[slot - 1] if slot > 0 else x[slot]
            h, d = make_forecast(x[slot], prev, model, lead, kind, slot, self.value_range(kind))
            hats.append(h)
            deltas.append(d)
        return SlotObservation(self.d_ie[slot], self.d_e[slot], self.p_rg[slot], *hats, *deltas)

    def validate(self, d_e_min: float = 0.0) -> "TraceSet":
        if self.horizon == 0:
            raise TraceError("empty trace")
        for name, x in (("d_ie", self.d_ie), ("d_e", self.d_e), ("p_rg", self.p_rg)):
            bad = np.flatnonzero(~np.isfinite(x) | (x < 0))
            if bad.size:
                raise TraceError(f"{name}: negative or non-finite value at slot {bad[0]}")
        bad = np.flatnonzero(self.d_e < d_e_min)
        if bad.size:
            raise TraceError(
                f"d_e below d_e_min={d_e_min} at slot {bad[0]} (bounded-error load model "
                "requires elastic demand d_e >= d_e_min > 0)")
        if self.hour_ahead is not None:
            for t, obs in enumerate(self.hour_ahead):
                try:
                    obs.validate(d_e_min)
                except ModelInputError as exc:
                    raise TraceError(f"slot {t}: {exc}") from exc
        return self


def _scale_to_peak(x: np.ndarray, peak: float) -> np.ndarray:
    y = x * (peak / x.max())
    # guard against the last-ulp miss of the division
    y[int(np.argmax(y))] = peak
    return y


def generate_traces(horizon: int = 168, seed: int = 0, wind_peak: float = WIND_PEAK_KW,
                    load_peak: float = LOAD_PEAK_KW, inelastic_range=(0.70, 0.90)) -> TraceSet:
    """Week-style synthetic wind and load traces.

    Load follows a morning/evening double peak with mild day-to-day variation;
    wind follows a night-heavy diurnal cycle with smoothed noise. Both are
    scaled so their maxima equal the given peaks exactly.
    """
    if horizon < 24:
        raise TraceError("horizon must cover at least one day (24 slots)")
    rng = np.random.default_rng(seed)
    h = np.arange(horizon) % 24
    day = np.arange(horizon) // 24
    n_days = int(day[-1]) + 1
    day_level = 1.0 + 0.06 * rng.standard_normal(n_days)
    load = (0.55 + 0.30 * np.exp(-((h - 10.0) / 2.5) ** 2)
            + 0.40 * np.exp(-((h - 19.0) / 2.2) ** 2))
    load = load * day_level[day] * (1.0 + 0.03 * rng.standard_normal(horizon))
    load = _scale_to_peak(np.maximum(load, 0.05), load_peak)

    noise = rng.standard_normal(horizon + 4)
    smooth = np.convolve(noise, np.ones(5) / 5.0, mode="valid")[:horizon]
    wind = 0.55 + 0.22 * np.cos(2 * np.pi * (h - 3.0) / 24.0) + 0.35 * smooth
    wind = _scale_to_peak(np.maximum(wind, 0.03), wind_peak)

    frac = rng.uniform(inelastic_range[0], inelastic_range[1], horizon)
    d_ie = load * frac
    d_e = load - d_ie
    return TraceSet(d_ie, d_e, wind, source="generated", seed=seed,
                    meta={"wind_peak_kw": wind_peak, "load_peak_kw": load_peak})


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def export_csv(traces: TraceSet, target: str | Path | TextIO, include_forecasts: bool = False,
               model: ErrorModel | None = None) -> None:
    """Write the trace schema; forecast columns are hour-ahead draws from ``model``."""
    cols = list(TRUTH_COLUMNS) + (list(FORECAST_COLUMNS) if include_forecasts else [])
    own = isinstance(target, (str, Path))
    fh = open(target, "w", newline="") if own else target
    try:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(cols)
        for t in range(traces.horizon):
            row = [t, repr(float(traces.d_ie[t])), repr(float(traces.d_e[t])),
                   repr(float(traces.p_rg[t]))]
            if include_forecasts:
                o = traces.observe(t, 1, model or ErrorModel(seed=traces.seed or 0))
                row += [repr(float(v)) for v in (o.d_ie_hat, o.d_e_hat, o.p_rg_hat,
                                                 o.delta_ie, o.delta_e, o.delta_rg)]
            wr.writerow(row)
    finally:
        if own:
            fh.close()


def ingest_csv(source: str | Path | TextIO, d_e_min: float = 0.0) -> TraceSet:
    """Read and validate a trace CSV; forecast columns are optional."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text()
    else:
        text = source.read()
    if not text.strip():
        raise TraceError("empty input: no header and no rows")
    rd = csv.reader(io.StringIO(text))
    header = [c.strip() for c in next(rd)]
    missing = [c for c in TRUTH_COLUMNS if c not in header]
    if missing:
        raise TraceError(f"header missing columns {missing}")
    has_fc = all(c in header for c in FORECAST_COLUMNS)
    if not has_fc and any(c in header for c in FORECAST_COLUMNS):
        raise TraceError(f"forecast columns must be all present or all absent: {FORECAST_COLUMNS}")
    idx = {c: header.index(c) for c in header}
    rows = []
    for lineno, rec in enumerate(rd, start=2):
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) != len(header):
            raise TraceError(f"row {lineno}: expected {len(header)} fields, got {len(rec)}")
        vals = {}
        for c in header:
            try:
                vals[c] = float(rec[idx[c]])
            except ValueError:
                raise TraceError(f"row {lineno}, column {c}: not a number") from None
            if c != "slot_index" and (vals[c] < 0 or not math.isfinite(vals[c])):
                raise TraceError(f"row {lineno}, column {c}: negative or non-finite power")
        if vals["slot_index"] != len(rows):
            raise TraceError(f"row {lineno}: slot_index {vals['slot_index']:g} out of sequence")
        rows.append(vals)
    if not rows:
        raise TraceError("empty input: header but no rows")
    hour_ahead = None
    if has_fc:
        hour_ahead = [SlotObservation(r["d_ie_kw"], r["d_e_kw"], r["p_rg_kw"],
                                      r["d_ie_hat_kw"], r["d_e_hat_kw"], r["p_rg_hat_kw"],
                                      r["delta_ie_kw"], r["delta_e_kw"], r["delta_rg_kw"])
                      for r in rows]
    ts = TraceSet([r["d_ie_kw"] for r in rows], [r["d_e_kw"] for r in rows],
                  [r["p_rg_kw"] for r in rows], source="ingested", hour_ahead=hour_ahead)
    return ts.validate(d_e_min)
