import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from microgrid_ems.forecast import (ErrorModel, TraceError, TraceSet, export_csv,
                                    generate_traces, ingest_csv, linear_lead_multiplier,
                                    make_forecast, unit_draw)

MODEL = ErrorModel()


class TestMakeForecast:
    def test_no_change_no_error(self):
        assert make_forecast(420.0, 420.0, MODEL, 1, "ie") == (420.0, 0.0)

    def test_delta_from_change(self):
        hat, delta = make_forecast(1100.0, 1000.0, MODEL, 1, "ie", slot=3)
        assert delta == pytest.approx(5.0)
        assert 1095.0 <= hat <= 1105.0

    def test_clamp_to_cap(self):
        m = ErrorModel(coeff_e=0.5)
        hat, delta = make_forecast(100.0, 0.0, m, 1, "e", value_range=(0.0, 100.0), draw=1.0)
        assert hat == pytest.approx(120.0)
        assert delta == pytest.approx(50.0)

    def test_delta_cap_mode_shrinks_bound(self):
        m = ErrorModel(coeff_e=0.5, cap_mode="delta")
        hat, delta = make_forecast(100.0, 0.0, m, 1, "e", value_range=(0.0, 100.0), draw=1.0)
        assert delta == pytest.approx(20.0) and hat == pytest.approx(120.0)

    def test_lead_must_be_positive(self):
        with pytest.raises(TraceError):
            make_forecast(1.0, 0.0, MODEL, 0, "e")

    def test_unbiased(self):
        # 1e5 draws: the 1%-of-delta tolerance is about 5.5 standard errors
        errs = np.array([make_forecast(500.0, 400.0, ErrorModel(seed=s), 1, "e", slot=7)[0] - 500.0
                         for s in range(100_000)])
        assert abs(errs.mean()) <= 0.01 * 10.0
        assert np.abs(errs).max() <= 10.0

    @given(value=st.floats(0, 3000), prev=st.floats(0, 3000), lead=st.integers(1, 30),
           kind=st.sampled_from(["ie", "e", "rg"]), slot=st.integers(0, 500),
           mode=st.sampled_from(["value", "delta"]))
    def test_bounded(self, value, prev, lead, kind, slot, mode):
        m = ErrorModel(cap_mode=mode, seed=3)
        rng = (min(value, prev), max(value, prev))
        hat, delta = make_forecast(value, prev, m, lead, kind, slot, rng)
        assert abs(hat - value) <= delta
        assert hat >= 0

    @given(change=st.floats(0, 1000), lead=st.integers(1, 30))
    def test_monotone_in_lead(self, change, lead):
        d1 = make_forecast(change, 0.0, MODEL, lead, "rg")[1]
        d2 = make_forecast(change, 0.0, MODEL, lead + 1, "rg")[1]
        assert d2 >= d1

    def test_draws_are_keyed(self):
        assert unit_draw(1, 2, "e", 3) == unit_draw(1, 2, "e", 3)
        assert unit_draw(1, 2, "e", 3) != unit_draw(1, 2, "ie", 3)


def test_lead_multiplier_endpoints():
    assert linear_lead_multiplier(1) == 1.0
    assert linear_lead_multiplier(24) == 2.0
    assert linear_lead_multiplier(12) == pytest.approx(1 + 11 / 23)


def test_error_model_validation():
    with pytest.raises(TraceError):
        ErrorModel(coeff_e=-0.1).validate()
    with pytest.raises(TraceError):
        ErrorModel(cap_lo=1.3).validate()
    with pytest.raises(TraceError):
        ErrorModel(lead_multiplier=lambda k: 2.0).validate()
    assert ErrorModel().with_rho(2.0).coeff("e") == pytest.approx(0.2)


class TestGenerate:
    def test_deterministic(self):
        a, b = generate_traces(168, seed=4), generate_traces(168, seed=4)
        for k in ("ie", "e", "rg"):
            assert a.truth(k).tobytes() == b.truth(k).tobytes()

    def test_seed_changes_traces(self):
        assert not np.array_equal(generate_traces(48, 1).p_rg, generate_traces(48, 2).p_rg)

    @pytest.mark.parametrize("seed", range(5))
    def test_scaling_and_fractions(self, seed):
        ts = generate_traces(168, seed=seed)
        assert ts.p_rg.max() == 1200.0
        assert (ts.d_ie + ts.d_e).max() == pytest.approx(3000.0, rel=1e-12)
        frac = ts.d_ie / (ts.d_ie + ts.d_e)
        assert frac.min() >= 0.70 - 1e-12 and frac.max() <= 0.90 + 1e-12
        assert ts.validate(10.0) is ts

    def test_short_horizon_rejected(self):
        with pytest.raises(TraceError):
            generate_traces(23)

    def test_forecast_errors_centered(self):
        ts = generate_traces(168, seed=0)
        for kind, attr in (("ie", "d_ie"), ("e", "d_e"), ("rg", "p_rg")):
            errs, deltas = [], []
            for t in range(ts.horizon):
                o = ts.observe(t, 1, ErrorModel(seed=0))
                errs.append(getattr(o, attr + "_hat") - getattr(o, attr))
                deltas.append(getattr(o, "delta_" + kind))
            sigma = np.sqrt(np.mean(np.square(deltas)) / 3)
            assert abs(np.mean(errs)) <= 3 * sigma / np.sqrt(ts.horizon)

    def test_exact_observation(self):
        ts = generate_traces(24, seed=0)
        o = ts.observe(5, 3, None)
        assert o.d_net == o.d_net_hat and o.delta_net == 0


class TestCsv:
    def test_round_trip(self):
        ts = generate_traces(168, seed=2)
        buf = io.StringIO()
        export_csv(ts, buf)
        back = ingest_csv(io.StringIO(buf.getvalue()), d_e_min=10.0)
        assert back.horizon == 168 and back.source == "ingested"
        assert np.array_equal(back.d_ie, ts.d_ie) and np.array_equal(back.p_rg, ts.p_rg)
        assert back.hour_ahead is None

    def test_round_trip_with_forecasts(self, tmp_path):
        ts = generate_traces(48, seed=1)
        export_csv(ts, tmp_path / "t.csv", include_forecasts=True, model=ErrorModel(seed=1))
        back = ingest_csv(tmp_path / "t.csv")
        assert back.observe(10, 1, ErrorModel(seed=1)) == ts.observe(10, 1, ErrorModel(seed=1))

    def test_empty(self):
        with pytest.raises(TraceError, match="empty"):
            ingest_csv(io.StringIO(""))
        with pytest.raises(TraceError, match="empty"):
            ingest_csv(io.StringIO("slot_index,d_ie_kw,d_e_kw,p_rg_kw\n"))

    def test_negative_power(self):
        text = "slot_index,d_ie_kw,d_e_kw,p_rg_kw\n0,100,50,-3\n"
        with pytest.raises(TraceError, match="row 2, column p_rg_kw"):
            ingest_csv(io.StringIO(text))

    def test_small_elastic_demand(self):
        text = "slot_index,d_ie_kw,d_e_kw,p_rg_kw\n0,100,50,0\n1,100,4,0\n"
        with pytest.raises(TraceError, match="d_e_min"):
            ingest_csv(io.StringIO(text), d_e_min=10.0)

    def test_schema_errors(self):
        with pytest.raises(TraceError, match="missing"):
            ingest_csv(io.StringIO("slot_index,d_ie_kw,p_rg_kw\n0,1,2\n"))
        with pytest.raises(TraceError, match="all present"):
            ingest_csv(io.StringIO("slot_index,d_ie_kw,d_e_kw,p_rg_kw,d_e_hat_kw\n0,1,20,2,3\n"))
        with pytest.raises(TraceError, match="not a number"):
            ingest_csv(io.StringIO("slot_index,d_ie_kw,d_e_kw,p_rg_kw\n0,1,x,2\n"))
        with pytest.raises(TraceError, match="sequence"):
            ingest_csv(io.StringIO("slot_index,d_ie_kw,d_e_kw,p_rg_kw\n1,1,20,2\n"))

    def test_column_length_mismatch(self):
        with pytest.raises(TraceError):
            TraceSet([1, 2], [1], [1, 2])
