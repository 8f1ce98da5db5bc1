import dataclasses
import io
import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import FROZEN_BETA as BETA
from conftest import FROZEN_V_MAX as V_MAX
from conftest import lp_oracle
from microgrid_ems.dispatch import (LyapunovParams, QueueIdentityError, QueueState, build_p1,
                                    compute_B, compute_beta, compute_v_max, decision_log_header,
                                    dispatch_slot, marginal_aging_bounds, p_caps_from_tau,
                                    update_queue_q, update_queue_s, v_max_ratio,
                                    write_decision_log_row)
from microgrid_ems.milp import solve_mip
from microgrid_ems.model import (CgState, ModelInputError, SlotObservation, default_config,
                                 ess_aging_cost, ess_soc_update)

CFG = default_config()
ESS1, ESS2 = CFG.esss
PARAMS = LyapunovParams.from_config(CFG)



def test_v_max_and_beta_frozen():
    assert compute_v_max(CFG.esss, CFG.market) == pytest.approx(V_MAX, rel=1e-9)
    beta = [compute_beta(e, V_MAX, CFG.market.c_p_max) for e in CFG.esss]
    assert beta == pytest.approx(BETA, rel=1e-9)
    assert PARAMS.V == PARAMS.V_max


def test_beta_small_v_limit():
    assert compute_beta(ESS1, 0.0, 0.232) == pytest.approx(0.2 + 25 / (0.88 * 480), rel=1e-12)
    assert compute_beta(ESS1, 0.0, 0.232) == pytest.approx(0.259186, abs=1e-6)
    assert compute_beta(ESS2, 0.0, 0.232) == pytest.approx(0.257098, abs=1e-6)


class TestMarginalAging:
    def test_zero_cost(self):
        assert marginal_aging_bounds(dataclasses.replace(ESS1, unit_cost=0.0)) == (0.0, 0.0)

    @pytest.mark.parametrize("spec", [ESS1, ESS2])
    def test_matches_sampled_derivative(self, spec):
        h = 1e-3
        xs = np.linspace(h, spec.p_c_max, 2000)
        dc = max((ess_aging_cost(spec, x + h, 0) - ess_aging_cost(spec, x - h, 0)) / (2 * h)
                 for x in xs)
        xs = np.linspace(h, spec.p_d_max, 2000)
        dd = max((ess_aging_cost(spec, 0, x + h) - ess_aging_cost(spec, 0, x - h)) / (2 * h)
                 for x in xs)
        assert marginal_aging_bounds(spec) == pytest.approx((dc, dd), rel=1e-9)

    def test_linear_segment(self):
        spec = dataclasses.replace(ESS1, aging_segments=((0.0, 0.01),))
        n = spec.module_count
        c, d = marginal_aging_bounds(spec)
        assert c == pytest.approx(spec.aging_scale * 0.5 * spec.eta_c * n * 0.01)
        assert d == pytest.approx(spec.aging_scale * 0.5 * n * 0.01 / spec.eta_d)


class TestVMax:
    def test_zero_numerator_rejected(self):
        spec = dataclasses.replace(ESS1, e_cap=100.0, s_min=0.2, s_max=0.4, p_c_max=10.0,
                                   p_d_max=10.0, eta_c=1.0, eta_d=1.0, soc0=0.3)
        with pytest.raises(ModelInputError):
            compute_v_max([spec], CFG.market)

    def test_identical_units(self):
        assert compute_v_max([ESS2, ESS2], CFG.market) == v_max_ratio(ESS2, CFG.market)

    def test_v_override(self):
        p = LyapunovParams.from_config(CFG.with_algo(v_override=0.01))
        assert p.V == 0.01 and p.V_max == pytest.approx(V_MAX, rel=1e-9)


def test_drift_constant_positive():
    assert compute_B(CFG, 200.0) > 0


class TestQueues:
    def _obs(self, ratio):
        return SlotObservation(0, 0, 0, 900, 100, 0), 1000 - ratio * 100

    def test_neutral_slot(self):
        obs, p = self._obs(0.3)
        assert update_queue_q(0.25, obs, p, 0.3) == pytest.approx(0.25)

    def test_growth(self):
        obs, p = self._obs(0.5)
        assert update_queue_q(0.1, obs, p, 0.3) == pytest.approx(0.3)

    def test_floor(self):
        obs, _ = self._obs(0)
        assert update_queue_q(0.1, obs, 1200, 0.3) == 0.0

    def test_zero_elastic_forecast_rejected(self):
        with pytest.raises(ModelInputError):
            update_queue_q(0.0, SlotObservation(0, 0, 0, 100, 0, 0), 50, 0.3)

    def test_idle_soc_queue(self):
        assert update_queue_s(-0.05, 0, 0, ESS1) == -0.05

    def test_charge_step(self):
        assert update_queue_s(0.0, 34, 0, ESS1) == pytest.approx(0.82 * 34 / 480)
        assert update_queue_s(0.0, 34, 0, ESS1) == pytest.approx(0.0580833333)

    def test_identity_breach_detected(self):
        with pytest.raises(QueueIdentityError):
            update_queue_s(0.0, 34, 0, ESS1, soc_new=0.9, beta=0.5)

    @given(soc=st.floats(0.2, 0.9), rate=st.floats(-37, 49), which=st.integers(0, 1))
    def test_identity(self, soc, rate, which):
        spec = CFG.esss[which]
        pc, pd = (min(rate, spec.p_c_max), 0.0) if rate >= 0 else (0.0, min(-rate, spec.p_d_max))
        beta = PARAMS.beta[which]
        S = update_queue_s(soc - beta, pc, pd, spec)
        assert abs(S + beta - ess_soc_update(spec, soc, pc, pd)) <= 1e-9


def _states(u, p_prev=None):
    out = []
    for i, g in enumerate(CFG.cgs):
        if u[i]:
            out.append(CgState(1, p_prev[i] if p_prev else g.p_min, 10, 0))
        else:
            out.append(CgState(0, 0.0, 0, 10))
    return out


def _dispatch(obs, u, slot=13, queues=None, tau=None, config=CFG, params=PARAMS, p_prev=None):
    queues = queues or QueueState(0.0, np.zeros(len(config.esss)))
    tau = tau if tau is not None else [5 * x for x in u]
    return dispatch_slot(config, params, queues, u, tau, slot, obs, _states(u, p_prev),
                         [e.soc0 for e in config.esss])


def test_idle_slot_costs_nothing():
    market = dataclasses.replace(CFG.market, sell_price=(0.01,) * 24)
    cfg = CFG.replace(market=market)
    res = _dispatch(SlotObservation.exact(0, 10, 10), [0, 0, 0], config=cfg)
    assert res.objective == pytest.approx(0.0, abs=1e-9)
    d = res.decision
    assert max(d.p_c.max(), d.p_d.max(), d.p_p, d.p_s, d.w) <= 1e-9


@pytest.mark.parametrize("seed", range(4))
def test_p1_matches_vc_enumeration(seed):
    rng = np.random.default_rng(seed)
    u = [1, int(rng.integers(0, 2)), 0]
    obs = SlotObservation(0, 0, 0, rng.uniform(300, 1500), rng.uniform(50, 400),
                          rng.uniform(0, 800), 30.0, 20.0, 40.0)
    queues = QueueState(float(rng.uniform(0, 2)), rng.uniform(-0.3, 0.3, 2))
    slot = int(rng.integers(0, 24))
    model, vm = build_p1(CFG, PARAMS, queues, u, [3, 3, 0], slot, obs, _states(u),
                         [0.5, 0.6])
    ref = min(lp_oracle(model, {vm.vc[0][0]: a, vm.vc[1][0]: b})
              for a, b in itertools.product((0.0, 1.0), repeat=2))
    sol = solve_mip(model)
    assert len(model.binaries) == 2
    assert sol.objective == pytest.approx(ref, rel=1e-7, abs=1e-9)


def test_large_shortage_queue_eliminates_curtailment():
    obs = SlotObservation.exact(1400, 600, 0)
    u = [1, 1, 0]
    ws = []
    for Q in (0.0, 0.5, 5.0, 50.0, 500.0):
        res = _dispatch(obs, u, queues=QueueState(Q, np.zeros(2)), p_prev=[600, 1000, 0])
        ws.append(res.decision.w)
    assert ws[0] > 1.0
    assert all(b <= a + 1e-6 for a, b in zip(ws, ws[1:]))
    assert ws[-1] == pytest.approx(0.0, abs=1e-6)


def test_surplus_renewables_sold_at_peak():
    res = _dispatch(SlotObservation.exact(100, 50, 1000), [0, 0, 0], slot=13)
    assert res.decision.p_s > 0 and res.decision.p_p == 0


def test_offpeak_deficit_bought():
    res = _dispatch(SlotObservation.exact(500, 100, 0), [1, 0, 0], slot=2)
    assert res.decision.p_p > 0 and res.decision.p_s == 0


def test_shutdown_ramp_cap():
    caps = p_caps_from_tau(CFG, [0, 0, 1])
    assert caps[2] == pytest.approx(700.0)
    res = _dispatch(SlotObservation.exact(1300, 300, 0), [0, 0, 1], tau=[0, 0, 1],
                    p_prev=[0, 0, 800])
    assert res.decision.p[2] <= 700 + 1e-6
    assert res.decision.p[2] == pytest.approx(700.0, abs=1e-5)


def test_argmin_invariant_under_v_scaling():
    obs = SlotObservation.exact(1200, 300, 200)
    u = [1, 1, 0]
    objs = []
    for scale in (1.0, 7.0):
        params = dataclasses.replace(PARAMS, V=PARAMS.V * scale)
        model, vm = build_p1(CFG, params, QueueState(0.0, np.zeros(2)), u, [4, 4, 0], 9, obs,
                             _states(u), [0.5, 0.6])
        objs.append((solve_mip(model), model))
    (a, ma), (b, mb) = objs
    assert b.objective == pytest.approx(7.0 * a.objective, rel=1e-7)
    # each optimum is optimal for the other scaling
    assert mb.objective_value(a.x) == pytest.approx(b.objective, rel=1e-7)
    assert ma.objective_value(b.x) == pytest.approx(a.objective, rel=1e-7)


def test_mutual_exclusion_at_optimum():
    rng = np.random.default_rng(7)
    for _ in range(15):
        obs = SlotObservation.exact(rng.uniform(200, 2000), rng.uniform(50, 500),
                                    rng.uniform(0, 1200))
        u = [1, int(rng.integers(0, 2)), int(rng.integers(0, 2))]
        q = QueueState(float(rng.uniform(0, 1)), rng.uniform(-0.4, 0.4, 2))
        d = _dispatch(obs, u, slot=int(rng.integers(0, 24)), queues=q).decision
        assert d.p_p * d.p_s <= 1e-9
        assert np.all(d.p_c * d.p_d <= 1e-9)


def test_decision_log_columns():
    res = _dispatch(SlotObservation.exact(800, 200, 100), [1, 0, 0])
    buf = io.StringIO()
    write_decision_log_row(buf, 13, res, QueueState(0.0, np.zeros(2)))
    assert len(buf.getvalue().rstrip("\n").split("\t")) == len(decision_log_header(CFG))
