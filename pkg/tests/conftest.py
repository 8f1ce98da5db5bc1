import itertools

import numpy as np
import pytest
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from microgrid_ems.formulation import build_slots
from microgrid_ems.milp import MilpModel
from microgrid_ems.model import default_config
from microgrid_ems.uc import runs_respect_minimums

# Frozen from an independent evaluation: marginal aging costs by central
# differences of the exact aging cost at 10^4 rates, then the V bound and
# beta evaluated directly from their definitions.
FROZEN_V_MAX = 0.0012517629381549242
FROZEN_BETA = (0.5554580647185585, 0.690943828313672)

# acceptance verdicts, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def lp_oracle(model: MilpModel, fixed: dict | None = None) -> float:
    """Optimal LP value via HiGHS with some variables pinned; inf if infeasible."""
    c, A, rlo, rhi, lb, ub, _ = model.arrays()
    lb, ub = lb.copy(), ub.copy()
    for j, v in (fixed or {}).items():
        lb[j] = ub[j] = v
    A = A.toarray()
    fu, fl = np.isfinite(rhi), np.isfinite(rlo)
    A_ub = np.vstack([A[fu], -A[fl]])
    b_ub = np.concatenate([rhi[fu], -rlo[fl]])
    res = linprog(c, A_ub=A_ub if len(b_ub) else None, b_ub=b_ub if len(b_ub) else None,
                  bounds=list(zip(lb, ub)), method="highs")
    return res.fun + model.obj_constant if res.status == 0 else np.inf


def enumeration_oracle(model: MilpModel) -> float:
    """Minimum over all binary assignments of the LP in the continuous variables."""
    bins = model.binaries
    best = np.inf
    for pat in itertools.product((0.0, 1.0), repeat=len(bins)):
        best = min(best, lp_oracle(model, dict(zip(bins, pat))))
    return best


def highs_milp_oracle(model: MilpModel) -> float:
    """Optimal MILP value via HiGHS branch and bound at zero gap; inf if infeasible."""
    c, A, rlo, rhi, lb, ub, _ = model.arrays()
    integrality = np.zeros(len(c))
    integrality[list(model.binaries)] = 1
    res = milp(c, constraints=LinearConstraint(A, rlo, rhi), bounds=Bounds(lb, ub),
               integrality=integrality, options={"mip_rel_gap": 0.0})
    return res.fun + model.obj_constant if res.status == 0 else np.inf


def uc_enumeration_oracle(cfg, slots, forecasts, states, socs) -> float:
    """Best commitment by exhaustive search over every pattern that meets the
    minimum run lengths; each fixed-commitment subproblem goes to HiGHS."""
    per_unit = [[p for p in itertools.product((0, 1), repeat=len(slots))
                 if runs_respect_minimums(g, st, p)] for g, st in zip(cfg.cgs, states)]
    best = np.inf
    for combo in itertools.product(*per_unit):
        m, _ = build_slots(cfg, slots, forecasts, states, socs, alpha=cfg.qos.alpha_avg,
                           commitment=np.array(combo))
        best = min(best, highs_milp_oracle(m) if m.binaries else lp_oracle(m))
    return best


def rows_hold(rows, x) -> bool:
    """Whether an assignment satisfies (coeffs, sense, rhs, name) rows."""
    for coeffs, sense, rhs, _ in rows:
        act = sum(a * x[j] for j, a in coeffs.items())
        if (sense == "<=" and act > rhs + 1e-9) or (sense == ">=" and act < rhs - 1e-9):
            return False
    return True


def with_stay_on(pattern, u_prev) -> list:
    """Commitment pattern followed by the stay-on products v_t = u_{t-1} u_t."""
    full = [u_prev] + list(pattern)
    return list(pattern) + [full[t] * full[t + 1] for t in range(len(pattern))]


def random_milp(rng: np.random.Generator, max_bin: int = 12, max_cont: int = 30,
                max_rows: int = 15) -> MilpModel:
    m = MilpModel("rand")
    nb = int(rng.integers(1, max_bin + 1))
    nc = int(rng.integers(1, max_cont + 1))
    xs = [m.add_var(f"b{i}", binary=True) for i in range(nb)]
    xs += [m.add_var(f"c{i}", -3 * rng.random(), 3 * rng.random()) for i in range(nc)]
    for j in xs:
        m.add_obj(j, rng.normal())
    for i in range(int(rng.integers(1, max_rows + 1))):
        coeffs = {j: rng.normal() for j in xs if rng.random() < 0.3}
        m.add_row(coeffs, str(rng.choice(["<=", ">="])), rng.normal(), f"r{i}")
    return m


@pytest.fixture(scope="session")
def cfg():
    return default_config()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
