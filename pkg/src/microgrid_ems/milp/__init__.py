"""Embedded MILP solver: dual simplex LP relaxations plus branch-and-bound."""

from .bnb import Heuristic, solve_lp, solve_mip
from .highs import solve_mip_highs
from .model import MilpModel, MilpSolution, ModelError, Row, Status, Variable, relative_gap
from .textio import export_model_text, import_model_text

BACKENDS = ("native", "highs")


def solve(model: MilpModel, backend: str = "native", time_limit: float = 600.0,
          gap_target: float = 0.0, heuristic: Heuristic | None = None) -> MilpSolution:
    """Dispatch to the chosen backend."""
    if backend == "native":
        return solve_mip(model, time_limit=time_limit, gap_target=gap_target,
                         heuristic=heuristic)
    if backend == "highs":
        return solve_mip_highs(model, time_limit=time_limit, gap_target=gap_target)
    raise ValueError(f"unknown solver backend {backend!r}; expected one of {BACKENDS}")


__all__ = [
    "BACKENDS", "Heuristic", "MilpModel", "MilpSolution", "ModelError", "Row", "Status",
    "Variable", "export_model_text", "import_model_text", "relative_gap", "solve",
    "solve_lp", "solve_mip", "solve_mip_highs",
]
