"""Secant piecewise-linear over-approximation of convex quadratics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PwlError(ValueError):
    pass


@dataclass(frozen=True)
class PwlCurve:
    xs: tuple
    ys: tuple
    max_abs_error: float

    @property
    def segment_count(self) -> int:
        return max(len(self.xs) - 1, 1)

    @property
    def lo(self) -> float:
        return self.xs[0]

    @property
    def hi(self) -> float:
        return self.xs[-1]

    @property
    def breakpoints(self) -> list[tuple[float, float]]:
        return list(zip(self.xs, self.ys))

    def slopes(self) -> np.ndarray:
        xs, ys = np.asarray(self.xs), np.asarray(self.ys)
        if len(xs) == 1:
            return np.array([self._point_slope])
        return np.diff(ys) / np.diff(xs)

    def intercepts(self) -> np.ndarray:
        s = self.slopes()
        return np.asarray(self.ys[: len(s)]) - s * np.asarray(self.xs[: len(s)])

    @property
    def is_convex(self) -> bool:
        s = self.slopes()
        # slopes of narrow segments carry roundoff, so allow a relative slack
        return bool(np.all(np.diff(s) >= -1e-9 * np.maximum(1.0, np.abs(s[1:]))))

    def to_dict(self) -> dict:
        return {"xs": list(self.xs), "ys": list(self.ys), "max_abs_error": self.max_abs_error}

    # only used for degenerate single-point domains
    _point_slope: float = 0.0


def approximate_quadratic(a: float, b: float, lo: float, hi: float, segments: int) -> PwlCurve:
    """Interpolate ``a x^2 + b x`` on ``segments`` equal-width pieces of [lo, hi].

    The secant error of a quadratic on a piece of width h peaks at its
    midpoint with value ``a h^2 / 4``.
    """
    if a < 0:
        raise PwlError("quadratic coefficient must be nonnegative (convex)")
    if lo > hi:
        raise PwlError(f"empty domain [{lo}, {hi}]")
    if segments < 1:
        raise PwlError("need at least one segment")
    if lo == hi:
        y = a * lo * lo + b * lo
        return PwlCurve((float(lo),), (float(y),), 0.0, _point_slope=2 * a * lo + b)
    xs = np.linspace(lo, hi, segments + 1)
    ys = a * xs * xs + b * xs
    h = (hi - lo) / segments
    return PwlCurve(tuple(map(float, xs)), tuple(map(float, ys)), a * h * h / 4.0)


def evaluate(curve: PwlCurve, x: float) -> float:
    if not curve.lo - 1e-9 <= x <= curve.hi + 1e-9:
        raise PwlError(f"x={x} outside [{curve.lo}, {curve.hi}]")
    if len(curve.xs) == 1:
        return curve.ys[0]
    return float(np.interp(x, curve.xs, curve.ys))


def emit_epigraph_rows(curve: PwlCurve, x_var: int, z_var: int) -> list[tuple[dict, str, float]]:
    """Rows ``z - slope_k x >= intercept_k``, one per segment."""
    if not curve.is_convex:
        raise PwlError("epigraph form requires nondecreasing slopes")
    rows = []
    for s, c in zip(curve.slopes(), curve.intercepts()):
        coeffs = {z_var: 1.0} if s == 0 else {z_var: 1.0, x_var: -float(s)}
        rows.append((coeffs, ">=", float(c)))
    return rows


def add_epigraph(model, curve: PwlCurve, x_var: int, z_var: int, name: str) -> None:
    for k, (coeffs, sense, rhs) in enumerate(emit_epigraph_rows(curve, x_var, z_var)):
        model.add_row(coeffs, sense, rhs, f"{name}#{k}")
