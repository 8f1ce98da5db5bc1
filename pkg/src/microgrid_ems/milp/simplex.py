"""Bounded-variable revised dual simplex.

The LP is held in computational form

    min c'x   s.t.   A x - r = 0,   lb <= x <= ub,   row_lo <= r <= row_hi

where ``r`` are the row (logical) variables. Structural bounds are finite,
so the all-logical basis with every structural parked at its cost-favourable
bound is always dual feasible; the dual simplex therefore never needs a
phase 1, and bound changes made by branch-and-bound keep a parent's optimal
basis dual feasible for the children.

The basis inverse is an LU factorisation (SuperLU via scipy) followed by a
product-form eta file, refactorised every ``REFACTOR_EVERY`` pivots.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

PRIMAL_TOL = 1e-7
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 64
STALL_ITERS = 200


class SingularBasis(RuntimeError):
    pass


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "cutoff" | "iteration-limit" | "time-limit" | "numerical"
    x: np.ndarray | None
    objective: float
    iterations: int
    basis: tuple | None = None
    duals: np.ndarray | None = None


def _scale(A: sp.csc_matrix, passes: int = 4):
    """Geometric-mean row/column scaling. Returns (row_scale, col_scale)."""
    m, n = A.shape
    rs = np.ones(m)
    cs = np.ones(n)
    if A.nnz == 0:
        return rs, cs
    coo = A.tocoo()
    absval = np.abs(coo.data)
    for _ in range(passes):
        v = absval * rs[coo.row] * cs[coo.col]
        rmax = np.zeros(m)
        rmin = np.full(m, np.inf)
        np.maximum.at(rmax, coo.row, v)
        np.minimum.at(rmin, coo.row, v)
        ok = rmax > 0
        rs[ok] /= np.sqrt(rmax[ok] * rmin[ok])
        v = absval * rs[coo.row] * cs[coo.col]
        cmax = np.zeros(n)
        cmin = np.full(n, np.inf)
        np.maximum.at(cmax, coo.col, v)
        np.minimum.at(cmin, coo.col, v)
        ok = cmax > 0
        cs[ok] /= np.sqrt(cmax[ok] * cmin[ok])
    # round to powers of two so scaling is exact in floating point
    rs = np.exp2(np.round(np.log2(rs)))
    cs = np.exp2(np.round(np.log2(cs)))
    return rs, cs


class DualSimplex:
    """Reusable LP engine; ``solve`` may be called repeatedly with new bounds."""

    def __init__(self, c, A, row_lo, row_hi, lb, ub, scale: bool = True):
        A = sp.csc_matrix(A, dtype=float)
        self.m, self.n = A.shape
        if scale:
            self.rs, self.cs = _scale(A)
        else:
            self.rs, self.cs = np.ones(self.m), np.ones(self.n)
        self.A = sp.csc_matrix(sp.diags(self.rs) @ A @ sp.diags(self.cs))
        self.AT = sp.csr_matrix(self.A.T)
        self.c = np.asarray(c, float) * self.cs
        self.row_lo = np.asarray(row_lo, float) * self.rs
        self.row_hi = np.asarray(row_hi, float) * self.rs
        self.set_bounds(lb, ub)
        self.cfull = np.concatenate([self.c, np.zeros(self.m)])

    def set_bounds(self, lb, ub) -> None:
        lb = np.asarray(lb, float) / self.cs
        ub = np.asarray(ub, float) / self.cs
        self.lo = np.concatenate([lb, self.row_lo])
        self.hi = np.concatenate([ub, self.row_hi])

    # -- basis algebra ---------------------------------------------------------

    def _column(self, j: int):
        """Sparse column ``j`` of [A, -I] as (indices, values)."""
        if j < self.n:
            s, e = self.A.indptr[j], self.A.indptr[j + 1]
            return self.A.indices[s:e], self.A.data[s:e]
        return np.array([j - self.n]), np.array([-1.0])

    def _factor(self) -> None:
        m = self.m
        rows, cols, vals = [], [], []
        for k, j in enumerate(self.basis):
            idx, val = self._column(j)
            rows.append(idx)
            cols.append(np.full(len(idx), k))
            vals.append(val)
        B = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(m, m))
        try:
            self.lu = splu(B, permc_spec="COLAMD")
        except RuntimeError as exc:  # exactly singular
            raise SingularBasis(str(exc)) from exc
        self.etas: list[tuple[int, np.ndarray]] = []

    def _ftran(self, a: np.ndarray) -> np.ndarray:
        y = self.lu.solve(a)
        for r, eta in self.etas:
            yr = y[r]
            if yr != 0.0:
                y += eta * yr
                y[r] = eta[r] * yr
        return y

    def _btran(self, e: np.ndarray) -> np.ndarray:
        w = e.copy()
        for r, eta in reversed(self.etas):
            w[r] = w @ eta
        return self.lu.solve(w, trans="T")

    def _recompute(self) -> None:
        """Fresh primal basic values and reduced costs from the factorisation."""
        n, m = self.n, self.m
        xN = self.x.copy()
        xN[self.basis] = 0.0
        rhs = -(self.A @ xN[:n] - xN[n:])
        xB = self.lu.solve(rhs) if not self.etas else self._ftran(rhs)
        self.x[self.basis] = xB
        y = self._btran(self.cfull[self.basis])
        d = np.empty(n + m)
        d[:n] = self.c - self.AT @ y
        d[n:] = y
        d[self.basis] = 0.0
        self.d = d

    # -- main loop ---------------------------------------------------------------

    def _cold_basis(self):
        n, m = self.n, self.m
        basis = np.arange(n, n + m)
        at_upper = np.zeros(n + m, dtype=bool)
        at_upper[:n] = self.c < 0
        return basis, at_upper

    def _install(self, basis, at_upper) -> None:
        n, m = self.n, self.m
        self.basis = np.array(basis, dtype=int)
        self.is_basic = np.zeros(n + m, dtype=bool)
        self.is_basic[self.basis] = True
        self.at_upper = np.array(at_upper, dtype=bool)
        # nonbasic logicals must sit on a finite bound
        lo_inf = ~np.isfinite(self.lo)
        hi_inf = ~np.isfinite(self.hi)
        self.at_upper[lo_inf] = True
        self.at_upper[hi_inf] = False
        self.x = np.where(self.at_upper, self.hi, self.lo)
        self.x[~np.isfinite(self.x)] = 0.0
        self.x[self.is_basic] = 0.0
        self._factor()
        self._recompute()

    def _dual_infeasible(self) -> bool:
        nb = ~self.is_basic & (self.lo != self.hi)
        tol = 1e-7 * max(1.0, float(np.abs(self.c).max(initial=0.0)))
        return bool(np.any(nb & ((~self.at_upper & (self.d < -tol)) | (self.at_upper & (self.d > tol)))))

    def _repair_dual(self) -> bool:
        """Flip boxed nonbasics with wrong-signed reduced costs. False if impossible."""
        nb = ~self.is_basic
        tol = DUAL_TOL * 1e2
        bad_lo = nb & ~self.at_upper & (self.d < -tol)
        bad_hi = nb & self.at_upper & (self.d > tol)
        fixed = self.lo == self.hi
        bad = (bad_lo | bad_hi) & ~fixed
        if not bad.any():
            return True
        if not (np.isfinite(self.lo[bad]).all() and np.isfinite(self.hi[bad]).all()):
            return False
        self.at_upper[bad] = ~self.at_upper[bad]
        self.x[bad] = np.where(self.at_upper[bad], self.hi[bad], self.lo[bad])
        self._recompute()
        return True

    def solve(self, warm: tuple | None = None, max_iter: int = 50000,
              deadline: float | None = None, cutoff: float = np.inf) -> LPResult:
        n, m = self.n, self.m
        if m == 0:
            x = np.where(self.c < 0, self.hi[:n], self.lo[:n])
            if np.any(self.lo[:n] > self.hi[:n]):
                return LPResult("infeasible", None, np.inf, 0)
            return LPResult("optimal", x * self.cs, float(self.c @ x), 0,
                            (np.array([], int), self.c < 0), np.zeros(0))
        if np.any(self.lo > self.hi + PRIMAL_TOL):
            return LPResult("infeasible", None, np.inf, 0)
        try:
            if warm is not None:
                self._install(*warm)
                if not self._repair_dual():
                    self._install(*self._cold_basis())
            else:
                self._install(*self._cold_basis())
        except SingularBasis:
            self._install(*self._cold_basis())
        return self._iterate(max_iter, deadline, cutoff)

    def _iterate(self, max_iter, deadline, cutoff) -> LPResult:
        n, m = self.n, self.m
        it = 0
        best_obj = -np.inf
        stall = 0
        bland = False
        repairs = 0
        lo, hi = self.lo, self.hi
        ptol_lo = PRIMAL_TOL * np.maximum(1.0, np.abs(np.where(np.isfinite(lo), lo, 0.0)))
        ptol_hi = PRIMAL_TOL * np.maximum(1.0, np.abs(np.where(np.isfinite(hi), hi, 0.0)))
        while True:
            xB = self.x[self.basis]
            lB, uB = lo[self.basis], hi[self.basis]
            below = lB - xB - ptol_lo[self.basis]
            above = xB - uB - ptol_hi[self.basis]
            infeas = np.maximum(below, above)
            if infeas.max(initial=-1.0) <= 0.0:
                if self.etas:
                    self._factor()
                    self._recompute()
                    xB = self.x[self.basis]
                    infeas = np.maximum(lo[self.basis] - xB - ptol_lo[self.basis],
                                        xB - hi[self.basis] - ptol_hi[self.basis])
                    if infeas.max(initial=-1.0) > 0.0:
                        continue
                if repairs < 5 and self._dual_infeasible():
                    repairs += 1
                    if self._repair_dual():
                        continue
                return self._finish("optimal", it)
            obj = float(self.cfull @ self.x)
            if obj > cutoff:
                return self._finish("cutoff", it)
            if it >= max_iter:
                return self._finish("iteration-limit", it)
            if deadline is not None and (it & 15) == 0 and time.perf_counter() > deadline:
                return self._finish("time-limit", it)
            if obj > best_obj + 1e-12 * max(1.0, abs(obj)):
                best_obj = obj
                stall = 0
            else:
                stall += 1
                if stall > STALL_ITERS:
                    bland = True
            if bland:
                cand = np.flatnonzero(infeas > 0.0)
                r = int(cand[np.argmin(self.basis[cand])])
            else:
                r = int(np.argmax(infeas))
            p = int(self.basis[r])
            to_lower = self.x[p] < lo[p]
            e = np.zeros(m)
            e[r] = 1.0
            rho = self._btran(e)
            alpha = np.empty(n + m)
            alpha[:n] = self.AT @ rho
            alpha[n:] = -rho
            alpha[self.is_basic] = 0.0
            nb_lower = ~self.at_upper
            fixed = lo == hi
            if to_lower:
                elig = ((nb_lower & (alpha < -PIVOT_TOL)) | (~nb_lower & (alpha > PIVOT_TOL)))
            else:
                elig = ((nb_lower & (alpha > PIVOT_TOL)) | (~nb_lower & (alpha < -PIVOT_TOL)))
            elig &= ~self.is_basic & ~fixed
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                return self._finish("infeasible", it)
            absd = np.abs(self.d[cand])
            absa = np.abs(alpha[cand])
            if bland:
                ratios = absd / absa
                best = ratios.min()
                ties = cand[ratios <= best + 1e-12]
                q = int(ties.min())
            else:
                bound = ((absd + DUAL_TOL) / absa).min()
                ok = absd / absa <= bound
                q = int(cand[ok][np.argmax(absa[ok])])
            aq = alpha[q]
            idx, val = self._column(q)
            col = np.zeros(m)
            col[idx] = val
            alpha_q = self._ftran(col)
            if abs(alpha_q[r] - aq) > 1e-7 * max(1.0, abs(aq)) and self.etas:
                self._factor()
                self._recompute()
                it += 1
                continue
            aq = alpha_q[r]
            if abs(aq) < PIVOT_TOL:
                self._factor()
                self._recompute()
                it += 1
                continue
            # dual update
            theta_d = self.d[q] / aq
            self.d -= theta_d * alpha
            self.d[q] = 0.0
            self.d[p] = -theta_d
            # keep reduced costs sign-consistent (Harris may leave tiny errors)
            nbm = ~self.is_basic
            wrong = nbm & ((~self.at_upper & (self.d < 0)) | (self.at_upper & (self.d > 0)))
            wrong &= np.abs(self.d) <= 1e2 * DUAL_TOL
            self.d[wrong] = 0.0
            # primal update
            target = lo[p] if to_lower else hi[p]
            t = (self.x[p] - target) / aq
            self.x[self.basis] -= t * alpha_q
            self.x[q] += t
            self.x[p] = target
            self.at_upper[p] = not to_lower
            self.is_basic[p] = False
            self.is_basic[q] = True
            self.basis[r] = q
            self.d[q] = 0.0
            eta = -alpha_q / aq
            eta[r] = 1.0 / aq
            self.etas.append((r, eta))
            it += 1
            if len(self.etas) >= REFACTOR_EVERY:
                try:
                    self._factor()
                except SingularBasis:
                    return self._finish("numerical", it)
                self._recompute()

    def _finish(self, status: str, it: int) -> LPResult:
        n = self.n
        if status in ("infeasible", "numerical"):
            return LPResult(status, None, np.inf, it, (self.basis.copy(), self.at_upper.copy()))
        xs = self.x[:n] * self.cs
        obj = float(self.c @ self.x[:n])
        basis = (self.basis.copy(), self.at_upper.copy())
        duals = self.d[n:] * self.rs if status == "optimal" else None
        return LPResult(status, xs, obj, it, basis, duals)


def solve_lp_arrays(c, A, row_lo, row_hi, lb, ub, **kw) -> LPResult:
    return DualSimplex(c, A, row_lo, row_hi, lb, ub).solve(**kw)
