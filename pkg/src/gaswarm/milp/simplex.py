"""Bounded-variable revised simplex.

Works on ``min c'x  s.t.  A x (<=,=,>=) b,  l <= x <= u``. Rows are scaled by
their largest absolute coefficient before solving. Each row gets a logical
(slack) column with sense-dependent bounds, and rows whose slack cannot absorb
the starting residual get an artificial column for phase 1.

The basis is held as a sparse LU factorization plus a product-form eta file,
refactorized every ``refactor_every`` pivots. Primal pricing is Dantzig's rule;
after ``bland_after`` consecutive degenerate pivots it switches to Bland's rule
for the rest of the solve, which guarantees termination.

A solve can be warm-started from the basis of an earlier solve on the same
constraint system with different bounds (a branch-and-bound child). The old
basis stays dual feasible, so a bounded dual simplex restores primal
feasibility; a primal pass then cleans up any tolerance drift.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .model import Sense

_BASIC = 0
_AT_LO = 1
_AT_UP = 2
_FREE = 3  # nonbasic free variable resting at zero
_PIVOT_TOL = 1e-7
_PIVOT_TOL_PRIMAL = 1e-9


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class SimplexError(RuntimeError):
    pass


@dataclass(frozen=True)
class Basis:
    """Basis of the structural + logical column set, reusable across bound changes."""
    basic: np.ndarray
    state: np.ndarray


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray | None
    objective: float
    duals: np.ndarray | None
    dual_bound: float
    iterations: int
    degenerate_pivots: int
    used_bland: bool
    basis: Basis | None = None


class _Factor:
    """LU of the basis matrix with product-form updates."""

    def __init__(self, A: sp.csc_matrix, basis: np.ndarray):
        self.A = A
        self.m = A.shape[0]
        self.refactor(basis)

    def refactor(self, basis: np.ndarray) -> None:
        self.etas: list[tuple[int, np.ndarray]] = []
        if self.m == 0:
            self.lu = None
            return
        B = self.A[:, basis].tocsc()
        try:
            self.lu = splu(B, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SimplexError(f"singular basis: {exc}") from exc

    def ftran(self, a: np.ndarray) -> np.ndarray:
        if self.m == 0:
            return a.copy()
        x = self.lu.solve(a)
        for r, alpha in self.etas:
            xr = x[r] / alpha[r]
            x -= xr * alpha
            x[r] = xr
        return x

    def btran(self, c: np.ndarray) -> np.ndarray:
        if self.m == 0:
            return c.copy()
        v = c.astype(float, copy=True)
        for r, alpha in reversed(self.etas):
            vr = v[r]
            v[r] = (vr - (v @ alpha - vr * alpha[r])) / alpha[r]
        return self.lu.solve(v, trans="T")

    def update(self, r: int, alpha: np.ndarray) -> None:
        self.etas.append((r, alpha.copy()))


class LpRelaxation:
    """Scaled copy of a constraint system, reusable across bound changes."""

    def __init__(self, matrix, senses, rhs: np.ndarray, cost: np.ndarray,
                 *, primal_tol: float = 1e-9, dual_tol: float = 1e-9,
                 bland_after: int = 5000, refactor_every: int = 64):
        a = sp.csr_matrix(matrix, dtype=float)
        m, n = a.shape
        scale = np.asarray(abs(a).max(axis=1).todense()).ravel() if n and m else np.ones(m)
        scale = np.where(scale > 0, scale, 1.0)
        self.row_scale = scale
        self.m, self.n = m, n
        self.a = sp.diags(1.0 / scale) @ a
        self.b = np.asarray(rhs, dtype=float) / scale
        self.cost = np.asarray(cost, dtype=float)
        slack_lo = np.zeros(m)
        slack_hi = np.zeros(m)
        for i, s in enumerate(senses):
            if s is Sense.LE:
                slack_hi[i] = np.inf
            elif s is Sense.GE:
                slack_lo[i] = -np.inf
        self.slack_lo, self.slack_hi = slack_lo, slack_hi
        self.primal_tol = primal_tol
        self.dual_tol = dual_tol
        self.bland_after = bland_after
        self.refactor_every = refactor_every
        # structural + logical columns, shared by every warm solve
        self.A_sl = sp.hstack([self.a, sp.identity(m, format="csr")], format="csc")

    def _columns(self, k_rows: np.ndarray, sign: np.ndarray) -> sp.csc_matrix:
        if len(k_rows) == 0:
            return self.A_sl
        art = sp.csc_matrix((sign, (k_rows, np.arange(len(k_rows)))), shape=(self.m, len(k_rows)))
        return sp.hstack([self.A_sl, art], format="csc")

    def solve(self, lower: np.ndarray, upper: np.ndarray, max_iter: int | None = None,
              warm: Basis | None = None) -> LpSolution:
        if np.any(lower > upper):
            return LpSolution(LpStatus.INFEASIBLE, None, np.inf, None, np.inf, 0, 0, False)
        if warm is not None:
            sol = self._solve_warm(lower, upper, warm, max_iter)
            if sol is not None:
                return sol
        return self._solve_cold(lower, upper, max_iter)

    # -- cold start ------------------------------------------------------
    def _solve_cold(self, lower, upper, max_iter) -> LpSolution:
        m, n = self.m, self.n
        x_n = np.where(np.isfinite(lower), lower, np.where(np.isfinite(upper), upper, 0.0))
        resid = self.b - self.a @ x_n
        # rows whose logical can absorb the residual start with the logical basic
        absorb = (resid >= self.slack_lo - self.primal_tol) & (resid <= self.slack_hi + self.primal_tol)
        art_rows = np.flatnonzero(~absorb)
        k = len(art_rows)
        sign = np.where(resid[art_rows] >= 0, 1.0, -1.0)
        A = self._columns(art_rows, sign)
        ncol = n + m + k
        lo = np.concatenate([lower, self.slack_lo, np.zeros(k)])
        hi = np.concatenate([upper, self.slack_hi, np.full(k, np.inf)])

        x = np.zeros(ncol)
        x[:n] = x_n
        state = np.empty(ncol, dtype=np.int8)
        state[:n] = np.where(np.isfinite(lower), _AT_LO, np.where(np.isfinite(upper), _AT_UP, _FREE))
        state[n:] = _AT_LO
        state[n:n + m][np.isinf(self.slack_lo)] = _AT_UP
        basis = np.empty(m, dtype=np.int64)
        basis[absorb] = n + np.flatnonzero(absorb)
        basis[art_rows] = n + m + np.arange(k)
        x[basis[absorb]] = resid[absorb]
        x[n + m:] = np.abs(resid[art_rows])
        state[basis] = _BASIC

        work = _Work(A, lo, hi, x, state, basis, self)
        limit = max_iter or 200 * (m + n + 10)

        if k:
            c1 = np.zeros(ncol)
            c1[n + m:] = 1.0
            work.primal(c1, limit)
            infeas = float(work.x[n + m:].sum())
            if infeas > self.primal_tol * max(1.0, float(np.abs(self.b).max(initial=0.0))) * 10:
                return LpSolution(LpStatus.INFEASIBLE, None, np.inf, None, np.inf,
                                  work.iters, work.degenerate, work.bland)
            work.drive_out(n + m)
            # artificials are pinned to zero for phase 2
            work.hi[n + m:] = 0.0
            work.x[n + m:] = np.where(work.state[n + m:] == _BASIC, work.x[n + m:], 0.0)
            nb = work.state[n + m:] != _BASIC
            work.state[n + m:][nb] = _AT_LO

        c2 = np.zeros(ncol)
        c2[:n] = self.cost
        status = work.primal(c2, limit)
        if status is LpStatus.UNBOUNDED:
            return LpSolution(LpStatus.UNBOUNDED, None, -np.inf, None, -np.inf,
                              work.iters, work.degenerate, work.bland)
        return self._finish(work, c2)

    # -- warm start ------------------------------------------------------
    def _solve_warm(self, lower, upper, warm: Basis, max_iter) -> LpSolution | None:
        m, n = self.m, self.n
        lo = np.concatenate([lower, self.slack_lo])
        hi = np.concatenate([upper, self.slack_hi])
        state = warm.state.copy()
        basis = warm.basic.copy()
        # nonbasic columns rest on a finite bound of the new box where possible
        fin_lo, fin_hi = np.isfinite(lo), np.isfinite(hi)
        nb = state != _BASIC
        want_lo = nb & (((state == _AT_LO) & fin_lo) | ((state != _AT_LO) & ~fin_hi & fin_lo))
        want_hi = nb & ~want_lo & fin_hi
        state[nb] = _FREE
        state[want_lo] = _AT_LO
        state[want_hi] = _AT_UP
        x = np.zeros(n + m)
        x[state == _AT_LO] = lo[state == _AT_LO]
        x[state == _AT_UP] = hi[state == _AT_UP]
        c = np.zeros(n + m)
        c[:n] = self.cost
        try:
            work = _Work(self.A_sl, lo, hi, x, state, basis, self)
            work.recompute_basics()
            limit = max_iter or 200 * (m + n + 10)
            status = work.dual(c, limit)
            if status is None:
                return None  # basis lost dual feasibility; start over
            if status is LpStatus.INFEASIBLE:
                return LpSolution(LpStatus.INFEASIBLE, None, np.inf, None, np.inf,
                                  work.iters, work.degenerate, work.bland)
            status = work.primal(c, limit)
        except SimplexError:
            return None
        if status is LpStatus.UNBOUNDED:
            return LpSolution(LpStatus.UNBOUNDED, None, -np.inf, None, -np.inf,
                              work.iters, work.degenerate, work.bland)
        return self._finish(work, c)

    def _finish(self, work: "_Work", c: np.ndarray) -> LpSolution:
        n, m = self.n, self.m
        work.refactor()
        xs = work.x[:n].copy()
        y_s = work.factor.btran(c[work.basis])
        d = c - work.AT @ y_s
        lo, hi = work.lo, work.hi
        dual_bound = float(self.b @ y_s)
        basic = work.state == _BASIC
        small = np.abs(d) <= self.dual_tol
        flat = basic | small
        dual_bound += float(d[flat] @ work.x[flat])
        pos = ~flat & (d > 0)
        neg = ~flat & (d < 0)
        if np.any(~np.isfinite(lo[pos])) or np.any(~np.isfinite(hi[neg])):
            dual_bound = -np.inf
        else:
            dual_bound += float(d[pos] @ lo[pos] + d[neg] @ hi[neg])
        duals = y_s / self.row_scale
        obj = float(self.cost @ xs)
        basis = None
        if not np.any(work.basis >= n + m):
            basis = Basis(work.basis.copy(), work.state[:n + m].copy())
        return LpSolution(LpStatus.OPTIMAL, xs, obj, duals, dual_bound,
                          work.iters, work.degenerate, work.bland, basis)


class _Work:
    """Mutable simplex state shared by the phases of one solve."""

    def __init__(self, A: sp.csc_matrix, lo, hi, x, state, basis, lp: LpRelaxation):
        self.A, self.lo, self.hi, self.x = A, lo, hi, x
        self.AT = A.T.tocsr()
        self.state, self.basis = state, basis
        self.lp = lp
        self.iters = 0
        self.degenerate = 0
        self.consecutive_degenerate = 0
        self.bland = False
        self.factor = _Factor(A, basis)

    def column(self, q: int) -> np.ndarray:
        A = self.A
        v = np.zeros(A.shape[0])
        s, e = A.indptr[q], A.indptr[q + 1]
        v[A.indices[s:e]] = A.data[s:e]
        return v

    def recompute_basics(self) -> None:
        nonbasic = self.state != _BASIC
        rhs = self.lp.b - self.A[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.factor.ftran(rhs)

    def refactor(self) -> None:
        self.factor.refactor(self.basis)
        self.recompute_basics()

    def _pivot(self, r: int, q: int, alpha: np.ndarray) -> None:
        self.basis[r] = q
        self.state[q] = _BASIC
        self.factor.update(r, alpha)
        if len(self.factor.etas) >= self.lp.refactor_every:
            self.refactor()

    def drive_out(self, first_art: int) -> None:
        """Degenerate pivots that replace basic artificials by real columns."""
        for r in range(len(self.basis)):
            if self.basis[r] < first_art:
                continue
            e = np.zeros(len(self.basis))
            e[r] = 1.0
            arow = self.AT @ self.factor.btran(e)
            arow[first_art:] = 0.0
            arow[self.state == _BASIC] = 0.0
            q = int(np.argmax(np.abs(arow)))
            if abs(arow[q]) < 1e-7:
                continue  # redundant row
            alpha = self.factor.ftran(self.column(q))
            leave = int(self.basis[r])
            theta = self.x[leave] / alpha[r]
            self.x[q] += theta
            self.x[self.basis] -= theta * alpha
            self.x[leave] = 0.0
            self.state[leave] = _AT_LO
            self._pivot(r, q, alpha)

    def _reduced(self, c: np.ndarray) -> np.ndarray:
        y = self.factor.btran(c[self.basis])
        return c - self.AT @ y

    def _candidates(self, d: np.ndarray, fixed: np.ndarray) -> np.ndarray:
        st, dtol = self.state, self.lp.dual_tol
        cand = ((st == _AT_LO) & (d < -dtol) & ~fixed) \
            | ((st == _AT_UP) & (d > dtol) & ~fixed) \
            | ((st == _FREE) & (np.abs(d) > dtol))
        return np.flatnonzero(cand)

    # -- primal ----------------------------------------------------------
    def primal(self, c: np.ndarray, limit: int) -> LpStatus:
        lo, hi, x, state = self.lo, self.hi, self.x, self.state
        ptol = self.lp.primal_tol
        fixed = lo == hi
        while True:
            if self.iters >= limit:
                raise SimplexError(f"iteration limit {limit} reached")
            basis = self.basis
            d = self._reduced(c)
            idx = self._candidates(d, fixed)
            if idx.size == 0:
                if self.factor.etas:
                    # confirm optimality on fresh factors
                    self.refactor()
                    if self._candidates(self._reduced(c), fixed).size == 0:
                        return LpStatus.OPTIMAL
                    continue
                return LpStatus.OPTIMAL
            if self.bland:
                q = int(idx[0])
            else:
                q = int(idx[np.argmax(np.abs(d[idx]))])
            direction = 1.0 if d[q] < 0 else -1.0

            alpha = self.factor.ftran(self.column(q))
            da = direction * alpha
            xb = x[basis]
            lob, hib = lo[basis], hi[basis]
            ratios = np.full(len(basis), np.inf)
            loose = np.full(len(basis), np.inf)
            dec = da > _PIVOT_TOL_PRIMAL
            inc = da < -_PIVOT_TOL_PRIMAL
            with np.errstate(invalid="ignore", divide="ignore"):
                ratios[dec] = np.maximum(xb[dec] - lob[dec], 0.0) / da[dec]
                ratios[inc] = np.maximum(hib[inc] - xb[inc], 0.0) / -da[inc]
                loose[dec] = (np.maximum(xb[dec] - lob[dec], 0.0) + ptol) / da[dec]
                loose[inc] = (np.maximum(hib[inc] - xb[inc], 0.0) + ptol) / -da[inc]
            theta_flip = hi[q] - lo[q]
            r = -1
            theta = np.inf
            if np.isfinite(ratios).any():
                if self.bland:
                    tmin = ratios.min()
                    ties = np.flatnonzero(ratios <= tmin + 1e-12)
                    r = int(ties[np.argmin(basis[ties])])
                else:
                    # Harris two-pass ratio test
                    ties = np.flatnonzero(ratios <= loose.min())
                    r = int(ties[np.argmax(np.abs(alpha[ties]))])
                theta = float(ratios[r])
            if theta_flip <= theta:
                if not np.isfinite(theta_flip):
                    return LpStatus.UNBOUNDED
                theta = float(theta_flip)
                r = -1

            self.iters += 1
            if theta <= 1e-12:
                self.degenerate += 1
                self.consecutive_degenerate += 1
                if self.consecutive_degenerate >= self.lp.bland_after:
                    self.bland = True
            else:
                self.consecutive_degenerate = 0

            x[q] += direction * theta
            x[basis] = xb - theta * da
            if r < 0:
                state[q] = _AT_UP if direction > 0 else _AT_LO
                x[q] = hi[q] if direction > 0 else lo[q]
                continue

            leave = int(basis[r])
            if da[r] > 0:
                x[leave] = lo[leave]
                state[leave] = _AT_LO
            else:
                x[leave] = hi[leave]
                state[leave] = _AT_UP
            if lo[leave] == -np.inf and hi[leave] == np.inf:
                state[leave] = _FREE
                x[leave] = 0.0
            self._pivot(r, q, alpha)

    # -- dual ------------------------------------------------------------
    def dual(self, c: np.ndarray, limit: int) -> LpStatus | None:
        """Bounded dual simplex from a dual feasible basis.

        Returns OPTIMAL once primal feasible, INFEASIBLE when a row proves
        infeasibility, or None if the starting basis is not dual feasible.
        """
        lo, hi, x, state = self.lo, self.hi, self.x, self.state
        ptol, dtol = self.lp.primal_tol, self.lp.dual_tol
        fixed = lo == hi
        d = self._reduced(c)
        slack = 1e-7
        if np.any(((state == _AT_LO) & (d < -slack) & ~fixed)
                  | ((state == _AT_UP) & (d > slack) & ~fixed)
                  | ((state == _FREE) & (np.abs(d) > slack))):
            return None
        while True:
            if self.iters >= limit:
                raise SimplexError(f"iteration limit {limit} reached")
            basis = self.basis
            xb = x[basis]
            below = lo[basis] - xb
            above = xb - hi[basis]
            infeas = np.maximum(below, above)
            scale = 1.0 + np.abs(xb)
            r = int(np.argmax(infeas / scale))
            if infeas[r] <= ptol * scale[r]:
                return LpStatus.OPTIMAL
            leave = int(basis[r])
            to_lower = below[r] > 0
            e = np.zeros(len(basis))
            e[r] = 1.0
            rho = self.factor.btran(e)
            arow = self.AT @ rho  # row r of B^-1 A
            # leaving variable moves toward its violated bound
            s = 1.0 if to_lower else -1.0
            sa = s * arow
            piv = _PIVOT_TOL
            elig = ((state == _AT_LO) & (sa < -piv) & ~fixed) \
                | ((state == _AT_UP) & (sa > piv) & ~fixed) \
                | ((state == _FREE) & (np.abs(sa) > piv))
            idx = np.flatnonzero(elig)
            if idx.size == 0:
                return LpStatus.INFEASIBLE
            # Harris two-pass ratio test: widest pivot among near-minimal ratios
            mag = np.abs(arow[idx])
            dj = np.abs(d[idx])
            tmax = ((dj + dtol) / mag).min()
            near = idx[dj / mag <= tmax]
            q = int(near[np.argmax(np.abs(arow[near]))])

            alpha = self.factor.ftran(self.column(q))
            if abs(alpha[r]) < _PIVOT_TOL:
                raise SimplexError("unstable dual pivot")
            target = lo[leave] if to_lower else hi[leave]
            theta = (xb[r] - target) / alpha[r]
            self.iters += 1
            if abs(theta) <= 1e-12:
                self.degenerate += 1
            x[q] += theta
            x[basis] = xb - theta * alpha
            x[leave] = target
            state[leave] = _AT_LO if to_lower else _AT_UP
            if lo[leave] == hi[leave]:
                state[leave] = _AT_LO
            # update reduced costs by the pivot row
            d = d - (d[q] / arow[q]) * arow
            self._pivot(r, q, alpha)
            d[q] = 0.0
            if not self.factor.etas:
                d = self._reduced(c)
