"""Bounded primal simplex used as the relaxation engine inside branch-and-bound.

Every row ``a.x (rel) b`` gets a logical column ``s = a.x`` whose bounds encode
the relation, so the working system is ``[A, -I] (x, s) = 0`` with bounds on
all ``n + m`` columns. Equality rows therefore carry a logical fixed at ``b``:
it plays the role of the artificial variable and starts basic (and
infeasible) in the all-logical basis. Phase 1 minimises the sum of bound
violations of basic columns; the same code path restarts from any stored
basis after bounds change, which is what branch-and-bound needs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

FEAS_TOL = 1e-7
OPT_TOL = 1e-7
PIVOT_FLOOR = 1e-11
REFACTOR_EVERY = 50

# internal tolerances, kept tighter than the contract above
_PHASE_TOL = 1e-8
_HARRIS_TOL = 1e-9
_RATIO_PIVOT_TOL = 1e-9
_STALL_LIMIT = 60

LE, EQ, GE = -1, 0, 1


class NumericalBreakdown(RuntimeError):
    pass


class LpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """min c.x + c0  s.t.  A x (sense) rhs,  lb <= x <= ub."""

    A: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    c0: float = 0.0
    col_names: tuple[str, ...] | None = None
    row_names: tuple[str, ...] | None = None

    def __post_init__(self):
        m, n = self.A.shape
        if not (len(self.sense) == len(self.rhs) == m and len(self.c) == len(self.lb) == len(self.ub) == n):
            raise ValueError("LinearProgram dimensions are inconsistent")
        if np.any(~np.isfinite(self.lb)):
            raise ValueError("all column lower bounds must be finite")

    @classmethod
    def from_dense(cls, A, sense, rhs, c, lb=None, ub=None, c0=0.0):
        A = sp.csr_matrix(np.atleast_2d(np.asarray(A, dtype=float)))
        n = A.shape[1]
        sense = np.array([_SENSE_CODES.get(s, s) for s in sense], dtype=np.int8)
        lb = np.zeros(n) if lb is None else np.asarray(lb, dtype=float)
        ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)
        return cls(A, sense, np.asarray(rhs, dtype=float), np.asarray(c, dtype=float), lb, ub, c0)

    @classmethod
    def from_lp_text(cls, text: str) -> tuple["LinearProgram", tuple[str, ...]]:
        """Continuous relaxation of an LP-format document, plus the names of its binary columns."""
        from .lpformat import read_lp

        doc = read_lp(text)
        names = doc.variables
        col = {v: j for j, v in enumerate(names)}
        rows = list(doc.rows.items())
        A = sp.lil_matrix((len(rows), len(names)))
        for i, (_, (terms, _, _)) in enumerate(rows):
            for v, a in terms.items():
                A[i, col[v]] = a
        c = np.zeros(len(names))
        for v, a in doc.objective.items():
            c[col[v]] = a
        lb, ub = np.zeros(len(names)), np.full(len(names), np.inf)
        for v, (lo, hi) in doc.bounds.items():
            lb[col[v]], ub[col[v]] = lo, hi
        for v in doc.binaries:
            ub[col[v]] = 1.0
        sense = np.array([_SENSE_CODES[rel] for _, (_, rel, _) in rows], dtype=np.int8)
        rhs = np.array([r for _, (_, _, r) in rows], dtype=float)
        lp = cls(A.tocsr(), sense, rhs, c, lb, ub, doc.constant, tuple(names), tuple(n for n, _ in rows))
        return lp, tuple(doc.binaries)

    @property
    def shape(self):
        return self.A.shape

    def _system(self):
        # cached [A, -I] in both compressed layouts
        sys_ = self.__dict__.get("_sys")
        if sys_ is None:
            m, n = self.A.shape
            M = sp.hstack([self.A, -sp.identity(m, format="csr")], format="csc")
            M.sort_indices()
            AT = self.A.T.tocsr()
            row_lo = np.where(self.sense == LE, -np.inf, self.rhs)
            row_hi = np.where(self.sense == GE, np.inf, self.rhs)
            sys_ = (M, AT, row_lo.astype(float), row_hi.astype(float))
            object.__setattr__(self, "_sys", sys_)
        return sys_

    def row_activity(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x

    def max_violation(self, x: np.ndarray, lb=None, ub=None) -> float:
        lb = self.lb if lb is None else lb
        ub = self.ub if ub is None else ub
        act = self.A @ x
        viol = np.zeros(len(act))
        viol = np.where(self.sense == LE, act - self.rhs, viol)
        viol = np.where(self.sense == GE, self.rhs - act, viol)
        viol = np.where(self.sense == EQ, np.abs(act - self.rhs), viol)
        row = float(viol.max()) if len(viol) else 0.0
        col = float(np.max(np.concatenate([lb - x, x - ub, [0.0]])))
        return max(row, col, 0.0)


_SENSE_CODES = {"<=": LE, "=": EQ, "==": EQ, ">=": GE, "L": LE, "E": EQ, "G": GE}


@dataclass(frozen=True)
class Basis:
    basic: np.ndarray      # m column indices into [x, s]
    at_upper: np.ndarray   # bool over n + m, meaningful for nonbasic columns


@dataclass
class LpOutcome:
    status: LpStatus
    x: np.ndarray | None
    objective: float
    iterations: int
    lp: LinearProgram = field(repr=False)
    lb: np.ndarray = field(repr=False)
    ub: np.ndarray = field(repr=False)
    basis: Basis | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class _Simplex:
    def __init__(self, lp: LinearProgram, lb: np.ndarray, ub: np.ndarray, basis: Basis | None):
        self.lp = lp
        M, AT, row_lo, row_hi = lp._system()
        self.M, self.AT = M, AT
        self.m, self.n = lp.A.shape
        m, n = self.m, self.n
        self.L = np.concatenate([lb, row_lo])
        self.U = np.concatenate([ub, row_hi])
        self.cost = np.concatenate([lp.c, np.zeros(m)])
        if basis is None:
            self.basic = np.arange(n, n + m)
            self.at_upper = np.zeros(n + m, dtype=bool)
        else:
            self.basic = basis.basic.copy()
            self.at_upper = basis.at_upper.copy()
        self.is_basic = np.zeros(n + m, dtype=bool)
        self.is_basic[self.basic] = True
        # a nonbasic column sits on a finite bound
        self.at_upper &= ~self.is_basic
        self.at_upper |= ~self.is_basic & ~np.isfinite(self.L)
        self.at_upper &= np.isfinite(self.U) | self.is_basic
        self.x = np.where(self.at_upper, self.U, self.L)
        self.x[self.is_basic] = 0.0
        self.iterations = 0
        self.etas: list[tuple[int, np.ndarray]] = []
        self.bland = False
        self.stall = 0
        self.phase_tol = _PHASE_TOL
        self.refactor()

    # -- linear algebra -------------------------------------------------
    def column(self, j: int) -> np.ndarray:
        v = np.zeros(self.m)
        lo, hi = self.M.indptr[j], self.M.indptr[j + 1]
        v[self.M.indices[lo:hi]] = self.M.data[lo:hi]
        return v

    def refactor(self):
        B = self.M[:, self.basic]
        try:
            self.lu = splu(B.tocsc(), permc_spec="COLAMD")
        except RuntimeError as exc:
            raise NumericalBreakdown(f"singular basis: {exc}") from exc
        self.etas.clear()
        nb = ~self.is_basic
        rhs = -(self.M[:, nb] @ self.x[nb])
        xb = self.lu.solve(rhs)
        if not np.all(np.isfinite(xb)):
            raise NumericalBreakdown("non-finite basic solution after refactorization")
        self.x[self.basic] = xb

    def ftran(self, v: np.ndarray) -> np.ndarray:
        w = self.lu.solve(v)
        for r, e in self.etas:
            wr = w[r] / e[r]
            w -= e * wr
            w[r] = wr
        return w

    def btran(self, c: np.ndarray) -> np.ndarray:
        u = c.copy()
        for r, e in reversed(self.etas):
            u[r] = (u[r] - (e @ u - e[r] * u[r])) / e[r]
        return self.lu.solve(u, trans="T")

    # -- iteration ------------------------------------------------------
    def infeasibility(self):
        xb = self.x[self.basic]
        below = xb < self.L[self.basic] - self.phase_tol
        above = xb > self.U[self.basic] + self.phase_tol
        return below, above

    def run(self, max_iter: int) -> LpStatus:
        while True:
            below, above = self.infeasibility()
            phase1 = bool(below.any() or above.any())
            if phase1:
                cb = above.astype(float) - below.astype(float)
                cn = np.zeros(self.n + self.m)
            else:
                cb = self.cost[self.basic]
                cn = self.cost
            y = self.btran(cb)
            d = cn - np.concatenate([self.AT @ y, -y])
            movable = ~self.is_basic & (self.U > self.L)
            up = movable & ~self.at_upper & (d < -OPT_TOL)
            down = movable & self.at_upper & (d > OPT_TOL)
            elig = up | down
            if not elig.any():
                # confirm on a fresh factorization before declaring anything
                if self.etas:
                    self.refactor()
                    continue
                if phase1:
                    xb = self.x[self.basic]
                    worst = max(np.max(self.L[self.basic] - xb, initial=0.0),
                                np.max(xb - self.U[self.basic], initial=0.0))
                    if worst > FEAS_TOL or self.phase_tol >= FEAS_TOL:
                        return LpStatus.INFEASIBLE
                    # residual violation is inside the contract tolerance
                    self.phase_tol = FEAS_TOL
                    continue
                return LpStatus.OPTIMAL
            if self.iterations >= max_iter:
                raise NumericalBreakdown(f"iteration limit {max_iter} reached")
            if self.bland:
                q = int(np.flatnonzero(elig)[0])
            else:
                q = int(np.argmax(np.where(elig, np.abs(d), -1.0)))
            direction = 1.0 if up[q] else -1.0
            status = self.pivot(q, direction, phase1, below, above)
            if status is not None:
                return status
            self.iterations += 1
            if len(self.etas) >= REFACTOR_EVERY:
                self.refactor()

    def pivot(self, q: int, direction: float, phase1: bool, below, above):
        w = self.ftran(self.column(q))
        delta = -direction * w  # d x_B / d t
        xb = self.x[self.basic]
        Lb, Ub = self.L[self.basic], self.U[self.basic]
        dec = delta < -_RATIO_PIVOT_TOL
        inc = delta > _RATIO_PIVOT_TOL
        if phase1:
            feas = ~below & ~above
            lo_target = np.where(above, Ub, np.where(feas, Lb, -np.inf))
            hi_target = np.where(below, Lb, np.where(feas, Ub, np.inf))
        else:
            lo_target, hi_target = Lb, Ub
        with np.errstate(divide="ignore", invalid="ignore"):
            room = np.where(dec, xb - lo_target, np.where(inc, hi_target - xb, np.inf))
            rate = np.abs(delta)
            blocking = (dec & np.isfinite(lo_target)) | (inc & np.isfinite(hi_target))
            exact = np.where(blocking, np.maximum(room, 0.0) / rate, np.inf)
            relaxed = np.where(blocking, (np.maximum(room, 0.0) + _HARRIS_TOL) / rate, np.inf)
        t_flip = self.U[q] - self.L[q]
        r = -1
        t = np.inf
        if blocking.any():
            if self.bland:
                tmin = exact.min()
                ties = np.flatnonzero(exact <= tmin + 1e-12)
                r = int(ties[np.argmin(self.basic[ties])])
            else:
                tmax = relaxed.min()
                cand = np.flatnonzero(exact <= tmax)
                r = int(cand[np.argmax(rate[cand])])
            t = exact[r]
        if t_flip <= t:
            if not np.isfinite(t_flip):
                if phase1:
                    raise NumericalBreakdown("unbounded ray in phase 1")
                return LpStatus.UNBOUNDED
            self.x[self.basic] = xb + delta * t_flip
            self.at_upper[q] = not self.at_upper[q]
            self.x[q] = self.U[q] if self.at_upper[q] else self.L[q]
            self._progress(t_flip)
            return None
        if abs(w[r]) < PIVOT_FLOOR:
            raise NumericalBreakdown(f"pivot {w[r]:.3e} below floor")
        leaving = int(self.basic[r])
        self.x[self.basic] = xb + delta * t
        self.x[q] += direction * t
        self.x[leaving] = hi_target[r] if inc[r] else lo_target[r]
        self.at_upper[leaving] = self.x[leaving] == self.U[leaving]
        if not np.isfinite(self.x[leaving]):
            raise NumericalBreakdown("leaving column has no finite bound")
        self.is_basic[leaving] = False
        self.is_basic[q] = True
        self.at_upper[q] = False
        self.basic[r] = q
        self.etas.append((r, w))
        self._progress(t)
        return None

    def _progress(self, t: float):
        if t <= 1e-12:
            self.stall += 1
            if self.stall >= _STALL_LIMIT:
                self.bland = True
        else:
            self.stall = 0
            self.bland = False


def solve_lp(lp: LinearProgram, lb: np.ndarray | None = None, ub: np.ndarray | None = None,
             warm: Basis | None = None, max_iter: int | None = None) -> LpOutcome:
    """Solve ``lp`` (optionally with overridden column bounds) to optimality.

    ``warm`` restarts from a stored basis; the result does not depend on it
    except through degenerate ties between alternative optima.
    """
    lb = lp.lb if lb is None else np.asarray(lb, dtype=float)
    ub = lp.ub if ub is None else np.asarray(ub, dtype=float)
    m, n = lp.shape
    if np.any(lb > ub + FEAS_TOL):
        return LpOutcome(LpStatus.INFEASIBLE, None, np.inf, 0, lp, lb, ub)
    if max_iter is None:
        max_iter = 200 * (m + n) + 10_000
    sx = _Simplex(lp, lb, ub, warm)
    status = sx.run(max_iter)
    basis = Basis(sx.basic.copy(), sx.at_upper.copy())
    if status is LpStatus.OPTIMAL:
        x = sx.x[:n].copy()
        # snap structural columns onto their bounds when within tolerance
        x = np.where(np.abs(x - lb) <= _PHASE_TOL, lb, x)
        x = np.where(np.abs(x - ub) <= _PHASE_TOL, ub, x)
        obj = float(lp.c @ x + lp.c0)
        return LpOutcome(status, x, obj, sx.iterations, lp, lb, ub, basis)
    obj = np.inf if status is LpStatus.INFEASIBLE else -np.inf
    return LpOutcome(status, None, obj, sx.iterations, lp, lb, ub, basis)


def resolve_with_bound_change(warm: LpOutcome, col: int, lower: float, upper: float) -> LpOutcome:
    """Re-solve after changing one column's bounds, starting from ``warm``'s basis."""
    lb = warm.lb.copy()
    ub = warm.ub.copy()
    lb[col] = lower
    ub[col] = upper
    return solve_lp(warm.lp, lb, ub, warm=warm.basis)
